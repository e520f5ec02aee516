import itertools
import random

import pytest

from leaklearn.actions import Action, Observable, action_from_spec_text, word_from_text
from leaklearn.checker import (
    NotDistinguished,
    build_witness_graph,
    check_prni,
    check_rni,
    validate_witness,
)
from leaklearn.mealy import MealyMachine, SilentSet, mode_after, weak_equiv

from util import A0, A1, first_divergence, out, random_mealy

WALK_SILENT = SilentSet(["Time", "JmpIn", "JmpOut", "TimerA@PM"])


def chain(steps):
    transitions = {}
    for i, (text, word) in enumerate(steps):
        transitions[(f"q{i}", action_from_spec_text(text))] = (
            f"q{i+1}", word_from_text(word))
    return MealyMachine("q0", transitions)


def walkthrough(secret):
    return chain([
        ("start_counting 256", "Time 10, TimerA 0"),
        ("create_enclave", "Time 648, TimerA 0"),
        ("jin enc_s", "JmpIn, TimerA 2"),
        ("cmp s, #0", "Time 1, TimerA 3"),
        ("ubr", "JmpOut 9, TimerA 12" if secret == 0 else "JmpOut 2, TimerA 5"),
    ])


class TestCheckRni:
    def test_walkthrough_pair_distinguished(self):
        result = check_rni({0: walkthrough(0), 1: walkthrough(1)}, WALK_SILENT)
        assert not result.holds
        verdict = result.pairs[(0, 1)]
        assert len(verdict.word) == 5 and verdict.step == 4

    def test_single_secret_vacuous(self):
        result = check_rni({0: walkthrough(0)}, WALK_SILENT)
        assert result.holds and result.pairs == {}

    def test_identical_models_equivalent(self):
        result = check_rni({0: walkthrough(0), 1: walkthrough(0)}, WALK_SILENT)
        assert result.holds


class TestCheckPrni:
    def _models(self, basic_equal, advanced_equal):
        basic = {0: walkthrough(0), 1: walkthrough(0 if basic_equal else 1)}
        advanced = {0: walkthrough(0), 1: walkthrough(0 if advanced_equal else 1)}
        return basic, advanced

    @pytest.mark.parametrize("basic_eq,adv_eq,expected", [
        (True, True, "preserved"),
        (True, False, "violated"),
        (False, True, "preserved"),
        (False, False, "preserved"),  # the baseline premise already fails
    ])
    def test_truth_table(self, basic_eq, adv_eq, expected):
        basic, advanced = self._models(basic_eq, adv_eq)
        verdict = check_prni(basic, advanced, WALK_SILENT)
        assert verdict.prni == expected
        assert verdict.insecure_baseline == (not basic_eq)
        # cross-check against a direct evaluation of the implication
        premise = all(
            bool(weak_equiv(basic[a], basic[b], WALK_SILENT))
            for a, b in itertools.combinations(sorted(basic), 2))
        conclusion = all(
            bool(weak_equiv(advanced[a], advanced[b], WALK_SILENT))
            for a, b in itertools.combinations(sorted(advanced), 2))
        assert verdict.preserved == ((not premise) or conclusion)

    def test_violated_carries_witnesses(self):
        basic, advanced = self._models(True, False)
        verdict = check_prni(basic, advanced, WALK_SILENT)
        assert verdict.prni == "violated"
        assert len(verdict.witnesses) == 1
        (_pair, witness) = verdict.witnesses[0]
        assert witness.word == tuple(action_from_spec_text(t) for t in (
            "start_counting 256", "create_enclave", "jin enc_s",
            "cmp s, #0", "ubr"))


class TestWitnessGraph:
    def test_walkthrough_witness_shape(self):
        m0, m1 = walkthrough(0), walkthrough(1)
        graphs = build_witness_graph(m0, m1, WALK_SILENT)
        assert len(graphs) == 1
        g = graphs[0]
        assert len(g.word) == 5
        assert [e.action.kind for e in g.shared] == [
            "start_counting", "create_enclave", "jin", "cmp_secret"]
        # the attacker-visible part of the shared prefix: two timer reads
        assert [e.output for e in g.shared] == [
            (Observable("TimerA", 0),), (Observable("TimerA", 0),), (), ()]
        assert g.left == [g.left[0]]
        assert g.left[0].output == (Observable("TimerA", 12),)
        assert g.right[0].output == (Observable("TimerA", 5),)
        assert validate_witness(g, m0, m1, WALK_SILENT)

    def test_divergence_at_first_transition(self):
        m0 = MealyMachine("a", {("a", A0): ("b", out(1))})
        m1 = MealyMachine("a", {("a", A0): ("b", out(2))})
        g = build_witness_graph(m0, m1, SilentSet())[0]
        assert g.shared == []
        assert g.word == (A0,)

    def test_silent_side_extended_to_visible(self):
        # one model resets where the other stays silent and only later
        # shows a handler: the silent branch is continued to that point
        reset = (Observable("Reset"),)
        handle = (Observable("Handle", 4), Observable("UMem", 0))
        act = action_from_spec_text
        m0 = MealyMachine("a", {
            ("a", act("cmp s, #0")): ("b", (Observable("Time", 1),)),
            ("b", act("nop")): ("c", reset),
        })
        m1 = MealyMachine("a", {
            ("a", act("cmp s, #0")): ("b", (Observable("Time", 1),)),
            ("b", act("nop")): ("c", (Observable("Time", 2),)),
            ("c", act("rst")): ("d", handle),
        }, m0.input_alphabet | {act("rst")})
        m0b = MealyMachine(m0.initial, m0.transitions, m1.input_alphabet)
        silent = SilentSet(["Time"])
        graphs = build_witness_graph(m0b, m1, silent)
        g = next(g for g in graphs if g.kind_action == act("nop"))
        assert [e.output for e in g.left] == [reset]
        assert [e.output for e in g.right] == [(), handle]

    def test_not_distinguished_raises(self):
        m = walkthrough(0)
        with pytest.raises(NotDistinguished):
            build_witness_graph(m, m, WALK_SILENT)

    def test_dot_styles(self):
        g = build_witness_graph(walkthrough(0), walkthrough(1), WALK_SILENT)[0]
        dot = g.to_dot()
        assert "style=solid" in dot and "style=dashed" in dot and "style=dotted" in dot
        assert "color=red" in dot and "color=blue" in dot

    def test_every_witness_validates(self):
        rng = random.Random(73)
        checked = 0
        for _ in range(40):
            m0 = random_mealy(rng, rng.randrange(2, 5), (A0, A1), 2, total=False)
            m1 = random_mealy(rng, rng.randrange(2, 5), (A0, A1), 2, total=False)
            silent = SilentSet(["Time"]) if rng.random() < 0.5 else SilentSet()
            try:
                graphs = build_witness_graph(m0, m1, silent)
            except NotDistinguished:
                continue
            for g in graphs:
                assert validate_witness(g, m0, m1, silent)
                checked += 1
        assert checked > 20

    def test_minimality_against_brute_force(self):
        """Each emitted witness is the shortest of its kind: no strictly
        shorter word reaches the same diverging (product state, input)."""
        rng = random.Random(79)
        compared = 0
        for _ in range(40):
            m0 = random_mealy(rng, rng.randrange(2, 5), (A0, A1), 2, total=False)
            m1 = random_mealy(rng, rng.randrange(2, 5), (A0, A1), 2, total=False)
            if m0.n_states() * m1.n_states() > 20:
                continue
            silent = SilentSet()
            try:
                graphs = build_witness_graph(m0, m1, silent)
            except NotDistinguished:
                continue

            def product_state(word):
                s0, s1 = m0.initial, m1.initial
                mode0 = mode1 = "UM"
                for a in word:
                    n0, w0 = m0.transitions[(s0, a)]
                    n1, w1 = m1.transitions[(s1, a)]
                    mode0 = mode_after(w0, mode0)
                    mode1 = mode_after(w1, mode1)
                    s0, s1 = n0, n1
                return (s0, s1, mode0, mode1)

            # reference: scan all words shortest-first, record the first
            # witness word per diverging kind
            expected = {}
            actions = sorted(m0.input_alphabet)
            bound = m0.n_states() * m1.n_states() + 1
            for n in range(1, bound + 1):
                for word in itertools.product(actions, repeat=n):
                    div = first_divergence(m0, m1, silent, word)
                    if div != n - 1:
                        continue
                    kind = (product_state(word[:-1]), word[-1])
                    expected.setdefault(kind, word)
            got = {(product_state(g.kind_word), g.kind_action): g.word
                   for g in graphs}
            assert got == expected
            compared += 1
        assert compared > 10
