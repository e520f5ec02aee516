"""Noninterference verdicts over learned models and witness-graph
construction.

Robust noninterference holds for an attacker when every pair of per-secret
models is weakly trace-equivalent modulo the silent observables; its
preservation holds when a baseline-equivalent pair stays equivalent under
the stronger attacker.  Each violation is reported as a witness graph: the
shared prefix both models agree on, then the two divergent continuations.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from itertools import combinations

from .actions import Action, render_word
from .mealy import (
    AlphabetMismatch,
    Distinguished,
    Equivalent,
    MealyMachine,
    SilentSet,
    mode_after,
    weak_equiv,
)


class NotDistinguished(ValueError):
    pass


@dataclass(frozen=True)
class WitnessEdge:
    action: Action
    output: tuple  # projected observables; () renders as tau

    def render(self):
        return f"{self.action.render()}/{render_word(self.output)}"


@dataclass
class WitnessGraph:
    """Shared prefix plus per-model divergence for one witness kind.

    `left`/`right` carry the model-0/model-1 continuations from the shared
    node: the divergent edge itself and, when that edge is silent while the
    other side is not, the shortest silent path to the next visible output.
    A side is empty when its model does not define the divergent action."""

    kind_word: tuple        # input word reaching the divergence node
    kind_action: Action     # the diverging input
    shared: list            # WitnessEdge (projection agrees on both models)
    left: list              # WitnessEdge for model 0
    right: list             # WitnessEdge for model 1

    @property
    def word(self):
        return self.kind_word + (self.kind_action,)

    def identifier(self):
        return "-".join(a.render().split()[0] for a in self.word) or "root"

    def render_text(self):
        lines = [f"witness {self.identifier()}"]
        lines.append("word " + "; ".join(a.render() for a in self.word))
        for edge in self.shared:
            lines.append("  both  " + edge.render())
        for edge in self.left:
            lines.append("  left  " + edge.render())
        if not self.left:
            lines.append("  left  (undefined)")
        for edge in self.right:
            lines.append("  right " + edge.render())
        if not self.right:
            lines.append("  right (undefined)")
        return "\n".join(lines) + "\n"

    def to_dot(self, name=None):
        name = name or "witness"
        lines = [f"digraph {name} {{", "  rankdir=TB;",
                 '  node [shape=circle, label=""];',
                 "  __start [shape=point];"]
        n = 0
        lines.append(f"  __start -> s{n};")
        for edge in self.shared:
            lines.append(
                f'  s{n} -> s{n + 1} [label="{edge.render()}", style=solid];')
            n += 1
        fork = n
        for i, edge in enumerate(self.left):
            src = f"s{fork}" if i == 0 else f"l{i}"
            lines.append(
                f'  {src} -> l{i + 1} [label="{edge.render()}", style=dashed, color=red, fontcolor=black];')
        for i, edge in enumerate(self.right):
            src = f"s{fork}" if i == 0 else f"r{i}"
            lines.append(
                f'  {src} -> r{i + 1} [label="{edge.render()}", style=dotted, color=blue, fontcolor=black];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _project_step(word, mode, silent):
    step_mode = mode_after(word, mode)
    return tuple(o for o in word if not silent.silences(o, step_mode)), step_mode


def build_witness_graph(m0: MealyMachine, m1: MealyMachine,
                        silent: SilentSet, max_witnesses: int = 64):
    """All shortest-per-kind witnesses of inequivalence.

    A kind is a diverging (product state, input) pair.  Breadth-first search
    over the synchronous product with canonical input ordering yields the
    shortest (lexicographically least) path to each kind; exploration never
    continues through a divergence."""
    if m0.input_alphabet != m1.input_alphabet:
        raise AlphabetMismatch("machines do not share an input alphabet")
    start = (m0.initial, m1.initial, "UM", "UM")
    queue = deque([(start, ())])
    seen = {start}
    witnesses = []
    while queue and len(witnesses) < max_witnesses:
        (s0, s1, mode0, mode1), word = queue.popleft()
        for a in sorted(set(m0.defined(s0)) | set(m1.defined(s1))):
            t0 = m0.transitions.get((s0, a))
            t1 = m1.transitions.get((s1, a))
            if t0 is None and t1 is None:
                continue
            p0 = em0 = p1 = em1 = None
            if t0 is not None:
                p0, em0 = _project_step(t0[1], mode0, silent)
            if t1 is not None:
                p1, em1 = _project_step(t1[1], mode1, silent)
            if t0 is None or t1 is None or p0 != p1:
                witnesses.append(_assemble(m0, m1, silent, word, a,
                                           (s0, s1, mode0, mode1)))
                continue
            nxt = (t0[0], t1[0], em0, em1)
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, word + (a,)))
    if not witnesses:
        raise NotDistinguished("the models are weakly trace-equivalent")
    return witnesses


def _assemble(m0, m1, silent, word, action, product):
    s0, s1, mode0, mode1 = product
    shared = []
    c0, c1 = m0.initial, m1.initial
    cm0 = cm1 = "UM"
    for a in word:
        n0, w0 = m0.transitions[(c0, a)]
        p0, cm0 = _project_step(w0, cm0, silent)
        n1, _w1 = m1.transitions[(c1, a)]
        _p1, cm1 = _project_step(_w1, cm1, silent)
        shared.append(WitnessEdge(a, p0))
        c0, c1 = n0, n1
    t0 = m0.transitions.get((s0, action))
    t1 = m1.transitions.get((s1, action))
    left = right = ()
    if t0 is not None:
        p0, em0 = _project_step(t0[1], mode0, silent)
        left = [WitnessEdge(action, p0)]
    if t1 is not None:
        p1, em1 = _project_step(t1[1], mode1, silent)
        right = [WitnessEdge(action, p1)]
    # a silent divergent step facing a visible one is continued to the next
    # visible output so the attacker-facing difference is readable
    if t0 is not None and t1 is not None:
        if left[0].output == () and right[0].output != ():
            left = left + _visible_continuation(m0, t0[0], em0, silent)
        elif right[0].output == () and left[0].output != ():
            right = right + _visible_continuation(m1, t1[0], em1, silent)
    return WitnessGraph(kind_word=word, kind_action=action,
                        shared=shared, left=list(left), right=list(right))


def _visible_continuation(machine, state, mode, silent):
    """Shortest all-silent path from `state` to the first visible output."""
    queue = deque([(state, mode, ())])
    seen = {(state, mode)}
    while queue:
        s, m, path = queue.popleft()
        for a in machine.defined(s):
            nxt, word = machine.transitions[(s, a)]
            proj, em = _project_step(word, m, silent)
            if proj != ():
                return [WitnessEdge(x, ()) for x in path] + [WitnessEdge(a, proj)]
            if (nxt, em) not in seen:
                seen.add((nxt, em))
                queue.append((nxt, em, path + (a,)))
    return []


def validate_witness(witness: WitnessGraph, m0, m1, silent):
    """Replay both branches; a genuine witness shows differing projected
    behavior (or definedness) at the divergence."""
    from .mealy import project

    def replay(machine, word):
        run = machine.run(word)
        return run.undefined_at, project(run.outputs, silent)

    u0, p0 = replay(m0, witness.word)
    u1, p1 = replay(m1, witness.word)
    if (u0 is None) != (u1 is None):
        return True
    if u0 is None and p0[-1] != p1[-1]:
        return True
    return False


# ---------------------------------------------------------------------------
# Verdicts


@dataclass
class RniResult:
    attacker: str
    pairs: dict  # (s0, s1) -> Equivalent | Distinguished

    @property
    def holds(self):
        return all(bool(v) for v in self.pairs.values())

    def distinguished_pairs(self):
        return [pair for pair, v in self.pairs.items() if not v]


@dataclass
class Verdict:
    rni_basic: RniResult
    rni_advanced: RniResult
    prni: str                      # "preserved" | "violated"
    insecure_baseline: bool        # the premise failed: baseline already leaks
    witnesses: list = field(default_factory=list)
    provenance: dict = field(default_factory=dict)

    @property
    def preserved(self):
        return self.prni == "preserved"


def check_rni(models: dict, silent: SilentSet, attacker: str = "attacker") -> RniResult:
    """Pairwise weak equivalence over all unordered secret pairs."""
    pairs = {}
    for s0, s1 in combinations(sorted(models), 2):
        pairs[(s0, s1)] = weak_equiv(models[s0], models[s1], silent)
    return RniResult(attacker=attacker, pairs=pairs)


def check_prni(basic: dict, advanced: dict, silent: SilentSet,
               advanced_silent: SilentSet | None = None,
               provenance: dict | None = None) -> Verdict:
    """Preservation of robust noninterference on learned models.

    Violated exactly when the basic attacker distinguishes no secret pair
    but the advanced attacker distinguishes some; witnesses are built for
    every distinguished advanced pair."""
    adv_silent = advanced_silent if advanced_silent is not None else silent
    rni_b = check_rni(basic, silent, attacker="basic")
    rni_a = check_rni(advanced, adv_silent, attacker="advanced")
    witnesses = []
    if rni_b.holds and not rni_a.holds:
        prni = "violated"
        for (s0, s1) in rni_a.distinguished_pairs():
            for w in build_witness_graph(advanced[s0], advanced[s1], adv_silent):
                witnesses.append(((s0, s1), w))
    else:
        prni = "preserved"
    return Verdict(
        rni_basic=rni_b,
        rni_advanced=rni_a,
        prni=prni,
        insecure_baseline=not rni_b.holds,
        witnesses=witnesses,
        provenance=provenance or {},
    )
