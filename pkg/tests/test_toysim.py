import random
from pathlib import Path

import pytest

from leaklearn.actions import IRQ, Action, Observable, action_from_spec_text
from leaklearn.mealy import SilentSet, project, render_word
from leaklearn.speclang import parse_spec
from leaklearn.sul import (
    CachedSul,
    ProtocolViolation,
    SpecDriver,
    SpecTeacher,
    section_router,
)
from leaklearn.toysim import (
    EV_ENTERED,
    EV_EXITED,
    EV_HANDLED,
    EV_RESET,
    EV_RETURNED,
    IllegalInMode,
    ObservationProfile,
    ToyEnclaveSim,
    VersionFlags,
)

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "leaklearn" / "fixtures"


def act(text):
    return IRQ if text == "irq" else action_from_spec_text(text)


def run_words(sim, texts):
    outs = []
    for t in texts:
        r = sim.step(act(t))
        outs.append(r)
        if r.event == EV_RESET:
            break
    return outs


def obs(kind, value=None):
    return Observable(kind, value)


WALK = ["start_counting 256", "create_enclave", "jin enc_s", "cmp s, #0", "ubr"]


class TestCalibration:
    def test_walkthrough_table_secret0(self):
        sim = ToyEnclaveSim(0)
        got = [r.output for r in run_words(sim, WALK)]
        assert got == [
            (obs("Time", 10), obs("TimerA", 0)),
            (obs("Time", 648), obs("TimerA", 0)),
            (obs("JmpIn"), obs("TimerA", 2)),
            (obs("Time", 1), obs("TimerA", 3)),
            (obs("JmpOut", 9), obs("TimerA", 12)),
        ]

    def test_walkthrough_table_secret1(self):
        sim = ToyEnclaveSim(1)
        got = [r.output for r in run_words(sim, WALK)]
        assert got[:4] == [
            (obs("Time", 10), obs("TimerA", 0)),
            (obs("Time", 648), obs("TimerA", 0)),
            (obs("JmpIn"), obs("TimerA", 2)),
            (obs("Time", 1), obs("TimerA", 3)),
        ]
        assert got[4] == (obs("JmpOut", 2), obs("TimerA", 5))

    def test_unbalanced_branch_costs(self):
        # 9 against 2 cycles: the longer branch pays an extra 5-cycle store
        # and a 2-cycle jump
        out0 = run_words(ToyEnclaveSim(0), WALK)[-1].output
        out1 = run_words(ToyEnclaveSim(1), WALK)[-1].output
        assert out0[0] == obs("JmpOut", 9)
        assert out1[0] == obs("JmpOut", 2)
        assert out0[0].value - out1[0].value == 7 == 5 + 2

    def test_mode_events(self):
        sim = ToyEnclaveSim(0)
        events = [r.event for r in run_words(sim, WALK)]
        assert events == ["none", "none", EV_ENTERED, "none", EV_EXITED]


VB8_WORD = ["timer_enable 3", "create_enclave", "jin enc_s", "cmp s, #0",
            "ifz (mov &unprot_mem, r8; nop) (nop; mov &unprot_mem, r8)", "irq"]


class TestVersionFlags:
    def test_vb8_reset_against_handle(self):
        flags = VersionFlags(rw_violation_resets=True)
        profile = ObservationProfile(timera=False, umem=True)
        r0 = run_words(ToyEnclaveSim(0, flags=flags, profile=profile), VB8_WORD)
        assert r0[-1].output == (obs("Reset"),)
        assert r0[-1].event == EV_RESET
        r1 = run_words(ToyEnclaveSim(1, flags=flags, profile=profile), VB8_WORD)
        assert r1[-1].output == (obs("Handle", 4), obs("UMem", 0))
        assert r1[-1].event == EV_HANDLED

    def test_vb6_store_visible_mid_enclave(self):
        flags = VersionFlags(umem_write_leaks_mid_enclave=True)
        profile = ObservationProfile(timera=False, umem=True)
        word = VB8_WORD[:4] + [
            "ifz (mov #42, &unprot_mem; nop) (nop; mov #42, &unprot_mem)", "irq"]
        r0 = run_words(ToyEnclaveSim(0, flags=flags, profile=profile), word)
        r1 = run_words(ToyEnclaveSim(1, flags=flags, profile=profile), word)
        assert r0[-1].output == (obs("Handle", 4), obs("UMem", 42))
        assert r1[-1].output == (obs("Handle", 4), obs("UMem", 0))

    def test_vb9_reset_against_handle9(self):
        flags = VersionFlags(enclave_rst_resets=True)
        profile = ObservationProfile(timera=False, umem=False)
        word = VB8_WORD[:4] + ["ifz (rst; nop) (nop; rst)", "irq"]
        r0 = run_words(ToyEnclaveSim(0, flags=flags, profile=profile), word)
        r1 = run_words(ToyEnclaveSim(1, flags=flags, profile=profile), word)
        assert r0[-1].output == (obs("Reset"),)
        assert r1[-1].output == (obs("Handle", 9),)

    def test_vb1_return_timing(self):
        flags = VersionFlags(reti_extra_cycle=True)
        word = VB8_WORD[:4] + [
            "ifz (add #1, &data_s; nop) (nop; add #1, &data_s)",
            "irq", "timer_enable 1", "reti", "irq"]
        r0 = run_words(ToyEnclaveSim(0, flags=flags), word)
        r1 = run_words(ToyEnclaveSim(1, flags=flags), word)
        assert r0[-1].output == (obs("Handle", 9), obs("TimerA", 1))
        assert r1[-1].output == (obs("Handle", 7), obs("TimerA", 0))

    @pytest.mark.parametrize("word", [
        VB8_WORD,
        VB8_WORD[:4] + ["ifz (mov #42, &unprot_mem; nop) (nop; mov #42, &unprot_mem)", "irq"],
        VB8_WORD[:4] + ["ifz (rst; nop) (nop; rst)", "irq"],
        VB8_WORD[:4] + ["ifz (add #1, &data_s; nop) (nop; add #1, &data_s)",
                        "irq", "timer_enable 1", "reti", "irq"],
    ])
    def test_flag_isolation_patched_words_agree(self, word):
        # all version flags off, padding on: the four distinguishing words
        # give identical projected behavior for both secrets
        silent = SilentSet(["Time", "JmpIn", "JmpOut", "TimerA@PM"])
        profile = ObservationProfile(timera=True, umem=True, reg=True)
        outs = {}
        for secret in (0, 1):
            sim = ToyEnclaveSim(secret, flags=VersionFlags.patched(), profile=profile)
            outs[secret] = project([r.output for r in run_words(sim, word)], silent)
        assert outs[0] == outs[1]

    def test_jmp_into_data_loops(self):
        sim = ToyEnclaveSim(0, flags=VersionFlags.patched(),
                            diverge_budget=500)
        word = ["start_counting 256", "create_enclave", "jin enc_s",
                "cmp s, #0", "ifz (jmp #data_s; nop) (nop; jmp #data_s)"]
        r = run_words(sim, word)
        assert r[-1].output == (obs("Diverge"),)
        assert r[-1].event == EV_RESET


class TestGuards:
    def test_enclave_action_outside_enclave(self):
        sim = ToyEnclaveSim(0)
        with pytest.raises(IllegalInMode):
            sim.step(act("cmp s, #0"))

    def test_attacker_action_inside_enclave(self):
        sim = ToyEnclaveSim(0)
        run_words(sim, WALK[:3])
        with pytest.raises(IllegalInMode):
            sim.step(act("start_counting 256"))

    def test_irq_without_pending(self):
        sim = ToyEnclaveSim(0)
        with pytest.raises(IllegalInMode):
            sim.step(IRQ)

    def test_dead_device_refuses(self):
        sim = ToyEnclaveSim(0)
        sim.step(act("jin enc_s"))  # no enclave yet: reset
        with pytest.raises(IllegalInMode):
            sim.step(act("create_enclave"))

    def test_abuse_resets(self):
        # interrupt return outside a handler
        sim = ToyEnclaveSim(0)
        assert sim.step(act("reti")).output == (obs("Reset"),)
        # restarting the enclave from the handler
        flags = VersionFlags(umem_write_leaks_mid_enclave=True)
        sim = ToyEnclaveSim(1, flags=flags)
        run_words(sim, VB8_WORD[:4] + [
            "ifz (mov #42, &unprot_mem; nop) (nop; mov #42, &unprot_mem)", "irq"])
        assert sim.step(act("jin enc_s")).output == (obs("Reset"),)


class TestSectionRouter:
    def test_happy_path(self):
        section = "prepare"
        for event, expected in [
            (EV_ENTERED, "enclave"), (EV_HANDLED, "isr"), (EV_RETURNED, "enclave"),
            (EV_EXITED, "cleanup"),
        ]:
            section = section_router(event, section)
            assert section == expected

    def test_none_keeps_section(self):
        assert section_router("none", "isr") == "isr"

    def test_reset_terminates(self):
        for section in ("prepare", "enclave", "isr", "cleanup"):
            assert section_router(EV_RESET, section) == "dead"

    def test_out_of_order_rejected(self):
        with pytest.raises(ProtocolViolation):
            section_router(EV_HANDLED, "prepare")
        with pytest.raises(ProtocolViolation):
            section_router(EV_RETURNED, "enclave")
        with pytest.raises(ProtocolViolation):
            section_router(EV_ENTERED, "isr")


def _advanced_teacher(secret, flags=VersionFlags(), seed=0):
    attacker = parse_spec((FIXTURES / "advanced_attacker.spec").read_text())
    trusted = parse_spec((FIXTURES / "secure_enclave.spec").read_text())
    sim = ToyEnclaveSim(secret, flags=flags,
                        profile=ObservationProfile(timera=True, umem=True, reg=True))
    return SpecTeacher(SpecDriver(attacker, trusted), CachedSul(sim)), sim


def _random_admissible_word(teacher, rng, max_len=14):
    word = []
    while len(word) < max_len:
        result = teacher.query(tuple(word))
        admissible = sorted(result.admissible[result.defined_len])
        if not admissible:
            break
        word.append(admissible[rng.randrange(len(admissible))])
    return tuple(word)


class TestDeterminism:
    def test_replays_are_identical(self):
        rng = random.Random(31)
        teacher, _sim = _advanced_teacher(0, VersionFlags.all_bugs())
        words = [_random_admissible_word(teacher, rng) for _ in range(1000)]
        for word in words:
            fresh = ToyEnclaveSim(0, flags=VersionFlags.all_bugs(),
                                  profile=ObservationProfile(timera=True, umem=True, reg=True))
            first, second = [], []
            for target in (first, second):
                fresh.reset()
                for a in word:
                    target.append(fresh.step(a))
            assert first == second

    def test_entered_exited_alternate(self):
        rng = random.Random(37)
        teacher, _sim = _advanced_teacher(1)
        for _ in range(300):
            word = _random_admissible_word(teacher, rng)
            result = teacher.query(word)
            fresh = ToyEnclaveSim(1, profile=ObservationProfile(timera=True, umem=True, reg=True))
            inside = False
            for a in word:
                r = fresh.step(a)
                if r.event == EV_ENTERED:
                    assert not inside
                    inside = True
                elif r.event == EV_EXITED:
                    assert inside
                    inside = False
                elif r.event == EV_RESET:
                    break
