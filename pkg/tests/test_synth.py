from pathlib import Path

import pytest

from leaklearn.actions import IRQ, action_from_spec_text
from leaklearn.checker import build_witness_graph, check_prni
from leaklearn.mealy import MealyMachine, SilentSet
from leaklearn.speclang import parse_spec
from leaklearn.sul import CachedSul, SpecDriver, SpecTeacher
from leaklearn.synth import AttackProgram, render_transcript, replay, synthesize
from leaklearn.toysim import ObservationProfile, ToyEnclaveSim, VersionFlags

from test_checker import WALK_SILENT, walkthrough

FIXTURES = Path(__file__).resolve().parents[1] / "src" / "leaklearn" / "fixtures"

RUNNING_LISTING = """att: start_counting 256;
att: create <enc_s, enc_e, data_s, data_e>;
att: jin enc_s;
enc: cmp s, #0;
enc: ubr
"""


def walkthrough_witness():
    return build_witness_graph(walkthrough(0), walkthrough(1), WALK_SILENT)[0]


class TestSynthesize:
    def test_running_example_listing_golden(self):
        program = synthesize(walkthrough_witness())
        assert program.render() == RUNNING_LISTING

    def test_single_transition_witness(self):
        from leaklearn.actions import Observable
        m0 = MealyMachine("a", {("a", action_from_spec_text("reti")):
                                ("b", (Observable("Time", 1),))})
        m1 = MealyMachine("a", {("a", action_from_spec_text("reti")):
                                ("b", (Observable("Time", 2),))})
        witness = build_witness_graph(m0, m1, SilentSet())[0]
        program = synthesize(witness)
        assert program.render() == "att: reti\n"

    def test_parse_round_trip(self):
        program = synthesize(walkthrough_witness())
        again = AttackProgram.parse(program.render())
        assert again.word == program.word
        assert again.render() == program.render()

    def test_parse_rejects_wrong_owner(self):
        with pytest.raises(ValueError):
            AttackProgram.parse("enc: start_counting 256\n")


def sul_factory_for(flags, profile):
    def factory(secret):
        return ToyEnclaveSim(secret, flags=flags, profile=profile)
    return factory


class TestReplay:
    def test_running_example_transcripts(self):
        program = synthesize(walkthrough_witness())
        factory = sul_factory_for(VersionFlags(), ObservationProfile())
        result = replay(program, factory, (0, 1), WALK_SILENT)
        assert result.distinguishing
        from leaklearn.actions import Observable
        # raw final step: the longer branch against the shorter one
        assert result.raw[0][-1][0] == Observable("JmpOut", 9)
        assert result.raw[1][-1][0] == Observable("JmpOut", 2)
        assert result.transcripts[0][-1] == (Observable("TimerA", 12),)
        assert result.transcripts[1][-1] == (Observable("TimerA", 5),)
        text = render_transcript(result)
        assert "verdict distinguishing" in text

    def test_empty_program(self):
        factory = sul_factory_for(VersionFlags(), ObservationProfile())
        result = replay(AttackProgram(lines=[]), factory, (0, 1), WALK_SILENT)
        assert not result.distinguishing
        assert result.transcripts == {0: [], 1: []}

    def test_round_trip_on_vb_scenarios(self):
        """Witness programs distinguish on the device that produced them and
        stop distinguishing once the flag is patched."""
        cases = {
            "vb6": (VersionFlags(umem_write_leaks_mid_enclave=True),
                    ObservationProfile(timera=False, umem=True),
                    SilentSet(["Time", "JmpIn", "JmpOut"])),
            "vb8": (VersionFlags(rw_violation_resets=True),
                    ObservationProfile(timera=False, umem=True),
                    SilentSet(["Time", "JmpIn", "JmpOut"])),
            "vb9": (VersionFlags(enclave_rst_resets=True),
                    ObservationProfile(timera=False, umem=False),
                    SilentSet(["Time", "JmpIn", "JmpOut"])),
            "vb1": (VersionFlags(reti_extra_cycle=True),
                    ObservationProfile(timera=True, umem=False),
                    SilentSet(["Time", "JmpIn", "JmpOut", "TimerA@PM"])),
        }
        words = {
            "vb6": ("timer_enable 3", "create_enclave", "jin enc_s", "cmp s, #0",
                    "ifz (mov #42, &unprot_mem; nop) (nop; mov #42, &unprot_mem)",
                    "irq"),
            "vb8": ("timer_enable 3", "create_enclave", "jin enc_s", "cmp s, #0",
                    "ifz (mov &unprot_mem, r8; nop) (nop; mov &unprot_mem, r8)"),
            "vb9": ("timer_enable 3", "create_enclave", "jin enc_s", "cmp s, #0",
                    "ifz (rst; nop) (nop; rst)"),
            "vb1": ("timer_enable 3", "create_enclave", "jin enc_s", "cmp s, #0",
                    "ifz (add #1, &data_s; nop) (nop; add #1, &data_s)",
                    "irq", "timer_enable 1", "reti", "irq"),
        }
        for name, (flags, profile, silent) in cases.items():
            word = tuple(IRQ if t == "irq" else action_from_spec_text(t)
                         for t in words[name])
            program = AttackProgram(lines=[(a.owner, a) for a in word])
            buggy = replay(program, sul_factory_for(flags, profile), (0, 1), silent)
            assert buggy.distinguishing, name
            patched = replay(program, sul_factory_for(VersionFlags(), profile),
                             (0, 1), silent)
            assert not patched.distinguishing, name

    def test_vb8_program_rendering(self):
        word = tuple(action_from_spec_text(t) for t in (
            "timer_enable 3", "create_enclave", "jin enc_s", "cmp s, #0",
            "ifz (mov &unprot_mem, r8; nop) (nop; mov &unprot_mem, r8)"))
        program = AttackProgram(lines=[(a.owner, a) for a in word])
        assert program.render().splitlines()[-1] == \
            "enc: ifz (mov &unprot_mem, r8; nop)(nop; mov &unprot_mem, r8)"
