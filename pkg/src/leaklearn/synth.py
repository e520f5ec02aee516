"""Synthesis of executable attack programs from witnesses, and their replay
as regression tests.

A program is the witness word rendered line by line, each line prefixed by
its owner (att: or enc:); the enclave's secret stays the placeholder `s`.
Replaying substitutes each secret, runs the program on a fresh device, and
compares the projected transcripts: a program is distinguishing when they
differ.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .actions import Action, action_from_spec_text, render_word
from .mealy import SilentSet, project
from .toysim import SulFailure


@dataclass
class AttackProgram:
    lines: list                    # (owner, Action)
    source_witness: str = ""

    @property
    def word(self):
        return tuple(a for _owner, a in self.lines)

    def render(self) -> str:
        out = []
        for i, (owner, action) in enumerate(self.lines):
            text = f"{owner}: {action.render_concrete()}"
            if i + 1 < len(self.lines):
                text += ";"
            out.append(text)
        return "\n".join(out) + "\n"

    @classmethod
    def parse(cls, text: str) -> "AttackProgram":
        lines = []
        for raw in text.splitlines():
            raw = raw.strip()
            if not raw or raw.startswith("#"):
                continue
            owner, _, body = raw.partition(":")
            owner = owner.strip()
            if owner not in ("att", "enc"):
                raise ValueError(f"bad owner prefix in line {raw!r}")
            body = body.strip().rstrip(";")
            action = action_from_spec_text(body)
            if action.owner != owner:
                raise ValueError(f"{body!r} does not belong to {owner!r}")
            lines.append((owner, action))
        return cls(lines=lines)


def synthesize(witness) -> AttackProgram:
    """One shared program per witness: the common prefix plus the diverging
    input, owners taken from the action vocabulary."""
    lines = [(a.owner, a) for a in witness.word]
    return AttackProgram(lines=lines, source_witness=witness.identifier())


@dataclass
class ReplayResult:
    transcripts: dict              # secret -> list of projected OutputWord
    raw: dict                      # secret -> list of raw OutputWord
    executed: dict                 # secret -> number of executed steps
    distinguishing: bool

    def verdict(self) -> str:
        return "distinguishing" if self.distinguishing else "not-distinguishing"


def replay(program: AttackProgram, sul_factory, secrets,
           silent: SilentSet = SilentSet()) -> ReplayResult:
    """Run the program once per secret and compare projected transcripts.

    `sul_factory(secret)` returns a fresh device; a step the device refuses
    ends that secret's transcript (refusal points count as behavior)."""
    transcripts = {}
    raw = {}
    executed = {}
    for secret in sorted(secrets):
        sim = sul_factory(secret)
        sim.reset()
        outputs = []
        for _owner, action in program.lines:
            try:
                result = sim.step(action)
            except SulFailure:
                break
            except RuntimeError:
                break
            outputs.append(result.output)
            if result.event == "reset":
                break
        raw[secret] = outputs
        transcripts[secret] = project(outputs, silent)
        executed[secret] = len(outputs)
    values = list(transcripts.values())
    distinguishing = any(v != values[0] for v in values[1:])
    return ReplayResult(transcripts=transcripts, raw=raw, executed=executed,
                        distinguishing=distinguishing)


def render_transcript(result: ReplayResult) -> str:
    lines = []
    for secret in sorted(result.transcripts):
        lines.append(f"secret {secret}")
        for word in result.transcripts[secret]:
            lines.append("  " + render_word(word))
    lines.append(f"verdict {result.verdict()}")
    return "\n".join(lines) + "\n"
