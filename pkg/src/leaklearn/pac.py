"""Probably-approximately-correct equivalence checking.

The oracle draws `ceil((1/eps) * (ln(1/delta) + r*ln 2))` random traces at
its r-th invocation and replays each against the hypothesis.  Traces are
sampled by walking the specification cursors: at every step a continuation
coin is flipped, then one action is drawn uniformly from the admissible
set.  The law of this sampler is the reference distribution for the
probabilistic guarantees quoted in reports.
"""

from __future__ import annotations

import json
import math
import random
from dataclasses import dataclass, field


@dataclass(frozen=True)
class PacConfig:
    epsilon: float
    delta: float
    continue_prob: float = 0.9
    seed: int = 0

    def __post_init__(self):
        for name in ("epsilon", "delta", "continue_prob"):
            v = getattr(self, name)
            if not 0.0 < v < 1.0:
                raise ValueError(f"{name} must lie strictly in (0, 1), got {v}")


def sample_count(epsilon: float, delta: float, round_: int) -> int:
    """Number of random traces for the round_-th oracle invocation."""
    return math.ceil((1.0 / epsilon) * (math.log(1.0 / delta) + round_ * math.log(2.0)))


@dataclass
class SampledTrace:
    word: tuple
    attack_fragment: dict      # section -> action list (isr/prepare/cleanup)
    trusted_fragment: dict     # section -> action list (enclave)


def sample_trace(teacher, rng: random.Random, continue_prob: float) -> SampledTrace:
    """Draw one specification-conformant trace.

    beta starts empty; with probability `continue_prob` it is extended by an
    action drawn uniformly from the admissible set (sampling stops when the
    coin fails or nothing is admissible).  The concrete attack and trusted
    component are accumulated alongside: a new action extends the fragment
    of the section it ran in unless that position was already recorded."""
    word = []
    fragments = {"isr": [], "prepare": [], "cleanup": [], "enclave": []}
    positions = {"isr": 0, "prepare": 0, "cleanup": 0, "enclave": 0}
    result = teacher.query(())
    while True:
        admissible = sorted(result.admissible[result.defined_len])
        if not admissible:
            break
        if rng.random() >= continue_prob:
            break
        action = admissible[rng.randrange(len(admissible))]
        word.append(action)
        result = teacher.query(tuple(word))
        section = result.sections[-1] if result.sections else None
        if section in fragments:
            if section == "isr" and result.defined_len >= 2 and \
                    result.sections[-2] != "isr":
                positions["isr"] = 0  # fresh handler activation
            pos = positions[section]
            frag = fragments[section]
            if pos == len(frag):
                frag.append(action)
            # an already-recorded position is kept as it was first seen
            positions[section] = pos + 1
    attack = {k: fragments[k] for k in ("isr", "prepare", "cleanup")}
    trusted = {"enclave": fragments["enclave"]}
    return SampledTrace(tuple(word), attack, trusted)


@dataclass
class RoundLog:
    round: int
    n_samples: int
    counterexample: tuple | None


class PacOracle:
    """Equivalence oracle with the round-indexed sample schedule.  The round
    counter persists across invocations within one learning run."""

    def __init__(self, teacher, config: PacConfig, log_path=None):
        self.teacher = teacher
        self.config = config
        self.rng = random.Random(config.seed)
        self.round = 0
        self.rounds: list[RoundLog] = []
        self.log_path = log_path

    def find_counterexample(self, hyp):
        self.round += 1
        n = sample_count(self.config.epsilon, self.config.delta, self.round)
        found = None
        for _ in range(n):
            trace = sample_trace(self.teacher, self.rng, self.config.continue_prob)
            if not trace.word:
                continue
            if self._mismatch(hyp, trace.word):
                found = trace.word
                break
        self.rounds.append(RoundLog(self.round, n, found))
        if self.log_path:
            self._write_log()
        return found

    def _mismatch(self, hyp, word) -> bool:
        result = self.teacher.query(word)
        run = hyp.run(tuple(word[: result.defined_len]))
        if run.undefined_at is not None:
            return True
        for got, expected in zip(run.outputs, result.outputs):
            if got != expected:
                return True
        if result.defined_len < len(word):
            state = hyp.initial
            for action in word[: result.defined_len]:
                state = hyp.transitions[(state, action)][0]
            if (state, word[result.defined_len]) in hyp.transitions:
                return True
        return False

    def _write_log(self):
        with open(self.log_path, "w", encoding="utf-8") as fh:
            for entry in self.rounds:
                fh.write(json.dumps({
                    "round": entry.round,
                    "samples": entry.n_samples,
                    "counterexample": [a.render() for a in entry.counterexample]
                    if entry.counterexample else None,
                }, sort_keys=True) + "\n")


class ExactOracle:
    """Product-equivalence oracle against a known hidden machine (tests and
    ground-truth experiments only)."""

    def __init__(self, hidden):
        self.hidden = hidden

    def find_counterexample(self, hyp):
        from .mealy import EMPTY_SILENT, MealyMachine, weak_equiv

        hidden = self.hidden
        if hyp.input_alphabet != hidden.input_alphabet:
            union = hyp.input_alphabet | hidden.input_alphabet
            hyp = MealyMachine(hyp.initial, hyp.transitions, union)
            hidden = MealyMachine(hidden.initial, hidden.transitions, union)
        verdict = weak_equiv(hyp, hidden, EMPTY_SILENT)
        if verdict:
            return None
        return verdict.word
