"""Deterministic Mealy machines, silent-observable projection, and weak
trace equivalence.

A machine maps (state, action) to (next state, output word).  The
transition map may be partial: only the inputs the specification admits at
a state are defined.  Two machines over a shared alphabet are weakly
trace-equivalent when, for every input word defined in either machine,
definedness agrees and the silent-projected outputs agree step by step
(an all-silent step keeps its position and is rendered as tau).
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

from .actions import (
    Action,
    Observable,
    OutputWord,
    action_from_spec_text,
    render_word,
    word_from_text,
)


class AlphabetMismatch(ValueError):
    pass


class MachineError(ValueError):
    pass


TERMINAL_KINDS = ("Reset", "Diverge")


def mode_after(word: OutputWord, mode: str) -> str:
    """CPU mode at the end of a step, derived from the raw observables."""
    for obs in word:
        if obs.kind == "JmpIn" or obs.kind == "Reti":
            mode = "PM"
        elif obs.kind == "JmpOut" or obs.kind == "Handle":
            mode = "UM"
        elif obs.kind in TERMINAL_KINDS:
            mode = "DEAD"
    return mode


class SilentSet:
    """Observable kinds erased before comparing behaviors.

    Entries are either a bare kind ("Time") or a mode-qualified kind
    ("TimerA@PM"), the latter silencing the observable only on steps that
    end in the given CPU mode.
    """

    def __init__(self, entries=()):
        plain = set()
        by_mode = set()
        for entry in entries:
            if "@" in entry:
                kind, mode = entry.split("@", 1)
                if mode not in ("UM", "PM"):
                    raise ValueError(f"bad mode filter: {entry!r}")
                by_mode.add((kind, mode))
            else:
                plain.add(entry)
        self.plain = frozenset(plain)
        self.by_mode = frozenset(by_mode)

    def silences(self, obs: Observable, step_mode: str) -> bool:
        return obs.kind in self.plain or (obs.kind, step_mode) in self.by_mode

    def entries(self):
        return sorted(self.plain) + sorted(f"{k}@{m}" for k, m in self.by_mode)

    def __le__(self, other: "SilentSet"):
        if not self.plain <= other.plain:
            return False
        for kind, mode in self.by_mode:
            if kind not in other.plain and (kind, mode) not in other.by_mode:
                return False
        return True

    def __eq__(self, other):
        return isinstance(other, SilentSet) and self.entries() == other.entries()

    def __repr__(self):
        return f"SilentSet({self.entries()})"


EMPTY_SILENT = SilentSet()


def project(outputs, silent: SilentSet, start_mode: str = "UM"):
    """Erase silent observables; positions are kept (all-silent step -> ()).

    Step modes are tracked from the raw observables, starting in UM."""
    mode = start_mode
    result = []
    for word in outputs:
        step_mode = mode_after(word, mode)
        result.append(tuple(o for o in word if not silent.silences(o, step_mode)))
        mode = step_mode
    return result


@dataclass
class RunResult:
    outputs: list
    undefined_at: int | None = None  # index of the first undefined input, if any


@dataclass(frozen=True)
class Equivalent:
    def __bool__(self):
        return True


@dataclass(frozen=True)
class Distinguished:
    word: tuple
    step: int

    def __bool__(self):
        return False


class MealyMachine:
    """Immutable deterministic Mealy machine with a possibly-partial
    transition function over a declared input alphabet."""

    def __init__(self, initial, transitions, input_alphabet=None):
        # transitions: {(state, Action): (next_state, OutputWord)}
        self.initial = initial
        self.transitions = dict(transitions)
        if input_alphabet is None:
            input_alphabet = {a for (_, a) in self.transitions}
        self.input_alphabet = frozenset(input_alphabet)
        for (_, a) in self.transitions:
            if a not in self.input_alphabet:
                raise MachineError(f"transition on {a!r} outside the alphabet")
        self.states = self._reachable()
        self._out_degree = {}
        for (s, _a), _ in self.transitions.items():
            self._out_degree[s] = self._out_degree.get(s, 0) + 1
        self._check_terminals()

    def _reachable(self):
        seen = {self.initial}
        queue = deque([self.initial])
        succ = {}
        for (s, a), (t, _) in self.transitions.items():
            succ.setdefault(s, []).append(t)
        while queue:
            s = queue.popleft()
            for t in succ.get(s, ()):
                if t not in seen:
                    seen.add(t)
                    queue.append(t)
        all_states = {self.initial}
        for (s, _), (t, _) in self.transitions.items():
            all_states.add(s)
            all_states.add(t)
        unreachable = all_states - seen
        if unreachable:
            raise MachineError(f"unreachable states: {sorted(map(str, unreachable))}")
        return frozenset(seen)

    def _check_terminals(self):
        for (s, a), (t, word) in self.transitions.items():
            if any(o.kind in TERMINAL_KINDS for o in word):
                if self._out_degree.get(t, 0):
                    raise MachineError(
                        f"terminal observable on {s}-{a.render()} must enter a sink")

    def defined(self, state):
        """Actions with a transition from `state`, canonically ordered."""
        acts = [a for (s, a) in self.transitions if s == state]
        return sorted(acts)

    def step(self, state, action):
        return self.transitions.get((state, action))

    def run(self, word) -> RunResult:
        """Outputs for the longest defined prefix, marking where (if
        anywhere) the transition function is undefined.  An input outside
        the alphabet is undefined, not an error."""
        state = self.initial
        outputs = []
        for i, action in enumerate(word):
            nxt = self.transitions.get((state, action))
            if nxt is None:
                return RunResult(outputs, undefined_at=i)
            state, out = nxt
            outputs.append(out)
        return RunResult(outputs, undefined_at=None)

    def n_states(self):
        return len(self.states)

    # -- serialization ----------------------------------------------------

    def to_text(self) -> str:
        lines = ["mealy 1", f"initial {self.initial}"]
        lines.append("alphabet " + " | ".join(a.render() for a in sorted(self.input_alphabet)))
        items = sorted(self.transitions.items(),
                       key=lambda kv: (str(kv[0][0]), kv[0][1].sort_key()))
        for (s, a), (t, word) in items:
            lines.append(f"trans {s} | {a.render()} | {render_word(word)} | {t}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "MealyMachine":
        initial = None
        alphabet = set()
        transitions = {}
        for raw in text.splitlines():
            line = raw.strip()
            if not line or line.startswith("#") or line == "mealy 1":
                continue
            if line.startswith("initial "):
                initial = line[len("initial "):].strip()
            elif line.startswith("alphabet "):
                body = line[len("alphabet "):]
                for part in body.split(" | "):
                    if part.strip():
                        alphabet.add(action_from_spec_text(part))
            elif line.startswith("trans "):
                fields = [p.strip() for p in line[len("trans "):].split("|")]
                if len(fields) != 4:
                    raise MachineError(f"bad transition line: {raw!r}")
                s, act, word, t = fields
                transitions[(s, action_from_spec_text(act))] = (t, word_from_text(word))
        if initial is None:
            raise MachineError("missing initial state")
        return cls(initial, transitions, alphabet or None)

    def to_dot(self, name="mealy") -> str:
        ids = {s: i for i, s in enumerate(sorted(self.states, key=str))}
        lines = [f"digraph {name} {{", "  rankdir=TB;", "  node [shape=circle];",
                 f'  __start [shape=point]; __start -> n{ids[self.initial]};']
        for s in sorted(self.states, key=str):
            lines.append(f'  n{ids[s]} [label="{s}"];')
        items = sorted(self.transitions.items(),
                       key=lambda kv: (str(kv[0][0]), kv[0][1].sort_key()))
        for (s, a), (t, word) in items:
            label = f"{a.render()}/{render_word(word)}"
            lines.append(f'  n{ids[s]} -> n{ids[t]} [label="{label}"];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def weak_equiv(m0: MealyMachine, m1: MealyMachine, silent: SilentSet):
    """Decide weak trace equivalence of two machines modulo silent
    observables.

    Breadth-first search over the synchronous product, expanding inputs in
    canonical order, so a returned distinguishing word is shortest and
    lexicographically least among the shortest.  Definedness mismatches
    distinguish.  Returns Equivalent() or Distinguished(word, step)."""
    if m0.input_alphabet != m1.input_alphabet:
        raise AlphabetMismatch("machines do not share an input alphabet")
    start = (m0.initial, m1.initial, "UM", "UM")
    queue = deque([(start, ())])
    seen = {start}
    while queue:
        (s0, s1, mode0, mode1), word = queue.popleft()
        d0 = m0.defined(s0)
        d1 = m1.defined(s1)
        for a in sorted(set(d0) | set(d1)):
            t0 = m0.transitions.get((s0, a))
            t1 = m1.transitions.get((s1, a))
            if (t0 is None) != (t1 is None):
                return Distinguished(word + (a,), len(word))
            if t0 is None:
                continue
            n0, w0 = t0
            n1, w1 = t1
            em0 = mode_after(w0, mode0)
            em1 = mode_after(w1, mode1)
            p0 = tuple(o for o in w0 if not silent.silences(o, em0))
            p1 = tuple(o for o in w1 if not silent.silences(o, em1))
            if p0 != p1:
                return Distinguished(word + (a,), len(word))
            nxt = (n0, n1, em0, em1)
            if nxt not in seen:
                seen.add(nxt)
                queue.append((nxt, word + (a,)))
    return Equivalent()
