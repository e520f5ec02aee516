"""System-under-learning plumbing.

`CachedSul` wraps a simulator behind an append-only query cache so a trace
that was executed once is never executed again (the non-determinism check
is skipped by construction: cached observations are trusted).  `SpecDriver`
threads specification cursors along executions, routing sections on mode
events and answering admissibility queries.  `SpecTeacher` combines the
two into the query interface the learner and the trace sampler share.

External simulators can be driven over a line protocol (RESET / STEP) in
place of the built-in toy; see LineProtocolSul.
"""

from __future__ import annotations

import json
import subprocess
from dataclasses import dataclass

from .actions import IRQ, Action, action_from_spec_text, render_word, word_from_text
from .speclang import AttackerSpec, Inadmissible, SectionCursor, TrustedSpec
from .toysim import (
    EV_ENTERED,
    EV_EXITED,
    EV_HANDLED,
    EV_NONE,
    EV_RESET,
    EV_RETURNED,
    IllegalInMode,
    StepResult,
    SulFailure,
)

_EVENTS = (EV_NONE, EV_ENTERED, EV_EXITED, EV_HANDLED, EV_RETURNED, EV_RESET)


class ProtocolViolation(RuntimeError):
    pass


def section_router(event: str, section: str) -> str:
    """Next specification section after a mode event.

    prepare -(entered)-> enclave -(handled)-> isr -(returned)-> enclave
    -(exited)-> cleanup; a reset terminates routing.  A handler that walks
    straight out of the enclave may go isr -(exited)-> cleanup."""
    if event == EV_NONE:
        return section
    if event == EV_RESET:
        return "dead"
    if event == EV_ENTERED:
        if section != "prepare":
            raise ProtocolViolation(f"entered from {section}")
        return "enclave"
    if event == EV_HANDLED:
        if section != "enclave":
            raise ProtocolViolation(f"handled from {section}")
        return "isr"
    if event == EV_RETURNED:
        if section != "isr":
            raise ProtocolViolation(f"returned from {section}")
        return "enclave"
    if event == EV_EXITED:
        if section not in ("enclave", "isr"):
            raise ProtocolViolation(f"exited from {section}")
        return "cleanup"
    raise ProtocolViolation(f"unknown event {event!r}")


# ---------------------------------------------------------------------------
# Query cache


class _TrieNode:
    __slots__ = ("children", "record", "snapshot")

    def __init__(self, record=None, snapshot=None):
        self.children = {}
        self.record = record
        self.snapshot = snapshot


@dataclass
class CacheStats:
    cached_steps: int = 0
    executed_steps: int = 0
    words: int = 0


class CachedSul:
    """Append-only cache in front of a simulator.

    The longest cached prefix of a query is served without touching the
    simulator; the remainder executes from a state snapshot taken when the
    prefix was first run (or by replaying the prefix when no snapshot is
    available, e.g. after loading a persisted log)."""

    def __init__(self, sim, log_path=None):
        self.sim = sim
        self.stats = CacheStats()
        self._log_fh = open(log_path, "a", encoding="utf-8") if log_path else None
        sim.reset()
        self.root = _TrieNode(snapshot=sim.snapshot())

    def close(self):
        if self._log_fh:
            self._log_fh.close()
            self._log_fh = None

    def execute(self, word):
        """Per-step results for `word` from reset.  Raises SulFailure on
        simulator-level errors (an inadmissible action reaching the device)."""
        self.stats.words += 1
        node = self.root
        records = []
        idx = 0
        while idx < len(word):
            child = node.children.get(word[idx])
            if child is None:
                break
            node = child
            records.append(node.record)
            idx += 1
        if idx == len(word):
            self.stats.cached_steps += len(word)
            return records
        self.stats.cached_steps += idx
        self._restore_to(node, word[:idx])
        new_steps = []
        for action in word[idx:]:
            try:
                res = self.sim.step(action)
            except IllegalInMode as exc:
                raise SulFailure(str(exc)) from exc
            self.stats.executed_steps += 1
            child = _TrieNode(record=res, snapshot=self.sim.snapshot())
            node.children[action] = child
            node = child
            records.append(res)
            new_steps.append(res)
        if self._log_fh and new_steps:
            self._log_fh.write(_log_line(word, records) + "\n")
            self._log_fh.flush()
        return records

    def _restore_to(self, node, prefix):
        if node.snapshot is not None:
            self.sim.restore(node.snapshot)
            return
        # snapshot lost (cache loaded from a log): replay the prefix once
        # and refill snapshots along the way
        self.sim.reset()
        cur = self.root
        for action in prefix:
            try:
                res = self.sim.step(action)
            except IllegalInMode as exc:
                raise SulFailure(str(exc)) from exc
            self.stats.executed_steps += 1
            cur = cur.children[action]
            cur.snapshot = self.sim.snapshot()

    # -- persistence ---------------------------------------------------------

    def load_log(self, path):
        """Warm the cache from an append-only log written by a prior run.
        Records are trusted; snapshots are rebuilt lazily on first use."""
        with open(path, "r", encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                word, records = _parse_log_line(line)
                node = self.root
                for action, record in zip(word, records):
                    child = node.children.get(action)
                    if child is None:
                        child = _TrieNode(record=record)
                        node.children[action] = child
                    node = child


def _log_line(word, records) -> str:
    payload = {
        "word": [a.render() for a in word],
        "steps": [
            {"o": render_word(r.output), "e": r.event, "i": int(r.irq_ready)}
            for r in records
        ],
    }
    return json.dumps(payload, sort_keys=True)


def _parse_log_line(line):
    payload = json.loads(line)
    word = tuple(action_from_spec_text(t) for t in payload["word"])
    records = [
        StepResult(word_from_text(s["o"]), s["e"], bool(s["i"]))
        for s in payload["steps"]
    ]
    return word, records


# ---------------------------------------------------------------------------
# Specification-driven admissibility


@dataclass(frozen=True)
class DriverState:
    section: str
    prepare: SectionCursor
    enclave: SectionCursor
    isr: SectionCursor | None
    cleanup: SectionCursor
    irq_ready: bool = False

    def admissible(self) -> frozenset:
        if self.section == "dead":
            return frozenset()
        if self.irq_ready:
            return frozenset((IRQ,))
        cursor = getattr(self, self.section)
        if cursor is None:
            return frozenset()
        return cursor.admissible()


class SpecDriver:
    """Folds specification cursors along an execution.  Pure: states are
    immutable values, so tree nodes can hold them."""

    def __init__(self, attacker: AttackerSpec, trusted: TrustedSpec):
        self.attacker = attacker
        self.trusted = trusted

    def initial(self) -> DriverState:
        return DriverState(
            section="prepare",
            prepare=self.attacker.cursor("prepare"),
            enclave=self.trusted.cursor(),
            isr=None,
            cleanup=self.attacker.cursor("cleanup"),
        )

    def advance(self, state: DriverState, action: Action, record: StepResult) -> DriverState:
        if action not in state.admissible():
            raise Inadmissible(f"{action.render()} not admissible in {state.section}")
        fields = {
            "prepare": state.prepare,
            "enclave": state.enclave,
            "isr": state.isr,
            "cleanup": state.cleanup,
        }
        if action.kind == "irq":
            if record.event != EV_HANDLED and record.event != EV_RESET:
                raise ProtocolViolation("interrupt delivery must enter the handler")
        else:
            fields[state.section] = fields[state.section].advance(action)
        section = section_router(record.event, state.section)
        if record.event == EV_HANDLED:
            fields["isr"] = self.attacker.cursor("isr")  # fresh handler run
        return DriverState(
            section=section,
            prepare=fields["prepare"],
            enclave=fields["enclave"],
            isr=fields["isr"],
            cleanup=fields["cleanup"],
            irq_ready=record.irq_ready,
        )


# ---------------------------------------------------------------------------
# Teacher interfaces (what the learner and the sampler consume)


@dataclass
class QueryResult:
    outputs: list          # OutputWord per executed step
    admissible: list       # admissible action set per node (len = steps + 1)
    sections: list         # section each step executed in (None for irq)
    defined_len: int       # number of steps actually executed


class SpecTeacher:
    """Answers membership-style queries for one (attacker, trusted, secret)
    task, restricted to specification-admissible inputs."""

    def __init__(self, driver: SpecDriver, cached: CachedSul):
        self.driver = driver
        self.cached = cached
        self.queries = 0

    def query(self, word) -> QueryResult:
        """Execute the longest admissible prefix of `word`; outputs and the
        per-node admissible frontier for that prefix."""
        self.queries += 1
        state = self.driver.initial()
        admissible = [state.admissible()]
        outputs = []
        sections = []
        n = 0
        for action in word:
            if action not in admissible[-1]:
                break
            n += 1
            records = self.cached.execute(tuple(word[:n]))
            record = records[-1]
            sections.append(None if action.kind == "irq" else state.section)
            state = self.driver.advance(state, action, record)
            admissible.append(state.admissible())
            outputs.append(record.output)
        return QueryResult(outputs, admissible, sections, n)


class MachineTeacher:
    """Teacher over a hidden Mealy machine, for learning experiments with a
    known ground truth.  Admissibility is the machine's defined-input set."""

    def __init__(self, machine):
        self.machine = machine
        self.queries = 0
        self.steps = 0

    def query(self, word) -> QueryResult:
        self.queries += 1
        state = self.machine.initial
        admissible = [frozenset(self.machine.defined(state))]
        outputs = []
        sections = []
        n = 0
        for action in word:
            nxt = self.machine.transitions.get((state, action))
            if nxt is None:
                break
            n += 1
            self.steps += 1
            state, out = nxt
            outputs.append(out)
            sections.append(None)
            admissible.append(frozenset(self.machine.defined(state)))
        return QueryResult(outputs, admissible, sections, n)


# ---------------------------------------------------------------------------
# Line-protocol adapter for out-of-process simulators
#
# Wire format (one line per message):
#   -> RESET                  reply: OK
#   -> STEP <action text>     reply: OBS <obs, obs, ...> EVT <event> [IRQ]
# An action or observable is rendered in specification syntax.


class LineProtocolSul:
    """Drives an external simulator process through stdin/stdout.  No state
    snapshots: replays walk the whole prefix, so pair it with CachedSul for
    anything query-heavy."""

    def __init__(self, argv):
        self.proc = subprocess.Popen(
            argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
            text=True, bufsize=1)
        self.steps_executed = 0
        self._trace = ()

    def _rpc(self, line: str) -> str:
        self.proc.stdin.write(line + "\n")
        self.proc.stdin.flush()
        reply = self.proc.stdout.readline()
        if not reply:
            raise SulFailure("external simulator closed the connection")
        return reply.strip()

    def reset(self):
        reply = self._rpc("RESET")
        if reply != "OK":
            raise SulFailure(f"bad RESET reply: {reply!r}")
        self._trace = ()

    def step(self, action: Action) -> StepResult:
        self.steps_executed += 1
        reply = self._rpc(f"STEP {action.render()}")
        result = parse_step_reply(reply)
        self._trace = self._trace + (action,)
        return result

    # CachedSul snapshot hooks: identify a state by its access trace and
    # rebuild it by replaying.
    def snapshot(self):
        return self._trace

    def restore(self, snap):
        self.reset()
        for action in snap:
            self.step(action)

    def close(self):
        try:
            self.proc.stdin.close()
        finally:
            self.proc.wait(timeout=5)


def parse_step_reply(reply: str) -> StepResult:
    if reply.startswith("ERR "):
        raise IllegalInMode(reply[4:])
    if not reply.startswith("OBS "):
        raise SulFailure(f"bad STEP reply: {reply!r}")
    body = reply[4:]
    irq_ready = False
    if body.endswith(" IRQ"):
        irq_ready = True
        body = body[:-4]
    obs_part, sep, event = body.rpartition(" EVT ")
    if not sep:
        raise SulFailure(f"missing EVT in reply: {reply!r}")
    if event not in _EVENTS:
        raise SulFailure(f"unknown event {event!r}")
    return StepResult(word_from_text(obs_part), event, irq_ready)


def format_step_reply(result: StepResult) -> str:
    line = f"OBS {render_word(result.output)} EVT {result.event}"
    if result.irq_ready:
        line += " IRQ"
    return line


def serve_sim(sim, stdin, stdout):
    """Expose a simulator over the line protocol (the server half used by
    tests and by anyone embedding the toy behind another tool)."""
    for raw in stdin:
        line = raw.strip()
        if not line:
            continue
        if line == "RESET":
            sim.reset()
            print("OK", file=stdout, flush=True)
        elif line.startswith("STEP "):
            try:
                action = action_from_spec_text(line[5:])
                result = sim.step(action)
            except (IllegalInMode, ValueError) as exc:
                print(f"ERR {exc}", file=stdout, flush=True)
                continue
            print(format_step_reply(result), file=stdout, flush=True)
        elif line == "QUIT":
            break
        else:
            print(f"ERR unknown command {line!r}", file=stdout, flush=True)
