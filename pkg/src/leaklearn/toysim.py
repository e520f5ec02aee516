"""Calibrated toy enclave simulator.

A desk-scale stand-in for a cycle-accurate hardware simulator.  It
executes abstract attacker/enclave actions, advances a cycle clock, arms
and delivers timer interrupts, and emits the abstract observables the
attacker-side instrumentation would extract.  Per-version behavior flags
reproduce four known hardware discrepancies; with all flags off (and
interrupt-latency padding on) the simulated device is side-channel free
for the bundled specifications.

Timing model
------------
The attacker timer starts counting at the cycle the enclave-entry jump
begins; `timer_enable k` in the prepare section schedules an interrupt at
timer cycle k, while inside the interrupt handler it schedules one k
cycles after the handler returns.  An interrupt due at cycle t lets the
instruction occupying t finish first (an instruction starting exactly at
t counts as occupying it); the suspended action's tail resumes after
`reti`.  With `nemesis_padding` on, the observed handler latency is a
calibrated per-context constant, hiding which instruction was hit.
"""

from __future__ import annotations

from dataclasses import dataclass

from .actions import ATTACKER, Action, Observable, OutputWord

# step events (the ModeEvent vocabulary)
EV_NONE = "none"
EV_ENTERED = "entered"
EV_EXITED = "exited"
EV_HANDLED = "handled"
EV_RETURNED = "returned"
EV_RESET = "reset"


class IllegalInMode(RuntimeError):
    pass


class SulFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class VersionFlags:
    reti_extra_cycle: bool = False              # first instruction after reti runs long
    umem_write_leaks_mid_enclave: bool = False  # enclave stores to unprotected memory commit
    rw_violation_resets: bool = False           # enclave loads from unprotected memory reset
    enclave_rst_resets: bool = False            # rst inside the enclave resets
    nemesis_padding: bool = True                # pad handler latency to a constant

    @classmethod
    def patched(cls) -> "VersionFlags":
        return cls()

    @classmethod
    def all_bugs(cls) -> "VersionFlags":
        return cls(reti_extra_cycle=True, umem_write_leaks_mid_enclave=True,
                   rw_violation_resets=True, enclave_rst_resets=True)


@dataclass(frozen=True)
class ObservationProfile:
    """Which optional meters the instrumentation extracts per step.  Event
    observables (Time/JmpIn/JmpOut/Handle/Reti/Reset/Diverge) are always
    emitted, so raw transitions are never silent."""

    timera: bool = True
    umem: bool = False
    reg: bool = False


@dataclass(frozen=True)
class StepResult:
    output: OutputWord
    event: str = EV_NONE
    irq_ready: bool = False


# Handler-latency constants, keyed by the enclave action the interrupt hit.
_HANDLE_BY_KIND = {"ifz_rst": 9}
_HANDLE_DEFAULT = 4
# Post-return deliveries: (handle latency, timer reading), keyed by whether
# the pending instruction was the branch-balancing nop while the return-path
# timing bug is active.
_POST_RETI_BUGGED_NOP = (9, 1)
_POST_RETI_NORMAL = (7, 0)

_LOOP = ("loop", 1, "loop")  # spin instruction for diverging jumps

_IFZ_BODY = {
    "ifz_mov_r5": ("mov_r5", 1, None),
    "ifz_mov_encs": ("mov_encs", 5, None),
    "ifz_add_data": ("add_data", 5, "add_data"),
    "ifz_mov42_data": ("mov42_data", 5, "mov42_data"),
    "ifz_movfrom_umem": ("mov_umem_r8", 5, "read_umem"),
    "ifz_mov42_umem": ("mov42_umem", 5, "write_umem42"),
    "ifz_jmp_data": ("jmp_data", 2, "loop"),
    "ifz_dint": ("dint", 1, None),
    "ifz_rst": ("rst", 1, "rst"),
}


class ToyEnclaveSim:
    """One simulated device bound to a secret.  reset()/step() drive it;
    state snapshots make cached replay cheap."""

    def __init__(self, secret: int, flags: VersionFlags = VersionFlags(),
                 profile: ObservationProfile = ObservationProfile(),
                 diverge_budget: int = 10_000):
        self.secret = secret
        self.flags = flags
        self.profile = profile
        self.diverge_budget = diverge_budget
        self.steps_executed = 0
        self.reset()

    # -- state --------------------------------------------------------------

    def reset(self):
        self.phase = "prepare"      # prepare | enclave | isr | cleanup | dead
        self.t = 0                  # attacker-timer clock, runs from jin start
        self.t_running = False
        self.timer = None           # (start, bound, due); due None = count only
        self.timer_frozen = None    # displayed value after the interrupt fired
        self.pending_arm = None     # k from timer_enable inside the handler
        self.remainder = ()         # suspended tail of an interrupted action
        self.irq_ready = False
        self.suspended_kind = None
        self.post_reti = False
        self.resume_fresh = False   # next instruction is the first after reti
        self.zero_flag = False
        self.enclave_created = False
        self.umem = 0
        self.data_val = 0
        self.r4 = 0
        self.r8 = 0
        self.gie = True

    _SNAP_FIELDS = (
        "phase", "t", "t_running", "timer", "timer_frozen", "pending_arm",
        "remainder", "irq_ready", "suspended_kind", "post_reti", "resume_fresh",
        "zero_flag", "enclave_created", "umem", "data_val", "r4", "r8", "gie",
    )

    def snapshot(self):
        return tuple(getattr(self, f) for f in self._SNAP_FIELDS)

    def restore(self, snap):
        for name, value in zip(self._SNAP_FIELDS, snap):
            setattr(self, name, value)

    # -- observable assembly --------------------------------------------------

    def _timera_value(self):
        if self.pending_arm is not None:
            return 0
        if self.timer_frozen is not None:
            return self.timer_frozen
        if self.timer is None or not self.t_running:
            return 0
        start, bound, _due = self.timer
        return (self.t - start) % (bound + 1)

    def _meters(self, *, umem_ok: bool, reg_ok: bool = False):
        obs = []
        if self.profile.timera:
            obs.append(Observable("TimerA", self._timera_value()))
        if self.profile.umem and umem_ok:
            obs.append(Observable("UMem", self.umem))
        if self.profile.reg and reg_ok:
            obs.append(Observable("Reg", self.r4))
        return obs

    # -- stepping -----------------------------------------------------------

    def step(self, action: Action) -> StepResult:
        if self.phase == "dead":
            raise IllegalInMode("device is halted; reset first")
        self.steps_executed += 1
        if action.kind == "irq":
            return self._deliver()
        if self.irq_ready:
            raise IllegalInMode("pending interrupt must be delivered first")
        if action.owner == ATTACKER:
            if self.phase == "enclave":
                raise IllegalInMode(f"{action.render()} while the enclave runs")
            return self._attacker_step(action)
        if self.phase != "enclave":
            raise IllegalInMode(f"{action.render()} outside the enclave")
        return self._enclave_step(action)

    # -- attacker side ---------------------------------------------------------

    def _attacker_step(self, action: Action) -> StepResult:
        k = action.kind
        if k == "start_counting":
            self.timer = (self.t if self.t_running else 0, action.param, None)
            self.timer_frozen = None
            return self._plain(10)
        if k == "timer_enable":
            if self.phase == "isr":
                self.pending_arm = action.param
            else:
                base = self.t if self.t_running else 0
                due = base + action.param if self.phase == "prepare" else None
                self.timer = (base, action.param, due)
            self.timer_frozen = None
            return self._plain(5)
        if k == "create_enclave":
            if self.enclave_created:
                return self._die()  # multiple enclaves are not supported
            self.enclave_created = True
            return self._plain(648)
        if k == "jin":
            return self._jin()
        if k == "reti":
            if self.phase != "isr":
                return self._die()  # out-of-place interrupt return resets
            return self._reti()
        if k == "jmp":
            # direct jump at an enclave address from unprotected mode: a jump
            # into the data section loops, anything else faults
            if action.param == "data_s":
                return self._terminal("Diverge")
            return self._die()
        raise IllegalInMode(f"unhandled attacker action {action.render()}")

    def _plain(self, cycles: int) -> StepResult:
        word = [Observable("Time", cycles)] + self._meters(umem_ok=True)
        return StepResult(tuple(word))

    def _die(self) -> StepResult:
        return self._terminal("Reset")

    def _terminal(self, kind: str) -> StepResult:
        self.phase = "dead"
        return StepResult((Observable(kind),), event=EV_RESET)

    def _jin(self) -> StepResult:
        if not self.enclave_created or self.phase != "prepare":
            return self._die()
        self.t = 0
        self.t_running = True
        self.phase = "enclave"
        stop = self._execute((("jin", 2, None),))
        if stop == "irq":
            self.suspended_kind = "jin"
        word = [Observable("JmpIn")] + self._meters(umem_ok=False)
        return StepResult(tuple(word), event=EV_ENTERED, irq_ready=self.irq_ready)

    def _reti(self) -> StepResult:
        self.t += 5
        self.phase = "enclave"
        if self.pending_arm is not None:
            self.timer = (self.t, self.pending_arm, self.t + self.pending_arm)
            self.timer_frozen = None
            self.pending_arm = None
        self.post_reti = True
        self.resume_fresh = True
        due = self.timer[2] if self.timer else None
        word = (Observable("Reti"),)
        if due is not None:
            snap = self.snapshot()
            outcome = self._run_tail(due)
            if outcome == "exit":
                cycles = self.t - snap[1]  # snap[1] is t at return
                self.post_reti = False
                return StepResult(word + self._exit_word(cycles), event=EV_EXITED)
            # a handler-armed interrupt is delivered in the post-return
            # window: against the resumed tail, or at the boundary right
            # after it when the tail finishes early.  It never waits for the
            # next fresh instruction, so resume progress stays hidden.
            self.restore(snap)
            self.irq_ready = True
            self.suspended_kind = self.remainder[0][0] if self.remainder else "resume"
            return StepResult(word, event=EV_RETURNED, irq_ready=True)
        t0 = self.t
        stop = self._execute(self.remainder)
        self.remainder = ()
        self.post_reti = False
        if stop == "reset":
            self.phase = "dead"
            return StepResult(word + (Observable("Reset"),), event=EV_RESET)
        if stop == "diverge":
            self.phase = "dead"
            return StepResult(word + (Observable("Diverge"),), event=EV_RESET)
        if stop == "exit":
            return StepResult(word + self._exit_word(self.t - t0), event=EV_EXITED)
        return StepResult(word, event=EV_RETURNED)

    # -- interrupt delivery ------------------------------------------------------

    def _deliver(self) -> StepResult:
        if not self.irq_ready or self.timer is None:
            raise IllegalInMode("no deliverable interrupt")
        start, bound, due = self.timer
        if self.post_reti:
            head = self.remainder[0][0] if self.remainder else "resume"
            bugged = head == "nop" and self.flags.reti_extra_cycle
            outcome = self._run_tail(due)
            if outcome == "reset":
                return self._terminal("Reset")
            if self.flags.nemesis_padding:
                handle, timera = _POST_RETI_BUGGED_NOP if bugged else _POST_RETI_NORMAL
            else:
                handle = max(self.t - due, 0)
                timera = self.t - start
        else:
            pad = _HANDLE_BY_KIND.get(self.suspended_kind, _HANDLE_DEFAULT)
            if self.flags.nemesis_padding:
                handle = pad
                timera = due - start + pad
            else:
                handle = max(self.t - due, 0)
                timera = self.t - start
        timera %= bound + 1
        self.timer = None
        self.timer_frozen = timera
        self.irq_ready = False
        self.post_reti = False
        self.suspended_kind = None
        self.phase = "isr"
        word = [Observable("Handle", handle)] + self._meters(umem_ok=True)
        return StepResult(tuple(word), event=EV_HANDLED)

    def _run_tail(self, due):
        """Run the suspended tail up to the interrupt point: instructions
        starting at or before the due cycle complete.  Returns 'delivered'
        (tail interrupted or exactly consumed), 'ahead' (tail finished with
        the interrupt still in the future), 'reset', or 'exit'."""
        rest = list(self.remainder)
        while rest and self.t <= due:
            name, cycles, fx = rest.pop(0)
            if self.resume_fresh and self.flags.reti_extra_cycle:
                cycles += 1
            self.resume_fresh = False
            self.t += cycles
            res = self._apply(fx, rest)
            if res == "reset":
                self.remainder = ()
                return "reset"
            if res == "exit":
                self.remainder = ()
                return "exit"
            if res == "loop":
                rest.insert(0, _LOOP)
        self.remainder = tuple(rest)
        if not rest and self.t < due:
            return "ahead"
        return "delivered"

    # -- enclave side -------------------------------------------------------------

    def _enclave_step(self, action: Action) -> StepResult:
        micro = self._compile(action)
        t0 = self.t
        stop = self._execute(micro)
        if stop == "reset":
            return self._terminal("Reset")
        if stop == "diverge":
            return self._terminal("Diverge")
        if stop == "exit":
            return StepResult(self._exit_word(self.t - t0), event=EV_EXITED)
        if stop == "irq":
            self.suspended_kind = action.kind
        word = [Observable("Time", self.t - t0)] + self._meters(umem_ok=False)
        return StepResult(tuple(word), irq_ready=self.irq_ready)

    def _exit_word(self, cycles) -> OutputWord:
        self.phase = "cleanup"
        if self.timer:
            start, bound, _due = self.timer
            self.timer = (start, bound, None)  # leaving the enclave drops the IRQ
        self.irq_ready = False
        word = [Observable("JmpOut", cycles)]
        word += self._meters(umem_ok=True, reg_ok=True)
        return tuple(word)

    def _compile(self, action: Action):
        k = action.kind
        if k == "cmp_secret":
            return (("cmp", 1, "cmp"),)
        if k == "ubr":
            if self.zero_flag:
                return (("jnz", 2, None), ("mov_tmp", 5, None), ("jmp_out", 2, "exit"))
            return (("jnz", 2, "exit"),)
        if k == "mov_secret_umem":
            return (("mov_s_umem", 5, "write_umem_s"),)
        if k == "ifz_unbal_umem":
            if self.zero_flag:
                return (("mov42_umem", 5, "write_umem42"),)
            return tuple(("nop", 1, None) for _ in range(5))
        if k in _IFZ_BODY:
            body = _IFZ_BODY[k]
            nop = ("nop", 1, None)
            return (body, nop) if self.zero_flag else (nop, body)
        if k == "mov_data_r4":
            return (("mov_data_r4", 5, "read_data_r4"),)
        if k == "jmp_ence":
            return (("jmp_out", 2, "exit"),)
        if k == "nop":
            return (("nop", 1, None),)
        if k == "dint":
            return (("dint", 1, None),)
        if k == "rst":
            return (("rst", 1, "rst"),)
        raise IllegalInMode(f"unhandled enclave action {action.render()}")

    def _apply(self, fx, rest):
        """Commit one instruction's effect.  Returns None, 'reset', 'exit',
        or 'loop'."""
        if fx is None:
            return None
        if fx == "cmp":
            self.zero_flag = self.secret == 0
            return None
        if fx == "add_data":
            self.data_val += 1
            return None
        if fx == "mov42_data":
            self.data_val = 42
            return None
        if fx == "write_umem42":
            if self.flags.umem_write_leaks_mid_enclave:
                self.umem = 42
            return None
        if fx == "write_umem_s":
            if self.flags.umem_write_leaks_mid_enclave:
                self.umem = self.secret
            return None
        if fx == "read_umem":
            if self.flags.rw_violation_resets:
                return "reset"
            self.r8 = self.umem
            return None
        if fx == "read_data_r4":
            self.r4 = self.data_val
            return None
        if fx == "rst":
            if self.flags.enclave_rst_resets:
                return "reset"
            return None
        return fx  # "loop" and "exit" pass through

    def _execute(self, micro):
        """Run a fresh micro-instruction sequence from the current cycle.

        Returns 'done', 'irq' (suspended with a delivery pending), 'reset',
        'diverge', or 'exit'.  On 'irq' the unexecuted tail is stored in
        self.remainder."""
        due = self.timer[2] if self.timer else None
        rest = list(micro)
        budget = self.t + self.diverge_budget
        while rest:
            name, cycles, fx = rest.pop(0)
            if self.resume_fresh and self.flags.reti_extra_cycle:
                cycles += 1
            self.resume_fresh = False
            if name == "loop" and due is None:
                self.t = budget
                return "diverge"
            started_at = self.t
            self.t += cycles
            res = self._apply(fx, rest)
            if res == "reset":
                self.remainder = ()
                return "reset"
            if res == "exit":
                return "exit"
            if res == "loop":
                rest.insert(0, _LOOP)
            if due is not None and started_at <= due < self.t:
                self.remainder = tuple(rest)
                self.irq_ready = True
                return "irq"
            if self.t >= budget:
                return "diverge"
        return "done"
