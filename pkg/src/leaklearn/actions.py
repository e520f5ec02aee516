"""Action and observable vocabulary shared by every other module.

Actions are the abstract inputs fed to the system under learning: attacker
steps (timer setup, enclave creation, jumps, interrupt return) and enclave
steps (the trusted component's commands).  Observables are the abstract
outputs the attacker-side instrumentation extracts per step.

Both are small frozen values so they can be used as dict keys, serialized
to text, and ordered canonically (the tie-break order used whenever a
"shortest, then lexicographic" rule applies).
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

ATTACKER = "att"
ENCLAVE = "enc"

# Default enclave memory layout, used when `create_enclave` is written
# without explicit boundaries.
DEFAULT_ENCLAVE_ADDRS = ("enc_s", "enc_e", "data_s", "data_e")


@dataclass(frozen=True, order=False)
class Action:
    """One abstract input.  `param` arity depends on `kind` (see VOCABULARY)."""

    kind: str
    param: object = None

    def __post_init__(self):
        info = VOCABULARY.get(self.kind)
        if info is None:
            raise ValueError(f"unknown action kind: {self.kind!r}")
        info.check_param(self.param)

    @property
    def owner(self) -> str:
        return VOCABULARY[self.kind].owner

    def render(self) -> str:
        """Canonical specification-file syntax for this action."""
        return VOCABULARY[self.kind].render(self.param)

    def render_concrete(self, secret=None) -> str:
        """Synthesized-program syntax; `secret` substitutes the placeholder."""
        return VOCABULARY[self.kind].render_concrete(self.param, secret)

    def sort_key(self):
        info = VOCABULARY[self.kind]
        p = self.param
        if p is None:
            pkey = ()
        elif isinstance(p, tuple):
            pkey = p
        else:
            pkey = (p,)
        return (info.rank, tuple(str(x) for x in pkey))

    def __lt__(self, other: "Action"):
        return self.sort_key() < other.sort_key()

    def __repr__(self):
        return f"Action({self.render()!r})"


@dataclass(frozen=True)
class _ActionInfo:
    rank: int
    owner: str
    # param template: None, "int", "addr", or "addrs4"
    param_kind: object
    spec_syntax: str  # pattern with {k} placeholder, or literal
    concrete_syntax: str | None = None  # synth rendering if different

    def check_param(self, param):
        if self.param_kind is None:
            if param is not None:
                raise ValueError(f"{self.spec_syntax}: takes no parameter")
        elif self.param_kind == "int":
            if not isinstance(param, int) or param < 0:
                raise ValueError(f"{self.spec_syntax}: needs a non-negative int")
        elif self.param_kind == "addr":
            if not isinstance(param, str) or not param:
                raise ValueError(f"{self.spec_syntax}: needs an address name")
        elif self.param_kind == "addrs4":
            if not (isinstance(param, tuple) and len(param) == 4):
                raise ValueError(f"{self.spec_syntax}: needs exactly 4 addresses")

    def render(self, param):
        if self.param_kind is None:
            return self.spec_syntax
        if self.param_kind == "addrs4":
            if param == DEFAULT_ENCLAVE_ADDRS:
                return self.spec_syntax
            return "create <%s>" % ", ".join(param)
        return self.spec_syntax.format(k=param)

    def render_concrete(self, param, secret):
        syntax = self.concrete_syntax or self.spec_syntax
        if self.param_kind == "addrs4":
            return "create <%s>" % ", ".join(param)
        if self.param_kind is not None:
            syntax = syntax.format(k=param)
        if secret is not None:
            syntax = syntax.replace(" s,", f" {secret},")
        return syntax


def _ifz(c: str, balance: str = "nop") -> str:
    return f"ifz ({c}; {balance}) ({balance}; {c})"


# Listed in canonical order; rank is the list position.
_VOCAB_SPEC = [
    # attacker actions
    ("start_counting", ATTACKER, "int", "start_counting {k}", None),
    ("timer_enable", ATTACKER, "int", "timer_enable {k}", None),
    ("create_enclave", ATTACKER, "addrs4", "create_enclave", None),
    ("jin", ATTACKER, "addr", "jin {k}", None),
    ("reti", ATTACKER, None, "reti", None),
    ("jmp", ATTACKER, "addr", "jmp {k}", None),
    # interrupt delivery pseudo-input: admissible only while an armed timer
    # holds the enclave suspended; never written in specification files
    ("irq", ATTACKER, None, "irq", None),
    # enclave actions
    ("cmp_secret", ENCLAVE, None, "cmp s, #0", None),
    ("ubr", ENCLAVE, None, "ubr", None),
    ("mov_secret_umem", ENCLAVE, None, "mov s, &unprot_mem", None),
    ("ifz_mov_r5", ENCLAVE, None, _ifz("mov r5, r5"), None),
    ("ifz_mov_encs", ENCLAVE, None, _ifz("mov &enc_s, &enc_s"), None),
    ("ifz_add_data", ENCLAVE, None, _ifz("add #1, &data_s"), None),
    ("ifz_mov42_data", ENCLAVE, None, _ifz("mov #42, &data_s"), None),
    ("ifz_movfrom_umem", ENCLAVE, None, _ifz("mov &unprot_mem, r8"),
     "ifz (mov &unprot_mem, r8; nop)(nop; mov &unprot_mem, r8)"),
    ("ifz_mov42_umem", ENCLAVE, None, _ifz("mov #42, &unprot_mem"),
     "ifz (mov #42, &unprot_mem; nop)(nop; mov #42, &unprot_mem)"),
    ("ifz_jmp_data", ENCLAVE, None, _ifz("jmp #data_s"),
     "ifz (jmp #data_s; nop)(nop; jmp #data_s)"),
    ("ifz_dint", ENCLAVE, None, _ifz("dint"), "ifz (dint; nop)(nop; dint)"),
    ("ifz_rst", ENCLAVE, None, _ifz("rst"), "ifz (rst; nop)(nop; rst)"),
    ("ifz_unbal_umem", ENCLAVE, None,
     "ifz (mov #42, &unprot_mem) (nop; nop; nop; nop; nop)", None),
    ("mov_data_r4", ENCLAVE, None, "mov &data_s, r4", None),
    ("jmp_ence", ENCLAVE, None, "jmp #enc_e", None),
    ("nop", ENCLAVE, None, "nop", None),
    ("dint", ENCLAVE, None, "dint", None),
    ("rst", ENCLAVE, None, "rst", None),
]

VOCABULARY: dict[str, _ActionInfo] = {
    kind: _ActionInfo(rank, owner, param_kind, syntax, concrete)
    for rank, (kind, owner, param_kind, syntax, concrete) in enumerate(_VOCAB_SPEC)
}


def _squash(text: str) -> str:
    return re.sub(r"\s+", "", text)


# normalized spec syntax -> kind, for the non-parameterized vocabulary
_EXACT_LOOKUP = {
    _squash(info.spec_syntax): kind
    for kind, info in VOCABULARY.items()
    if info.param_kind is None
}

_PARAM_PATTERNS = [
    (re.compile(r"start_counting(\d+)$"), lambda m: Action("start_counting", int(m.group(1)))),
    (re.compile(r"timer_enable(\d+)$"), lambda m: Action("timer_enable", int(m.group(1)))),
    (re.compile(r"jin([A-Za-z_]\w*)$"), lambda m: Action("jin", m.group(1))),
    (re.compile(r"jmp([A-Za-z_]\w*)$"), lambda m: Action("jmp", m.group(1))),
    (re.compile(r"create<(\w+),(\w+),(\w+),(\w+)>$"),
     lambda m: Action("create_enclave", m.groups())),
]


class UnknownAction(ValueError):
    pass


def action_from_spec_text(text: str) -> Action:
    """Resolve one specification atom (whitespace-insensitive) to an Action.

    `create_enclave` is sugar for the four-address form with the default
    layout.  Raises UnknownAction for atoms outside the vocabulary.
    """
    key = _squash(text)
    if key == "create_enclave":
        return Action("create_enclave", DEFAULT_ENCLAVE_ADDRS)
    kind = _EXACT_LOOKUP.get(key)
    if kind is not None:
        return Action(kind)
    for pattern, build in _PARAM_PATTERNS:
        m = pattern.match(key)
        if m:
            return build(m)
    raise UnknownAction(f"not a known action: {text.strip()!r}")


IRQ = Action("irq")


# ---------------------------------------------------------------------------
# Observables


# Canonical in-word ordering: one event observable first, then the meters.
_OBS_KINDS = [
    "Time", "JmpIn", "JmpOut", "Handle", "Reti", "Reset", "Diverge",
    "TimerA", "UMem", "Reg", "GIE", "Mode",
]
_OBS_RANK = {k: i for i, k in enumerate(_OBS_KINDS)}
_VALUELESS = {"JmpIn", "Reti", "Reset", "Diverge"}


@dataclass(frozen=True)
class Observable:
    kind: str
    value: object = None

    def __post_init__(self):
        if self.kind not in _OBS_RANK:
            raise ValueError(f"unknown observable kind: {self.kind!r}")
        if self.kind in _VALUELESS:
            if self.value is not None:
                raise ValueError(f"{self.kind} carries no value")
        elif self.kind == "Mode":
            if self.value not in ("UM", "PM"):
                raise ValueError("Mode value must be UM or PM")
        elif self.value is None or (isinstance(self.value, int) and self.value < 0):
            raise ValueError(f"{self.kind} needs a non-negative value")

    def render(self) -> str:
        if self.value is None:
            return self.kind
        return f"{self.kind} {self.value}"

    def sort_key(self):
        return (_OBS_RANK[self.kind], str(self.value))

    def __repr__(self):
        return f"Obs({self.render()!r})"


def observable_from_text(text: str) -> Observable:
    parts = text.split()
    if len(parts) == 1:
        return Observable(parts[0])
    kind, value = parts[0], parts[1]
    if kind == "Mode" or not value.lstrip("-").isdigit():
        return Observable(kind, value)
    return Observable(kind, int(value))


# An output word is the tuple of observables one transition emits.
OutputWord = tuple


def render_word(word: OutputWord) -> str:
    if not word:
        return "tau"
    return ", ".join(o.render() for o in word)


def word_from_text(text: str) -> OutputWord:
    text = text.strip()
    if text in ("tau", ""):
        return ()
    return tuple(observable_from_text(p.strip()) for p in text.split(","))
