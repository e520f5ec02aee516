"""Attacker and trusted-component specifications.

An attacker is three regular expressions (isr, prepare, cleanup) over the
attacker action vocabulary; a trusted component is one (enclave) over the
enclave vocabulary.  The surface syntax supports `eps`, atoms, `;`
(sequencing, binds tighter), `|` (choice), postfix `*`, parentheses and
`/* ... */` comments.

Admissibility queries are answered with Brzozowski derivatives over
hash-consed nodes, so cursors advance incrementally without compiling an
automaton.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from functools import lru_cache

from .actions import ATTACKER, ENCLAVE, Action, UnknownAction, action_from_spec_text


class SpecSyntaxError(ValueError):
    def __init__(self, message, line, col):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


class OwnershipError(ValueError):
    pass


class Inadmissible(ValueError):
    pass


# ---------------------------------------------------------------------------
# Regex nodes (hash-consed through the smart constructors below)


class Regex:
    __slots__ = ()


class _Eps(Regex):
    __slots__ = ()

    def __repr__(self):
        return "eps"


class _Empty(Regex):
    __slots__ = ()

    def __repr__(self):
        return "empty"


EPS = _Eps()
EMPTY = _Empty()


@dataclass(frozen=True)
class Atom(Regex):
    action: Action

    def __repr__(self):
        return f"Atom({self.action.render()})"


@dataclass(frozen=True)
class Seq(Regex):
    left: Regex
    right: Regex


@dataclass(frozen=True)
class Alt(Regex):
    left: Regex
    right: Regex


@dataclass(frozen=True)
class Star(Regex):
    body: Regex


_interned: dict = {}


def _intern(node):
    return _interned.setdefault(node, node)


def atom(action: Action) -> Regex:
    return _intern(Atom(action))


def seq(left: Regex, right: Regex) -> Regex:
    if left is EMPTY or right is EMPTY:
        return EMPTY
    if left is EPS:
        return right
    if right is EPS:
        return left
    return _intern(Seq(left, right))


def alt(left: Regex, right: Regex) -> Regex:
    if left is EMPTY:
        return right
    if right is EMPTY:
        return left
    if left == right:
        return left
    return _intern(Alt(left, right))


def star(body: Regex) -> Regex:
    if body is EPS or body is EMPTY:
        return EPS
    if isinstance(body, Star):
        return body
    return _intern(Star(body))


@lru_cache(maxsize=None)
def nullable(r: Regex) -> bool:
    if r is EPS:
        return True
    if r is EMPTY or isinstance(r, Atom):
        return False
    if isinstance(r, Seq):
        return nullable(r.left) and nullable(r.right)
    if isinstance(r, Alt):
        return nullable(r.left) or nullable(r.right)
    return True  # Star


@lru_cache(maxsize=None)
def is_empty_lang(r: Regex) -> bool:
    if r is EMPTY:
        return True
    if r is EPS or isinstance(r, (Atom, Star)):
        return False
    if isinstance(r, Seq):
        return is_empty_lang(r.left) or is_empty_lang(r.right)
    return is_empty_lang(r.left) and is_empty_lang(r.right)  # Alt


@lru_cache(maxsize=None)
def deriv(r: Regex, a: Action) -> Regex:
    if r is EPS or r is EMPTY:
        return EMPTY
    if isinstance(r, Atom):
        return EPS if r.action == a else EMPTY
    if isinstance(r, Seq):
        d = seq(deriv(r.left, a), r.right)
        if nullable(r.left):
            d = alt(d, deriv(r.right, a))
        return d
    if isinstance(r, Alt):
        return alt(deriv(r.left, a), deriv(r.right, a))
    return seq(deriv(r.body, a), r)  # Star


@lru_cache(maxsize=None)
def first_actions(r: Regex) -> frozenset:
    if r is EPS or r is EMPTY:
        return frozenset()
    if isinstance(r, Atom):
        return frozenset((r.action,))
    if isinstance(r, Seq):
        firsts = first_actions(r.left)
        if nullable(r.left):
            firsts = firsts | first_actions(r.right)
        return firsts
    if isinstance(r, Alt):
        return first_actions(r.left) | first_actions(r.right)
    return first_actions(r.body)  # Star


def atoms_of(r: Regex) -> frozenset:
    if isinstance(r, Atom):
        return frozenset((r.action,))
    if isinstance(r, (Seq, Alt)):
        return atoms_of(r.left) | atoms_of(r.right)
    if isinstance(r, Star):
        return atoms_of(r.body)
    return frozenset()


def matches(r: Regex, word) -> bool:
    for a in word:
        r = deriv(r, a)
        if is_empty_lang(r):
            return False
    return nullable(r)


def pretty(r: Regex, _prec=0) -> str:
    """Render back to surface syntax.  `|` is level 0, `;` level 1,
    `*` level 2."""
    if r is EPS:
        return "eps"
    if r is EMPTY:
        return "empty"
    if isinstance(r, Atom):
        return r.action.render()
    if isinstance(r, Alt):
        body = f"{pretty(r.left, 0)} | {pretty(r.right, 0)}"
        return f"({body})" if _prec > 0 else body
    if isinstance(r, Seq):
        body = f"{pretty(r.left, 1)}; {pretty(r.right, 1)}"
        return f"({body})" if _prec > 1 else body
    return f"{pretty(r.body, 2)}*"


# ---------------------------------------------------------------------------
# Cursors


SECTIONS = ("prepare", "enclave", "isr", "cleanup")


@dataclass(frozen=True)
class SectionCursor:
    """Remaining language of one section after the executed prefix."""

    section: str
    regex: Regex

    def admissible(self) -> frozenset:
        return frozenset(a for a in first_actions(self.regex)
                         if not is_empty_lang(deriv(self.regex, a)))

    @property
    def complete(self) -> bool:
        """The executed prefix is a full member of the section language."""
        return nullable(self.regex)

    def advance(self, a: Action) -> "SectionCursor":
        d = deriv(self.regex, a)
        if is_empty_lang(d):
            raise Inadmissible(f"{a.render()} not admissible in {self.section}")
        return SectionCursor(self.section, d)


@dataclass(frozen=True)
class AttackerSpec:
    isr: Regex
    prepare: Regex
    cleanup: Regex

    def cursor(self, section: str) -> SectionCursor:
        return SectionCursor(section, getattr(self, section))

    def pretty(self) -> str:
        return (f"isr {{ {pretty(self.isr)} }};\n\n"
                f"prepare {{ {pretty(self.prepare)} }};\n\n"
                f"cleanup {{ {pretty(self.cleanup)} }}\n")


@dataclass(frozen=True)
class TrustedSpec:
    enclave: Regex
    secret_domain: tuple = (0, 1)

    def cursor(self) -> SectionCursor:
        return SectionCursor("enclave", self.enclave)

    def pretty(self) -> str:
        return f"enclave {{ {pretty(self.enclave)} }}\n"


# ---------------------------------------------------------------------------
# Parser


_RANGE_ATOM = re.compile(r"^timer_enable\s+(\d+)\s*\.\.\s*(\d+)$")


class _Scanner:
    def __init__(self, text: str):
        self.text = text
        self.pos = 0

    def _line_col(self, pos=None):
        pos = self.pos if pos is None else pos
        line = self.text.count("\n", 0, pos) + 1
        col = pos - (self.text.rfind("\n", 0, pos) + 1) + 1
        return line, col

    def error(self, message, pos=None):
        line, col = self._line_col(pos)
        raise SpecSyntaxError(message, line, col)

    def skip_ws(self):
        while self.pos < len(self.text):
            c = self.text[self.pos]
            if c.isspace():
                self.pos += 1
            elif self.text.startswith("/*", self.pos):
                end = self.text.find("*/", self.pos + 2)
                if end < 0:
                    self.error("unterminated comment")
                self.pos = end + 2
            else:
                break

    def peek(self):
        self.skip_ws()
        return self.text[self.pos] if self.pos < len(self.text) else ""

    def eat(self, token: str):
        self.skip_ws()
        if not self.text.startswith(token, self.pos):
            self.error(f"expected {token!r}")
        self.pos += len(token)

    def at_end(self):
        self.skip_ws()
        return self.pos >= len(self.text)

    def word(self):
        self.skip_ws()
        m = re.match(r"[A-Za-z_]\w*", self.text[self.pos:])
        if not m:
            self.error("expected an identifier")
        self.pos += m.end()
        return m.group(0)

    # -- regex grammar ----------------------------------------------------

    def regex(self) -> Regex:
        parts = [self.seq_expr()]
        while self.peek() == "|":
            self.eat("|")
            parts.append(self.seq_expr())
        node = parts[-1]
        for part in reversed(parts[:-1]):
            node = alt(part, node)
        return node

    def seq_expr(self) -> Regex:
        parts = [self.rep_expr()]
        while self.peek() == ";":
            self.eat(";")
            parts.append(self.rep_expr())
        node = parts[-1]
        for part in reversed(parts[:-1]):
            node = seq(part, node)
        return node

    def rep_expr(self) -> Regex:
        node = self.base_expr()
        while self.peek() == "*":
            self.eat("*")
            node = star(node)
        return node

    def base_expr(self) -> Regex:
        self.skip_ws()
        if self.peek() == "(":
            self.eat("(")
            node = self.regex()
            self.eat(")")
            return node
        return self.atom_expr()

    def atom_expr(self) -> Regex:
        self.skip_ws()
        start = self.pos
        depth = 0
        while self.pos < len(self.text):
            if self.text.startswith("/*", self.pos):
                break
            c = self.text[self.pos]
            if c in "(<":
                depth += 1
            elif c in ")>":
                if depth == 0:
                    break
                depth -= 1
            elif depth == 0 and c in ";|*}{":
                break
            self.pos += 1
        raw = self.text[start:self.pos].strip()
        if not raw:
            self.error("expected an action or 'eps'", start)
        if raw == "eps":
            return EPS
        m = _RANGE_ATOM.match(raw)
        if m:
            lo, hi = int(m.group(1)), int(m.group(2))
            if hi < lo:
                self.error("empty timer_enable range", start)
            node = atom(Action("timer_enable", hi))
            for k in range(hi - 1, lo - 1, -1):
                node = alt(atom(Action("timer_enable", k)), node)
            return node
        try:
            return atom(action_from_spec_text(raw))
        except UnknownAction as exc:
            line, col = self._line_col(start)
            raise UnknownAction(f"{line}:{col}: {exc}") from None


def _check_ownership(section: str, r: Regex):
    want = ENCLAVE if section == "enclave" else ATTACKER
    for a in atoms_of(r):
        if a.kind == "irq":
            raise OwnershipError(
                "irq is interrupt delivery, not a specifiable action")
        if a.owner != want:
            raise OwnershipError(
                f"{a.render()!r} is a {a.owner} action; not allowed in {section}")


def parse_spec(text: str):
    """Parse an attacker (isr/prepare/cleanup) or trusted (enclave)
    specification.  Returns AttackerSpec or TrustedSpec."""
    sc = _Scanner(text)
    sc.skip_ws()
    first = sc.word()
    if first == "enclave":
        sc.eat("{")
        body = sc.regex()
        sc.eat("}")
        if sc.peek() == ";":
            sc.eat(";")
        if not sc.at_end():
            sc.error("trailing input after enclave section")
        _check_ownership("enclave", body)
        return TrustedSpec(enclave=body)
    if first != "isr":
        sc.error("specification must start with 'isr' or 'enclave'")
    sections = {}
    name = first
    for expected in ("isr", "prepare", "cleanup"):
        if name != expected:
            sc.error(f"expected section {expected!r}, found {name!r}")
        sc.eat("{")
        sections[name] = sc.regex()
        sc.eat("}")
        if expected != "cleanup":
            sc.eat(";")
            name = sc.word()
    if sc.peek() == ";":
        sc.eat(";")
    if not sc.at_end():
        sc.error("trailing input after cleanup section")
    for section, r in sections.items():
        _check_ownership(section, r)
    return AttackerSpec(isr=sections["isr"], prepare=sections["prepare"],
                        cleanup=sections["cleanup"])


def parse_spec_file(path) -> "AttackerSpec | TrustedSpec":
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())
