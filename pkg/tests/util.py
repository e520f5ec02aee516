"""Shared test helpers: independent oracles kept deliberately separate from
the implementation paths they check."""

from __future__ import annotations

import itertools
import random

from leaklearn.actions import Action, Observable
from leaklearn.mealy import MealyMachine, mode_after, project
from leaklearn.speclang import Alt, Atom, Regex, Seq, Star, EPS, EMPTY

# a small abstract alphabet for machine-level tests
A0 = Action("timer_enable", 0)
A1 = Action("timer_enable", 1)
A2 = Action("timer_enable", 2)


def out(n):
    return (Observable("Time", n),)


def random_mealy(rng: random.Random, n_states: int, actions, n_outputs: int,
                 total: bool = True) -> MealyMachine:
    """Random machine, trimmed to the reachable part.  With total=False
    roughly a quarter of the transitions are dropped (never isolating the
    initial state)."""
    transitions = {}
    for s in range(n_states):
        for a in actions:
            if not total and s != 0 and rng.random() < 0.25:
                continue
            transitions[(s, a)] = (rng.randrange(n_states),
                                   out(rng.randrange(n_outputs)))
    # trim unreachable states so the constructor accepts the machine
    reached = {0}
    frontier = [0]
    while frontier:
        s = frontier.pop()
        for a in actions:
            nxt = transitions.get((s, a))
            if nxt and nxt[0] not in reached:
                reached.add(nxt[0])
                frontier.append(nxt[0])
    trimmed = {k: v for k, v in transitions.items() if k[0] in reached}
    return MealyMachine(0, trimmed, frozenset(actions))


def first_divergence(m0, m1, silent, word):
    """Index of the first step along `word` where projected behavior or
    definedness differs, or None."""
    r0 = m0.run(word)
    r1 = m1.run(word)
    u0 = r0.undefined_at if r0.undefined_at is not None else len(word)
    u1 = r1.undefined_at if r1.undefined_at is not None else len(word)
    p0 = project(r0.outputs, silent)
    p1 = project(r1.outputs, silent)
    for i in range(len(word)):
        d0, d1 = i < u0, i < u1
        if d0 != d1:
            return i
        if not d0:
            return None  # both machines stop here; nothing differs
        if p0[i] != p1[i]:
            return i
    return None


def brute_force_equiv(m0, m1, silent, max_len):
    """Reference weak-equivalence decision by exhaustive word enumeration,
    shortest first and lexicographic within a length.  Returns None when no
    word of length <= max_len distinguishes, else the least (word, step)
    whose divergence sits at the last position."""
    actions = sorted(m0.input_alphabet)
    for n in range(1, max_len + 1):
        for word in itertools.product(actions, repeat=n):
            div = first_divergence(m0, m1, silent, word)
            if div == n - 1:
                return word, div
    return None


# -- independent regex semantics ----------------------------------------------


def naive_matches(r: Regex, word) -> bool:
    """Recursive-descent membership, no derivatives involved."""
    word = tuple(word)
    if r is EPS:
        return word == ()
    if r is EMPTY:
        return False
    if isinstance(r, Atom):
        return word == (r.action,)
    if isinstance(r, Alt):
        return naive_matches(r.left, word) or naive_matches(r.right, word)
    if isinstance(r, Seq):
        return any(naive_matches(r.left, word[:i]) and naive_matches(r.right, word[i:])
                   for i in range(len(word) + 1))
    # Star
    if word == ():
        return True
    return any(naive_matches(r.body, word[:i]) and naive_matches(r, word[i:])
               for i in range(1, len(word) + 1))


def lang_upto(r: Regex, actions, max_len: int):
    """All members of L(r) with length <= max_len, by enumeration against
    naive_matches."""
    members = set()
    for n in range(max_len + 1):
        for word in itertools.product(actions, repeat=n):
            if naive_matches(r, word):
                members.add(word)
    return members


def gen_lang(r: Regex, max_len: int) -> frozenset:
    """L(r) up to max_len by structural generation (usable when the alphabet
    is too large for word enumeration)."""
    if r is EPS:
        return frozenset({()})
    if r is EMPTY:
        return frozenset()
    if isinstance(r, Atom):
        return frozenset({(r.action,)}) if max_len >= 1 else frozenset()
    if isinstance(r, Alt):
        return gen_lang(r.left, max_len) | gen_lang(r.right, max_len)
    if isinstance(r, Seq):
        out = set()
        lefts = gen_lang(r.left, max_len)
        for lw in lefts:
            for rw in gen_lang(r.right, max_len - len(lw)):
                out.add(lw + rw)
        return frozenset(out)
    # Star
    words = {()}
    frontier = {()}
    body = gen_lang(r.body, max_len)
    while frontier:
        nxt = set()
        for w in frontier:
            for b in body:
                if b and len(w) + len(b) <= max_len:
                    cand = w + b
                    if cand not in words:
                        words.add(cand)
                        nxt.add(cand)
        frontier = nxt
    return frozenset(words)


def random_regex(rng: random.Random, actions, size: int) -> Regex:
    """Random regex AST with `size` internal/leaf nodes (raw constructors:
    the shapes exercised are not biased by smart-constructor rewrites)."""
    if size <= 1:
        if rng.random() < 0.2:
            return EPS
        return Atom(rng.choice(actions))
    pick = rng.random()
    if pick < 0.35:
        left = random_regex(rng, actions, (size - 1) // 2 + 1)
        right = random_regex(rng, actions, size - 1 - ((size - 1) // 2 + 1) + 1)
        return Seq(left, right)
    if pick < 0.7:
        left = random_regex(rng, actions, (size - 1) // 2 + 1)
        right = random_regex(rng, actions, size - 1 - ((size - 1) // 2 + 1) + 1)
        return Alt(left, right)
    return Star(random_regex(rng, actions, size - 1))
