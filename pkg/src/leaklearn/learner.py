"""Active learning of Mealy models over observation trees with apartness.

The learner grows a tree of executed queries.  Basis nodes are pairwise
apart (recorded evidence proves they are distinct states); frontier nodes
are basis children awaiting identification.  Exploration is restricted per
node to the actions the specifications admit there, which both prunes the
input space and makes definedness differences distinguishing observations
in their own right.

Counterexamples from the equivalence oracle are localized with a prefix
binary search before being folded into the tree.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

from .mealy import MealyMachine


class BudgetExhausted(RuntimeError):
    pass


class NotACounterexample(ValueError):
    pass


class _Node:
    __slots__ = ("uid", "parent", "in_action", "output", "admissible", "children")
    _counter = 0

    def __init__(self, parent, in_action, output, admissible):
        self.uid = _Node._counter
        _Node._counter += 1
        self.parent = parent
        self.in_action = in_action
        self.output = output
        self.admissible = admissible
        self.children = {}

    def access_word(self):
        word = []
        node = self
        while node.parent is not None:
            word.append(node.in_action)
            node = node.parent
        word.reverse()
        return tuple(word)


@dataclass
class LearnStats:
    membership_queries: int = 0
    oracle_rounds: int = 0
    basis_size: int = 0
    tree_nodes: int = 0
    cached_steps: int = 0
    executed_steps: int = 0

    def as_dict(self):
        return dict(self.__dict__)


class ObservationTree:
    def __init__(self, teacher):
        self.teacher = teacher
        root_info = teacher.query(())
        self.root = _Node(None, None, None, root_info.admissible[0])
        self.nodes = [self.root]
        self.basis = [self.root]
        # apartness is monotone under tree growth, so positive witnesses
        # are cached forever; negatives are recomputed
        self._witnesses = {}

    def query(self, word):
        """Execute (the admissible prefix of) `word` and fold it into the
        tree.  Returns the node reached."""
        result = self.teacher.query(tuple(word))
        node = self.root
        for i in range(result.defined_len):
            action = word[i]
            child = node.children.get(action)
            if child is None:
                child = _Node(node, action, result.outputs[i], result.admissible[i + 1])
                node.children[action] = child
                self.nodes.append(child)
            elif child.output != result.outputs[i]:
                raise AssertionError(
                    "nondeterministic observation; the cache contract is broken")
            node = child
        return node

    # -- apartness ----------------------------------------------------------

    def apart(self, a: _Node, b: _Node) -> bool:
        return self.apartness_witness(a, b) is not None

    def apartness_witness(self, a: _Node, b: _Node):
        """Input suffix along which the recorded behaviors of `a` and `b`
        differ (in outputs or in admissibility), or None."""
        key = (a.uid, b.uid) if a.uid < b.uid else (b.uid, a.uid)
        witness = self._witnesses.get(key)
        if witness is None:
            witness = self._compute_witness(a, b)
            if witness is not None:
                self._witnesses[key] = witness
        return witness

    def _compute_witness(self, a, b):
        queue = deque([(a, b, ())])
        while queue:
            x, y, suffix = queue.popleft()
            if x.admissible != y.admissible:
                return suffix
            for action in sorted(x.admissible):
                cx = x.children.get(action)
                cy = y.children.get(action)
                if cx is not None and cy is not None:
                    if cx.output != cy.output:
                        return suffix + (action,)
                    queue.append((cx, cy, suffix + (action,)))
        return None

    def candidates(self, frontier_node):
        return [b for b in self.basis if not self.apart(frontier_node, b)]


class Learner:
    def __init__(self, teacher, oracle, alphabet=None, max_rounds: int = 500,
                 max_queries: int | None = None, on_hypothesis=None):
        self.teacher = teacher
        self.oracle = oracle
        self.alphabet = frozenset(alphabet) if alphabet is not None else None
        self.max_rounds = max_rounds
        self.max_queries = max_queries
        self.on_hypothesis = on_hypothesis
        self.tree = ObservationTree(teacher)
        self.stats = LearnStats()

    # -- main loop ------------------------------------------------------------

    def learn(self) -> MealyMachine:
        for _round in range(self.max_rounds):
            self._check_budget()
            self._stabilize()
            hyp, state_of = self._build_hypothesis()
            cex = self._tree_inconsistency(hyp, state_of)
            if cex is not None:
                self.process_counterexample(hyp, state_of, cex)
                continue
            if self.on_hypothesis is not None:
                self.on_hypothesis(hyp, self.tree)
            self.stats.oracle_rounds += 1
            cex = self.oracle.find_counterexample(hyp)
            if cex is None:
                self._finalize_stats()
                return hyp
            self.process_counterexample(hyp, state_of, tuple(cex))
        raise BudgetExhausted(f"no stable model after {self.max_rounds} rounds")

    def _check_budget(self):
        if self.max_queries is not None and self.teacher.queries > self.max_queries:
            raise BudgetExhausted(f"query budget {self.max_queries} exceeded")

    def _finalize_stats(self):
        self.stats.basis_size = len(self.tree.basis)
        self.stats.tree_nodes = len(self.tree.nodes)
        self.stats.membership_queries = self.teacher.queries
        cached = getattr(self.teacher, "cached", None)
        if cached is not None:
            self.stats.cached_steps = cached.stats.cached_steps
            self.stats.executed_steps = cached.stats.executed_steps

    # -- stabilization: promotion, completion, identification -------------------

    def _stabilize(self):
        tree = self.tree
        while True:
            self._check_budget()
            # promotion: an isolated frontier node is a new state
            # (oldest-first keeps state numbering deterministic)
            promoted = False
            for node in self._frontier():
                if not tree.candidates(node):
                    tree.basis.append(node)
                    promoted = True
                    break
            if promoted:
                continue
            # completion: every basis node explores its whole admissible set
            extended = False
            for b in tree.basis:
                for action in sorted(b.admissible):
                    if action not in b.children:
                        tree.query(b.access_word() + (action,))
                        extended = True
                if extended:
                    break
            if extended:
                continue
            # identification: split frontier nodes torn between candidates
            identified = False
            for node in self._frontier():
                cands = tree.candidates(node)
                if len(cands) > 1:
                    witness = tree.apartness_witness(cands[0], cands[1])
                    tree.query(node.access_word() + tuple(witness))
                    identified = True
                    break
            if not identified:
                return

    def _frontier(self):
        in_basis = set(id(b) for b in self.tree.basis)
        frontier = []
        for b in self.tree.basis:
            for action in sorted(b.children):
                child = b.children[action]
                if id(child) not in in_basis:
                    frontier.append(child)
        frontier.sort(key=lambda n: n.uid)
        return frontier

    def _build_hypothesis(self):
        tree = self.tree
        names = {id(b): f"q{i}" for i, b in enumerate(tree.basis)}
        transitions = {}
        state_of = {names[id(b)]: b for b in tree.basis}
        for b in tree.basis:
            for action in sorted(b.admissible):
                child = b.children.get(action)
                if child is None:
                    continue
                if id(child) in names:
                    target = names[id(child)]
                else:
                    cands = tree.candidates(child)
                    if len(cands) != 1:
                        raise AssertionError("hypothesis built from an unstable tree")
                    target = names[id(cands[0])]
                transitions[(names[id(b)], action)] = (target, child.output)
        alphabet = self.alphabet
        if alphabet is None:
            alphabet = {a for (_, a) in transitions} or None
        hyp = MealyMachine("q0", transitions, alphabet)
        return hyp, state_of

    # -- counterexample processing -----------------------------------------------

    def _tree_inconsistency(self, hyp, state_of):
        """A word the hypothesis provably gets wrong according to evidence
        already in the tree (an internal counterexample), or None."""
        queue = deque([(self.tree.root, hyp.initial)])
        while queue:
            node, state = queue.popleft()
            basis_node = state_of[state]
            if node.admissible != basis_node.admissible:
                delta = sorted(node.admissible ^ basis_node.admissible)
                return node.access_word() + (delta[0],)
            for action in sorted(node.children):
                child = node.children[action]
                step = hyp.transitions.get((state, action))
                if step is None or step[1] != child.output:
                    return child.access_word()
                queue.append((child, step[0]))
        return None

    def process_counterexample(self, hyp, state_of, cex):
        """Fold a counterexample into the tree and pin a new apartness fact
        with a prefix binary search over the divergence position."""
        tree = self.tree
        tree.query(cex)
        m = self._divergence_index(hyp, cex)
        if m is None:
            raise NotACounterexample("hypothesis and system agree on this word")
        cex = tuple(cex[: m + 1])

        def agrees(j):
            state = self._hyp_state_after(hyp, cex[:j])
            basis_node = state_of[state]
            tree.query(basis_node.access_word() + cex[j:])
            return self._suffix_agrees(hyp, state, basis_node, cex[j:])

        lo, hi = 0, len(cex)  # invariant: not agrees(lo); agrees(len) trivially
        while hi - lo > 1:
            mid = (lo + hi) // 2
            if agrees(mid):
                hi = mid
            else:
                lo = mid
        # the probes planted distinguishing evidence below the state reached
        # at position lo; the next stabilization round picks it up

    def _divergence_index(self, hyp, cex):
        result = self.teacher.query(cex)
        run = hyp.run(tuple(cex[: result.defined_len]))
        for i in range(result.defined_len):
            if run.undefined_at is not None and run.undefined_at == i:
                return i
            if run.outputs[i] != result.outputs[i]:
                return i
        if result.defined_len < len(cex):
            # the system refuses an input the hypothesis defines
            state = self._hyp_state_after(hyp, cex[: result.defined_len])
            if state is not None and (state, cex[result.defined_len]) in hyp.transitions:
                return result.defined_len
        return None

    def _hyp_state_after(self, hyp, word):
        state = hyp.initial
        for action in word:
            step = hyp.transitions.get((state, action))
            if step is None:
                return None
            state = step[0]
        return state

    def _suffix_agrees(self, hyp, state, basis_node, suffix):
        """Does the tree evidence below `basis_node` match the hypothesis run
        of `suffix` from `state`, in outputs and definedness?"""
        node = basis_node
        for action in suffix:
            step = hyp.transitions.get((state, action))
            hyp_defined = step is not None
            sul_defined = action in node.admissible
            if hyp_defined != sul_defined:
                return False
            if not hyp_defined:
                return True  # both stop here
            child = node.children.get(action)
            if child is None:
                return True  # no evidence against the hypothesis
            if child.output != step[1]:
                return False
            state = step[0]
            node = child
        return True


def learn_machine(teacher, oracle, alphabet=None, max_rounds=500,
                  max_queries=None, on_hypothesis=None):
    """Run the learner; returns (machine, stats)."""
    learner = Learner(teacher, oracle, alphabet=alphabet, max_rounds=max_rounds,
                      max_queries=max_queries, on_hypothesis=on_hypothesis)
    machine = learner.learn()
    return machine, learner.stats
