"""Exact quantitative model checking for F/G formulas on finite chains.

Probabilities are computed by exact rational linear solves, never by value
iteration: reachability probabilities satisfy a nonsingular linear system
once the states with no path to the target are pinned to zero, and
G-probabilities are the complement of reaching the body's complement.
"""

from __future__ import annotations

from fractions import Fraction

from . import linalg
from .formula import (
    And, Atom, NegAtom, Or, PathFormula, PathOp, Prob, StateFormula,
)
from .markov import MarkovChain, states_with_path_to


class ModelChecker:
    """Per-chain checker with memoized satisfaction sets and probability
    vectors.  The memo tables are private to the instance; the chain is
    treated as immutable."""

    def __init__(self, chain: MarkovChain):
        self.chain = chain
        self._sat: dict[StateFormula, frozenset[str]] = {}
        self._pvec: dict[PathFormula, dict[str, Fraction]] = {}

    # -- reachability -------------------------------------------------------

    def reach_probabilities(self, targets) -> dict[str, Fraction]:
        """P(eventually enter `targets`) for every state, exactly."""
        chain = self.chain
        targets = frozenset(targets)
        can_reach = states_with_path_to(chain, targets)
        probs: dict[str, Fraction] = {}
        for s in chain.states:
            if s in targets:
                probs[s] = Fraction(1)
            elif s not in can_reach:
                probs[s] = Fraction(0)
        unknown = [s for s in chain.states if s not in probs]
        if unknown:
            pos = {s: i for i, s in enumerate(unknown)}
            n = len(unknown)
            a = [[Fraction(0)] * n for _ in range(n)]
            b = [Fraction(0)] * n
            for i, s in enumerate(unknown):
                a[i][i] = Fraction(1)
                for dst, p in chain.successors(s).items():
                    if dst in pos:
                        a[i][pos[dst]] -= p
                    else:
                        b[i] += p * probs[dst]
            solution = linalg.solve_vector(a, b)
            for s, value in zip(unknown, solution):
                probs[s] = value
        return probs

    # -- path formulas ------------------------------------------------------

    def path_probabilities(self, path: PathFormula) -> dict[str, Fraction]:
        if path not in self._pvec:
            body_sat = self.sat_set(path.body)
            if path.op is PathOp.F:
                vec = self.reach_probabilities(body_sat)
            else:
                outside = frozenset(self.chain.states) - body_sat
                escape = self.reach_probabilities(outside)
                vec = {s: 1 - escape[s] for s in self.chain.states}
            self._pvec[path] = vec
        return self._pvec[path]

    def probability(self, state: str, path: PathFormula) -> Fraction:
        if state not in self.chain:
            raise KeyError(state)
        return self.path_probabilities(path)[state]

    # -- state formulas -----------------------------------------------------

    def sat_set(self, f: StateFormula) -> frozenset[str]:
        if f in self._sat:
            return self._sat[f]
        chain = self.chain
        if isinstance(f, Atom):
            result = frozenset(s for s in chain.states if f.name in chain.atoms(s))
        elif isinstance(f, NegAtom):
            result = frozenset(s for s in chain.states if f.name not in chain.atoms(s))
        elif isinstance(f, And):
            result = frozenset(chain.states)
            for arg in f.args:
                result &= self.sat_set(arg)
        elif isinstance(f, Or):
            result = frozenset()
            for arg in f.args:
                result |= self.sat_set(arg)
        else:
            vec = self.path_probabilities(f.path_formula)
            result = frozenset(s for s in chain.states if f.cmp.holds(vec[s], f.bound))
        self._sat[f] = result
        return result

    def holds(self, state: str, f: StateFormula) -> bool:
        if state not in self.chain:
            raise KeyError(state)
        return state in self.sat_set(f)

    def check(self, state: str, formulas) -> bool:
        """s |= X: membership in the intersection of the satisfaction sets."""
        return all(self.holds(state, f) for f in formulas)


# Module-level conveniences for one-shot queries.

def sat_set(chain: MarkovChain, f: StateFormula) -> frozenset[str]:
    return ModelChecker(chain).sat_set(f)


def prob(chain: MarkovChain, state: str, path: PathFormula,
         sat_body: frozenset[str] | None = None) -> Fraction:
    """Probability of the path formula at `state`.  When `sat_body` is given
    it must be the exact satisfaction set of the path formula's body; the
    reachability is then computed directly from it."""
    if state not in chain:
        raise KeyError(state)
    mc = ModelChecker(chain)
    if sat_body is None:
        return mc.probability(state, path)
    if path.op is PathOp.F:
        return mc.reach_probabilities(sat_body)[state]
    outside = frozenset(chain.states) - frozenset(sat_body)
    return 1 - mc.reach_probabilities(outside)[state]


def check(chain: MarkovChain, state: str, formulas) -> bool:
    return ModelChecker(chain).check(state, formulas)
