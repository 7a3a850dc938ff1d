"""Closure and bound-tightening operators on sets of satisfied formulas.

`closure` propagates a satisfied formula set through conjunctions, satisfied
disjuncts, and satisfied F-bodies.  G-bodies are deliberately never unfolded
here; the loop machinery treats them separately.  `update` replaces every
probability bound with the exact probability at the state, which can only
raise bounds.  `achieved_bounds` records the exact probabilities of a set's
path formulas at an arbitrary state (no satisfaction precondition).
"""

from __future__ import annotations

from .formula import And, Cmp, Or, PathOp, Prob, StateFormula
from .markov import MarkovChain
from .modelcheck import ModelChecker


class UnsatisfiedSetError(ValueError):
    """A closure/update precondition s |= X failed; names the first
    falsified formula."""

    def __init__(self, state: str, formula: StateFormula):
        super().__init__(f"state {state!r} does not satisfy {formula}")
        self.state = state
        self.formula = formula


def _checker(chain: MarkovChain, checker: ModelChecker | None) -> ModelChecker:
    if checker is not None:
        return checker
    return ModelChecker(chain)


def _require_satisfied(mc: ModelChecker, state: str, formulas) -> None:
    for f in formulas:
        if not mc.holds(state, f):
            raise UnsatisfiedSetError(state, f)


def closure(chain: MarkovChain, state: str, formulas, *,
            checker: ModelChecker | None = None) -> frozenset[StateFormula]:
    """Least superset of `formulas` closed under: all conjuncts; disjuncts
    satisfied at `state`; bodies of F-formulas satisfied at `state`.
    Requires state |= formulas."""
    mc = _checker(chain, checker)
    _require_satisfied(mc, state, formulas)
    result: set[StateFormula] = set()
    work = list(formulas)
    while work:
        f = work.pop()
        if f in result:
            continue
        result.add(f)
        if isinstance(f, And):
            work.extend(f.args)
        elif isinstance(f, Or):
            work.extend(a for a in f.args if mc.holds(state, a))
        elif isinstance(f, Prob) and f.op is PathOp.F and mc.holds(state, f.body):
            work.append(f.body)
    return frozenset(result)


def update(chain: MarkovChain, state: str, formulas, *,
           checker: ModelChecker | None = None) -> frozenset[StateFormula]:
    """Replaces every probabilistic member P(Phi) |> r with P(Phi) >= r'
    where r' is the exact probability at `state`; other members are kept.
    Requires state |= formulas, so r' >= r always holds."""
    mc = _checker(chain, checker)
    _require_satisfied(mc, state, formulas)
    out: set[StateFormula] = set()
    for f in formulas:
        if isinstance(f, Prob):
            achieved = mc.probability(state, f.path_formula)
            out.add(Prob(f.op, Cmp.GE, achieved, f.body))
        else:
            out.add(f)
    return frozenset(out)


def closure_update(chain: MarkovChain, state: str, formulas, *,
                   checker: ModelChecker | None = None) -> frozenset[StateFormula]:
    """update after closure; idempotent."""
    mc = _checker(chain, checker)
    return update(chain, state, closure(chain, state, formulas, checker=mc),
                  checker=mc)


def achieved_bounds(chain: MarkovChain, state: str, formulas, *,
                    checker: ModelChecker | None = None) -> frozenset[StateFormula]:
    """For every probabilistic member with positive probability at `state`,
    the formula P(Phi) >= P(state |= Phi).  Zero-probability path formulas
    and non-probabilistic members are dropped.  Every returned formula holds
    at `state` by construction."""
    mc = _checker(chain, checker)
    out: set[StateFormula] = set()
    for f in formulas:
        if not isinstance(f, Prob):
            continue
        achieved = mc.probability(state, f.path_formula)
        if achieved > 0:
            out.add(Prob(f.op, Cmp.GE, achieved, f.body))
    return frozenset(out)
