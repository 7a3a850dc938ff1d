"""The progress measure and its auxiliary quantities.

`path_norm` weighs a path formula by its distinct probabilistic operators,
counted level by level: 1 for the formula itself plus the norms of the
maximal path formulas inside its body.  `pending_globals` collects the G
path formulas of a set that the state does not yet satisfy almost surely;
`reachable_eventualities` the F obligations that are unsatisfied locally but
witnessed by a reachable state that spoils none of the pending G formulas.
The measure combines the three and strictly decreases along the model
compression recursion, which is what bounds its depth.
"""

from __future__ import annotations

from dataclasses import dataclass

from .formula import (
    PathFormula, PathOp, Prob, StateFormula, formula_sets,
    immediate_path_subformulas, subformulas,
)
from .markov import MarkovChain, reachable_from
from .modelcheck import ModelChecker


def path_norm(path: PathFormula) -> int:
    """1 + the norms of the maximal path formulas of the body."""
    return 1 + sum(path_norm(q) for q in immediate_path_subformulas(path.body))


def pending_globals(chain: MarkovChain, state: str, formulas, *,
                    checker: ModelChecker | None = None) -> frozenset[PathFormula]:
    """G path formulas occurring anywhere in the set's subformulas whose
    almost-sure version fails at `state`."""
    mc = checker or ModelChecker(chain)
    out = set()
    for path in formula_sets(formulas).psub:
        if path.op is PathOp.G and mc.probability(state, path) != 1:
            out.add(path)
    return frozenset(out)


def reachable_eventualities(chain: MarkovChain, state: str, formulas, *,
                            checker: ModelChecker | None = None) -> frozenset[PathFormula]:
    """F path formulas of the set's own F-members whose body fails at
    `state` but holds at some reachable witness that additionally fails
    G=1 for every pending G formula of the set."""
    mc = checker or ModelChecker(chain)
    pending = pending_globals(chain, state, formulas, checker=mc)
    candidates = [f for f in formulas
                  if isinstance(f, Prob) and f.op is PathOp.F
                  and not mc.holds(state, f.body)]
    if not candidates:
        return frozenset()
    region = reachable_from(chain, state)
    out = set()
    for f in candidates:
        for witness in region:
            if not mc.holds(witness, f.body):
                continue
            if all(mc.probability(witness, g) != 1 for g in pending):
                out.add(f.path_formula)
                break
    return frozenset(out)


def bound_base(formulas) -> int:
    """The base of the geometric model-size bound:
    2 + |nsub| + |psub| + |union of proper subformulas of the members|."""
    sets = formula_sets(formulas)
    proper: set[StateFormula] = set()
    for f in formulas:
        proper |= subformulas(f) - {f}
    return 2 + len(sets.nsub) + len(sets.psub) + len(proper)


@dataclass(frozen=True)
class MeasureParts:
    pending: frozenset[PathFormula]
    eventualities: frozenset[PathFormula]
    base: int


def aux_sets(chain: MarkovChain, state: str, formulas, *,
             checker: ModelChecker | None = None) -> MeasureParts:
    mc = checker or ModelChecker(chain)
    return MeasureParts(
        pending=pending_globals(chain, state, formulas, checker=mc),
        eventualities=reachable_eventualities(chain, state, formulas, checker=mc),
        base=bound_base(formulas),
    )


def progress_measure(chain: MarkovChain, state: str, formulas, *,
                     checker: ModelChecker | None = None) -> int:
    """1 + |pending| * (1 + sum of norms of the members' path formulas)
    + sum of norms of the reachable eventualities."""
    mc = checker or ModelChecker(chain)
    pending = pending_globals(chain, state, formulas, checker=mc)
    member_paths = formula_sets(formulas).p
    total = 1
    if pending:
        total += len(pending) * (1 + sum(path_norm(q) for q in member_paths))
    total += sum(path_norm(q) for q in
                 reachable_eventualities(chain, state, formulas, checker=mc))
    return total


def model_size_bound(base: int, height: int) -> int:
    """2^base * (base^height - 1) / (base - 1), exactly; `height` is the
    measure plus one in the compression pipeline."""
    if base < 2:
        raise ValueError("base must be at least 2")
    if height < 1:
        raise ValueError("height must be at least 1")
    geometric = sum(base ** k for k in range(height))
    return (2 ** base) * geometric
