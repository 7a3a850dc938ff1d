"""Progress loops, successor selection, and bounded model construction.

A progress loop for a closed-and-updated satisfied set X is a sequence of
formula sets that a simple cycle of fresh states can realize, leaving a
residue of obligations (`exit_obligations`) for the cycle's exit successors.
`compress_model` turns that idea into a recursive construction: find a loop,
split the exit mass over a small support of successor states (exact
Caratheodory reduction), recurse on strictly simpler formula sets, and stop
at bottom SCCs, which collapse to satisfaction-signature cycles.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction

from . import linalg
from .closure import achieved_bounds, closure_update
from .formula import (
    And, Atom, Cmp, NegAtom, Or, PathFormula, PathOp, Prob, StateFormula,
    formula_sets, fragment_classify, iter_subformulas, sort_key,
    sorted_formulas,
)
from .markov import MarkovChain, first_passage, reachable_from, scc_decompose
from .measure import bound_base, model_size_bound, progress_measure, reachable_eventualities
from .modelcheck import ModelChecker


class ProgressLoopError(ValueError):
    """A loop hypothesis or construction step failed."""


class FragmentError(ValueError):
    """The formula set is outside the requested fragment."""


class SearchSpaceExceeded(RuntimeError):
    """The bounded loop search ran out of budget before exhausting the
    candidate space; distinct from 'no loop exists up to max_n'."""


class CompressionError(RuntimeError):
    """The model compression pipeline hit an internal inconsistency."""


@dataclass(frozen=True)
class ProgressLoop:
    """A sequence L0..Ln of formula sets.  Validity (pairwise distinct sets,
    local closure rules, the semantic side conditions) is established by
    `verify_loop`, not by construction."""

    sets: tuple[frozenset[StateFormula], ...]

    def __len__(self) -> int:
        return len(self.sets)

    def union(self) -> frozenset[StateFormula]:
        out: set[StateFormula] = set()
        for s in self.sets:
            out |= s
        return frozenset(out)


def exit_obligations(loop: ProgressLoop) -> frozenset[StateFormula]:
    """Formulas the loop itself cannot discharge: every G formula; every
    F formula whose body appears nowhere in the loop; every F=1 formula
    occurring in some L_i whose body is absent from L_i..Ln."""
    union = loop.union()
    out: set[StateFormula] = set()
    for f in union:
        if not isinstance(f, Prob):
            continue
        if f.op is PathOp.G:
            out.add(f)
            continue
        if f.body not in union:
            out.add(f)
            continue
        if f.cmp is Cmp.GE and f.bound == 1:
            suffix: set[StateFormula] = set()
            for i in range(len(loop.sets) - 1, -1, -1):
                suffix |= loop.sets[i]
                if f in loop.sets[i] and f.body not in suffix:
                    out.add(f)
                    break
    return frozenset(out)


def _local_rule_violations(i: int, level: frozenset[StateFormula],
                           loop: ProgressLoop) -> list[str]:
    problems = []
    for f in level:
        if isinstance(f, Atom) and NegAtom(f.name) in level:
            problems.append(f"condition (3): L{i} contains both {f.name} and !{f.name}")
        elif isinstance(f, And):
            for a in f.args:
                if a not in level:
                    problems.append(f"condition (3): conjunct {a} of {f} missing from L{i}")
        elif isinstance(f, Or):
            if not any(a in level for a in f.args):
                problems.append(f"condition (3): no disjunct of {f} present in L{i}")
        elif isinstance(f, Prob) and f.op is PathOp.G:
            for j, other in enumerate(loop.sets):
                if f.body not in other:
                    problems.append(
                        f"condition (3): body of {f} (in L{i}) missing from L{j}")
    return problems


def verify_loop(chain: MarkovChain, state: str, formulas, loop: ProgressLoop, *,
                checker: ModelChecker | None = None) -> list[str]:
    """Checks the loop hypotheses and all six conditions independently and
    returns every violation (empty list means the loop is valid)."""
    mc = checker or ModelChecker(chain)
    X = frozenset(formulas)
    problems: list[str] = []

    unsatisfied = [f for f in X if not mc.holds(state, f)]
    for f in sorted_formulas(unsatisfied):
        problems.append(f"hypothesis: state {state!r} does not satisfy {f}")
    if not unsatisfied and closure_update(chain, state, X, checker=mc) != X:
        problems.append("hypothesis: X is not closed and updated")

    sub = formula_sets(X).sub
    for i, level in enumerate(loop.sets):
        extra = level - sub
        for f in sorted_formulas(extra):
            problems.append(f"L{i} contains {f}, which is not a subformula of X")

    if not any(X <= level for level in loop.sets):
        problems.append("condition (1): no L_i contains X")
    for i in range(len(loop.sets)):
        for j in range(i + 1, len(loop.sets)):
            if loop.sets[i] == loop.sets[j]:
                problems.append(f"condition (2): L{i} and L{j} are equal")
    for i, level in enumerate(loop.sets):
        problems.extend(_local_rule_violations(i, level, loop))

    residue = exit_obligations(loop)
    for f in sorted_formulas(residue):
        if not mc.holds(state, f):
            problems.append(f"condition (4): state {state!r} does not satisfy {f}")
    for f in sorted_formulas(residue):
        if isinstance(f, Prob) and f.op is PathOp.F and mc.holds(state, f.body):
            problems.append(
                f"condition (5): state {state!r} satisfies the body of {f}")
    spilled = (reachable_eventualities(chain, state, residue, checker=mc)
               - reachable_eventualities(chain, state, X, checker=mc))
    for path in sorted(spilled, key=lambda p: sort_key(p.body)):
        problems.append(
            f"condition (6): {path} is a reachable eventuality of the exit "
            "obligations but not of X")
    return problems


# ---------------------------------------------------------------------------
# Loop search

def _locally_consistent_sets(universe: list[StateFormula]):
    """All subsets of the universe satisfying the per-set rules of condition
    (3), ordered by (size, canonical order).  The G rule applies to the set
    itself here (a G member's body must be present in every set, including
    its own); the cross-set part is enforced during the sequence walk."""
    out = []
    n = len(universe)
    for mask in range(1, 1 << n):
        level = frozenset(universe[k] for k in range(n) if mask >> k & 1)
        ok = True
        for f in level:
            if isinstance(f, Atom) and NegAtom(f.name) in level:
                ok = False
            elif isinstance(f, And) and not all(a in level for a in f.args):
                ok = False
            elif isinstance(f, Or) and not any(a in level for a in f.args):
                ok = False
            elif (isinstance(f, Prob) and f.op is PathOp.G
                    and f.body not in level):
                ok = False
            if not ok:
                break
        if ok:
            out.append(level)
    out.sort(key=lambda s: (len(s), tuple(sorted(sort_key(f) for f in s))))
    return out


def search_loop_generic(chain: MarkovChain, state: str, formulas, max_n: int, *,
                        node_budget: int = 200_000,
                        checker: ModelChecker | None = None) -> ProgressLoop | None:
    """Exhaustive bounded search for a progress loop: iterative deepening
    over sequences of distinct locally-consistent subsets of sub(X), with
    the cross-set G-body constraint propagated during the walk.  Returns
    the first loop (in canonical order) passing `verify_loop`, or None when
    the space up to max_n is exhausted.  Raises SearchSpaceExceeded when
    `node_budget` extensions were tried first.
    """
    mc = checker or ModelChecker(chain)
    X = frozenset(formulas)
    if not mc.check(state, X):
        raise ProgressLoopError(f"state {state!r} does not satisfy X")
    if closure_update(chain, state, X, checker=mc) != X:
        raise ProgressLoopError("X is not closed and updated")

    universe = sorted_formulas(formula_sets(X).sub)
    if len(universe) > 20:
        raise SearchSpaceExceeded(f"{len(universe)} subformulas is beyond the "
                                  "exhaustive search range")
    family = _locally_consistent_sets(universe)
    cap = min(max_n, (1 << len(universe)) - 1)
    budget = node_budget

    def g_bodies(level: frozenset[StateFormula]) -> frozenset[StateFormula]:
        return frozenset(f.body for f in level
                         if isinstance(f, Prob) and f.op is PathOp.G)

    for length in range(1, cap + 2):
        chosen: list[frozenset[StateFormula]] = []

        def extend(required: frozenset[StateFormula], has_anchor: bool):
            nonlocal budget
            if len(chosen) == length:
                if has_anchor:
                    candidate = ProgressLoop(tuple(chosen))
                    if not verify_loop(chain, state, X, candidate, checker=mc):
                        return candidate
                return None
            remaining = length - len(chosen)
            for level in family:
                if level in chosen:
                    continue
                if not required <= level:
                    continue
                new_bodies = g_bodies(level) - required
                if new_bodies and any(not new_bodies <= prev for prev in chosen):
                    continue
                if budget <= 0:
                    raise SearchSpaceExceeded(
                        f"loop search exceeded the node budget ({node_budget})")
                budget -= 1
                chosen.append(level)
                found = extend(required | new_bodies,
                               has_anchor or X <= level)
                chosen.pop()
                if found is not None:
                    return found
            return None

        found = extend(frozenset(), False)
        if found is not None:
            return found
    return None


def _contains_g(f: StateFormula) -> bool:
    return any(isinstance(g, Prob) and g.op is PathOp.G
               for g in iter_subformulas(f))


def _least_closed_set(seed, mc: ModelChecker, witness: str, *,
                      unfold_g: bool) -> frozenset[StateFormula]:
    """Closure of `seed` under the loop construction rules evaluated at
    `witness`: conjunct splitting, satisfied disjuncts, satisfied F-bodies,
    and (for the initial set only) unconditional G-body unfolding."""
    result: set[StateFormula] = set()
    work = list(seed)
    while work:
        f = work.pop()
        if f in result:
            continue
        result.add(f)
        if isinstance(f, And):
            work.extend(f.args)
        elif isinstance(f, Or):
            work.extend(a for a in f.args if mc.holds(witness, a))
        elif isinstance(f, Prob):
            if f.op is PathOp.G and unfold_g:
                work.append(f.body)
            elif f.op is PathOp.F and mc.holds(witness, f.body):
                work.append(f.body)
    return frozenset(result)


def search_loop_l2(chain: MarkovChain, state: str, formulas, *,
                   checker: ModelChecker | None = None) -> ProgressLoop:
    """Constructive loop search for the L2 fragment.

    Builds L0 as the closure of X at `state` with G-bodies unfolded, then
    repeatedly serves an F obligation that entered through the loop (not
    through X) and whose body appears nowhere yet: a reachable witness
    satisfying the body and all G-bodies is located breadth-first (smallest
    state id first) and a new set is closed at that witness.  The result is
    re-checked with `verify_loop` before being returned.
    """
    mc = checker or ModelChecker(chain)
    X = frozenset(formulas)
    outside = [f for f in sorted_formulas(X) if not fragment_classify(f).in_l2]
    if outside:
        raise FragmentError(f"not in fragment L2: {outside[0]}")
    if not mc.check(state, X):
        raise ProgressLoopError(f"state {state!r} does not satisfy X")
    if closure_update(chain, state, X, checker=mc) != X:
        raise ProgressLoopError("X is not closed and updated")

    level0 = _least_closed_set(X, mc, state, unfold_g=True)
    sets: list[frozenset[StateFormula]] = [level0]
    witnesses = [state]
    # bodies of every G member of L0 must appear in every later set
    invariant = frozenset(f.body for f in level0
                          if isinstance(f, Prob) and f.op is PathOp.G)

    while True:
        union: set[StateFormula] = set()
        for level in sets:
            union |= level
        unserved = None
        for f in sorted_formulas(union):
            if (isinstance(f, Prob) and f.op is PathOp.F
                    and f not in X and f.body not in union
                    and not _contains_g(f.body)):
                # F obligations with a G inside must not be served in-loop:
                # closing their body in a later set would introduce a G whose
                # body cannot retroactively join every earlier set.  They fall
                # through to the exit obligations instead.
                unserved = f
                break
        if unserved is None:
            break
        home = next(i for i, level in enumerate(sets) if unserved in level)
        witness = _find_witness(chain, witnesses[home], unserved.body,
                                invariant, mc)
        if witness is None:
            raise ProgressLoopError(
                f"no reachable state satisfies the body of {unserved} "
                "together with all G-bodies")
        new_level = _least_closed_set(frozenset({unserved.body}) | invariant,
                                      mc, witness, unfold_g=False)
        sets.append(new_level)
        witnesses.append(witness)

    loop = ProgressLoop(tuple(sets))
    problems = verify_loop(chain, state, X, loop, checker=mc)
    if problems:
        raise ProgressLoopError(
            "constructed sequence is not a progress loop: " + "; ".join(problems))
    return loop


def _find_witness(chain: MarkovChain, start: str, body: StateFormula,
                  invariant: frozenset[StateFormula],
                  mc: ModelChecker) -> str | None:
    # breadth-first, successors visited in state-id order: deterministic
    seen = {start}
    queue = deque([start])
    while queue:
        current = queue.popleft()
        if mc.holds(current, body) and mc.check(current, invariant):
            return current
        for nxt in sorted(chain.successors(current)):
            if nxt not in seen:
                seen.add(nxt)
                queue.append(nxt)
    return None


# ---------------------------------------------------------------------------
# Successor selection (exit distribution of the loop)

@dataclass(frozen=True)
class SuccessorSelection:
    """Exit support for a set of obligations: states, positive rational
    weights summing to one, the path formulas in their canonical order
    (F formulas first), and the per-state achieved probabilities."""

    support: tuple[str, ...]
    weights: dict[str, Fraction]
    obligations: frozenset[StateFormula]
    paths: tuple[PathFormula, ...]
    achieved: dict[tuple[str, PathFormula], Fraction]


def caratheodory_reduce(points: list[tuple[Fraction, ...]],
                        weights: list[Fraction]) -> list[Fraction]:
    """Shrinks a convex combination to at most dim+1 support points while
    preserving the combination value exactly.  Returns the new weights
    (zeros mark eliminated points).  Deterministic: the affine dependency
    comes from a fixed-order elimination and the first free column."""
    if len(points) != len(weights):
        raise ValueError("points and weights differ in length")
    weights = list(weights)
    dim = len(points[0]) if points else 0
    while True:
        active = [i for i, w in enumerate(weights) if w > 0]
        if len(active) <= dim + 1:
            return weights
        rows = [[points[i][d] for i in active] for d in range(dim)]
        rows.append([Fraction(1)] * len(active))
        dependency = linalg.null_vector(rows, len(active))
        assert dependency is not None  # len(active) > dim+1 guarantees one
        if not any(lam > 0 for lam in dependency):
            dependency = [-lam for lam in dependency]
        step = min(weights[i] / lam
                   for i, lam in zip(active, dependency) if lam > 0)
        for i, lam in zip(active, dependency):
            weights[i] -= step * lam
            if weights[i] < 0:  # exact arithmetic: can only be roundoff-free 0
                raise AssertionError("negative weight in reduction")


def successor_selection(chain: MarkovChain, state: str, obligations, *,
                        checker: ModelChecker | None = None) -> SuccessorSelection:
    """Chooses exit successors for the obligations that a loop at `state`
    pushes outward.

    The candidate states are those inside bottom SCCs plus those satisfying
    some F-obligation body; the first-passage distribution over them is then
    reduced by exact Caratheodory steps on the achieved-probability vectors
    (all obligations, F and G alike), so the support size is at most
    |path formulas| + 1 and every obligation's probability at `state` is
    covered by the weighted successors.
    """
    mc = checker or ModelChecker(chain)
    delta = frozenset(obligations)
    if not mc.check(state, delta):
        raise ProgressLoopError(f"state {state!r} does not satisfy the obligations")

    prob_members = [f for f in sorted_formulas(delta) if isinstance(f, Prob)]
    f_paths = []
    g_paths = []
    for f in prob_members:
        path = f.path_formula
        if f.op is PathOp.F and path not in f_paths:
            f_paths.append(path)
        elif f.op is PathOp.G and path not in g_paths:
            g_paths.append(path)
    paths = tuple(f_paths + g_paths)

    candidates: set[str] = set(scc_decompose(chain).bottom_states())
    for path in f_paths:
        candidates |= mc.sat_set(path.body)
    passage = first_passage(chain, state, candidates)

    support = sorted(t for t, y in passage.items() if y > 0)
    vectors = [tuple(mc.probability(t, path) for path in paths) for t in support]
    weights = caratheodory_reduce(vectors, [passage[t] for t in support])

    kept = [t for t, w in zip(support, weights) if w > 0]
    kept_weights = {t: w for t, w in zip(support, weights) if w > 0}
    achieved = {(t, path): mc.probability(t, path)
                for t in kept for path in paths}
    return SuccessorSelection(tuple(kept), kept_weights, delta, paths, achieved)


def verify_selection(chain: MarkovChain, state: str, obligations,
                     selection: SuccessorSelection, *,
                     checker: ModelChecker | None = None) -> list[str]:
    """Independently checks the five selection conditions; returns all
    violations."""
    mc = checker or ModelChecker(chain)
    problems = []
    if sum(selection.weights.values(), Fraction(0)) != 1:
        problems.append("weights do not sum to 1")
    member_paths = formula_sets(obligations).p
    if not 0 < len(selection.support) <= len(member_paths) + 1:
        problems.append(
            f"support size {len(selection.support)} outside (0, {len(member_paths) + 1}]")
    for path in member_paths:
        covered = sum((selection.weights[t] * mc.probability(t, path)
                       for t in selection.support), Fraction(0))
        if mc.probability(state, path) > covered:
            problems.append(f"probability of {path} at {state!r} not covered")
    region = reachable_from(chain, state)
    bottoms = scc_decompose(chain).bottom_states()
    f_bodies = [f.body for f in obligations
                if isinstance(f, Prob) and f.op is PathOp.F]
    for t in selection.support:
        if t not in region:
            problems.append(f"successor {t!r} unreachable from {state!r}")
        if t not in bottoms and not any(mc.holds(t, b) for b in f_bodies):
            problems.append(
                f"successor {t!r} neither in a bottom SCC nor satisfying an "
                "F-obligation body")
    return problems


# ---------------------------------------------------------------------------
# Model construction

def loop_return_probability(loop: ProgressLoop) -> Fraction:
    """The probability of staying in the loop at its exit state: midpoint
    between 1 and the largest sub-1 bound of the loop's F formulas (1/2 when
    there is none)."""
    bounds = [f.bound for f in loop.union()
              if isinstance(f, Prob) and f.op is PathOp.F and f.bound < 1]
    if not bounds:
        return Fraction(1, 2)
    return (max(bounds) + 1) / 2


def build_loop_model(loop: ProgressLoop, submodels, entry_for=None,
                     ) -> tuple[MarkovChain, str]:
    """Assembles the cycle for a progress loop with the given exit
    submodels: a list of (chain, entry state, weight) triples whose weights
    are positive and sum to one.

    Loop states are named L0..Ln and valued with the atoms of their formula
    set; each steps to the next with probability 1; the last returns to L0
    with the loop-return probability and otherwise enters a submodel entry.
    Submodel states are renamed only on collision.  The returned entry state
    is the first L_i containing `entry_for` (L0 when it is None).
    """
    total = sum((Fraction(w) for _, _, w in submodels), Fraction(0))
    if total != 1:
        raise ValueError(f"submodel weights sum to {total}, not 1")
    if any(Fraction(w) <= 0 for _, _, w in submodels):
        raise ValueError("submodel weights must be positive")

    n = len(loop.sets)
    loop_ids = [f"L{i}" for i in range(n)]
    used = set(loop_ids)
    states: list[str] = list(loop_ids)
    valuation: dict[str, list[str]] = {
        lid: sorted(f.name for f in level if isinstance(f, Atom))
        for lid, level in zip(loop_ids, loop.sets)
    }
    edges: dict[tuple[str, str], Fraction] = {}

    renamed_entries: list[str] = []
    for k, (sub, entry, _) in enumerate(submodels):
        if entry not in sub:
            raise ValueError(f"entry state {entry!r} not in submodel {k}")
        mapping = {}
        for s in sub.states:
            name = s if s not in used else f"m{k}_{s}"
            if name in used:
                raise ValueError(f"state id collision after renaming: {name!r}")
            mapping[s] = name
            used.add(name)
        states.extend(mapping[s] for s in sub.states)
        for s in sub.states:
            valuation[mapping[s]] = sorted(sub.atoms(s))
        for src, dst, p in sub.edges():
            edges[(mapping[src], mapping[dst])] = p
        renamed_entries.append(mapping[entry])

    for i in range(n - 1):
        edges[(loop_ids[i], loop_ids[i + 1])] = Fraction(1)
    stay = loop_return_probability(loop)
    edges[(loop_ids[-1], loop_ids[0])] = edges.get((loop_ids[-1], loop_ids[0]),
                                                   Fraction(0)) + stay
    for (sub, entry, w), new_entry in zip(submodels, renamed_entries):
        key = (loop_ids[-1], new_entry)
        edges[key] = edges.get(key, Fraction(0)) + (1 - stay) * Fraction(w)

    chain = MarkovChain(states, edges, valuation)
    if entry_for is None:
        return chain, loop_ids[0]
    wanted = frozenset(entry_for)
    for lid, level in zip(loop_ids, loop.sets):
        if wanted <= level:
            return chain, lid
    raise ValueError("no loop set contains the requested entry formulas")


def bscc_reduce(chain: MarkovChain, state: str, formulas, *,
                checker: ModelChecker | None = None) -> tuple[MarkovChain, str]:
    """Collapses the bottom SCC containing `state` to a deterministic cycle
    with one representative per satisfaction signature over sub(X).  The
    representative of a class is its smallest state id; the cycle visits
    representatives in id order.  The entry is the representative of
    `state`'s class and is re-checked to satisfy the formulas.
    """
    mc = checker or ModelChecker(chain)
    X = frozenset(formulas)
    decomposition = scc_decompose(chain)
    component = decomposition.component_of(state)
    index = decomposition.components.index(component)
    if not decomposition.is_bottom[index]:
        raise ValueError(f"state {state!r} is not in a bottom SCC")
    if not mc.check(state, X):
        raise ProgressLoopError(f"state {state!r} does not satisfy the formulas")

    sub = sorted_formulas(formula_sets(X).sub)
    classes: dict[tuple[bool, ...], str] = {}
    for s in sorted(component):
        signature = tuple(mc.holds(s, f) for f in sub)
        classes.setdefault(signature, s)
    reps = sorted(classes.values())
    assert len(reps) <= 2 ** len(sub)

    edges = {}
    for i, rep in enumerate(reps):
        edges[(rep, reps[(i + 1) % len(reps)])] = Fraction(1)
    reduced = MarkovChain(reps, edges, {r: chain.atoms(r) for r in reps})

    entry_signature = tuple(mc.holds(state, f) for f in sub)
    entry = classes[entry_signature]
    if not ModelChecker(reduced).check(entry, X):
        raise CompressionError("signature cycle lost a formula of X")
    return reduced, entry


@dataclass
class CompressionNode:
    """One recursion node of the compression pipeline, for trace reports."""

    state: str
    formulas: frozenset[StateFormula]
    measure: int
    base: int
    bound: int
    mode: str
    size: int = 0
    loop: ProgressLoop | None = None
    obligations: frozenset[StateFormula] = frozenset()
    selection: SuccessorSelection | None = None
    children: list["CompressionNode"] = field(default_factory=list)

    def to_dict(self) -> dict:
        data = {
            "state": self.state,
            "formulas": [str(f) for f in sorted_formulas(self.formulas)],
            "measure": self.measure,
            "base": self.base,
            "size_bound": self.bound,
            "size": self.size,
            "mode": self.mode,
        }
        if self.loop is not None:
            data["loop"] = [[str(f) for f in sorted_formulas(level)]
                            for level in self.loop.sets]
            data["exit_obligations"] = [
                str(f) for f in sorted_formulas(self.obligations)]
        if self.selection is not None:
            data["successors"] = [
                {"state": t, "weight": str(self.selection.weights[t])}
                for t in self.selection.support]
        if self.children:
            data["children"] = [c.to_dict() for c in self.children]
        return data


def compress_model(chain: MarkovChain, state: str, formula: StateFormula, *,
                   fragment: str = "l2", max_n: int = 3,
                   checker: ModelChecker | None = None,
                   ) -> tuple[MarkovChain, str, CompressionNode]:
    """Builds a small model of `formula` from a satisfying state of `chain`.

    fragment: "l2" uses the constructive loop search (the formula and every
    derived set must classify into L2); "generic" uses the exhaustive search
    bounded by `max_n`.  Returns the model, its entry state, and the
    recursion trace.  The entry is re-verified against `formula` and the
    geometric size bound is enforced at every recursion level.
    """
    if fragment not in ("l2", "generic"):
        raise ValueError(f"unknown fragment {fragment!r}")
    mc = checker or ModelChecker(chain)
    if not mc.holds(state, formula):
        raise ProgressLoopError(f"state {state!r} does not satisfy {formula}")
    if fragment == "l2" and not fragment_classify(formula).in_l2:
        raise FragmentError(f"not in fragment L2: {formula}")

    bottoms = scc_decompose(chain).bottom_states()

    def build(at: str, X: frozenset[StateFormula],
              parent_measure: int | None) -> tuple[MarkovChain, str, CompressionNode]:
        m = progress_measure(chain, at, X, checker=mc)
        base = bound_base(X)
        node = CompressionNode(state=at, formulas=X, measure=m, base=base,
                               bound=model_size_bound(base, m + 1), mode="")

        if at in bottoms:
            node.mode = "bscc"
            model, entry = bscc_reduce(chain, at, X, checker=mc)
        else:
            # only recursive children must make progress; bottom-SCC children
            # are collapsed directly and need no induction
            if parent_measure is not None and m >= parent_measure:
                raise CompressionError(
                    f"progress measure did not decrease at {at!r}: "
                    f"{m} >= {parent_measure}")
            node.mode = "loop"
            if fragment == "l2":
                loop = search_loop_l2(chain, at, X, checker=mc)
            else:
                loop = search_loop_generic(chain, at, X, max_n, checker=mc)
                if loop is None:
                    raise ProgressLoopError(
                        f"no progress loop found for {at!r} within max_n={max_n}")
            node.loop = loop
            node.obligations = exit_obligations(loop)
            selection = successor_selection(chain, at, node.obligations, checker=mc)
            node.selection = selection
            submodels = []
            for t in selection.support:
                X_t = closure_update(
                    chain, t, achieved_bounds(chain, t, node.obligations, checker=mc),
                    checker=mc)
                child_model, child_entry, child_node = build(t, X_t, m)
                node.children.append(child_node)
                submodels.append((child_model, child_entry, selection.weights[t]))
            model, entry = build_loop_model(loop, submodels, entry_for=X)

        node.size = len(model.states)
        if node.size > node.bound:
            raise CompressionError(
                f"constructed model exceeds the size bound at {at!r}: "
                f"{node.size} > {node.bound}")
        return model, entry, node

    root_set = closure_update(chain, state, frozenset({formula}), checker=mc)
    model, entry, trace = build(state, root_set, None)
    if not ModelChecker(model).holds(entry, formula):
        raise CompressionError("compressed model fails to satisfy the formula")
    return model, entry, trace


def simple_loop_components(chain: MarkovChain) -> list[str]:
    """Diagnostics for the output shape claim: every non-bottom SCC must be
    a simple cycle with exactly one exit state.  Returns violations."""
    problems = []
    decomposition = scc_decompose(chain)
    for comp, bottom in zip(decomposition.components, decomposition.is_bottom):
        if bottom:
            continue
        exits = set()
        for s in comp:
            inside = [t for t in chain.successors(s) if t in comp]
            outside = [t for t in chain.successors(s) if t not in comp]
            if len(inside) != 1:
                problems.append(
                    f"non-bottom SCC state {s!r} has {len(inside)} successors inside "
                    "its component (simple loop needs exactly 1)")
            if outside:
                exits.add(s)
        if len(exits) > 1:
            problems.append(
                f"non-bottom SCC {{{', '.join(sorted(comp))}}} has "
                f"{len(exits)} exit states")
        # the single intra-component successor of each state makes the
        # component one cycle exactly when it is strongly connected, which
        # scc_decompose already established
    return problems
