"""Bounded satisfiability through existential real-arithmetic encodings.

Formulas are first rewritten into F-normal form (G eliminated through the
complement duality, all four comparisons allowed on F).  For every model
size up to the bound, candidate digraphs and subformula labelings are
enumerated; a candidate fixes the topology, so correctness of each labeled
F-subformula becomes a polynomial system over the positive edge variables.
Candidates are dismissed by exact interval reasoning where possible and
otherwise shipped to a pluggable SMT backend; returned assignments are
rationalized, confirmed exactly, and rebuilt into a Markov chain that is
re-verified against the original formula.
"""

from __future__ import annotations

import itertools
import os
import re
import shlex
import subprocess
import tempfile
from dataclasses import dataclass
from fractions import Fraction

from . import linalg
from .formula import (
    And, Atom, Cmp, NegAtom, Or, PathOp, Prob, StateFormula, conj, disj,
    is_core, iter_subformulas,
)
from .markov import MarkovChain
from .modelcheck import ModelChecker


class BackendError(RuntimeError):
    """The external solver failed to launch or violated the protocol."""


# ---------------------------------------------------------------------------
# F-normal form

def f_normal_form(f: StateFormula) -> StateFormula:
    """Eliminates G: P(G b) >= r becomes P(F !b) <= 1-r and P(G b) > r
    becomes P(F !b) < 1-r, with the negation pushed to atoms.  Core inputs
    never produce trivial constraints (the core form already excludes the
    bounds that would)."""
    if not is_core(f):
        raise ValueError("f_normal_form expects a core formula")
    return _fnf(f, positive=True)


def _fnf(f: StateFormula, positive: bool) -> StateFormula:
    if isinstance(f, Atom):
        return f if positive else NegAtom(f.name)
    if isinstance(f, NegAtom):
        return f if positive else Atom(f.name)
    if isinstance(f, And):
        make = conj if positive else disj
        return make(_fnf(a, positive) for a in f.args)
    if isinstance(f, Or):
        make = disj if positive else conj
        return make(_fnf(a, positive) for a in f.args)
    assert isinstance(f, Prob)
    cmp = f.cmp if positive else f.cmp.negated()
    if f.op is PathOp.F:
        body = _fnf(f.body, True)
    else:
        # complement duality turns a G bound into the mirrored F bound
        cmp = {Cmp.GE: Cmp.LE, Cmp.GT: Cmp.LT, Cmp.LE: Cmp.GE, Cmp.LT: Cmp.GT}[cmp]
        body = _fnf(f.body, False)
    bound = f.bound if f.op is PathOp.F else 1 - f.bound
    if (cmp, bound) in ((Cmp.GE, Fraction(0)), (Cmp.GT, Fraction(1)),
                        (Cmp.LE, Fraction(1)), (Cmp.LT, Fraction(0))):
        raise ValueError(f"trivial constraint produced from {f}")
    return Prob(PathOp.F, cmp, bound, body)


def _f_nodes(f: StateFormula) -> list[Prob]:
    """Distinct F-subformulas in bottom-up order: a node's body precedes it."""
    seen: list[Prob] = []

    def walk(g: StateFormula):
        if isinstance(g, (And, Or)):
            for a in g.args:
                walk(a)
        elif isinstance(g, Prob):
            walk(g.body)
            if g not in seen:
                seen.append(g)

    walk(f)
    return seen


def _atom_names(f: StateFormula) -> list[str]:
    names = {g.name for g in iter_subformulas(f) if isinstance(g, (Atom, NegAtom))}
    return sorted(names)


# ---------------------------------------------------------------------------
# Candidates

@dataclass(frozen=True)
class ETRCandidate:
    """A guessed digraph with per-subformula vertex labelings.

    Vertices are 0..size-1 (rendered as v1..v{size}); every vertex has
    out-degree at least one.  Boolean labelings are forced from the free
    atom and F-subformula sets; the whole-formula label set is nonempty.
    """

    size: int
    edges: tuple[tuple[int, int], ...]
    labeling: dict[StateFormula, frozenset[int]]
    formula: StateFormula

    def successors(self, v: int) -> list[int]:
        return [j for i, j in self.edges if i == v]

    def label(self, f: StateFormula) -> frozenset[int]:
        return self.labeling[f]

    def consistent(self) -> list[str]:
        """Boolean labeling rules; returns violations."""
        problems = []
        every = frozenset(range(self.size))
        for g in set(iter_subformulas(self.formula)):
            have = self.labeling[g]
            if isinstance(g, NegAtom):
                if have != every - self.labeling.get(Atom(g.name), frozenset()):
                    problems.append(f"labeling of !{g.name} is not the complement")
            elif isinstance(g, And):
                want = every
                for a in g.args:
                    want &= self.labeling[a]
                if have != want:
                    problems.append(f"labeling of {g} is not the intersection")
            elif isinstance(g, Or):
                want = frozenset()
                for a in g.args:
                    want |= self.labeling[a]
                if have != want:
                    problems.append(f"labeling of {g} is not the union")
        if not self.labeling[self.formula]:
            problems.append("whole-formula label set is empty")
        return problems


def _graphs(size: int):
    """All digraphs on `size` vertices with out-degree >= 1 everywhere, in
    canonical order (per-vertex successor bitmasks, last vertex fastest)."""
    masks = range(1, 1 << size)
    for choice in itertools.product(masks, repeat=size):
        edges = tuple((i, j) for i in range(size) for j in range(size)
                      if choice[i] >> j & 1)
        yield edges


def _propagate(f: StateFormula, free: dict[StateFormula, frozenset[int]],
               size: int) -> dict[StateFormula, frozenset[int]]:
    # the free atom choices stay part of the labeling even when only their
    # negation occurs in the formula; reconstruction reads them back
    labeling: dict[StateFormula, frozenset[int]] = {
        g: vs for g, vs in free.items() if isinstance(g, Atom)}
    every = frozenset(range(size))

    def visit(g: StateFormula) -> frozenset[int]:
        if g in labeling:
            return labeling[g]
        if isinstance(g, Atom):
            result = free[g]
        elif isinstance(g, NegAtom):
            result = every - free[Atom(g.name)]
        elif isinstance(g, And):
            result = every
            for a in g.args:
                result &= visit(a)
        elif isinstance(g, Or):
            result = frozenset()
            for a in g.args:
                result |= visit(a)
        else:
            for a in (g.body,):
                visit(a)
            result = free[g]
        labeling[g] = result
        return result

    visit(f)
    return labeling


def enumerate_candidates(f: StateFormula, bound: int):
    """Streams every candidate for models of up to `bound` states, in
    deterministic order: size ascending, then graphs canonically, then
    labelings lexicographically (atom sets before F-subformula sets, each a
    subset bitmask counting up).  Only candidates whose whole-formula label
    set is nonempty are emitted."""
    if bound < 1:
        raise ValueError("bound must be at least 1")
    yield from _candidate_stream(f, bound, prune=None)


def _candidate_stream(f: StateFormula, bound: int, prune):
    """Shared enumeration; `prune(size, edges, node, labeling)` may reject a
    partial labeling right after the F-node's set is chosen (used for
    refutation-in-advance).  Pruned subtrees are counted via the returned
    counter list."""
    atoms = [Atom(name) for name in _atom_names(f)]
    f_nodes = _f_nodes(f)
    choices = atoms + f_nodes

    for size in range(1, bound + 1):
        subsets = [frozenset(k for k in range(size) if mask >> k & 1)
                   for mask in range(1 << size)]
        for edges in _graphs(size):
            free: dict[StateFormula, frozenset[int]] = {}

            def assign(index: int):
                if index == len(choices):
                    labeling = _propagate(f, free, size)
                    if labeling[f]:
                        yield ETRCandidate(size, edges, labeling, f)
                    return
                node = choices[index]
                for subset in subsets:
                    free[node] = subset
                    if (prune is not None and isinstance(node, Prob)
                            and prune(size, edges, node, free)):
                        continue
                    yield from assign(index + 1)
                del free[node]

            yield from assign(0)


# ---------------------------------------------------------------------------
# Constraint systems

@dataclass(frozen=True)
class CorrectnessBlock:
    """The correctness constraints of one labeled F-subformula: given the
    body's label set, the reach variables are 1 on it, 0 on the vertices
    with no path to it, linear combinations elsewhere, and compared against
    the bound inside/outside the formula's label set."""

    formula: Prob
    body_set: frozenset[int]
    out_set: frozenset[int]
    other: tuple[int, ...]
    in_set: frozenset[int]


@dataclass(frozen=True)
class ETRSystem:
    """Existential constraints for one candidate: positive edge variables x
    that row-stochastically sum per vertex, plus one reach-variable block per
    F-subformula.  Constraint count is linear in |edges| + size * blocks."""

    size: int
    edges: tuple[tuple[int, int], ...]
    blocks: tuple[CorrectnessBlock, ...]

    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: i for i, e in enumerate(self.edges)}

    def constraint_count(self) -> int:
        return len(self.edges) + self.size + sum(
            len(b.body_set) + len(b.out_set) + len(b.other) + self.size
            for b in self.blocks)


def _out_set(size: int, edges, body_set: frozenset[int]) -> frozenset[int]:
    """Vertices with no path into `body_set`."""
    preds: dict[int, list[int]] = {v: [] for v in range(size)}
    for i, j in edges:
        preds[j].append(i)
    seen = set(body_set)
    frontier = list(body_set)
    while frontier:
        v = frontier.pop()
        for p in preds[v]:
            if p not in seen:
                seen.add(p)
                frontier.append(p)
    return frozenset(range(size)) - frozenset(seen)


def encode(candidate: ETRCandidate, f: StateFormula | None = None) -> ETRSystem:
    """Builds the constraint system of a candidate.  `f` defaults to the
    candidate's own formula and must equal it when given."""
    if f is not None and f != candidate.formula:
        raise ValueError("formula does not match the candidate")
    blocks = []
    for node in _f_nodes(candidate.formula):
        body_set = candidate.labeling[node.body]
        out_set = _out_set(candidate.size, candidate.edges, body_set)
        other = tuple(v for v in range(candidate.size)
                      if v not in body_set and v not in out_set)
        blocks.append(CorrectnessBlock(
            formula=node,
            body_set=body_set,
            out_set=out_set,
            other=other,
            in_set=candidate.labeling[node],
        ))
    return ETRSystem(candidate.size, candidate.edges, tuple(blocks))


def _block_interval_contradiction(size: int, block: CorrectnessBlock) -> bool:
    """Sound per-vertex refutation from the reach-variable ranges alone:
    1 on the body set, 0 on the cut-off set, strictly positive elsewhere."""
    cmp, r = block.formula.cmp, block.formula.bound
    for v in range(size):
        inside = v in block.in_set
        if v in block.body_set:
            value = Fraction(1)
        elif v in block.out_set:
            value = Fraction(0)
        else:
            # reach probability is in (0, 1]: the constraint is impossible
            # only when it demands the value be at most zero
            if inside and (cmp in (Cmp.LE, Cmp.LT) and r == 0):
                return True
            if not inside and cmp is Cmp.GT and r == 0:
                return True  # negation of "> 0" forces the value to 0
            continue
        satisfied = cmp.holds(value, r)
        if satisfied != inside:
            return True
    return False


def interval_refuted(system: ETRSystem) -> bool:
    return any(_block_interval_contradiction(system.size, block)
               for block in system.blocks)


def solve_block_values(system: ETRSystem, block: CorrectnessBlock,
                       assignment: dict[tuple[int, int], Fraction],
                       ) -> dict[int, Fraction]:
    """The unique reach values of one block under fixed edge probabilities:
    1 on the body set, 0 on the cut-off set, and the solution of the linear
    system elsewhere (nonsingular because every remaining vertex reaches the
    body set through positive-probability edges)."""
    values: dict[int, Fraction] = {}
    for v in block.body_set:
        values[v] = Fraction(1)
    for v in block.out_set:
        values[v] = Fraction(0)
    if block.other:
        pos = {v: i for i, v in enumerate(block.other)}
        n = len(block.other)
        a = [[Fraction(0)] * n for _ in range(n)]
        b = [Fraction(0)] * n
        for v in block.other:
            a[pos[v]][pos[v]] = Fraction(1)
            for i, j in (e for e in system.edges if e[0] == v):
                p = Fraction(assignment[(i, j)])
                if j in pos:
                    a[pos[v]][pos[j]] -= p
                else:
                    b[pos[v]] += p * values[j]
        solution = linalg.solve_vector(a, b)
        for v, value in zip(block.other, solution):
            values[v] = value
    return values


def check_assignment(system: ETRSystem, assignment: dict[tuple[int, int], Fraction],
                     ) -> bool:
    """Exact substitution oracle: solves each block's reach variables for
    the given edge probabilities and evaluates every comparison.  Raises on
    assignments violating the range or row-sum constraints."""
    for edge in system.edges:
        if edge not in assignment:
            raise ValueError(f"no probability for edge {edge}")
        p = Fraction(assignment[edge])
        if not 0 < p <= 1:
            raise ValueError(f"edge probability {p} outside (0,1]")
    for v in range(system.size):
        total = sum((Fraction(assignment[e]) for e in system.edges if e[0] == v),
                    Fraction(0))
        if total != 1:
            raise ValueError(f"outgoing probabilities of v{v + 1} sum to {total}")

    for block in system.blocks:
        values = solve_block_values(system, block, assignment)
        cmp, r = block.formula.cmp, block.formula.bound
        for v in range(system.size):
            if cmp.holds(values[v], r) != (v in block.in_set):
                return False
    return True


# ---------------------------------------------------------------------------
# SMT-LIB emission and the backend bridge

def _smt_rational(q: Fraction) -> str:
    if q.denominator == 1:
        return str(q.numerator) if q >= 0 else f"(- {-q.numerator})"
    text = f"(/ {abs(q.numerator)} {q.denominator})"
    return text if q >= 0 else f"(- {text})"


def _edge_var(index: int) -> str:
    return f"x{index + 1}"


def smt_text(system: ETRSystem) -> str:
    """The candidate's constraints in SMT-LIB 2 text, logic QF_NRA, with a
    model request for the edge variables."""
    idx = system.edge_index()
    lines = ["(set-logic QF_NRA)"]
    for i in range(len(system.edges)):
        lines.append(f"(declare-const {_edge_var(i)} Real)")
    y_names: list[list[str]] = []
    for b, block in enumerate(system.blocks):
        names = [f"y{b + 1}_{v + 1}" for v in range(system.size)]
        y_names.append(names)
        for name in names:
            lines.append(f"(declare-const {name} Real)")
    for i in range(len(system.edges)):
        lines.append(f"(assert (and (> {_edge_var(i)} 0) (<= {_edge_var(i)} 1)))")
    for v in range(system.size):
        outgoing = [_edge_var(idx[e]) for e in system.edges if e[0] == v]
        lines.append(f"(assert (= (+ {' '.join(outgoing)}) 1))")
    cmp_text = {Cmp.GE: ">=", Cmp.GT: ">", Cmp.LE: "<=", Cmp.LT: "<"}
    neg_text = {Cmp.GE: "<", Cmp.GT: "<=", Cmp.LE: ">", Cmp.LT: ">="}
    for b, block in enumerate(system.blocks):
        names = y_names[b]
        for v in block.body_set:
            lines.append(f"(assert (= {names[v]} 1))")
        for v in block.out_set:
            lines.append(f"(assert (= {names[v]} 0))")
        for v in block.other:
            terms = [f"(* {_edge_var(idx[(i, j)])} {names[j]})"
                     for (i, j) in system.edges if i == v]
            summed = terms[0] if len(terms) == 1 else f"(+ {' '.join(terms)})"
            lines.append(f"(assert (= {names[v]} {summed}))")
        r = _smt_rational(block.formula.bound)
        for v in range(system.size):
            op = cmp_text[block.formula.cmp] if v in block.in_set \
                else neg_text[block.formula.cmp]
            lines.append(f"(assert ({op} {names[v]} {r}))")
    lines.append("(check-sat)")
    if system.edges:
        lines.append(f"(get-value ({' '.join(_edge_var(i) for i in range(len(system.edges)))}))")
    return "\n".join(lines) + "\n"


_TOKEN_RE = re.compile(r"\(|\)|[^\s()]+")
_NAME_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_]*")


def _parse_sexprs(text: str):
    tokens = _TOKEN_RE.findall(text)
    pos = 0

    def parse():
        nonlocal pos
        if pos >= len(tokens):
            raise BackendError("unexpected end of solver output")
        tok = tokens[pos]
        pos += 1
        if tok == "(":
            items = []
            while pos < len(tokens) and tokens[pos] != ")":
                items.append(parse())
            if pos >= len(tokens):
                raise BackendError("unbalanced parenthesis in solver output")
            pos += 1
            return items
        return tok

    out = []
    while pos < len(tokens):
        out.append(parse())
    return out


def _rationalize(expr) -> Fraction:
    """Turns a solver value term into an exact rational.  Decimal literals
    go through continued-fraction rationalization with a tight cap; the
    caller must confirm the result exactly before trusting it."""
    if isinstance(expr, str):
        try:
            return Fraction(expr)
        except ValueError:
            pass
        try:
            return Fraction(str(float(expr))).limit_denominator(10 ** 12)
        except (ValueError, OverflowError) as exc:
            raise BackendError(f"cannot rationalize solver value {expr!r}") from exc
    if isinstance(expr, list) and expr:
        if expr[0] == "-" and len(expr) == 2:
            return -_rationalize(expr[1])
        if expr[0] == "/" and len(expr) == 3:
            return _rationalize(expr[1]) / _rationalize(expr[2])
    raise BackendError(f"cannot rationalize solver value {expr!r}")


@dataclass
class SolverBackend:
    """External decision procedure invoked as a subprocess.

    `command` is a template whose `{file}` placeholder receives the SMT file
    path.  The first output token must be sat/unsat/unknown; model values
    are read from the standard get-value response."""

    command: str
    timeout: float = 10.0

    def solve(self, text: str, keep_path: str | None = None,
              ) -> tuple[str, dict[str, Fraction]]:
        if keep_path is not None:
            path = keep_path
            with open(path, "w") as handle:
                handle.write(text)
            cleanup = False
        else:
            fd, path = tempfile.mkstemp(suffix=".smt2")
            with os.fdopen(fd, "w") as handle:
                handle.write(text)
            cleanup = True
        try:
            argv = [part.replace("{file}", path)
                    for part in shlex.split(self.command)]
            try:
                proc = subprocess.run(
                    argv, capture_output=True, text=True, timeout=self.timeout)
            except FileNotFoundError as exc:
                raise BackendError(f"cannot launch solver: {exc}") from exc
            except subprocess.TimeoutExpired:
                return "timeout", {}
            output = proc.stdout.strip()
            if not output:
                raise BackendError(
                    f"solver produced no output (stderr: {proc.stderr.strip()!r})")
            first = output.split(None, 1)[0].strip()
            if first not in ("sat", "unsat", "unknown"):
                raise BackendError(f"unexpected solver verdict {first!r}")
            if first != "sat":
                return first, {}
            rest = output[len(first):]
            values: dict[str, Fraction] = {}

            def collect(node):
                if not isinstance(node, list):
                    return
                if (len(node) == 2 and isinstance(node[0], str)
                        and _NAME_RE.fullmatch(node[0])):
                    try:
                        values[node[0]] = _rationalize(node[1])
                        return
                    except BackendError:
                        pass
                for item in node:
                    collect(item)

            for group in _parse_sexprs(rest):
                collect(group)
            return "sat", values
        finally:
            if cleanup:
                os.unlink(path)


# ---------------------------------------------------------------------------
# The bounded satisfiability procedure

@dataclass
class SatSearchResult:
    status: str  # "sat" | "unsat-up-to-n" | "unknown"
    model: MarkovChain | None = None
    entry: str | None = None
    candidates: int = 0
    refuted: int = 0
    solver_calls: int = 0
    timeouts: int = 0


def candidate_from_chain(chain: MarkovChain, f: StateFormula) -> ETRCandidate:
    """The candidate a concrete chain induces for an F-normal formula: its
    graph plus the true satisfaction sets as labeling."""
    mc = ModelChecker(chain)
    pos = {s: i for i, s in enumerate(chain.states)}
    edges = tuple(sorted((pos[src], pos[dst]) for src, dst, _ in chain.edges()))
    labeling = {g: frozenset(pos[s] for s in mc.sat_set(g))
                for g in set(iter_subformulas(f))}
    return ETRCandidate(len(chain.states), edges, labeling, f)


def chain_from_candidate(candidate: ETRCandidate,
                         assignment: dict[tuple[int, int], Fraction],
                         ) -> tuple[MarkovChain, str]:
    """Rebuilds a Markov chain from a candidate and its edge probabilities;
    the entry is the smallest vertex labeled with the whole formula."""
    names = [f"v{i + 1}" for i in range(candidate.size)]
    valuation = {name: set() for name in names}
    for g, vertices in candidate.labeling.items():
        if isinstance(g, Atom):
            for v in vertices:
                valuation[names[v]].add(g.name)
    edges = {(names[i], names[j]): Fraction(p)
             for (i, j), p in assignment.items()}
    chain = MarkovChain(names, edges, valuation)
    entry = names[min(candidate.labeling[candidate.formula])]
    return chain, entry


def solve_bounded_sat(f: StateFormula, bound: int, *,
                      backend: SolverBackend | None = None,
                      dump_dir: str | None = None,
                      emit_only: bool = False) -> SatSearchResult:
    """Searches for a model of the core formula `f` with at most `bound`
    states.

    Every candidate is first screened by exact interval reasoning (whole
    labeling subtrees are skipped when a block is already contradictory).
    Surviving candidates are decided by the backend, if any; a sat answer is
    rationalized, confirmed by `check_assignment`, rebuilt into a chain, and
    re-verified against the original formula before being returned.  The
    result is unsat-up-to-n only when every candidate was refuted; unknown
    when undecided candidates remain.
    """
    if bound < 1:
        raise ValueError("bound must be at least 1")
    normal = f_normal_form(f)
    result = SatSearchResult(status="unsat-up-to-n")
    if dump_dir is not None:
        os.makedirs(dump_dir, exist_ok=True)

    def prune(size: int, edges, node: Prob, free) -> bool:
        labeling = _propagate(node, free, size)
        body_set = labeling[node.body]
        out_set = _out_set(size, edges, body_set)
        block = CorrectnessBlock(
            formula=node, body_set=body_set, out_set=out_set,
            other=tuple(v for v in range(size)
                        if v not in body_set and v not in out_set),
            in_set=free[node])
        if _block_interval_contradiction(size, block):
            result.refuted += 1
            return True
        return False

    undecided = False
    for candidate in _candidate_stream(normal, bound, prune=prune):
        result.candidates += 1
        system = encode(candidate)
        if interval_refuted(system):
            result.refuted += 1
            continue
        if dump_dir is not None:
            path = os.path.join(dump_dir, f"candidate-{result.candidates:06d}.smt2")
            with open(path, "w") as handle:
                handle.write(smt_text(system))
        if emit_only or backend is None:
            undecided = True
            continue
        result.solver_calls += 1
        verdict, values = backend.solve(smt_text(system))
        if verdict == "timeout":
            result.timeouts += 1
            undecided = True
            continue
        if verdict == "unknown":
            undecided = True
            continue
        if verdict == "unsat":
            continue
        index = system.edge_index()
        try:
            assignment = {e: values[_edge_var(i)] for e, i in index.items()}
        except KeyError as exc:
            raise BackendError(f"solver model is missing {exc}") from exc
        try:
            confirmed = check_assignment(system, assignment)
        except ValueError:
            confirmed = False  # the rationalized values are not even a chain
        if not confirmed:
            undecided = True  # exact confirmation failed
            continue
        chain, entry = chain_from_candidate(candidate, assignment)
        if not ModelChecker(chain).holds(entry, f):
            raise RuntimeError(
                "internal error: reconstructed model fails re-verification")
        result.status = "sat"
        result.model = chain
        result.entry = entry
        return result
    if undecided:
        result.status = "unknown"
    return result
