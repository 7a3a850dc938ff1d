"""Formula AST, concrete syntax, normalization, and fragment grammars.

The toolkit works with a probabilistic branching-time logic whose only path
operators are F ("eventually") and G ("always").  Core formulas keep negation
on atoms, carry exact rational probability bounds, and use n-ary
conjunction/disjunction so that `x & y & z` is one node with three children.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from typing import Iterator, Union


class PctlSyntaxError(ValueError):
    """Raised on malformed formula text, with 1-based source position."""

    def __init__(self, message: str, line: int, column: int):
        super().__init__(f"{message} (line {line}, column {column})")
        self.line = line
        self.column = column


class NormalizationError(ValueError):
    """Raised when normalization would produce a trivial probability bound."""


class PathOp(Enum):
    F = "F"
    G = "G"

    def __str__(self) -> str:
        return self.value


class Cmp(Enum):
    GE = ">="
    GT = ">"
    LE = "<="
    LT = "<"

    def __str__(self) -> str:
        return self.value

    def holds(self, value: Fraction, bound: Fraction) -> bool:
        if self is Cmp.GE:
            return value >= bound
        if self is Cmp.GT:
            return value > bound
        if self is Cmp.LE:
            return value <= bound
        return value < bound

    def negated(self) -> "Cmp":
        return {Cmp.GE: Cmp.LT, Cmp.GT: Cmp.LE, Cmp.LE: Cmp.GT, Cmp.LT: Cmp.GE}[self]


CORE_CMPS = (Cmp.GE, Cmp.GT)


@dataclass(frozen=True)
class Atom:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class NegAtom:
    name: str

    def __str__(self) -> str:
        return "!" + self.name


@dataclass(frozen=True)
class And:
    args: tuple["StateFormula", ...]

    def __str__(self) -> str:
        return " & ".join(_wrap(a, in_and=True) for a in self.args)


@dataclass(frozen=True)
class Or:
    args: tuple["StateFormula", ...]

    def __str__(self) -> str:
        return " | ".join(str(a) for a in self.args)


@dataclass(frozen=True)
class Prob:
    op: PathOp
    cmp: Cmp
    bound: Fraction
    body: "StateFormula"

    def __str__(self) -> str:
        if self.cmp is Cmp.GE and self.bound == 1:
            constraint = "=1"
        else:
            constraint = f"{self.cmp}{self.bound}"
        return f"{self.op}{constraint}[{self.body}]"

    @property
    def path_formula(self) -> "PathFormula":
        return PathFormula(self.op, self.body)


StateFormula = Union[Atom, NegAtom, And, Or, Prob]


@dataclass(frozen=True)
class PathFormula:
    """A bare F/G path formula, i.e. a probabilistic operator with the bound
    stripped.  Two Prob nodes that differ only in their constraint share one
    PathFormula."""

    op: PathOp
    body: StateFormula

    def __str__(self) -> str:
        return f"{self.op} {self.body}"


def _wrap(f: StateFormula, in_and: bool = False) -> str:
    # '&' binds tighter than '|', so a disjunction inside a conjunction
    # needs parentheses; everything else prints bare.
    if in_and and isinstance(f, Or):
        return f"({f})"
    return str(f)


# ---------------------------------------------------------------------------
# Construction helpers

def conj(args) -> StateFormula:
    """N-ary conjunction: flattens nested conjunctions, drops duplicates."""
    return _merge(And, args)


def disj(args) -> StateFormula:
    """N-ary disjunction: flattens nested disjunctions, drops duplicates."""
    return _merge(Or, args)


def _merge(node_type, args) -> StateFormula:
    flat: list[StateFormula] = []
    for a in args:
        parts = a.args if isinstance(a, node_type) else (a,)
        for p in parts:
            if p not in flat:
                flat.append(p)
    if not flat:
        raise ValueError("empty connective")
    if len(flat) == 1:
        return flat[0]
    return node_type(tuple(flat))


def prob(op: PathOp, cmp: Cmp, bound: Fraction, body: StateFormula) -> Prob:
    """Probabilistic operator node; rejects out-of-range and trivial bounds."""
    bound = Fraction(bound)
    if not 0 <= bound <= 1:
        raise ValueError(f"probability bound {bound} outside [0,1]")
    if (cmp, bound) in ((Cmp.GE, Fraction(0)), (Cmp.GT, Fraction(1)),
                        (Cmp.LE, Fraction(1)), (Cmp.LT, Fraction(0))):
        raise ValueError(f"trivial probability constraint '{cmp}{bound}'")
    return Prob(op, cmp, bound, body)


def f_ge(bound, body) -> Prob:
    return prob(PathOp.F, Cmp.GE, Fraction(bound), body)


def g_ge(bound, body) -> Prob:
    return prob(PathOp.G, Cmp.GE, Fraction(bound), body)


def is_core(f: StateFormula) -> bool:
    """Core form: negation on atoms only and comparisons from {>=, >}."""
    if isinstance(f, (Atom, NegAtom)):
        return True
    if isinstance(f, (And, Or)):
        return all(is_core(a) for a in f.args)
    return f.cmp in CORE_CMPS and is_core(f.body)


# ---------------------------------------------------------------------------
# Subformula machinery

def iter_subformulas(f: StateFormula) -> Iterator[StateFormula]:
    """Yields every state subformula of f, including f itself (with repeats)."""
    stack = [f]
    while stack:
        g = stack.pop()
        yield g
        if isinstance(g, (And, Or)):
            stack.extend(g.args)
        elif isinstance(g, Prob):
            stack.append(g.body)


def subformulas(f: StateFormula) -> frozenset[StateFormula]:
    return frozenset(iter_subformulas(f))


def immediate_path_subformulas(f: StateFormula) -> frozenset[PathFormula]:
    """Path formulas of the maximal probabilistic nodes of f: descent stops at
    the first Prob node on every branch."""
    found: set[PathFormula] = set()
    stack = [f]
    while stack:
        g = stack.pop()
        if isinstance(g, Prob):
            found.add(g.path_formula)
        elif isinstance(g, (And, Or)):
            stack.extend(g.args)
    return frozenset(found)


@dataclass(frozen=True)
class FormulaSets:
    """The four derived sets of a formula set X.

    sub:  all state subformulas of all members.
    psub: path formulas P with some P-constrained formula in sub.
    nsub: members of sub that are not probabilistic operators.
    p:    path formulas of the probabilistic members of X itself.
    """

    sub: frozenset[StateFormula]
    psub: frozenset[PathFormula]
    nsub: frozenset[StateFormula]
    p: frozenset[PathFormula]


def formula_sets(X) -> FormulaSets:
    sub: set[StateFormula] = set()
    for f in X:
        sub.update(iter_subformulas(f))
    psub = frozenset(g.path_formula for g in sub if isinstance(g, Prob))
    nsub = frozenset(g for g in sub if not isinstance(g, Prob))
    p = frozenset(f.path_formula for f in X if isinstance(f, Prob))
    return FormulaSets(frozenset(sub), psub, nsub, p)


# ---------------------------------------------------------------------------
# Canonical ordering (deterministic set printing and tie-breaking)

_TAG_RANK = {Atom: 0, NegAtom: 1, And: 2, Or: 3, Prob: 4}
_OP_RANK = {PathOp.F: 0, PathOp.G: 1}
_CMP_RANK = {Cmp.GE: 0, Cmp.GT: 1, Cmp.LE: 2, Cmp.LT: 3}


def sort_key(f: StateFormula):
    rank = _TAG_RANK[type(f)]
    if isinstance(f, (Atom, NegAtom)):
        return (rank, f.name)
    if isinstance(f, (And, Or)):
        return (rank, len(f.args)) + tuple(sort_key(a) for a in f.args)
    return (rank, _OP_RANK[f.op], _CMP_RANK[f.cmp], f.bound, sort_key(f.body))


def path_sort_key(p: PathFormula):
    return (_OP_RANK[p.op], sort_key(p.body))


def sorted_formulas(X) -> list[StateFormula]:
    return sorted(X, key=sort_key)


# ---------------------------------------------------------------------------
# Surface syntax
#
#   phi  := disj
#   disj := conj { "|" conj }
#   conj := unit { "&" unit }
#   unit := ident | "!" unit | "(" phi ")"
#         | ("F"|"G") cmp num "[" phi "]"
#   cmp  := ">=" | ">" | "<=" | "<" | "="
#   num  := decimal | integer "/" integer
#
# "=" is allowed only as "=1".  Whitespace is insignificant.

@dataclass(frozen=True)
class SAtom:
    name: str
    pos: tuple[int, int]


@dataclass(frozen=True)
class SNot:
    arg: "SurfaceFormula"
    pos: tuple[int, int]


@dataclass(frozen=True)
class SAnd:
    args: tuple["SurfaceFormula", ...]
    pos: tuple[int, int]


@dataclass(frozen=True)
class SOr:
    args: tuple["SurfaceFormula", ...]
    pos: tuple[int, int]


@dataclass(frozen=True)
class SProb:
    op: PathOp
    cmp: Cmp
    bound: Fraction
    body: "SurfaceFormula"
    pos: tuple[int, int]


SurfaceFormula = Union[SAtom, SNot, SAnd, SOr, SProb]

_SYMBOLS = (">=", "<=", ">", "<", "=", "!", "&", "|", "(", ")", "[", "]", "/")


class _Token:
    __slots__ = ("kind", "text", "line", "col")

    def __init__(self, kind: str, text: str, line: int, col: int):
        self.kind = kind
        self.text = text
        self.line = line
        self.col = col


def _tokenize(text: str) -> list[_Token]:
    tokens = []
    line, col = 1, 1
    i = 0
    while i < len(text):
        ch = text[i]
        if ch == "\n":
            line += 1
            col = 1
            i += 1
            continue
        if ch.isspace():
            col += 1
            i += 1
            continue
        matched = False
        for sym in _SYMBOLS:
            if text.startswith(sym, i):
                tokens.append(_Token("sym", sym, line, col))
                i += len(sym)
                col += len(sym)
                matched = True
                break
        if matched:
            continue
        if ch.isdigit():
            j = i
            while j < len(text) and (text[j].isdigit() or text[j] == "."):
                j += 1
            tokens.append(_Token("num", text[i:j], line, col))
            col += j - i
            i = j
            continue
        if ch.isalpha() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            tokens.append(_Token("name", text[i:j], line, col))
            col += j - i
            i = j
            continue
        raise PctlSyntaxError(f"unexpected character {ch!r}", line, col)
    tokens.append(_Token("eof", "", line, col))
    return tokens


_CMP_TEXT = {">=": Cmp.GE, ">": Cmp.GT, "<=": Cmp.LE, "<": Cmp.LT}


class _Parser:
    def __init__(self, text: str):
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self) -> _Token:
        return self.tokens[self.i]

    def next(self) -> _Token:
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, message: str, tok: _Token | None = None):
        tok = tok or self.peek()
        raise PctlSyntaxError(message, tok.line, tok.col)

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            self.error(f"expected {text!r}, found {tok.text!r}", tok)
        return tok

    def parse(self) -> SurfaceFormula:
        f = self.disj()
        if self.peek().kind != "eof":
            self.error(f"unexpected trailing input {self.peek().text!r}")
        return f

    def disj(self) -> SurfaceFormula:
        first = self.conj()
        args = [first]
        while self.peek().text == "|":
            self.next()
            args.append(self.conj())
        if len(args) == 1:
            return first
        return SOr(tuple(args), args[0].pos)

    def conj(self) -> SurfaceFormula:
        first = self.unit()
        args = [first]
        while self.peek().text == "&":
            self.next()
            args.append(self.unit())
        if len(args) == 1:
            return first
        return SAnd(tuple(args), args[0].pos)

    def unit(self) -> SurfaceFormula:
        tok = self.peek()
        if tok.text == "!":
            self.next()
            return SNot(self.unit(), (tok.line, tok.col))
        if tok.text == "(":
            self.next()
            f = self.disj()
            self.expect(")")
            return f
        if tok.kind == "name":
            if tok.text in ("F", "G") and self.tokens[self.i + 1].text in (">=", ">", "<=", "<", "="):
                return self.prob_unit()
            self.next()
            return SAtom(tok.text, (tok.line, tok.col))
        self.error(f"expected a formula, found {tok.text!r}")

    def prob_unit(self) -> SurfaceFormula:
        op_tok = self.next()
        op = PathOp.F if op_tok.text == "F" else PathOp.G
        cmp_tok = self.next()
        bound = self.number()
        if cmp_tok.text == "=":
            if bound != 1:
                self.error("'=' is allowed only as '=1'", cmp_tok)
            cmp = Cmp.GE
        else:
            cmp = _CMP_TEXT[cmp_tok.text]
        if not 0 <= bound <= 1:
            self.error(f"probability bound {bound} outside [0,1]", cmp_tok)
        self.expect("[")
        body = self.disj()
        self.expect("]")
        return SProb(op, cmp, bound, body, (op_tok.line, op_tok.col))

    def number(self) -> Fraction:
        tok = self.next()
        if tok.kind != "num":
            self.error(f"expected a number, found {tok.text!r}", tok)
        try:
            value = Fraction(tok.text)
        except (ValueError, ZeroDivisionError):
            self.error(f"malformed rational {tok.text!r}", tok)
        if self.peek().text == "/":
            if "." in tok.text:
                self.error("fraction numerator must be an integer", tok)
            self.next()
            den_tok = self.next()
            if den_tok.kind != "num" or "." in den_tok.text:
                self.error("fraction denominator must be an integer", den_tok)
            if int(den_tok.text) == 0:
                self.error("zero denominator", den_tok)
            value = Fraction(int(tok.text), int(den_tok.text))
        return value


def parse(text: str) -> SurfaceFormula:
    """Parses surface syntax into a position-carrying surface AST.

    The surface language permits negation on arbitrary subformulas and all
    four comparisons on F/G; `normalize` turns the result into core form.
    """
    return _Parser(text).parse()


def parse_formula(text: str) -> StateFormula:
    """Convenience: parse then normalize."""
    return normalize(parse(text))


# ---------------------------------------------------------------------------
# Normalization into core form

def normalize(f: SurfaceFormula | StateFormula) -> StateFormula:
    """Pushes negations to atoms and eliminates <=, < via the F/G dualities.

    P(F b) <= r  iff  P(G !b) >= 1-r        P(G b) <= r  iff  P(F !b) >= 1-r
    P(F b) <  r  iff  P(G !b) >  1-r        P(G b) <  r  iff  P(F !b) >  1-r

    Rejects results that would carry a trivial bound ('>=0' or '>1').
    """
    return _norm(f, positive=True)


_DUAL_OP = {PathOp.F: PathOp.G, PathOp.G: PathOp.F}


def _norm(f, positive: bool) -> StateFormula:
    if isinstance(f, (SAtom, Atom)):
        return Atom(f.name) if positive else NegAtom(f.name)
    if isinstance(f, NegAtom):
        return NegAtom(f.name) if positive else Atom(f.name)
    if isinstance(f, SNot):
        return _norm(f.arg, not positive)
    if isinstance(f, (SAnd, And)):
        make = conj if positive else disj
        return make(_norm(a, positive) for a in f.args)
    if isinstance(f, (SOr, Or)):
        make = disj if positive else conj
        return make(_norm(a, positive) for a in f.args)
    if isinstance(f, (SProb, Prob)):
        op, cmp, bound = f.op, f.cmp, f.bound
        if not positive:
            cmp = cmp.negated()
        if cmp in (Cmp.LE, Cmp.LT):
            op = _DUAL_OP[op]
            cmp = Cmp.GE if cmp is Cmp.LE else Cmp.GT
            bound = 1 - bound
            body = _norm(f.body, False)
        else:
            body = _norm(f.body, True)
        if (cmp is Cmp.GE and bound == 0) or (cmp is Cmp.GT and bound == 1):
            raise NormalizationError(
                f"normalizing produced the trivial constraint "
                f"'{op}{cmp}{bound}' in {f}; such bounds are forbidden")
        return Prob(op, cmp, bound, body)
    raise TypeError(f"not a formula: {f!r}")


# ---------------------------------------------------------------------------
# Fragment grammars
#
# Four syntactic families, each defining a fragment that is additionally
# closed under state subformulas and under replacing a probability constraint
# with '>= r' for an arbitrary non-trivial r.  The helper predicates below
# match the raw grammars; membership adds the bound-relaxation on G nodes
# (relaxing F bounds never enlarges the languages, every family already
# allows an arbitrary constraint on top-level F).

@dataclass(frozen=True)
class FragmentMembership:
    in_l1: bool
    in_l2: bool
    in_l3: bool
    in_l4: bool

    def __getitem__(self, name: str) -> bool:
        return getattr(self, "in_" + name.lower())


def _is_eq1(f: Prob) -> bool:
    return f.cmp is Cmp.GE and f.bound == 1


def _is_w(f: Prob) -> bool:
    # "an arbitrary constraint except for '=1'"
    return not _is_eq1(f)


def fragment_classify(f: StateFormula) -> FragmentMembership:
    if not is_core(f):
        raise ValueError("fragment classification expects a core formula")
    memo: dict[tuple[str, StateFormula], bool] = {}

    def match(kind: str, g: StateFormula) -> bool:
        key = (kind, g)
        if key not in memo:
            memo[key] = _match(kind, g)
        return memo[key]

    def _match(kind: str, g: StateFormula) -> bool:
        if isinstance(g, (Atom, NegAtom)):
            return kind != "rho3"
        if isinstance(g, (And, Or)):
            return all(match(kind, a) for a in g.args)
        assert isinstance(g, Prob)
        body = g.body
        if kind == "phi1":
            if g.op is PathOp.F:
                return match("phi1", body)
            return match("psi1", body)
        if kind == "psi1":
            return g.op is PathOp.G and match("psi1", body)
        if kind == "phi2":
            if g.op is PathOp.F:
                return match("phi2", body)
            return _is_eq1(g) and match("psi2", body)
        if kind == "psi2":
            return g.op is PathOp.F and _is_w(g) and match("psi2", body)
        if kind == "phi3":
            if g.op is PathOp.F:
                return match("phi3", body)
            return _is_eq1(g) and (match("psi3", body) or match("rho3", body))
        if kind == "psi3":
            return g.op is PathOp.F and _is_w(g) and match("psi3", body)
        if kind == "rho3":
            if g.op is PathOp.F:
                return _is_w(g) and match("psi3", body)
            return _is_eq1(g) and (match("psi3", body) or match("rho3", body))
        if kind == "phi4":
            if g.op is PathOp.F:
                return match("phi4", body)
            return _is_eq1(g) and match("psi4", body)
        assert kind == "psi4"
        if isinstance(g, Prob) and g.op is PathOp.F:
            return g.cmp is Cmp.GT and g.bound == 0 and match("psi4", body)
        return g.op is PathOp.G and _is_eq1(g) and match("psi4", body)

    def member(phi_kind: str, g_bodies: tuple[str, ...]) -> bool:
        if match(phi_kind, f):
            return True
        # closure under '>= r' bound variants: a G node whose body fits one
        # of the grammar's G-body shapes is in the fragment for any bound
        if isinstance(f, Prob) and f.op is PathOp.G and f.cmp is Cmp.GE:
            return any(match(kind, f.body) for kind in g_bodies)
        return False

    return FragmentMembership(
        in_l1=member("phi1", ("psi1",)),
        in_l2=member("phi2", ("psi2",)),
        in_l3=member("phi3", ("psi3", "rho3")),
        in_l4=member("phi4", ("psi4",)),
    )
