"""Finite Markov chains with exact rational transitions.

State ids are strings.  Transition probabilities are Fractions; a missing
edge means probability zero, and an explicit zero edge is a representation
error (reported by `validate`).  This keeps graph reachability identical to
positive-probability reachability, which downstream modules rely on.

JSON model format (rationals are strings, bit-exact):

    {"states": [{"id": "s", "ap": []}, {"id": "t", "ap": ["a"]}],
     "edges":  [{"from": "s", "to": "t", "p": "1"},
                {"from": "t", "to": "s", "p": "3/5"}]}
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

from . import linalg


class InvalidChainError(ValueError):
    pass


class FirstPassageError(ValueError):
    """Reach-with-probability-one precondition failed; carries a certificate:
    a bottom SCC, disjoint from the target set, reachable from the source."""

    def __init__(self, message: str, certificate: frozenset[str]):
        super().__init__(message)
        self.certificate = certificate


def parse_probability(text) -> Fraction:
    try:
        value = Fraction(str(text))
    except (ValueError, ZeroDivisionError) as exc:
        raise InvalidChainError(f"malformed rational {text!r}") from exc
    return value


class MarkovChain:
    """Immutable-by-convention finite Markov chain."""

    def __init__(self, states, edges, valuation):
        """states: iterable of ids (order preserved);
        edges: {(src, dst): Fraction};
        valuation: {state: iterable of atomic propositions}."""
        self.states: tuple[str, ...] = tuple(states)
        if len(set(self.states)) != len(self.states):
            raise InvalidChainError("duplicate state ids")
        self.valuation: dict[str, frozenset[str]] = {
            s: frozenset(valuation.get(s, ())) for s in self.states
        }
        self._succ: dict[str, dict[str, Fraction]] = {s: {} for s in self.states}
        for (src, dst), p in edges.items():
            if src not in self._succ:
                raise InvalidChainError(f"edge from unknown state {src!r}")
            if dst not in self._succ:
                raise InvalidChainError(f"edge to unknown state {dst!r}")
            if dst in self._succ[src]:
                raise InvalidChainError(f"duplicate edge {src!r} -> {dst!r}")
            self._succ[src][dst] = Fraction(p)

    def successors(self, s: str) -> dict[str, Fraction]:
        return self._succ[s]

    def probability(self, src: str, dst: str) -> Fraction:
        return self._succ[src].get(dst, Fraction(0))

    def edges(self):
        for src in self.states:
            for dst, p in self._succ[src].items():
                yield src, dst, p

    def atoms(self, s: str) -> frozenset[str]:
        return self.valuation[s]

    def __contains__(self, s: str) -> bool:
        return s in self._succ

    def __repr__(self) -> str:
        return f"MarkovChain({len(self.states)} states)"

    # -- serialization ------------------------------------------------------

    @classmethod
    def from_dict(cls, data) -> "MarkovChain":
        try:
            state_records = data["states"]
            edge_records = data["edges"]
        except (TypeError, KeyError) as exc:
            raise InvalidChainError("model must have 'states' and 'edges'") from exc
        states = []
        valuation = {}
        for rec in state_records:
            states.append(str(rec["id"]))
            valuation[str(rec["id"])] = [str(a) for a in rec.get("ap", [])]
        edges = {}
        for rec in edge_records:
            key = (str(rec["from"]), str(rec["to"]))
            if key in edges:
                raise InvalidChainError(f"duplicate edge {key[0]!r} -> {key[1]!r}")
            edges[key] = parse_probability(rec["p"])
        return cls(states, edges, valuation)

    @classmethod
    def from_json(cls, text: str) -> "MarkovChain":
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise InvalidChainError(f"invalid JSON: {exc}") from exc
        return cls.from_dict(data)

    def to_dict(self) -> dict:
        return {
            "states": [
                {"id": s, "ap": sorted(self.valuation[s])} for s in self.states
            ],
            "edges": [
                {"from": src, "to": dst, "p": str(p)} for src, dst, p in self.edges()
            ],
        }

    def to_json(self, indent: int | None = 2) -> str:
        return json.dumps(self.to_dict(), indent=indent)

    def to_dot(self) -> str:
        lines = ["digraph chain {"]
        for s in self.states:
            label = s
            if self.valuation[s]:
                label += r"\n{" + ",".join(sorted(self.valuation[s])) + "}"
            lines.append(f'  "{s}" [label="{label}"];')
        for src, dst, p in self.edges():
            lines.append(f'  "{src}" -> "{dst}" [label="{p}"];')
        lines.append("}")
        return "\n".join(lines)


def validate(chain: MarkovChain) -> list[str]:
    """Checks the chain invariants; returns diagnostics (empty means ok)."""
    problems = []
    for s in chain.states:
        succ = chain.successors(s)
        for dst, p in succ.items():
            if p == 0:
                problems.append(
                    f"state {s!r}: zero-probability edge to {dst!r} "
                    "(zero edges must be absent, not explicit)")
            elif not 0 < p <= 1:
                problems.append(f"state {s!r}: probability {p} to {dst!r} outside (0,1]")
        total = sum(succ.values(), Fraction(0))
        if total != 1:
            problems.append(f"state {s!r}: outgoing probabilities sum to {total}, not 1")
    return problems


def assert_valid(chain: MarkovChain) -> None:
    problems = validate(chain)
    if problems:
        raise InvalidChainError("; ".join(problems))


# ---------------------------------------------------------------------------
# Graph structure

@dataclass(frozen=True)
class SccDecomposition:
    """SCCs in reverse topological order (successors before predecessors)."""

    components: tuple[frozenset[str], ...]
    is_bottom: tuple[bool, ...]

    def component_index(self) -> dict[str, int]:
        return {s: i for i, comp in enumerate(self.components) for s in comp}

    def component_of(self, s: str) -> frozenset[str]:
        for comp in self.components:
            if s in comp:
                return comp
        raise KeyError(s)

    def bottom_states(self) -> frozenset[str]:
        out: set[str] = set()
        for comp, bottom in zip(self.components, self.is_bottom):
            if bottom:
                out.update(comp)
        return frozenset(out)


def scc_decompose(chain: MarkovChain) -> SccDecomposition:
    """Tarjan's algorithm, iterative.  Emits components in reverse
    topological order of the condensation and flags the bottom ones."""
    index: dict[str, int] = {}
    lowlink: dict[str, int] = {}
    on_stack: set[str] = set()
    stack: list[str] = []
    components: list[frozenset[str]] = []
    counter = 0

    for root in chain.states:
        if root in index:
            continue
        work = [(root, iter(chain.successors(root)))]
        index[root] = lowlink[root] = counter
        counter += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            v, it = work[-1]
            advanced = False
            for w in it:
                if w not in index:
                    index[w] = lowlink[w] = counter
                    counter += 1
                    stack.append(w)
                    on_stack.add(w)
                    work.append((w, iter(chain.successors(w))))
                    advanced = True
                    break
                if w in on_stack:
                    lowlink[v] = min(lowlink[v], index[w])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[v])
            if lowlink[v] == index[v]:
                comp = set()
                while True:
                    w = stack.pop()
                    on_stack.discard(w)
                    comp.add(w)
                    if w == v:
                        break
                components.append(frozenset(comp))

    bottoms = tuple(
        all(dst in comp for s in comp for dst in chain.successors(s))
        for comp in components
    )
    return SccDecomposition(tuple(components), bottoms)


def reachable_from(chain: MarkovChain, start: str) -> frozenset[str]:
    """States reachable from `start` along positive-probability edges,
    including `start` itself."""
    seen = {start}
    frontier = [start]
    while frontier:
        s = frontier.pop()
        for dst in chain.successors(s):
            if dst not in seen:
                seen.add(dst)
                frontier.append(dst)
    return frozenset(seen)


def states_with_path_to(chain: MarkovChain, targets) -> frozenset[str]:
    """States that have some path into `targets` (targets included)."""
    preds: dict[str, list[str]] = {s: [] for s in chain.states}
    for src, dst, _ in chain.edges():
        preds[dst].append(src)
    seen = set(targets)
    frontier = list(targets)
    while frontier:
        s = frontier.pop()
        for p in preds[s]:
            if p not in seen:
                seen.add(p)
                frontier.append(p)
    return frozenset(seen)


# ---------------------------------------------------------------------------
# First-passage distribution

def first_passage(chain: MarkovChain, source: str, targets) -> dict[str, Fraction]:
    """Distribution of the first visited target state, over runs from
    `source` that reach `targets` before visiting any other target.

    Requires that `targets` is hit with probability one from `source`;
    otherwise raises FirstPassageError carrying a reachable bottom SCC
    disjoint from the targets as a certificate.  The returned values sum
    to exactly 1 (all targets appear, unreached ones with 0).
    """
    targets = frozenset(targets)
    if source not in chain:
        raise KeyError(source)
    if not targets:
        raise ValueError("empty target set")
    result = {t: Fraction(0) for t in targets}
    if source in targets:
        result[source] = Fraction(1)
        return result

    # Region explorable from the source without crossing a target.
    region = set()
    frontier = [source]
    seen = {source}
    while frontier:
        s = frontier.pop()
        region.add(s)
        for dst in chain.successors(s):
            if dst in targets or dst in seen:
                continue
            seen.add(dst)
            frontier.append(dst)

    # Certificate check: a bottom SCC inside the region can never reach the
    # targets, so the reach probability would be below one.
    decomposition = scc_decompose(chain)
    for comp, bottom in zip(decomposition.components, decomposition.is_bottom):
        if bottom and comp <= region:
            raise FirstPassageError(
                f"targets not reached almost surely from {source!r}: "
                f"bottom SCC {{{', '.join(sorted(comp))}}} is reachable and "
                "disjoint from the targets",
                certificate=comp,
            )

    order = sorted(region)
    pos = {s: i for i, s in enumerate(order)}
    tlist = sorted(targets)
    n = len(order)
    a = [[Fraction(0)] * n for _ in range(n)]
    rhs = [[Fraction(0)] * len(tlist) for _ in range(n)]
    for i, s in enumerate(order):
        a[i][i] = Fraction(1)
        for dst, p in chain.successors(s).items():
            if dst in pos:
                a[i][pos[dst]] -= p
            elif dst in targets:
                rhs[i][tlist.index(dst)] += p
    hit = linalg.solve(a, rhs)
    row = hit[pos[source]]
    for j, t in enumerate(tlist):
        result[t] = row[j]
    assert sum(result.values()) == 1
    return result
