"""Instance generators, the layered gap family, the 3SAT reduction, and file I/O."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .core import SignedGraph, metric_closure, parse_q
from .errors import ContractError, ParseError, UnsupportedError
from .relaxation import FractionalSolution, true_value, y_from_x


# -- random instances ----------------------------------------------------------

def gen_random(n: int, p_plus: float, p_edge: float, seed=None, weight_range=None) -> SignedGraph:
    """Each pair is an edge with prob ``p_edge``, positive with prob ``p_plus``.

    Unit weights unless ``weight_range=(lo, hi)`` is given (uniform weights).
    """
    for p in (p_plus, p_edge):
        if not 0.0 <= p <= 1.0:
            raise ContractError("probabilities must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    pos, neg = [], []
    for i in range(n):
        for j in range(i + 1, n):
            present = rng.random() < p_edge
            positive = rng.random() < p_plus
            w = 1.0 if weight_range is None else float(rng.uniform(*weight_range))
            if present:
                (pos if positive else neg).append((i, j, w))
    return SignedGraph(n, pos, neg)


def gen_bipartite(n_left: int, n_right: int, p_plus: float, seed=None) -> SignedGraph:
    """Complete bipartite unit-weight instance; L = ``0..n_left-1``."""
    if not 0.0 <= p_plus <= 1.0:
        raise ContractError("p_plus must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    pos, neg = [], []
    for i in range(n_left):
        for j in range(n_left, n_left + n_right):
            (pos if rng.random() < p_plus else neg).append((i, j, 1.0))
    n = n_left + n_right
    return SignedGraph(n, pos, neg, bipartition=(range(n_left), range(n_left, n)))


def gen_planted(sizes, flip: float = 0.0, seed=None) -> SignedGraph:
    """Complete instance from planted clusters with each sign flipped w.p. ``flip``."""
    rng = np.random.default_rng(seed)
    labels = np.repeat(np.arange(len(sizes)), sizes)
    n = labels.size
    pos, neg = [], []
    for i in range(n):
        for j in range(i + 1, n):
            positive = (labels[i] == labels[j]) != (rng.random() < flip)
            (pos if positive else neg).append((i, j))
    return SignedGraph(n, pos, neg)


# -- layered gap family ----------------------------------------------------------

@dataclass(frozen=True)
class GapParams:
    a: int
    b: int

    def __post_init__(self):
        if int(self.a) < 1 or int(self.b) < 1:
            raise ContractError("gap parameters a, b must be >= 1")

    @property
    def n(self) -> int:
        return 2 * self.a * self.b + self.b + 1

    @property
    def num_edges(self) -> int:
        return self.b * self.a ** 2 + 2 * self.a * self.b

    def terminal(self, i: int) -> int:
        """Vertex id of s_i (s_0 = s, s_b = t)."""
        return 0 if i == 0 else i * (2 * self.a + 1)

    def left(self, i: int) -> range:
        base = 1 + (i - 1) * (2 * self.a + 1)
        return range(base, base + self.a)

    def right(self, i: int) -> range:
        base = 1 + (i - 1) * (2 * self.a + 1) + self.a
        return range(base, base + self.a)


def _gap_params(a, b=None) -> GapParams:
    return a if isinstance(a, GapParams) else GapParams(int(a), int(b))


def gen_gap(a, b=None) -> SignedGraph:
    """b layers of K_{a,a} chained through terminals s_0, ..., s_b (all edges positive)."""
    p = _gap_params(a, b)
    edges = []
    for i in range(1, p.b + 1):
        L, R = p.left(i), p.right(i)
        edges += [(u, v) for u in L for v in R]
        edges += [(p.terminal(i - 1), u) for u in L]
        edges += [(p.terminal(i), v) for v in R]
    return SignedGraph(p.n, edges, terminals=(p.terminal(0), p.terminal(p.b)))


def gap_lp_formula(a, b=None, q=2) -> float:
    """``(ab (1/b)^q + b (a/b)^q)^(1/q)``: cost of the spread-out fractional cut."""
    p = _gap_params(a, b)
    q = parse_q(q)
    if math.isinf(q):
        raise UnsupportedError("the gap construction is stated for finite q")
    return (p.a * p.b * (1.0 / p.b) ** q + p.b * (p.a / p.b) ** q) ** (1.0 / q)


def gap_fractional(a, b=None, q=2) -> tuple[FractionalSolution, float]:
    """Fractional s-t cut of the gap graph: length 1/b on every (s_i, R_i) edge.

    ``x`` is the shortest-path metric of those lengths. Returns the solution
    (whose ``value`` is measured from y) and the closed-form value.
    """
    p = _gap_params(a, b)
    q = parse_q(q)
    formula = gap_lp_formula(p, q=q)
    g = gen_gap(p)
    lengths = np.full((p.n, p.n), np.inf)
    for u, v, _ in g.pos_edges:
        lengths[u, v] = lengths[v, u] = 0.0
    for i in range(1, p.b + 1):
        s = p.terminal(i)
        for v in p.right(i):
            lengths[s, v] = lengths[v, s] = 1.0 / p.b
    x = np.minimum(metric_closure(lengths), 1.0)
    y = y_from_x(g, x)
    sol = FractionalSolution(x=x, y=y, z=None, value=true_value(y, None, q, False),
                             lower_bound=0.0, q=q)
    return sol, formula


# -- 3SAT reduction --------------------------------------------------------------

@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple

    def __post_init__(self):
        clauses = tuple(tuple(int(l) for l in c) for c in self.clauses)
        if self.num_vars < 1 or not clauses:
            raise ContractError("formula needs at least one variable and one clause")
        for c in clauses:
            if not 1 <= len(c) <= 3:
                raise ContractError(f"clause {c} must have 1 to 3 literals")
            for lit in c:
                if lit == 0 or abs(lit) > self.num_vars:
                    raise ContractError(f"literal {lit} out of range")
        object.__setattr__(self, "clauses", clauses)

    @property
    def m(self) -> int:
        return len(self.clauses)

    def padded(self) -> tuple:
        """Clauses widened to three literals by cycling their own literals."""
        return tuple(tuple(c[k % len(c)] for k in range(3)) for c in self.clauses)

    def evaluate(self, assignment) -> bool:
        """``assignment[i-1]`` is the truth value of variable i."""
        return all(any(assignment[abs(l) - 1] == (l > 0) for l in c) for c in self.clauses)


def parse_dimacs(text: str) -> CnfFormula:
    num_vars = None
    clauses, current = [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) != 4 or parts[1] != "cnf":
                raise ParseError("expected 'p cnf <vars> <clauses>'", lineno)
            num_vars = int(parts[2])
            continue
        if num_vars is None:
            raise ParseError("clause before 'p cnf' header", lineno)
        try:
            lits = [int(tok) for tok in line.split()]
        except ValueError as exc:
            raise ParseError(str(exc), lineno) from None
        for lit in lits:
            if lit == 0:
                if current:
                    clauses.append(tuple(current))
                current = []
            else:
                current.append(lit)
    if current:
        clauses.append(tuple(current))
    if num_vars is None:
        raise ParseError("missing 'p cnf' header")
    return CnfFormula(num_vars, tuple(clauses))


def write_dimacs(f: CnfFormula) -> str:
    lines = [f"p cnf {f.num_vars} {f.m}"]
    lines += [" ".join(str(l) for l in c) + " 0" for c in f.clauses]
    return "\n".join(lines) + "\n"


TRUE, FALSE = 0, 1


def _var_nodes(i: int) -> tuple[int, int, int, int]:
    """(x_T, x_F, x_dag, xbar_dag) for variable i (1-based)."""
    base = 2 + 4 * (i - 1)
    return base, base + 1, base + 2, base + 3


def reduce_3sat(f: CnfFormula) -> SignedGraph:
    """The True/False cut graph of a CNF formula.

    Vertex layout: 0 = True, 1 = False, then four nodes per variable
    (x_T, x_F, x_dag, xbar_dag), then five per clause (y1, y2, y3, C_a, C_b).
    """
    if not isinstance(f, CnfFormula):
        raise ContractError("reduce_3sat expects a CnfFormula")
    n, m = f.num_vars, f.m
    total = 2 + 4 * n + 5 * m
    edges = []
    for i in range(1, n + 1):
        xt, xf, xd, xbd = _var_nodes(i)
        edges += [(TRUE, xt, math.inf), (FALSE, xf, math.inf)]
        edges += [(xt, xd, 1.0), (xt, xbd, 1.0), (xf, xd, 1.0), (xf, xbd, 1.0)]
    for j, clause in enumerate(f.padded()):
        y1, y2, y3, ca, cb = range(2 + 4 * n + 5 * j, 2 + 4 * n + 5 * j + 5)
        edges += [(y2, cb, 1.0), (y3, cb, 1.0), (y1, ca, 1.0), (cb, ca, 1.0)]
        for node, lit in zip((y1, y2, y3), clause):
            _, _, xd, xbd = _var_nodes(abs(lit))
            edges.append((node, xd if lit > 0 else xbd, 1.0))
        edges.append((ca, TRUE, math.inf))
    return SignedGraph(total, edges, terminals=(TRUE, FALSE))


def reduction_vertex_names(f: CnfFormula) -> list[str]:
    names = ["True", "False"]
    for i in range(1, f.num_vars + 1):
        names += [f"x{i}^T", f"x{i}^F", f"x{i}^dag", f"~x{i}^dag"]
    for j in range(f.m):
        names += [f"C{j}.y1", f"C{j}.y2", f"C{j}.y3", f"C{j}.a", f"C{j}.b"]
    return names


# -- graph files -----------------------------------------------------------------

def format_graph(g: SignedGraph) -> str:
    header = f"n {g.n}"
    if g.bipartition is not None:
        left = g.bipartition[0]
        if left != frozenset(range(len(left))):
            raise ContractError("file format requires L to be the first |L| vertices")
        header += f" bipartite {len(left)}"
    if g.terminals is not None:
        header += f" terminals {g.terminals[0]} {g.terminals[1]}"
    lines = [header]
    for u, v, w, s in g.edges():
        weight = "inf" if (u, v) in g.infinite else format(w, ".17g")
        lines.append(f"{u} {v} {'+' if s > 0 else '-'} {weight}")
    return "\n".join(lines) + "\n"


def parse_graph(text: str) -> SignedGraph:
    n = None
    left = None
    terminals = None
    pos, neg = [], []
    seen = set()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if n is None:
            if parts[0] != "n" or len(parts) < 2:
                raise ParseError("expected header 'n <count> ...'", lineno)
            try:
                n = int(parts[1])
                rest = parts[2:]
                while rest:
                    if rest[0] == "bipartite" and len(rest) >= 2:
                        left = int(rest[1])
                        rest = rest[2:]
                    elif rest[0] == "terminals" and len(rest) >= 3:
                        terminals = (int(rest[1]), int(rest[2]))
                        rest = rest[3:]
                    else:
                        raise ParseError(f"unexpected header token {rest[0]!r}", lineno)
            except ValueError:
                raise ParseError("malformed header", lineno) from None
            continue
        if len(parts) != 4 or parts[2] not in ("+", "-"):
            raise ParseError("expected '<u> <v> <+|-> <weight|inf>'", lineno)
        try:
            u, v = int(parts[0]), int(parts[1])
            w = math.inf if parts[3] == "inf" else float(parts[3])
        except ValueError:
            raise ParseError("non-numeric field", lineno) from None
        if u == v:
            raise ParseError(f"self-loop at vertex {u}", lineno)
        if not (0 <= u < n and 0 <= v < n):
            raise ParseError(f"vertex out of range 0..{n - 1}", lineno)
        key = (min(u, v), max(u, v))
        if key in seen:
            raise ParseError(f"duplicate pair {key}", lineno)
        if math.isnan(w) or w < 0 or (math.isinf(w) and parts[3] != "inf"):
            raise ParseError(f"invalid weight {parts[3]!r}", lineno)
        seen.add(key)
        (pos if parts[2] == "+" else neg).append((u, v, w))
    if n is None:
        raise ParseError("empty graph file")
    bip = None if left is None else (range(left), range(left, n))
    try:
        return SignedGraph(n, pos, neg, bipartition=bip, terminals=terminals)
    except ContractError as exc:
        raise ParseError(str(exc)) from None


def write_graph(g: SignedGraph, path) -> None:
    Path(path).write_text(format_graph(g))


def read_graph(path) -> SignedGraph:
    return parse_graph(Path(path).read_text())
