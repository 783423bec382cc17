"""Metric relaxation of min l_q disagreements, linearised and solved as an LP.

The power objective ``sum_u y_u^q`` is replaced by epigraph variables ``t_u``
bounded below by tangent lines of ``y -> y^q``. Tangents under-estimate a
convex function, so the LP optimum is a certified lower bound on the integral
optimum; the returned ``value`` is the exact objective at the LP point.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
from scipy.optimize import linprog

from .core import (ALL, INF, L_SIDE, Clustering, SignedGraph, lq_norm, metric_closure, objective,
                   parse_q)
from .errors import ContractError, SolverError, UnsupportedError
from .simplex import linprog_dense

FEAS_TOL = 1e-7
EAGER_TRIANGLE_LIMIT = 40
# cap on cutting-plane rounds (lazy triangles and tangent refinement)
MAX_ROUNDS = 200
# triangle-row count above which HiGHS runs its interior-point method
IPM_ROWS = 2000
# absolute slack on sum(y^q - t), the LP's objective resolution
LAG_FLOOR = 1e-9
# lowest tangent point as a fraction of the vertex's incident weight
_BREAKPOINT_FLOOR = 2.0 ** -8


@dataclass(frozen=True)
class SolverConfig:
    breakpoints: int = 16
    tol: float = 1e-6
    use_z: bool = False
    lazy_triangles: bool = False
    backend: str = "highs"
    max_iter: int = 100_000
    refine: bool = True
    scope: str = ALL

    def __post_init__(self):
        if int(self.breakpoints) < 2:
            raise ContractError("breakpoints must be >= 2")
        if not self.tol > 0:
            raise ContractError("tol must be positive")
        if self.backend not in ("highs", "simplex"):
            raise ContractError(f"unknown backend {self.backend!r}")
        if self.scope not in (ALL, L_SIDE):
            raise ContractError(f"unknown scope {self.scope!r}")


@dataclass(frozen=True, eq=False)
class FractionalSolution:
    """A feasible point ``(x, y, z)`` of the relaxation.

    ``branches`` holds ``{"y": ||y||_q^q, "z": sum z}`` in the full program so
    that ties between the two branches of the max stay visible.
    """

    x: np.ndarray
    y: np.ndarray
    z: np.ndarray | None
    value: float
    lower_bound: float
    q: float = 1.0
    branches: dict = field(default_factory=dict)
    scope: str = ALL

    @property
    def n(self) -> int:
        return self.x.shape[0]

    def to_json(self) -> str:
        iu = np.triu_indices(self.n, 1)
        doc = {
            "schema": 1,
            "n": self.n,
            "q": _num(self.q),
            "value": _num(self.value),
            "lower_bound": _num(self.lower_bound),
            "x": [float(v) for v in self.x[iu]],
            "y": [float(v) for v in self.y],
            "z": None if self.z is None else [float(v) for v in self.z],
        }
        if self.scope != ALL:
            doc["scope"] = self.scope
        if self.branches:
            doc["branches"] = {k: _num(v) for k, v in self.branches.items()}
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "FractionalSolution":
        doc = json.loads(text)
        n = int(doc["n"])
        x = np.zeros((n, n))
        iu = np.triu_indices(n, 1)
        x[iu] = doc["x"]
        x = x + x.T
        z = None if doc.get("z") is None else np.asarray(doc["z"], dtype=float)
        return cls(
            x=x,
            y=np.asarray(doc["y"], dtype=float),
            z=z,
            value=float(doc["value"]),
            lower_bound=float(doc["lower_bound"]),
            q=parse_q(doc["q"]),
            branches=dict(doc.get("branches", {})),
            scope=doc.get("scope", ALL),
        )


def _num(v):
    # JSON has no infinity literal
    return "inf" if isinstance(v, float) and math.isinf(v) else v


# -- (P1)/(P2) expressions -------------------------------------------------

def y_from_x(g: SignedGraph, x: np.ndarray, power: float = 1.0) -> np.ndarray:
    """Per-vertex LP disagreement ``sum w^power * (x or 1-x)``.

    ``power=1`` gives y, ``power=q`` gives z. Uncuttable edges are excluded.
    """
    u, v, w, sign, inf = g.edge_arrays
    out = np.zeros(g.n)
    if u.size == 0:
        return out
    d = x[u, v]
    cost = np.where(sign > 0, d, 1.0 - d) * w ** power
    cost = np.where(inf, 0.0, cost)
    np.add.at(out, u, cost)
    np.add.at(out, v, cost)
    return out


def true_value(y, z, q, use_z: bool) -> float:
    if math.isinf(q):
        return float(np.max(y)) if y.size else 0.0
    norm = lq_norm(y, q)
    if use_z and z is not None:
        return max(norm ** q, float(np.sum(z))) ** (1.0 / q)
    return norm


def tangent_points(weight: float, k: int) -> np.ndarray:
    """Geometric breakpoints on ``[weight * 2^-8, weight]``.

    Doubling-minus-one (k -> 2k-1) yields a superset of breakpoints.
    """
    if weight <= 0:
        return np.zeros(0)
    return weight * _BREAKPOINT_FLOOR ** (1.0 - np.arange(k) / (k - 1))


def linearized_power(y: np.ndarray, points, q: float) -> np.ndarray:
    """Pointwise tangent under-estimate ``max(0, max_p tangent_p(y))`` of ``y^q``.

    ``points[i]`` are the tangent points used for coordinate i.
    """
    out = np.zeros(len(y))
    for i, (yi, pts) in enumerate(zip(y, points)):
        pts = np.asarray(pts, dtype=float)
        if pts.size:
            out[i] = max(0.0, float(np.max(q * pts ** (q - 1) * yi - (q - 1) * pts ** q)))
    return out


# -- program construction ----------------------------------------------------

def _pair_index(n):
    idx = -np.ones((n, n), dtype=np.intp)
    iu, ju = np.triu_indices(n, 1)
    idx[iu, ju] = np.arange(iu.size)
    idx[ju, iu] = idx[iu, ju]
    return idx, iu, ju


def _triangle_rows(n, pidx, triples=None):
    """Sparse rows encoding ``x_ac - x_ab - x_bc <= 0`` for oriented triples.

    ``triples`` is an ``(m, 3)`` array of ``(a, b, c)`` with b the middle point;
    by default every unordered triple contributes its three orientations.
    """
    if triples is None:
        if n < 3:
            return sp.csr_matrix((0, n * (n - 1) // 2)), np.zeros((0, 3), dtype=np.intp)
        a, b, c = np.array(list(_combinations3(n))).T
        triples = np.concatenate([
            np.stack([a, b, c], 1),  # x_ac <= x_ab + x_bc
            np.stack([a, c, b], 1),  # x_ab <= x_ac + x_cb
            np.stack([b, a, c], 1),  # x_bc <= x_ba + x_ac
        ])
    m = triples.shape[0]
    a, b, c = triples.T
    rows = np.repeat(np.arange(m), 3)
    cols = np.stack([pidx[a, c], pidx[a, b], pidx[b, c]], 1).ravel()
    vals = np.tile([1.0, -1.0, -1.0], m)
    mat = sp.csr_matrix((vals, (rows, cols)), shape=(m, n * (n - 1) // 2))
    return mat, triples


def _combinations3(n):
    for a in range(n):
        for b in range(a + 1, n):
            for c in range(b + 1, n):
                yield a, b, c


class ConvexProgramHandle:
    """Linearised relaxation of a signed graph, ready to hand to an LP solver.

    Variable layout: ``x`` (one per unordered pair), ``y`` (n), ``z`` (n, full
    mode only), ``t`` (n epigraph variables for finite q > 1, or a single max
    variable for q = inf), and ``s`` (the max of the two branches, full mode).
    """

    def __init__(self, g: SignedGraph, q, cfg: SolverConfig | None = None):
        cfg = cfg or SolverConfig()
        q = parse_q(q)
        if cfg.use_z and math.isinf(q):
            raise UnsupportedError("the z-branch relaxation requires finite q")
        self.g, self.q, self.cfg = g, q, cfg
        n = g.n
        self.n = n
        self.pidx, self.iu, self.ju = _pair_index(n)
        self.num_x_vars = n * (n - 1) // 2
        self.num_y_vars = n
        self.lazy = cfg.lazy_triangles or n > EAGER_TRIANGLE_LIMIT
        if cfg.scope == L_SIDE:
            if g.bipartition is None:
                raise ContractError("one-sided objective needs a bipartition")
            self.scope_idx = np.array(sorted(g.bipartition[0]), dtype=np.intp)
        else:
            self.scope_idx = np.arange(n)

        off = self.num_x_vars
        self.y_off = off
        off += n
        self.z_off = None
        if cfg.use_z:
            self.z_off = off
            off += n
        if math.isinf(q):
            self.t_off, self.num_t = off, 1
        elif q == 1:
            self.t_off, self.num_t = None, 0
        else:
            self.t_off, self.num_t = off, n
        off += self.num_t
        self.s_off = None
        if cfg.use_z:
            self.s_off = off
            off += 1
        self.num_vars = off
        self.weights = g.incident_weight()
        self._build()

    # rows ---------------------------------------------------------------
    def _build(self):
        g, n, q, nx = self.g, self.n, self.q, self.num_x_vars
        nv = self.num_vars
        u, v, w, sign, inf = g.edge_arrays

        # (P1) y_u - sum_pos w x + sum_neg w x = sum_neg w ; (P2) likewise with w^q
        eq_rows, eq_cols, eq_vals, b_eq = [], [], [], []

        def lp_rows(offset, power):
            base = len(b_eq)
            rhs = np.zeros(n)
            for a, bb, ww, s, hard in zip(u, v, w, sign, inf):
                if hard:
                    continue
                coef = ww ** power
                col = self.pidx[a, bb]
                for end in (a, bb):
                    eq_rows.append(base + end)
                    eq_cols.append(col)
                    eq_vals.append(-coef if s > 0 else coef)
                    if s < 0:
                        rhs[end] += coef
            for i in range(n):
                eq_rows.append(base + i)
                eq_cols.append(offset + i)
                eq_vals.append(1.0)
            b_eq.extend(rhs)

        lp_rows(self.y_off, 1.0)
        if self.z_off is not None:
            lp_rows(self.z_off, q)
        self.A_eq = sp.csr_matrix((eq_vals, (eq_rows, eq_cols)), shape=(len(b_eq), nv))
        self.b_eq = np.asarray(b_eq, dtype=float)

        # epigraph / objective rows
        ub_rows, ub_cols, ub_vals, b_ub = [], [], [], []

        def add_row(entries, rhs):
            r = len(b_ub)
            for col, val in entries:
                ub_rows.append(r)
                ub_cols.append(col)
                ub_vals.append(val)
            b_ub.append(rhs)

        c = np.zeros(nv)
        scope = self.scope_idx
        if math.isinf(q):
            for i in scope:
                add_row([(self.y_off + i, 1.0), (self.t_off, -1.0)], 0.0)
            obj_cols = [self.t_off]
        elif q == 1:
            obj_cols = list(self.y_off + scope)
        else:
            k = self.cfg.breakpoints
            # out-of-scope vertices get no cuts; their t stays at 0 and costs nothing
            self.points = [[] for _ in range(n)]
            for i in scope:
                self.points[i] = list(tangent_points(self.weights[i], k))
                for p in self.points[i]:
                    add_row(*self._tangent_row(i, p))
            obj_cols = list(self.t_off + scope)
        if self.s_off is not None:
            add_row([(col, 1.0) for col in obj_cols] + [(self.s_off, -1.0)], 0.0)
            add_row([(self.z_off + i, 1.0) for i in scope] + [(self.s_off, -1.0)], 0.0)
            c[self.s_off] = 1.0
        else:
            c[obj_cols] = 1.0
        self.c = c
        self.A_obj = sp.csr_matrix((ub_vals, (ub_rows, ub_cols)), shape=(len(b_ub), nv))
        self.b_obj = np.asarray(b_ub, dtype=float)

        # bounds: x in [0,1]; uncuttable positive pairs pinned at 0, negative at 1
        lo = np.zeros(nv)
        hi = np.full(nv, np.inf)
        hi[:nx] = 1.0
        for a, bb, s, hard in zip(u, v, sign, inf):
            if hard:
                col = self.pidx[a, bb]
                if s > 0:
                    hi[col] = 0.0
                else:
                    lo[col] = 1.0
        if g.terminals is not None:
            s_, t_ = sorted(g.terminals)
            lo[self.pidx[s_, t_]] = 1.0
        self.lo, self.hi = lo, hi

        if self.lazy:
            self.triangles = np.zeros((0, 3), dtype=np.intp)
            self.A_tri = sp.csr_matrix((0, nx))
        else:
            self.A_tri, self.triangles = _triangle_rows(n, self.pidx)

    def _tangent_row(self, i, p):
        # t_i >= q p^(q-1) y_i - (q-1) p^q
        q = self.q
        return [(self.y_off + i, q * p ** (q - 1)), (self.t_off + i, -1.0)], (q - 1) * p ** q

    def add_tangents(self, pairs):
        """Add tangent cuts at ``(vertex, point)`` pairs; cuts stay valid lower bounds."""
        rows, cols, vals, rhs = [], [], [], []
        for r, (i, p) in enumerate(pairs):
            entries, b = self._tangent_row(i, p)
            for col, val in entries:
                rows.append(r)
                cols.append(col)
                vals.append(val)
            rhs.append(b)
            self.points[i].append(p)
        extra = sp.csr_matrix((vals, (rows, cols)), shape=(len(rhs), self.num_vars))
        self.A_obj = sp.vstack([self.A_obj, extra]).tocsr()
        self.b_obj = np.concatenate([self.b_obj, rhs])

    @property
    def num_triangle_constraints(self) -> int:
        return self.triangles.shape[0]

    def add_triangles(self, triples: np.ndarray):
        mat, triples = _triangle_rows(self.n, self.pidx, triples)
        self.A_tri = sp.vstack([self.A_tri, mat]).tocsr()
        self.triangles = np.concatenate([self.triangles, triples])

    def A_ub(self):
        tri = sp.hstack([self.A_tri, sp.csr_matrix((self.A_tri.shape[0], self.num_vars - self.num_x_vars))])
        return sp.vstack([tri, self.A_obj]).tocsr()

    def b_ub(self):
        return np.concatenate([np.zeros(self.A_tri.shape[0]), self.b_obj])

    def x_matrix(self, vec: np.ndarray) -> np.ndarray:
        x = np.zeros((self.n, self.n))
        x[self.iu, self.ju] = vec[: self.num_x_vars]
        return x + x.T

    def linearized_objective(self, x: np.ndarray) -> float:
        """Objective of the linearised program at the feasible point ``x``.

        Never exceeds the true objective at ``x`` (raised to the q-th power).
        """
        idx = self.scope_idx
        y = y_from_x(self.g, x)
        q = self.q
        if math.isinf(q):
            return float(np.max(y[idx])) if idx.size else 0.0
        if q == 1:
            lin = float(np.sum(y[idx]))
        else:
            lin = float(np.sum(linearized_power(y, self.points, q)[idx]))
        if self.z_off is not None:
            lin = max(lin, float(np.sum(y_from_x(self.g, x, q)[idx])))
        return lin

    # solving ------------------------------------------------------------
    def _method(self) -> str:
        # interior point (with crossover to a vertex) wins once the triangle rows pile up
        return "highs-ipm" if self.A_tri.shape[0] > IPM_ROWS else "highs-ds"

    def _solve_lp(self):
        A_ub, b_ub = self.A_ub(), self.b_ub()
        if self.cfg.backend == "highs":
            res = linprog(
                self.c, A_ub=A_ub, b_ub=b_ub, A_eq=self.A_eq, b_eq=self.b_eq,
                bounds=np.column_stack([self.lo, self.hi]), method=self._method(),
                options={"primal_feasibility_tolerance": 1e-10,
                         "dual_feasibility_tolerance": min(self.cfg.tol, 1e-7)},
            )
            if res.status != 0:
                raise SolverError(f"HiGHS failed: {res.message}", best=getattr(res, "x", None))
            return np.asarray(res.x), float(res.fun)
        # the dense simplex takes 0 <= x <= upper; shift lower bounds out
        shift = self.lo
        A_eq = self.A_eq.toarray()
        A_ub_d = A_ub.toarray()
        res = linprog_dense(
            self.c, A_ub_d, b_ub - A_ub_d @ shift, A_eq, self.b_eq - A_eq @ shift,
            upper=self.hi - shift, max_iter=self.cfg.max_iter, tol=min(self.cfg.tol, 1e-9),
        )
        vec = res.x + shift
        return vec, float(self.c @ vec)

    def _loose_tangents(self, vec) -> list:
        """Vertices whose epigraph value lags ``y^q`` by more than ``tol``, with cut points.

        The gap is measured relative to ``sum y^q``; refining there shrinks
        ``value - lower_bound`` to the configured tolerance.
        """
        if not self.cfg.refine or self.num_t != self.n or self.scope_idx.size == 0:
            return []
        q = self.q
        idx = self.scope_idx
        y = np.maximum(vec[self.y_off + idx], 0.0)
        t = vec[self.t_off + idx]
        lag = y ** q - t
        total = float(np.sum(y ** q))
        slack = self.cfg.tol * total + LAG_FLOOR
        if float(np.sum(np.maximum(lag, 0.0))) <= slack:
            return []
        cut = slack / idx.size
        return [(int(idx[k]), float(y[k])) for k in np.flatnonzero((lag > cut) & (y > 0))]

    def solve(self) -> FractionalSolution:
        for rounds in range(MAX_ROUNDS):
            vec, lp_value = self._solve_lp()
            viol = violated_triangles(self.x_matrix(vec), FEAS_TOL) if self.lazy else np.zeros((0, 3))
            # tangent refinement may stop at the cap: every round's bound is valid
            loose = self._loose_tangents(vec) if rounds < MAX_ROUNDS - 1 else []
            if viol.shape[0] == 0 and not loose:
                break
            if viol.shape[0]:
                self.add_triangles(viol)
            if loose:
                self.add_tangents(loose)
        else:
            raise SolverError("cutting-plane rounds did not converge", best=vec)
        return self._finish(vec, lp_value)

    def _finish(self, vec, lp_value) -> FractionalSolution:
        g, q = self.g, self.q
        x = np.clip(self.x_matrix(vec), 0.0, 1.0)
        # snap to an exact metric; moves entries by at most solver tolerance
        x = metric_closure(x)
        np.fill_diagonal(x, 0.0)
        u, v, _, sign, inf = g.edge_arrays
        hard_neg = inf & (sign < 0)
        x[u[hard_neg], v[hard_neg]] = x[v[hard_neg], u[hard_neg]] = 1.0
        y = y_from_x(g, x)
        z = y_from_x(g, x, q) if self.cfg.use_z else None
        idx = self.scope_idx
        value = true_value(y[idx], None if z is None else z[idx], q, self.cfg.use_z)
        lp_value = max(lp_value, 0.0)
        lower = lp_value if (q == 1 or math.isinf(q)) else lp_value ** (1.0 / q)
        branches = {}
        if self.cfg.use_z:
            branches = {"y": float(np.sum(y[idx] ** q)), "z": float(np.sum(z[idx]))}
        return FractionalSolution(x=x, y=y, z=z, value=value, lower_bound=lower, q=q,
                                  branches=branches, scope=self.cfg.scope)


def violated_triangles(x: np.ndarray, tol: float = FEAS_TOL) -> np.ndarray:
    """Oriented triples ``(a, b, c)`` with ``x_ac > x_ab + x_bc + tol``."""
    n = x.shape[0]
    found = []
    for b in range(n):
        excess = x - (x[:, b, None] + x[None, b, :])
        a, c = np.nonzero(excess > tol)
        keep = (a < c) & (a != b) & (c != b)
        if keep.any():
            found.append(np.stack([a[keep], np.full(keep.sum(), b), c[keep]], 1))
    return np.concatenate(found) if found else np.zeros((0, 3), dtype=np.intp)


def build_program(g: SignedGraph, q, cfg: SolverConfig | None = None) -> ConvexProgramHandle:
    return ConvexProgramHandle(g, q, cfg)


def solve(handle_or_graph, cfg: SolverConfig | None = None, q=None) -> FractionalSolution:
    """Solve a built program, or build-and-solve when given a graph and ``q``."""
    if isinstance(handle_or_graph, SignedGraph):
        if q is None:
            raise ContractError("q is required when solving a graph directly")
        handle_or_graph = ConvexProgramHandle(handle_or_graph, q, cfg)
    return handle_or_graph.solve()


# -- feasibility and integral embedding -----------------------------------

@dataclass(frozen=True)
class Violation:
    kind: str
    where: tuple
    magnitude: float


def check_feasible(sol: FractionalSolution, g: SignedGraph, q=None, tol: float = FEAS_TOL) -> list[Violation]:
    """Every constraint of the relaxation violated by more than ``tol``."""
    x = np.asarray(sol.x, dtype=float)
    n = g.n
    out: list[Violation] = []
    if x.shape != (n, n):
        return [Violation("shape", x.shape, float("inf"))]
    asym = np.abs(x - x.T)
    for a, b in zip(*np.nonzero(np.triu(asym > tol, 1))):
        out.append(Violation("symmetry", (int(a), int(b)), float(asym[a, b])))
    for a in np.flatnonzero(np.abs(np.diag(x)) > tol):
        out.append(Violation("diagonal", (int(a),), float(abs(x[a, a]))))
    low = -x
    high = x - 1.0
    for a, b in zip(*np.nonzero(np.triu((low > tol) | (high > tol), 1))):
        out.append(Violation("range", (int(a), int(b)), float(max(low[a, b], high[a, b]))))
    for a, b, c in violated_triangles(x, tol):
        out.append(Violation("triangle", (int(a), int(b), int(c)),
                             float(x[a, c] - x[a, b] - x[b, c])))
    u, v, _, sign, inf = g.edge_arrays
    for a, b, s, hard in zip(u, v, sign, inf):
        if hard:
            target = 0.0 if s > 0 else 1.0
            if abs(x[a, b] - target) > tol:
                out.append(Violation("uncuttable", (int(a), int(b)), float(abs(x[a, b] - target))))
    if g.terminals is not None:
        s_, t_ = g.terminals
        if x[s_, t_] < 1.0 - tol:
            out.append(Violation("terminals", (s_, t_), float(1.0 - x[s_, t_])))
    y_err = np.asarray(sol.y, dtype=float) - y_from_x(g, x)
    for a in np.flatnonzero(np.abs(y_err) > tol):
        out.append(Violation("P1", (int(a),), float(abs(y_err[a]))))
    if sol.z is not None:
        qq = parse_q(q if q is not None else sol.q)
        z_err = np.asarray(sol.z, dtype=float) - y_from_x(g, x, qq)
        for a in np.flatnonzero(np.abs(z_err) > tol):
            out.append(Violation("P2", (int(a),), float(abs(z_err[a]))))
    return out


def embed_integral(c, g: SignedGraph, q, scope: str = ALL) -> FractionalSolution:
    """The 0/1 point of a clustering: x = 0 inside clusters, 1 across."""
    q = parse_q(q)
    if not isinstance(c, Clustering):
        c = Clustering(tuple(c))
    if c.n != g.n:
        raise ContractError("clustering does not cover the graph")
    labels = c.as_array()
    x = (labels[:, None] != labels[None, :]).astype(float)
    y = y_from_x(g, x)
    z = None if math.isinf(q) else y_from_x(g, x, q)
    value = objective(g, c, q, scope)
    # trivially valid certificate; an integral point proves nothing better
    return FractionalSolution(x=x, y=y, z=z, value=value, lower_bound=0.0, q=q, scope=scope)


__all__ = [
    "ConvexProgramHandle", "FractionalSolution", "SolverConfig", "Violation",
    "build_program", "check_feasible", "embed_integral", "solve", "y_from_x",
    "violated_triangles", "tangent_points", "linearized_power", "INF",
]
