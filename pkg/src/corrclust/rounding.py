"""Rounding a fractional metric into a clustering.

* ``round_general``: metric decomposition with diameter 1/2 (any weighted graph).
* ``round_complete``: ball carving around the centre maximising L_t (complete graphs).
* ``round_bipartite``: the same with centres in L and one-sided accounting.

The two ball-carving rounders come with a profit audit: for every in-scope
vertex u, ``pft(u) = sum_v LP(u,v) - r * ALG(u)`` must be non-negative, which
is exactly the per-vertex bound ``ALG(u) <= 5 y(u)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import (ALL, L_SIDE, TOL, Clustering, SignedGraph, cut_vector,
                   disagreement_vector, lq_norm, parse_q)
from .decomposition import MetricSpace, decompose, fallback_bound
from .errors import AuditError, ContractError, UnsupportedError
from .relaxation import FractionalSolution, check_feasible, y_from_x

R = 1.0 / 5.0
GENERAL_DELTA = 0.5


@dataclass(frozen=True)
class Step:
    """One carving step: centre ``w``, carved cluster, and the active set before it."""

    center: int
    cluster: tuple
    active: tuple


@dataclass(eq=False)
class ProfitAudit:
    per_vertex_profit: np.ndarray
    per_step: list
    min_profit: float
    min_negative_edge_profit: float
    scope: tuple

    @property
    def ok(self) -> bool:
        return self.min_profit >= -TOL and self.min_negative_edge_profit >= -TOL


@dataclass(eq=False)
class RoundingReport:
    clustering: Clustering
    per_vertex_alg: np.ndarray
    per_vertex_y: np.ndarray
    ratio_per_vertex: float
    objective: float
    scope: str = ALL
    checks: dict = field(default_factory=dict)
    audit: ProfitAudit | None = None
    trace: object = None

    @property
    def ok(self) -> bool:
        return all(self.checks.values()) and (self.audit is None or self.audit.ok)

    def to_dict(self) -> dict:
        doc = {
            "schema": 1,
            "clusters": self.clustering.clusters(),
            "alg": [float(a) for a in self.per_vertex_alg],
            "y": [float(a) for a in self.per_vertex_y],
            "ratio": _num(self.ratio_per_vertex),
            "objective": _num(self.objective),
            "scope": self.scope,
            "checks": dict(self.checks),
        }
        if self.audit is not None:
            doc["audit"] = {"min_profit": self.audit.min_profit,
                            "min_negative_edge_profit": self.audit.min_negative_edge_profit}
        if self.trace is not None and hasattr(self.trace, "to_dict"):
            doc["decomposition"] = self.trace.to_dict()
        return doc

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def _num(v):
    return "inf" if isinstance(v, float) and math.isinf(v) else v


def per_vertex_ratio(alg: np.ndarray, y: np.ndarray) -> float:
    """``max_u alg(u) / y(u)`` with 0/0 = 0 and a/0 = inf."""
    worst = 0.0
    for a, b in zip(alg, y):
        if a <= TOL:
            continue
        worst = max(worst, a / b if b > 0 else math.inf)
    return worst


def _require_feasible(g: SignedGraph, sol: FractionalSolution):
    bad = check_feasible(sol, g)
    if bad:
        v = bad[0]
        raise ContractError(f"fractional solution infeasible ({len(bad)} violations, e.g. {v.kind} at {v.where} by {v.magnitude:.3g})")


def _report(g, sol, c, q, scope, side=None) -> RoundingReport:
    y = y_from_x(g, sol.x)
    vec = disagreement_vector(g, c)
    alg = vec.as_array()
    idx = np.arange(g.n) if side is None else np.array(sorted(side), dtype=np.intp)
    objective = lq_norm(alg[idx], q) if idx.size else 0.0
    return RoundingReport(
        clustering=c,
        per_vertex_alg=alg,
        per_vertex_y=y,
        ratio_per_vertex=per_vertex_ratio(alg[idx], y[idx]),
        objective=objective,
        scope=scope,
    )


def _raise_if(strict: bool, report: RoundingReport):
    if strict and not report.ok:
        failed = [k for k, v in report.checks.items() if not v]
        if report.audit is not None and not report.audit.ok:
            failed.append(f"profit (min {report.audit.min_profit:.3g})")
        raise AuditError(f"rounding guarantees violated: {', '.join(failed)}")


# -- arbitrary graphs --------------------------------------------------------

def round_general(g: SignedGraph, sol: FractionalSolution, q=None, rng=None, *,
                  max_retries: int | None = None, strict: bool = True) -> RoundingReport:
    """Partition the LP metric into clusters of x-diameter at most 1/2."""
    q = parse_q(sol.q if q is None else q)
    _require_feasible(g, sol)
    metric = MetricSpace(sol.x)
    c, trace = decompose(metric, GENERAL_DELTA, rng, max_retries=max_retries)
    report = _report(g, sol, c, q, ALL)
    report.trace = trace

    neg_only = SignedGraph(g.n, (), g.neg_edges, infinite=frozenset(p for p in g.infinite if g.sign_of(*p) < 0))
    neg_alg = disagreement_vector(neg_only, c).as_array()
    report.checks["diameter"] = metric.max_cluster_diameter(c) <= GENERAL_DELTA
    report.checks["negative_edges"] = bool(np.all(neg_alg <= 2.0 * report.per_vertex_y + TOL))
    if trace.fallback:
        cut = lq_norm(cut_vector(g.pos_edges, c, g.n), q)
        report.checks["fallback_bound"] = cut <= fallback_bound(metric, g.pos_edges, GENERAL_DELTA, q) + TOL
    _raise_if(strict, report)
    return report


# -- ball carving --------------------------------------------------------------

def _carve(x: np.ndarray, active: np.ndarray, centers: np.ndarray, counted: np.ndarray):
    """Run the carving loop; returns the list of steps.

    ``centers`` flags vertices eligible as centres, ``counted`` flags vertices
    whose ``r - x_uw`` terms enter L_t(w).
    """
    steps = []
    while (active & centers).any():
        inside = (x <= R) & (active & counted)[None, :]
        score = np.where(inside, R - x, 0.0).sum(axis=1)
        score = np.where(active & centers, score, -np.inf)
        w = int(np.argmax(score))  # first index wins ties
        cluster = active & (x[w] <= 2 * R)
        steps.append(Step(w, tuple(np.flatnonzero(cluster).tolist()), tuple(np.flatnonzero(active).tolist())))
        active = active & ~cluster
    return steps, active


def _steps_to_clustering(n, steps, leftover=()):
    clusters = [list(s.cluster) for s in steps]
    if len(leftover):
        clusters.append(list(leftover))
    return Clustering.from_clusters(clusters, n)


def _require_unit(g: SignedGraph):
    if not g.is_unit_weight():
        raise UnsupportedError("ball-carving rounding needs unit weights and no uncuttable edges")


def round_complete(g: SignedGraph, sol: FractionalSolution, *, strict: bool = True) -> tuple[RoundingReport, ProfitAudit]:
    """Ball carving with r = 1/5 on a complete unit-weight instance."""
    if not g.is_complete():
        raise UnsupportedError("round_complete needs every pair to be a positive or negative edge")
    _require_unit(g)
    _require_feasible(g, sol)
    n = g.n
    everyone = np.ones(n, dtype=bool)
    steps, _ = _carve(sol.x, everyone.copy(), everyone, everyone)
    c = _steps_to_clustering(n, steps)
    report = _report(g, sol, c, sol.q, ALL)
    audit = audit_profit(g, sol, steps)
    report.audit = audit
    report.trace = steps
    report.checks["five_approx"] = bool(np.all(report.per_vertex_alg <= 5 * report.per_vertex_y + TOL))
    _raise_if(strict, report)
    return report, audit


def round_bipartite(g: SignedGraph, sol: FractionalSolution, *, strict: bool = True) -> tuple[RoundingReport, ProfitAudit]:
    """One-sided ball carving: centres from L, L_t^R counts only R vertices."""
    if g.bipartition is None:
        raise ContractError("round_bipartite needs a bipartition")
    if not g.is_complete_bipartite():
        raise UnsupportedError("round_bipartite needs a complete bipartite instance")
    _require_unit(g)
    _require_feasible(g, sol)
    n = g.n
    left = np.zeros(n, dtype=bool)
    left[sorted(g.bipartition[0])] = True
    steps, rest = _carve(sol.x, np.ones(n, dtype=bool), left, ~left)
    c = _steps_to_clustering(n, steps, np.flatnonzero(rest))
    report = _report(g, sol, c, sol.q, L_SIDE, side=g.bipartition[0])
    audit = audit_profit(g, sol, steps, scope=g.bipartition[0])
    report.audit = audit
    report.trace = steps
    lidx = np.flatnonzero(left)
    report.checks["five_approx"] = bool(np.all(report.per_vertex_alg[lidx] <= 5 * report.per_vertex_y[lidx] + TOL))
    _raise_if(strict, report)
    return report, audit


def audit_profit(g: SignedGraph, sol: FractionalSolution, steps, scope=None) -> ProfitAudit:
    """Recompute per-step profits ``prft(u, t)`` from a carving trace.

    Also checks that the trace is a valid run on ``(g, sol)``: each cluster is
    the closed 2r-ball of its centre within the active set, and active sets
    shrink by exactly the carved cluster.
    """
    n = g.n
    x = sol.x
    if x.shape != (n, n):
        raise ContractError("solution and graph sizes differ")
    u, v, w, sign, _ = g.edge_arrays
    lp = np.where(sign > 0, x[u, v], 1.0 - x[u, v]) * w

    scope_idx = np.arange(n) if scope is None else np.array(sorted(scope), dtype=np.intp)
    active = np.zeros(n, dtype=bool)
    if steps:
        active[list(steps[0].active)] = True
        if not active.all():
            raise ContractError("trace must start from the full vertex set")
    done = np.zeros(u.size, dtype=bool)
    per_step = []
    total = np.zeros(n)
    min_neg = math.inf
    for t, step in enumerate(steps):
        expect = np.zeros(n, dtype=bool)
        expect[list(step.active)] = True
        if not np.array_equal(expect, active):
            raise ContractError(f"step {t}: active set does not follow from earlier steps")
        if not 0 <= step.center < n or not active[step.center]:
            raise ContractError(f"step {t}: centre {step.center} is not active")
        cluster = np.zeros(n, dtype=bool)
        cluster[list(step.cluster)] = True
        if not np.array_equal(cluster, active & (x[step.center] <= 2 * R)):
            raise ContractError(f"step {t}: cluster is not the 2r-ball of its centre")
        removed = (cluster[u] | cluster[v]) & active[u] & active[v]
        same = cluster[u] & cluster[v]
        disagree = np.where(sign > 0, ~same, same)
        prft = np.where(removed, lp - R * disagree * w, 0.0)
        neg = removed & (sign < 0)
        if neg.any():
            min_neg = min(min_neg, float(prft[neg].min()))
        step_profit = np.zeros(n)
        np.add.at(step_profit, u, prft)
        np.add.at(step_profit, v, prft)
        per_step.append(step_profit)
        total += step_profit
        done |= removed
        active = active & ~cluster

    # profits must telescope to the direct definition on the final clustering
    direct = np.zeros(n)
    if steps:
        labels = np.full(n, -1)
        for cid, step in enumerate(steps):
            labels[list(step.cluster)] = cid
        labels[labels < 0] = len(steps)
        same = labels[u] == labels[v]
        alg = np.where(sign > 0, ~same, same) * w
        contrib = np.where(done, lp - R * alg, 0.0)
        np.add.at(direct, u, contrib)
        np.add.at(direct, v, contrib)
    if np.abs(direct[scope_idx] - total[scope_idx]).max(initial=0.0) > 1e-9:
        raise ContractError("per-step profits do not sum to the vertex profit")
    min_profit = float(total[scope_idx].min()) if scope_idx.size else 0.0
    return ProfitAudit(
        per_vertex_profit=total,
        per_step=per_step,
        min_profit=min_profit,
        min_negative_edge_profit=min_neg if math.isfinite(min_neg) else 0.0,
        scope=tuple(int(i) for i in scope_idx),
    )
