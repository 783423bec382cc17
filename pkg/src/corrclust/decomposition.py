"""Low-diameter random partitions of finite metrics.

``sample_padded`` draws a CKR-style padded decomposition; ``decompose`` wraps
it in the boundary-size filter with retries and a deterministic fallback.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import Clustering, cut_vector, lq_norm, parse_q
from .errors import ContractError

METRIC_TOL = 1e-7


@dataclass(frozen=True, eq=False)
class MetricSpace:
    d: np.ndarray

    def __post_init__(self):
        d = np.asarray(self.d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ContractError("distance matrix must be square")
        if not np.array_equal(d, d.T):
            raise ContractError("distance matrix must be symmetric")
        if (d < 0).any() or np.any(np.diag(d) != 0):
            raise ContractError("distances must be non-negative with zero diagonal")
        object.__setattr__(self, "d", d)

    @property
    def n(self) -> int:
        return self.d.shape[0]

    def triangle_excess(self) -> float:
        """Largest ``d(a,c) - d(a,b) - d(b,c)``; at most ``METRIC_TOL`` for a metric."""
        worst = 0.0
        for b in range(self.n):
            worst = max(worst, float(np.max(self.d - self.d[:, b, None] - self.d[None, b, :])))
        return worst

    def diameter(self, members) -> float:
        idx = np.asarray(members, dtype=np.intp)
        return float(self.d[np.ix_(idx, idx)].max()) if idx.size else 0.0

    def max_cluster_diameter(self, c: Clustering) -> float:
        return max((self.diameter(m) for m in c.clusters()), default=0.0)


def padding_constant(n: int) -> float:
    """Padding parameter D = 8 (1 + ln n) of the CKR sampler (bounds 8 H_n)."""
    return 8.0 * (1.0 + math.log(max(n, 1)))


@dataclass(frozen=True)
class PaddedParams:
    delta: float
    n: int
    D: float | None = None
    max_retries: int | None = None

    def __post_init__(self):
        if not self.delta > 0:
            raise ContractError("delta must be positive")
        if self.D is None:
            object.__setattr__(self, "D", padding_constant(self.n))
        if not self.D > 0:
            raise ContractError("D must be positive")
        if self.max_retries is None:
            object.__setattr__(self, "max_retries", max(1, math.ceil(math.log2(max(self.n, 1)))))

    @property
    def eps(self) -> float:
        return self.delta / math.sqrt(2.0 * self.D * max(self.n, 1))

    @property
    def M(self) -> float:
        return 2.0 * self.D * self.eps * self.n / self.delta


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def sample_padded(m: MetricSpace, delta: float, rng=None) -> Clustering:
    """One CKR draw: radius beta ~ U[delta/4, delta/2], random centre order.

    Each point joins the first centre (in permutation order) within distance
    beta, so every cluster lies in a beta-ball and has diameter <= delta.
    """
    if not delta > 0:
        raise ContractError("delta must be positive")
    rng = _rng(rng)
    n = m.n
    if n == 0:
        return Clustering(())
    beta = rng.uniform(delta / 4.0, delta / 2.0)
    order = rng.permutation(n)
    within = m.d[order] <= beta  # row k: points covered by the k-th centre
    first = np.argmax(within, axis=0)  # every point covers itself
    return Clustering(tuple(int(order[k]) for k in first))


def boundary_neighborhood(m: MetricSpace, c: Clustering, eps: float) -> set[int]:
    """Points within ``eps`` of some point in a different cluster."""
    labels = c.as_array()
    close = m.d <= eps
    apart = labels[:, None] != labels[None, :]
    return set(int(u) for u in np.flatnonzero((close & apart).any(axis=1)))


def fallback_components(m: MetricSpace, delta: float) -> Clustering:
    """Connected components of the graph joining points at distance <= delta/n."""
    if not delta > 0:
        raise ContractError("delta must be positive")
    n = m.n
    if n == 0:
        return Clustering(())
    adj = (m.d <= delta / n).astype(np.int8)
    _, labels = connected_components(adj, directed=False)
    return Clustering(tuple(int(x) for x in labels))


def fallback_bound(m: MetricSpace, edges, delta: float, q) -> float:
    """``n * || (sum_v w_uv d(u,v) / delta)_u ||_q``, the fallback's cut guarantee."""
    q = parse_q(q)
    load = np.zeros(m.n)
    for u, v, w in edges:
        load[u] += w * m.d[u, v] / delta
        load[v] += w * m.d[u, v] / delta
    return m.n * lq_norm(load, q)


@dataclass
class DecompositionTrace:
    attempts: list = field(default_factory=list)
    fallback: bool = False

    def to_dict(self) -> dict:
        return {"attempts": list(self.attempts), "fallback": self.fallback}


def attempt_seeds(seed, count: int) -> list:
    """Independent per-attempt seeds derived from a master seed by counter."""
    if isinstance(seed, np.random.Generator):
        seed = int(seed.integers(2**63))
    return [np.random.SeedSequence([0 if seed is None else int(seed), k]) for k in range(count)]


def decompose(m: MetricSpace, delta: float, rng=None, *, max_retries: int | None = None,
              D: float | None = None) -> tuple[Clustering, DecompositionTrace]:
    """Filtered padded decomposition with retries and deterministic fallback.

    An attempt succeeds when ``|N_eps(boundary)| <= M``. After ``max_retries``
    failures (default ``ceil(log2 n)``) the threshold-component partition is
    returned instead.
    """
    params = PaddedParams(delta=delta, n=m.n, D=D, max_retries=max_retries)
    trace = DecompositionTrace()
    eps, M = params.eps, params.M
    if rng is None:
        rng = 0
    for seq in attempt_seeds(rng, params.max_retries):
        c = sample_padded(m, delta, np.random.default_rng(seq))
        size = len(boundary_neighborhood(m, c, eps))
        ok = size <= M
        trace.attempts.append({"eps": eps, "M": M, "boundary_size": size, "success": ok})
        if ok:
            return c, trace
    trace.fallback = True
    return fallback_components(m, delta), trace
