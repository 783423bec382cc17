"""Signed graphs, clusterings, disagreement/cut vectors and l_q norms."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

from .errors import ContractError

TOL = 1e-9
INF = math.inf

ALL = "all"
L_SIDE = "L"


def parse_q(q) -> float:
    """Coerce a norm exponent (number or ``"inf"``) to float and validate q >= 1."""
    if isinstance(q, str):
        text = q.strip().lower()
        q = INF if text in ("inf", "infinity", "oo") else float(text)
    q = float(q)
    if math.isnan(q) or q < 1:
        raise ContractError(f"norm exponent must satisfy q >= 1, got {q}")
    return q


def _canon(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


def metric_closure(d: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths (Floyd-Warshall) over a dense length matrix.

    Non-edges are ``inf``; zero-length edges are kept (unlike sparse csgraph).
    """
    d = np.array(d, dtype=float, copy=True)
    np.fill_diagonal(d, 0.0)
    for k in range(d.shape[0]):
        np.minimum(d, d[:, k, None] + d[None, k, :], out=d)
    return d


@dataclass(frozen=True)
class SignedGraph:
    """Vertices ``0..n-1`` with disjoint positive and negative weighted edge sets.

    Edges are stored canonically as ``(min, max, weight)``. An edge given with
    weight ``inf`` is recorded in ``infinite`` (an uncuttable edge) and keeps a
    nominal finite weight of 1 so that vector arithmetic stays finite.
    """

    n: int
    pos_edges: tuple = ()
    neg_edges: tuple = ()
    bipartition: tuple | None = None
    terminals: tuple | None = None
    infinite: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        n = int(self.n)
        if n < 0:
            raise ContractError("vertex count must be non-negative")
        seen: set[tuple[int, int]] = set()
        infinite = set(_canon(*p) for p in self.infinite)

        def clean(edges):
            out = []
            for e in edges:
                if len(e) == 2:
                    u, v, w = e[0], e[1], 1.0
                else:
                    u, v, w = e
                u, v, w = int(u), int(v), float(w)
                if u == v:
                    raise ContractError(f"self-loop at vertex {u}")
                if not (0 <= u < n and 0 <= v < n):
                    raise ContractError(f"edge ({u}, {v}) out of range for n={n}")
                key = _canon(u, v)
                if key in seen:
                    raise ContractError(f"pair {key} appears more than once")
                seen.add(key)
                if math.isinf(w) and w > 0:
                    infinite.add(key)
                    w = 1.0
                if math.isnan(w) or math.isinf(w) or w < 0:
                    raise ContractError(f"invalid weight {w} on edge {key}")
                out.append((key[0], key[1], w))
            return tuple(sorted(out))

        pos = clean(self.pos_edges)
        neg = clean(self.neg_edges)
        if not infinite <= seen:
            raise ContractError("infinite flag on a pair that is not an edge")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "pos_edges", pos)
        object.__setattr__(self, "neg_edges", neg)
        object.__setattr__(self, "infinite", frozenset(infinite))

        if self.bipartition is not None:
            left, right = (frozenset(int(x) for x in part) for part in self.bipartition)
            if left & right or (left | right) != frozenset(range(n)):
                raise ContractError("bipartition must split V into disjoint L and R")
            for u, v, _ in pos + neg:
                if (u in left) == (v in left):
                    raise ContractError(f"edge ({u}, {v}) does not cross the bipartition")
            object.__setattr__(self, "bipartition", (left, right))
        if self.terminals is not None:
            s, t = (int(x) for x in self.terminals)
            if s == t or not (0 <= s < n and 0 <= t < n):
                raise ContractError("terminals must be two distinct vertices")
            object.__setattr__(self, "terminals", (s, t))

    # -- edge views -------------------------------------------------------
    def edges(self) -> Iterator[tuple[int, int, float, int]]:
        """Yield ``(u, v, w, sign)`` with sign +1 for positive, -1 for negative."""
        for u, v, w in self.pos_edges:
            yield u, v, w, 1
        for u, v, w in self.neg_edges:
            yield u, v, w, -1

    @property
    def num_edges(self) -> int:
        return len(self.pos_edges) + len(self.neg_edges)

    @cached_property
    def edge_arrays(self):
        """Columns ``(u, v, w, sign, infinite)`` as numpy arrays."""
        rows = list(self.edges())
        u = np.array([r[0] for r in rows], dtype=np.intp)
        v = np.array([r[1] for r in rows], dtype=np.intp)
        w = np.array([r[2] for r in rows], dtype=float)
        sign = np.array([r[3] for r in rows], dtype=np.int8)
        inf = np.array([(r[0], r[1]) in self.infinite for r in rows], dtype=bool)
        return u, v, w, sign, inf

    def is_unit_weight(self) -> bool:
        return not self.infinite and all(w == 1.0 for _, _, w, _ in self.edges())

    def is_complete(self) -> bool:
        return self.num_edges == self.n * (self.n - 1) // 2

    def is_complete_bipartite(self) -> bool:
        if self.bipartition is None:
            return False
        left, right = self.bipartition
        return self.num_edges == len(left) * len(right)

    def incident_weight(self) -> np.ndarray:
        """Total finite weight incident to each vertex."""
        u, v, w, _, _ = self.edge_arrays
        out = np.zeros(self.n)
        np.add.at(out, u, w)
        np.add.at(out, v, w)
        return out

    def sign_of(self, u: int, v: int) -> int:
        """+1, -1 or 0 (no edge) for an unordered pair."""
        return self._sign_map.get(_canon(u, v), 0)

    @cached_property
    def _sign_map(self) -> dict:
        return {(u, v): s for u, v, _, s in self.edges()}

    def left(self) -> frozenset:
        if self.bipartition is None:
            raise ContractError("graph has no bipartition")
        return self.bipartition[0]


@dataclass(frozen=True)
class Clustering:
    """Total assignment of vertices to cluster ids.

    Labels are renumbered in order of first appearance so that two clusterings
    describing the same partition compare equal.
    """

    labels: tuple

    def __post_init__(self):
        remap: dict = {}
        out = []
        for lab in self.labels:
            if lab not in remap:
                remap[lab] = len(remap)
            out.append(remap[lab])
        object.__setattr__(self, "labels", tuple(out))

    @classmethod
    def from_clusters(cls, clusters: Iterable[Iterable[int]], n: int) -> "Clustering":
        labels = [None] * n
        for cid, members in enumerate(clusters):
            for u in members:
                if not 0 <= u < n:
                    raise ContractError(f"vertex {u} out of range")
                if labels[u] is not None:
                    raise ContractError(f"vertex {u} assigned twice")
                labels[u] = cid
        missing = [u for u, lab in enumerate(labels) if lab is None]
        if missing:
            raise ContractError(f"vertices {missing} have no cluster")
        return cls(tuple(labels))

    @classmethod
    def from_mapping(cls, assignment: Mapping[int, int], n: int) -> "Clustering":
        missing = [u for u in range(n) if u not in assignment]
        if missing:
            raise ContractError(f"vertices {missing} have no cluster")
        return cls(tuple(assignment[u] for u in range(n)))

    @classmethod
    def single(cls, n: int) -> "Clustering":
        return cls((0,) * n)

    @classmethod
    def singletons(cls, n: int) -> "Clustering":
        return cls(tuple(range(n)))

    @property
    def n(self) -> int:
        return len(self.labels)

    @property
    def num_clusters(self) -> int:
        return max(self.labels) + 1 if self.labels else 0

    def __getitem__(self, u: int) -> int:
        return self.labels[u]

    def clusters(self) -> list[list[int]]:
        out: list[list[int]] = [[] for _ in range(self.num_clusters)]
        for u, lab in enumerate(self.labels):
            out[lab].append(u)
        return out

    def as_array(self) -> np.ndarray:
        return np.asarray(self.labels, dtype=np.intp)


@dataclass(frozen=True, eq=False)
class DisagreeVector:
    """Per-vertex disagreement (or cut) weights.

    ``infinite[u]`` marks vertices incident to a disagreeing uncuttable edge;
    those contributions are kept out of ``values``.
    """

    values: np.ndarray
    infinite: np.ndarray

    @property
    def infeasible(self) -> bool:
        return bool(self.infinite.any())

    def __len__(self):
        return len(self.values)

    def as_array(self) -> np.ndarray:
        """Values with +inf substituted where an uncuttable edge disagrees."""
        return np.where(self.infinite, INF, self.values)


def _labels(c, n: int) -> np.ndarray:
    if isinstance(c, Clustering):
        labels = c.as_array()
    elif isinstance(c, Mapping):
        labels = Clustering.from_mapping(c, n).as_array()
    else:
        labels = np.asarray(c, dtype=np.intp)
    if labels.shape != (n,):
        raise ContractError(f"clustering covers {labels.shape[0] if labels.ndim else 0} vertices, graph has {n}")
    return labels


def _accumulate(n, u, v, w, inf, mask) -> DisagreeVector:
    values = np.zeros(n)
    flags = np.zeros(n, dtype=bool)
    fin = mask & ~inf
    np.add.at(values, u[fin], w[fin])
    np.add.at(values, v[fin], w[fin])
    hard = mask & inf
    flags[u[hard]] = True
    flags[v[hard]] = True
    return DisagreeVector(values, flags)


def disagreement_vector(g: SignedGraph, c) -> DisagreeVector:
    labels = _labels(c, g.n)
    u, v, w, sign, inf = g.edge_arrays
    same = labels[u] == labels[v]
    mask = np.where(sign > 0, ~same, same)
    return _accumulate(g.n, u, v, w, inf, mask)


def cut_vector(edges: Sequence, c, n: int | None = None, infinite=frozenset()) -> DisagreeVector:
    """Weight of separated edges at each endpoint.

    ``edges`` is a sequence of ``(u, v, w)``; ``n`` defaults to the clustering size.
    """
    if n is None:
        if not isinstance(c, Clustering):
            c = Clustering(tuple(c))
        n = c.n
    labels = _labels(c, n)
    if len(edges) == 0:
        return DisagreeVector(np.zeros(n), np.zeros(n, dtype=bool))
    arr = np.asarray([(e[0], e[1]) for e in edges], dtype=np.intp)
    w = np.asarray([e[2] for e in edges], dtype=float)
    u, v = arr[:, 0], arr[:, 1]
    inf = np.array([_canon(int(a), int(b)) in infinite for a, b in arr], dtype=bool)
    if np.isinf(w).any():
        inf |= np.isinf(w)
        w = np.where(np.isinf(w), 1.0, w)
    return _accumulate(n, u, v, w, inf, labels[u] != labels[v])


def lq_norm(vec, q) -> float:
    """``(sum x_u^q)^(1/q)``, or ``max x_u`` when q is infinite."""
    q = parse_q(q)
    if isinstance(vec, DisagreeVector):
        if vec.infeasible:
            return INF
        x = vec.values
    else:
        x = np.asarray(vec, dtype=float)
    if x.size == 0:
        return 0.0
    x = np.abs(x)
    top = float(x.max())
    if math.isinf(q) or top == 0.0 or math.isinf(top):
        return top
    # scaled to keep x**q finite for large q
    return top * float(np.sum((x / top) ** q)) ** (1.0 / q)


def objective(g: SignedGraph, c, q, scope: str = ALL) -> float:
    vec = disagreement_vector(g, c)
    if scope == L_SIDE:
        side = np.array(sorted(g.left()), dtype=np.intp)
        vec = DisagreeVector(vec.values[side], vec.infinite[side])
    elif scope != ALL:
        raise ContractError(f"unknown scope {scope!r}")
    return lq_norm(vec, q)
