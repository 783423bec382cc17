"""Exhaustive solvers for small instances.

Set partitions are enumerated as restricted growth strings (RGS) and scored
in vectorised chunks; s-t cuts enumerate the two-sided assignments of the
vertices not glued to a terminal by uncuttable edges.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.sparse.csgraph import connected_components

from .core import ALL, L_SIDE, Clustering, SignedGraph, cut_vector, lq_norm, objective, parse_q
from .errors import ContractError, InfeasibleError, SizeGuardError

MAX_PARTITION_N = 12
MAX_CUT_FREE = 24
_CHUNK = 1 << 16


@dataclass(frozen=True)
class OracleResult:
    best: Clustering
    value: float
    enumerated: int


@lru_cache(maxsize=None)
def set_partitions(n: int) -> np.ndarray:
    """All restricted growth strings of length n, in lexicographic order.

    Row k is a labelling with ``labels[0] = 0`` and each label at most one
    more than the maximum before it; there are Bell(n) rows.
    """
    labels = np.zeros((1, 0), dtype=np.int8)
    maxes = np.array([-1], dtype=np.int8)
    for _ in range(n):
        counts = maxes.astype(np.intp) + 2
        parent = np.repeat(np.arange(labels.shape[0]), counts)
        starts = np.repeat(np.cumsum(counts) - counts, counts)
        new = (np.arange(parent.size) - starts).astype(np.int8)
        labels = np.hstack([labels[parent], new[:, None]])
        maxes = np.maximum(maxes[parent], new)
    labels.setflags(write=False)
    return labels


def _norms(load: np.ndarray, q: float) -> np.ndarray:
    if math.isinf(q):
        return load.max(axis=1)
    if q == 1:
        return load.sum(axis=1)
    top = load.max(axis=1)
    safe = np.where(top > 0, top, 1.0)
    return top * ((load / safe[:, None]) ** q).sum(axis=1) ** (1.0 / q)


def _incidence(n, u, v, w):
    inc = np.zeros((u.size, n))
    inc[np.arange(u.size), u] = w
    inc[np.arange(u.size), v] += w
    return inc


def _score(labels, g: SignedGraph, q, cols, cut_only=False):
    """Objective of each labelling row restricted to vertex columns ``cols``."""
    u, v, w, sign, inf = g.edge_arrays
    if u.size == 0:
        return np.zeros(labels.shape[0])
    same = labels[:, u] == labels[:, v]
    bad = ~same if cut_only else np.where(sign > 0, ~same, same)
    load = (bad & ~inf).astype(float) @ _incidence(g.n, u, v, w)[:, cols]
    vals = _norms(load, q) if len(cols) else np.zeros(labels.shape[0])
    if inf.any():
        vals = np.where((bad & inf).any(axis=1), np.inf, vals)
    return vals


def _scope_cols(g: SignedGraph, scope: str):
    if scope == ALL:
        return np.arange(g.n)
    if scope == L_SIDE:
        return np.array(sorted(g.left()), dtype=np.intp)
    raise ContractError(f"unknown scope {scope!r}")


def opt_clustering(g: SignedGraph, q, scope: str = ALL) -> OracleResult:
    """Exact minimum of the l_q disagreement objective over all partitions."""
    q = parse_q(q)
    if g.n > MAX_PARTITION_N:
        raise SizeGuardError(f"partition enumeration limited to n <= {MAX_PARTITION_N}")
    if g.n == 0:
        return OracleResult(Clustering(()), 0.0, 1)
    cols = _scope_cols(g, scope)
    parts = set_partitions(g.n)
    best_val, best_row = math.inf, 0
    for start in range(0, parts.shape[0], _CHUNK):
        vals = _score(parts[start:start + _CHUNK], g, q, cols)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_row = float(vals[k]), start + k
    best = Clustering(tuple(int(x) for x in parts[best_row]))
    return OracleResult(best, objective(g, best, q, scope), int(parts.shape[0]))


def _cut_edges(g: SignedGraph):
    if g.neg_edges:
        raise ContractError("s-t cut instances must have positive edges only")
    return g.pos_edges


def opt_separating_partition(g: SignedGraph, s: int, t: int, q) -> OracleResult:
    """Minimum ``||cut||_q`` over ALL partitions (any number of parts) separating s and t."""
    q = parse_q(q)
    edges = _cut_edges(g)
    if g.n > MAX_PARTITION_N:
        raise SizeGuardError(f"partition enumeration limited to n <= {MAX_PARTITION_N}")
    parts = set_partitions(g.n)
    parts = parts[parts[:, s] != parts[:, t]]
    cols = np.arange(g.n)
    best_val, best_row = math.inf, None
    for start in range(0, parts.shape[0], _CHUNK):
        vals = _score(parts[start:start + _CHUNK], g, q, cols, cut_only=True)
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_row = float(vals[k]), start + k
    if best_row is None or math.isinf(best_val):
        raise InfeasibleError("every separating partition cuts an uncuttable edge")
    best = Clustering(tuple(int(x) for x in parts[best_row]))
    value = lq_norm(cut_vector(edges, best, g.n, g.infinite), q)
    return OracleResult(best, value, int(parts.shape[0]))


def opt_st_cut(g: SignedGraph, s: int | None = None, t: int | None = None, q=math.inf) -> OracleResult:
    """Exact minimum ``||cut(A, V-A)||_q`` over two-sided cuts with s in A, t not in A.

    Vertices joined by uncuttable edges are glued into one unit first, so only
    cuts that respect them are enumerated.
    """
    q = parse_q(q)
    if s is None or t is None:
        if g.terminals is None:
            raise ContractError("no terminals given")
        s, t = g.terminals
    _cut_edges(g)
    n = g.n
    u, v, _, _, inf = g.edge_arrays
    glue = np.zeros((n, n), dtype=np.int8)
    glue[u[inf], v[inf]] = 1
    _, comp = connected_components(glue, directed=False)
    if comp[s] == comp[t]:
        raise InfeasibleError("s and t are joined by uncuttable edges")
    free = [c for c in np.unique(comp) if c not in (comp[s], comp[t])]
    k = len(free)
    if k > MAX_CUT_FREE:
        raise SizeGuardError(f"cut enumeration limited to {MAX_CUT_FREE} free units, got {k}")
    # unit -> bit position; s-side units are label 0, t-side label 1
    bit_of = np.full(comp.max() + 1, -1)
    bit_of[free] = np.arange(k)
    vbit = bit_of[comp]
    cols = np.arange(n)
    total = 1 << k
    best_val, best_labels = math.inf, None
    for start in range(0, total, _CHUNK):
        idx = np.arange(start, min(total, start + _CHUNK), dtype=np.int64)
        labels = np.ones((idx.size, n), dtype=np.int8)
        labels[:, comp == comp[s]] = 0
        movable = vbit >= 0
        # bit set -> unit stays on the t side
        labels[:, movable] = (idx[:, None] >> vbit[movable][None, :]) & 1
        vals = _score(labels, g, q, cols, cut_only=True)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_labels = float(vals[j]), labels[j].copy()
    if best_labels is None or math.isinf(best_val):
        raise InfeasibleError("every s-t cut crosses an uncuttable edge")
    best = Clustering(tuple(int(x) for x in best_labels))
    value = lq_norm(cut_vector(g.pos_edges, best, n, g.infinite), q)
    return OracleResult(best, value, total)


def verify_ratio(g: SignedGraph, q, report, scope: str | None = None) -> dict:
    """Compare a rounding report with the exact optimum (0/0 counts as ratio 1)."""
    q = parse_q(q)
    scope = report.scope if scope is None else scope
    opt = opt_clustering(g, q, scope)
    if opt.value == 0:
        ratio = 1.0 if report.objective <= 1e-12 else math.inf
    else:
        ratio = report.objective / opt.value
    return {"ratio": ratio, "opt": opt.value, "objective": report.objective,
            "per_vertex_ratio": report.ratio_per_vertex}


def sat_brute_force(f) -> tuple | None:
    """A satisfying assignment found by trying all 2^n, or None."""
    for bits in itertools.product((False, True), repeat=f.num_vars):
        if f.evaluate(bits):
            return bits
    return None
