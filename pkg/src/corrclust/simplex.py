"""Dense two-phase tableau simplex for small linear programs.

Solves ``min c @ x`` subject to ``A_ub @ x <= b_ub``, ``A_eq @ x == b_eq`` and
``0 <= x <= upper``. Dantzig pricing with a switch to Bland's rule after a run
of degenerate pivots, which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError

_PIVOT_TOL = 1e-9
_DEGENERATE_RUN = 50


@dataclass
class SimplexResult:
    x: np.ndarray
    fun: float
    iterations: int


def _to_dense(a, ncols):
    if a is None:
        return np.zeros((0, ncols))
    if hasattr(a, "toarray"):
        a = a.toarray()
    return np.asarray(a, dtype=float).reshape(-1, ncols)


class _Tableau:
    def __init__(self, T, basis, max_iter, tol):
        self.T = T
        self.basis = basis
        self.max_iter = max_iter
        self.tol = tol
        self.iterations = 0

    def pivot(self, row, col):
        T = self.T
        T[row] /= T[row, col]
        col_vals = T[:, col].copy()
        col_vals[row] = 0.0
        T -= np.outer(col_vals, T[row])
        self.basis[row] = col

    def run(self, allowed: np.ndarray):
        """Optimise the cost row (last row) over columns flagged in ``allowed``."""
        T = self.T
        m = T.shape[0] - 1
        degenerate = 0
        while True:
            if self.iterations >= self.max_iter:
                raise SolverError("simplex iteration cap reached", best=self.basic_solution())
            reduced = T[-1, :-1]
            candidates = np.flatnonzero(allowed & (reduced < -self.tol))
            if candidates.size == 0:
                return
            if degenerate >= _DEGENERATE_RUN:
                col = int(candidates[0])  # Bland
            else:
                col = int(candidates[np.argmin(reduced[candidates])])
            column = T[:m, col]
            positive = column > _PIVOT_TOL
            if not positive.any():
                raise SolverError("linear program is unbounded", best=self.basic_solution())
            ratios = np.full(m, np.inf)
            ratios[positive] = T[:m, -1][positive] / column[positive]
            best = ratios.min()
            ties = np.flatnonzero(ratios <= best + 1e-12)
            # Bland also needs the smallest basic index among tied rows
            row = int(ties[np.argmin(np.asarray(self.basis)[ties])])
            degenerate = degenerate + 1 if best <= 1e-12 else 0
            self.pivot(row, col)
            self.iterations += 1

    def basic_solution(self):
        ncols = self.T.shape[1] - 1
        sol = np.zeros(ncols)
        for r, b in enumerate(self.basis):
            sol[b] = self.T[r, -1]
        return sol


def linprog_dense(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, upper=None,
                  max_iter=100_000, tol=1e-9) -> SimplexResult:
    c = np.asarray(c, dtype=float)
    nv = c.size
    A_ub = _to_dense(A_ub, nv)
    A_eq = _to_dense(A_eq, nv)
    b_ub = np.zeros(0) if b_ub is None else np.asarray(b_ub, dtype=float)
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float)
    if upper is not None:
        upper = np.asarray(upper, dtype=float)
        finite = np.flatnonzero(np.isfinite(upper))
        bound_rows = np.zeros((finite.size, nv))
        bound_rows[np.arange(finite.size), finite] = 1.0
        A_ub = np.vstack([A_ub, bound_rows])
        b_ub = np.concatenate([b_ub, upper[finite]])

    m_ub, m_eq = A_ub.shape[0], A_eq.shape[0]
    m = m_ub + m_eq
    # columns: structural | slack (one per <= row) | artificial (as needed)
    A = np.zeros((m, nv + m_ub))
    A[:m_ub, :nv] = A_ub
    A[:m_ub, nv:] = np.eye(m_ub)
    A[m_ub:, :nv] = A_eq
    b = np.concatenate([b_ub, b_eq])
    neg = b < 0
    A[neg] *= -1
    b[neg] *= -1

    basis = [-1] * m
    for r in range(m_ub):
        if not neg[r]:
            basis[r] = nv + r
    need_art = [r for r in range(m) if basis[r] < 0]
    n_art = len(need_art)
    ncols = nv + m_ub + n_art
    T = np.zeros((m + 1, ncols + 1))
    T[:m, : nv + m_ub] = A
    T[:m, -1] = b
    for k, r in enumerate(need_art):
        T[r, nv + m_ub + k] = 1.0
        basis[r] = nv + m_ub + k

    tab = _Tableau(T, basis, max_iter, tol)
    art_cols = np.zeros(ncols, dtype=bool)
    art_cols[nv + m_ub:] = True

    if n_art:
        T[-1, :] = 0.0
        T[-1, nv + m_ub:ncols] = 1.0
        for r in need_art:
            T[-1] -= T[r]
        tab.run(np.ones(ncols, dtype=bool))
        if -T[-1, -1] > 1e-7:
            raise SolverError("linear program is infeasible")
        # drive zero-level artificials out of the basis; drop redundant rows
        keep = np.ones(m + 1, dtype=bool)
        for r in range(m):
            if art_cols[tab.basis[r]]:
                row = T[r, :ncols]
                cand = np.flatnonzero(~art_cols & (np.abs(row) > 1e-9))
                if cand.size:
                    tab.pivot(r, int(cand[0]))
                else:
                    keep[r] = False
        if not keep.all():
            tab.T = T = T[keep]
            tab.basis = [b for b, k in zip(tab.basis, keep[:-1]) if k]

    T = tab.T
    T[-1, :] = 0.0
    T[-1, :nv] = c
    for r, bcol in enumerate(tab.basis):
        if T[-1, bcol] != 0.0:
            T[-1] -= T[-1, bcol] * T[r]
    tab.run(~art_cols)
    x = tab.basic_solution()[:nv]
    return SimplexResult(x=x, fun=float(c @ x), iterations=tab.iterations)
