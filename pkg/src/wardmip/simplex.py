"""Dense bounded-variable primal simplex.

Solves ``min c.x`` subject to ``row_lo <= A x <= row_hi`` and ``lb <= x <= ub``
with finite column bounds. Each row gets a slack ``s`` with ``A x + s = b``;
rows whose slack cannot absorb the starting residual get an artificial
variable, and a phase-1 pass drives those to zero.

Pricing is Dantzig's largest reduced cost; after a run of degenerate pivots
the method falls back to Bland's smallest-index rule until progress resumes,
which rules out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


class SimplexError(RuntimeError):
    """Numerical breakdown or iteration cap hit."""


@dataclass
class SimplexResult:
    status: str          # "optimal", "infeasible" or "unbounded"
    x: np.ndarray | None
    objective: float
    iterations: int


_DEGENERATE_RUN = 30


class _Tableau:
    def __init__(self, T, rc, xval, lb, ub, basis, tol):
        self.T = T          # B^-1 [A | I | art]
        self.rc = rc        # reduced costs
        self.x = xval       # values of every variable
        self.lb, self.ub = lb, ub
        self.basis = basis  # basic variable per row
        self.is_basic = np.zeros(T.shape[1], bool)
        self.is_basic[basis] = True
        self.tol = tol
        self.iterations = 0

    def run(self, cost, max_iter):
        tol = self.tol
        self.rc = cost - cost[self.basis] @ self.T
        degenerate = 0
        while True:
            if self.iterations >= max_iter:
                raise SimplexError(f"iteration cap {max_iter} reached")
            rc = self.rc
            at_lo = self.x <= self.lb + tol
            at_hi = self.x >= self.ub - tol
            movable = (~self.is_basic) & (self.ub - self.lb > tol)
            up = movable & at_lo & (rc < -tol)
            down = movable & at_hi & (rc > tol) & ~up
            cand = np.flatnonzero(up | down)
            if cand.size == 0:
                return "optimal"
            bland = degenerate >= _DEGENERATE_RUN
            if bland:
                j = int(cand[0])
            else:
                j = int(cand[np.argmax(np.abs(rc[cand]))])
            direction = 1.0 if up[j] else -1.0

            alpha = self.T[:, j] * direction
            xb = self.x[self.basis]
            lbb, ubb = self.lb[self.basis], self.ub[self.basis]
            ratios = np.full(alpha.shape, np.inf)
            dec = alpha > tol
            inc = alpha < -tol
            ratios[dec] = (xb[dec] - lbb[dec]) / alpha[dec]
            ratios[inc] = (ubb[inc] - xb[inc]) / -alpha[inc]
            ratios = np.maximum(ratios, 0.0)
            flip = self.ub[j] - self.lb[j]
            t_row = ratios.min() if ratios.size else np.inf
            if not np.isfinite(t_row) and not np.isfinite(flip):
                return "unbounded"

            self.iterations += 1
            if flip <= t_row:
                t = flip
                self.x[self.basis] = xb - t * alpha
                self.x[j] = self.ub[j] if direction > 0 else self.lb[j]
                degenerate = 0
                continue

            ties = np.flatnonzero(ratios <= t_row + 1e-12)
            if bland:
                r = int(ties[np.argmin(self.basis[ties])])
            else:
                r = int(ties[np.argmax(np.abs(alpha[ties]))])
            t = float(ratios[r])
            degenerate = degenerate + 1 if t <= tol else 0

            leaving = self.basis[r]
            self.x[self.basis] = xb - t * alpha
            self.x[j] += direction * t
            # Snap the leaving variable onto the bound it reached.
            self.x[leaving] = self.lb[leaving] if alpha[r] > 0 else self.ub[leaving]
            self._pivot(r, j)

    def _pivot(self, r, j):
        T = self.T
        piv = T[r, j]
        if abs(piv) < 1e-11:
            raise SimplexError(f"pivot element {piv:.3e} too small")
        T[r] /= piv
        col = T[:, j].copy()
        col[r] = 0.0
        nz = np.flatnonzero(col)
        if nz.size:
            T[nz] -= np.outer(col[nz], T[r])
        self.rc -= self.rc[j] * T[r]
        self.is_basic[self.basis[r]] = False
        self.is_basic[j] = True
        self.basis[r] = j


def solve(c, A, row_lo, row_hi, lb, ub, tol=1e-9, feas_tol=1e-7, max_iter=None) -> SimplexResult:
    """Minimise ``c.x`` over the box- and row-constrained polyhedron."""
    A = np.asarray(A, float)
    m, n = A.shape
    c = np.asarray(c, float)
    lb = np.asarray(lb, float)
    ub = np.asarray(ub, float)
    row_lo = np.asarray(row_lo, float)
    row_hi = np.asarray(row_hi, float)
    if not (np.all(np.isfinite(lb)) and np.all(np.isfinite(ub))):
        raise ValueError("column bounds must be finite")
    if np.any(lb > ub + feas_tol):
        return SimplexResult("infeasible", None, np.nan, 0)
    if max_iter is None:
        max_iter = 50 * (m + n) + 1000

    # A x + s = b: b is the finite side; the slack takes the range.
    has_hi = np.isfinite(row_hi)
    b = np.where(has_hi, row_hi, row_lo)
    s_lo = np.where(has_hi, 0.0, -np.inf)
    s_hi = np.where(has_hi, row_hi - row_lo, 0.0)  # inf when row_lo is -inf

    x0 = lb.copy()
    resid = b - A @ x0
    need_art = (resid < s_lo - feas_tol) | (resid > s_hi + feas_tol)
    art_rows = np.flatnonzero(need_art)
    k = art_rows.size

    T = np.zeros((m, n + m + k))
    T[:, :n] = A
    T[:, n:n + m] = np.eye(m)
    xval = np.zeros(n + m + k)
    xval[:n] = x0
    big_lb = np.concatenate([lb, s_lo, np.zeros(k)])
    big_ub = np.concatenate([ub, s_hi, np.full(k, np.inf)])
    basis = np.arange(n, n + m)
    for q, i in enumerate(art_rows):
        # Slack parks at the bound nearest the residual; the artificial takes the rest.
        s_val = s_lo[i] if resid[i] < s_lo[i] else s_hi[i]
        xval[n + i] = s_val
        gap = resid[i] - s_val
        sign = 1.0 if gap > 0 else -1.0
        T[i, n + m + q] = sign
        T[i] *= sign  # row of B^-1 [A I art] with the artificial basic
        xval[n + m + q] = abs(gap)
        basis[i] = n + m + q
    for i in np.flatnonzero(~need_art):
        xval[n + i] = resid[i]

    tab = _Tableau(T, None, xval, big_lb, big_ub, basis, tol)
    if k:
        phase1 = np.concatenate([np.zeros(n + m), np.ones(k)])
        tab.run(phase1, max_iter)
        if tab.x[n + m:].sum() > feas_tol * max(1, k):
            return SimplexResult("infeasible", None, np.nan, tab.iterations)
        tab.ub[n + m:] = 0.0
        tab.x[n + m:] = 0.0

    cost = np.concatenate([c, np.zeros(m + k)])
    status = tab.run(cost, max_iter)
    if status == "unbounded":
        return SimplexResult("unbounded", None, -np.inf, tab.iterations)

    x = tab.x[:n].copy()
    # Recompute from scratch to catch drift in the updated tableau.
    Ax = A @ x
    viol = max(np.max(row_lo - Ax, initial=0.0), np.max(Ax - row_hi, initial=0.0),
               np.max(lb - x, initial=0.0), np.max(x - ub, initial=0.0))
    if viol > 1e-6:
        raise SimplexError(f"solution violates constraints by {viol:.3e}")
    return SimplexResult("optimal", x, float(c @ x), tab.iterations)
