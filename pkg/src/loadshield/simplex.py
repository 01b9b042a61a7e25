"""Bounded-variable primal simplex, dense two-phase full-tableau variant.

Sized for the attack encodings this package produces (tens of variables,
around a hundred rows), so everything is dense numpy and the tableau is
refactorized from scratch periodically instead of maintaining a clever
basis factorization. Dantzig pricing with an automatic switch to Bland's
rule after a run of non-improving (degenerate) pivots guarantees
termination.
"""

from __future__ import annotations

import numpy as np

RC_TOL = 1e-9  # reduced-cost optimality tolerance
PIVOT_TOL = 1e-10
FEAS_TOL = 1e-7
BLAND_AFTER = 150  # degenerate pivots before the anti-cycling rule engages
REFRESH_EVERY = 100  # pivots between tableau refactorizations

LE, GE, EQ = "<=", ">=", "="


class CycleLimit(RuntimeError):
    """Iteration cap exhausted even under Bland's rule."""


class Unbounded(RuntimeError):
    """LP unbounded; cannot happen for fully boxed encodings."""


def solve_bounded_lp(A, relations, rhs, c, lo, hi):
    """Minimize c.x subject to A x (<=,>=,=) rhs and lo <= x <= hi.

    Returns (status, objective, x) with status "optimal" or "infeasible";
    objective and x are None when infeasible.
    """
    A = np.asarray(A, dtype=float)
    m, n = A.shape
    slack_lo = np.empty(m)
    slack_hi = np.empty(m)
    for i, rel in enumerate(relations):
        if rel == LE:
            slack_lo[i], slack_hi[i] = 0.0, np.inf
        elif rel == GE:
            slack_lo[i], slack_hi[i] = -np.inf, 0.0
        elif rel == EQ:
            slack_lo[i], slack_hi[i] = 0.0, 0.0
        else:
            raise ValueError(f"unknown relation {rel!r}")
    A_eq = np.hstack([A, np.eye(m)])
    lo_eq = np.concatenate([np.asarray(lo, dtype=float), slack_lo])
    hi_eq = np.concatenate([np.asarray(hi, dtype=float), slack_hi])
    c_eq = np.concatenate([np.asarray(c, dtype=float), np.zeros(m)])
    status, obj, x = solve_equality_form(A_eq, np.asarray(rhs, dtype=float), c_eq, lo_eq, hi_eq)
    if status != "optimal":
        return status, None, None
    return status, obj, x[:n]


def solve_equality_form(A, b, c, lo, hi):
    """Minimize c.x subject to A x = b, lo <= x <= hi (x includes slacks)."""
    m, n = A.shape
    tab = _Tableau(A, b, lo, hi)

    phase1_cost = np.zeros(n + m)
    phase1_cost[n:] = 1.0
    tab.run(phase1_cost)
    if tab.x[n:].sum() > FEAS_TOL * (1.0 + np.abs(b).max(initial=0.0)):
        return "infeasible", None, None
    tab.retire_artificials()

    phase2_cost = np.concatenate([c, np.zeros(m)])
    tab.run(phase2_cost)
    x = tab.x[:n].copy()
    return "optimal", float(c @ x), x


class _Tableau:
    """Mutable simplex state: basis, bound status, and B^-1 A."""

    def __init__(self, A, b, lo, hi):
        m, n = A.shape
        self.m, self.n = m, n
        self.b = b
        # nonbasic start: every variable sits at a finite bound
        x0 = np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0))
        resid = b - A @ x0
        sgn = np.where(resid >= 0.0, 1.0, -1.0)
        self.A = np.hstack([A, np.diag(sgn)])
        self.lo = np.concatenate([lo, np.zeros(m)])
        self.hi = np.concatenate([hi, np.full(m, np.inf)])
        self.x = np.concatenate([x0, np.abs(resid)])
        self.basis = np.arange(n, n + m)
        self.in_basis = np.zeros(n + m, dtype=bool)
        self.in_basis[self.basis] = True
        self.at_upper = np.zeros(n + m, dtype=bool)
        self.at_upper[:n] = ~np.isfinite(lo) & np.isfinite(hi)
        self.banned = np.zeros(n + m, dtype=bool)
        self.T = sgn[:, None] * self.A
        self.pivots = 0

    def run(self, costs):
        max_iter = 10_000 + 50 * (self.n + self.m)
        bland = False
        stall = 0
        last_obj = np.inf
        for _ in range(max_iter):
            rc = costs - costs[self.basis] @ self.T
            movable = ~self.in_basis & ~self.banned & (self.lo < self.hi)
            elig = movable & np.where(self.at_upper, rc > RC_TOL, rc < -RC_TOL)
            if not elig.any():
                return
            if bland:
                e = int(np.flatnonzero(elig)[0])
            else:
                score = np.where(self.at_upper, -rc, rc)
                e = int(np.argmin(np.where(elig, score, np.inf)))
            self._step(e)
            obj = costs @ self.x
            if obj < last_obj - 1e-12:
                stall = 0
                last_obj = obj
            else:
                stall += 1
                if stall > BLAND_AFTER:
                    bland = True
        raise CycleLimit(f"simplex did not converge within {max_iter} iterations")

    def _step(self, e):
        d = -1.0 if self.at_upper[e] else 1.0
        delta = -d * self.T[:, e]  # rate of change of the basic values
        xb = self.x[self.basis]
        lob = self.lo[self.basis]
        hib = self.hi[self.basis]
        tlim = np.full(self.m, np.inf)
        dec = delta < -PIVOT_TOL
        inc = delta > PIVOT_TOL
        with np.errstate(invalid="ignore"):
            tlim[dec] = (xb[dec] - lob[dec]) / -delta[dec]
            tlim[inc] = (hib[inc] - xb[inc]) / delta[inc]
        tlim = np.maximum(tlim, 0.0)  # roundoff can push a ratio slightly negative
        row = int(np.argmin(tlim))
        t_row = tlim[row]
        t_flip = self.hi[e] - self.lo[e]
        if min(t_row, t_flip) == np.inf:
            raise Unbounded("no blocking bound; LP is unbounded")
        if t_flip <= t_row:
            self.x[self.basis] = xb + t_flip * delta
            self.x[e] = self.hi[e] if d > 0 else self.lo[e]
            self.at_upper[e] = ~self.at_upper[e]
            return
        self.x[self.basis] = xb + t_row * delta
        self.x[e] += d * t_row
        leaving = self.basis[row]
        self.x[leaving] = self.lo[leaving] if delta[row] < 0 else self.hi[leaving]
        self.at_upper[leaving] = delta[row] >= 0
        self._pivot(row, e)

    def _pivot(self, row, e):
        leaving = self.basis[row]
        self.in_basis[leaving] = False
        self.in_basis[e] = True
        self.basis[row] = e
        piv_row = self.T[row] / self.T[row, e]
        col = self.T[:, e].copy()
        col[row] = 0.0  # keeps the outer-product update off the pivot row
        self.T[row] = piv_row
        self.T -= np.outer(col, piv_row)
        self.pivots += 1
        if self.pivots % REFRESH_EVERY == 0:
            self._refactor()

    def _refactor(self):
        B = self.A[:, self.basis]
        try:
            self.T = np.linalg.solve(B, self.A)
            xn = self.x.copy()
            xn[self.basis] = 0.0
            self.x[self.basis] = np.linalg.solve(B, self.b - self.A @ xn)
        except np.linalg.LinAlgError:
            raise CycleLimit("basis became numerically singular") from None

    def retire_artificials(self):
        """After phase 1: pivot zero-valued artificials out where possible,
        then pin all artificial columns so phase 2 cannot reuse them."""
        n, m = self.n, self.m
        for row in range(m):
            if self.basis[row] < n:
                continue
            candidates = np.flatnonzero(
                (np.abs(self.T[row, :n]) > 1e-8) & ~self.in_basis[:n] & ~self.banned[:n]
            )
            if candidates.size:
                self._pivot(row, int(candidates[0]))
        self.banned[n:] = True
        self.lo[n:] = 0.0
        self.hi[n:] = 0.0
        self.x[n:][~self.in_basis[n:]] = 0.0
