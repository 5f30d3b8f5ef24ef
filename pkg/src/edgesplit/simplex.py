"""Dense two-phase simplex with upper-bounded variables.

Solves   min c.x   s.t.  A_eq x = b_eq,  A_ub x <= b_ub,  0 <= x <= u.

Written for the association subproblems (transportation-like: one equality
row per user, two capacity rows per server, box [0,1]) where the instance is
at most a few thousand variables by ~150 rows, so a dense revised iteration
with fresh basis solves is plenty fast.  Rows are equilibrated before solving
because capacity rows carry coefficients many orders of magnitude larger than
the assignment rows.

Phase 1 drives artificial variables on every row to zero (their bounds are
then frozen at zero so they can never re-enter); phase 2 optimizes the true
cost from the feasible basis.  A caller re-solving the same constraint matrix
under a new cost vector can pass the previous basis back in, which skips
phase 1 entirely and typically finishes in a handful of pivots.  Degenerate
stretches switch the pricing rule to Bland's to rule out cycling.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import SolverError


@dataclass
class LpResult:
    status: str                # "optimal" | "infeasible"
    x: np.ndarray
    objective: float
    infeasibility: float = 0.0
    basis: tuple = ()          # pass back via warm= to re-solve with new costs


def solve_lp(c, a_eq=None, b_eq=None, a_ub=None, b_ub=None, upper=None,
             tol: float = 1e-9, max_iter: int | None = None,
             warm: tuple | None = None) -> LpResult:
    """Two-phase bounded-variable simplex; returns a vertex-optimal solution."""
    c = np.asarray(c, dtype=float)
    n = c.size
    a_eq = np.zeros((0, n)) if a_eq is None else np.atleast_2d(np.asarray(a_eq, float))
    b_eq = np.zeros(0) if b_eq is None else np.atleast_1d(np.asarray(b_eq, float))
    a_ub = np.zeros((0, n)) if a_ub is None else np.atleast_2d(np.asarray(a_ub, float))
    b_ub = np.zeros(0) if b_ub is None else np.atleast_1d(np.asarray(b_ub, float))
    u = np.full(n, np.inf) if upper is None else np.asarray(upper, dtype=float)

    # Row equilibration, then slacks for the inequality rows.
    a_all = np.vstack([a_eq, a_ub])
    b_all = np.concatenate([b_eq, b_ub])
    m = a_all.shape[0]
    row_scale = np.maximum(np.abs(a_all).max(axis=1, initial=0.0), 1e-300)
    a_all = a_all / row_scale[:, None]
    b_all = b_all / row_scale

    n_slack = a_ub.shape[0]
    slack_cols = np.zeros((m, n_slack))
    for i in range(n_slack):
        slack_cols[a_eq.shape[0] + i, i] = 1.0

    # Flip rows so every right-hand side is nonnegative, then add artificials.
    flip = b_all < 0
    a_all[flip] *= -1.0
    b_all[flip] *= -1.0
    slack_cols[flip] *= -1.0

    cost_scale = max(np.abs(c).max(initial=0.0), 1.0)
    a = np.hstack([a_all, slack_cols, np.eye(m)])
    bounds = np.concatenate([u, np.full(n_slack, np.inf), np.full(m, np.inf)])
    n_total = n + n_slack + m
    art = np.arange(n + n_slack, n_total)

    basis = None
    at_upper = None
    if warm is not None:
        w_basis, w_upper = warm
        if len(w_basis) == m:
            basis = np.asarray(w_basis, dtype=int).copy()
            at_upper = np.asarray(w_upper, dtype=bool).copy()
            bounds_w = bounds.copy()
            bounds_w[art] = 0.0
            try:
                x = _point(a, b_all, bounds_w, basis, at_upper)
                feas_tol = 1e-7 * (1.0 + np.abs(b_all).max(initial=0.0))
                if np.any(x < -feas_tol) or np.any(x - bounds_w > feas_tol):
                    basis = None
            except np.linalg.LinAlgError:
                basis = None

    if basis is None:
        basis = art.copy()
        at_upper = np.zeros(n_total, dtype=bool)
        phase1_cost = np.zeros(n_total)
        phase1_cost[art] = 1.0
        basis, at_upper = _iterate(a, b_all, phase1_cost, bounds, basis, at_upper,
                                   tol, max_iter or 200 * (m + n_total))
        x = _point(a, b_all, bounds, basis, at_upper)
        infeas = float(x[art].sum())
        if infeas > tol * (1.0 + np.abs(b_all).max(initial=0.0)):
            return LpResult("infeasible", x[:n], np.nan, infeasibility=infeas)

    # Freeze artificials at zero for phase 2.
    bounds[art] = 0.0
    at_upper[art] = False
    phase2_cost = np.zeros(n_total)
    phase2_cost[:n] = c / cost_scale
    basis, at_upper = _iterate(a, b_all, phase2_cost, bounds, basis, at_upper,
                               tol, max_iter or 200 * (m + n_total))
    x = _point(a, b_all, bounds, basis, at_upper)
    return LpResult("optimal", x[:n], float(np.dot(c, x[:n])),
                    basis=(basis.copy(), at_upper.copy()))


def _point(a, b, bounds, basis, at_upper):
    n_total = a.shape[1]
    x = np.zeros(n_total)
    nonbasic_up = at_upper.copy()
    nonbasic_up[basis] = False
    upper_idx = np.flatnonzero(nonbasic_up)
    x[upper_idx] = bounds[upper_idx]
    nb_contrib = a[:, upper_idx] @ x[upper_idx] if upper_idx.size else 0.0
    if len(basis):
        x[basis] = np.linalg.solve(a[:, basis], b - nb_contrib)
    return x


def _iterate(a, b, cost, bounds, basis, at_upper, tol, max_iter):
    m, n_total = a.shape
    at_upper = at_upper.copy()
    basis = basis.copy()
    is_basic = np.zeros(n_total, dtype=bool)
    is_basic[basis] = True
    at_upper[basis] = False
    degen_streak = 0
    bland = False

    b_inv = np.linalg.inv(a[:, basis])
    since_refactor = 0

    for _ in range(max_iter):
        upper_idx = np.flatnonzero(at_upper & ~is_basic)
        rhs = b - (a[:, upper_idx] @ bounds[upper_idx] if upper_idx.size else 0.0)
        xb = b_inv @ rhs
        y = cost[basis] @ b_inv

        rc = cost - y @ a
        movable = ~is_basic & (bounds > 0)
        cand_low = movable & ~at_upper & (rc < -tol)
        cand_up = movable & at_upper & (rc > tol)
        candidates = np.flatnonzero(cand_low | cand_up)
        if candidates.size == 0:
            return basis, at_upper

        if bland:
            j = int(candidates[0])
        else:
            j = int(candidates[np.argmax(np.abs(rc[candidates]))])
        to_upper_dir = bool(at_upper[j])       # entering decreases from its upper bound

        w = b_inv @ a[:, j]
        d = -w if to_upper_dir else w          # x_B changes by -t*d as t grows

        # Ratio test: a basic variable falls to zero or rises to its upper
        # bound, or the entering variable flips to its own other bound.
        t_best = bounds[j]
        leave = -1
        leave_to_upper = False
        ub = bounds[basis]
        with np.errstate(divide="ignore", invalid="ignore"):
            t_zero = np.where(d > tol, xb / d, np.inf)
            t_up = np.where((d < -tol) & np.isfinite(ub), (ub - xb) / (-d), np.inf)
        i_zero = int(np.argmin(t_zero)) if m else -1
        i_up = int(np.argmin(t_up)) if m else -1
        if m and t_zero[i_zero] < t_best - 1e-15:
            t_best, leave, leave_to_upper = float(t_zero[i_zero]), i_zero, False
        if m and t_up[i_up] < t_best - 1e-15:
            t_best, leave, leave_to_upper = float(t_up[i_up]), i_up, True

        if not np.isfinite(t_best):
            raise SolverError("unbounded direction in simplex")
        t_best = max(t_best, 0.0)
        degen_streak = degen_streak + 1 if t_best < tol else 0
        bland = degen_streak > 2 * m + 10

        if leave < 0:
            at_upper[j] = not at_upper[j]      # bound flip, basis unchanged
            continue
        out = basis[leave]
        is_basic[out] = False
        at_upper[out] = leave_to_upper
        basis[leave] = j
        is_basic[j] = True
        at_upper[j] = False

        # Product-form update of the basis inverse; refactorize periodically.
        piv = w[leave]
        if abs(piv) < 1e-11 or since_refactor >= 60:
            b_inv = np.linalg.inv(a[:, basis])
            since_refactor = 0
        else:
            v = -w / piv
            v[leave] = 1.0 / piv - 1.0
            b_inv = b_inv + np.outer(v, b_inv[leave])
            since_refactor += 1
    raise SolverError("simplex iteration cap exceeded")
