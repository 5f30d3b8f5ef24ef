"""Convex inner solver and the alternating loop for the fixed-association stage.

For fixed association and fixed auxiliaries the surrogate K is convex and
nearly separable: the layer split, user frequency and transmit power decouple
per user, while bandwidth and edge frequency couple users only through one
per-server capacity equality each.  Every block is therefore solved exactly:

  * layer split    -- closed form (no stability weight) or monotone-derivative
                      bisection on [1, alpha_cap];
  * user freq      -- closed-form cube root, clamped to its box;
  * transmit power -- derivative-sign bisection on [p_min, p_max];
  * edge freq      -- per-server Lagrange-multiplier bisection with a
                      closed-form per-user response (quadratic in f^3);
  * bandwidth      -- per-server multiplier bisection; the per-user response
                      is transcendental in b and is refined by safeguarded
                      Newton steps warm-started across multiplier trials.

The outer loop alternates closed-form auxiliary updates with these block
sweeps; the surrogate value never increases, and at convergence the gradients
of the surrogate and of the true objective coincide, giving a stationary
point certified by a projected-gradient residual.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field

import numpy as np

from .errors import InfeasibleDecisionError, SolverError
from .fpcore import (
    EDGE_EPS,
    LN2,
    AuxVars,
    aux_optimal,
    grad_objective,
    surrogate_value,
)
from .model import Decision, Scenario, Workspace, check_decision

DEFAULT_P_MIN_FRAC = 1e-2
DEFAULT_F_MIN_FRAC = 1e-6


@dataclass
class InnerConfig:
    """Tolerances and caps for the inner convex solver and the alternating loop."""

    block_tol: float = 1e-12
    ao_tol: float = 1e-10
    max_block_sweeps: int = 100
    max_ao_iters: int = 200
    bisect_tol: float = 1e-12
    p_min_frac: float = DEFAULT_P_MIN_FRAC
    f_min_frac: float = DEFAULT_F_MIN_FRAC
    init_p: str = "floor"  # "floor" | "midpoint"

    def __post_init__(self):
        for name in ("block_tol", "ao_tol", "bisect_tol"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be > 0")
        if self.max_block_sweeps < 1 or self.max_ao_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class AoTrace:
    """Per-iteration record of the alternating loop."""

    k_values: list = field(default_factory=list)   # interleaved surrogate values
    h_values: list = field(default_factory=list)   # objective after each aux update
    sweeps: list = field(default_factory=list)     # block sweeps per inner solve
    iterations: int = 0
    converged: bool = False
    wall_time: float = 0.0


def _vector_bisect(deriv, lo: np.ndarray, hi: np.ndarray, iters: int = 90) -> np.ndarray:
    """Componentwise root of increasing 1-D derivatives, projected onto [lo, hi]."""
    lo0, hi0 = lo.copy(), hi.copy()
    at_lo = deriv(lo0) >= 0
    at_hi = deriv(hi0) <= 0
    lo, hi = lo0.copy(), hi0.copy()
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        pos = deriv(mid) > 0
        hi = np.where(pos, mid, hi)
        lo = np.where(pos, lo, mid)
    out = 0.5 * (lo + hi)
    out[at_hi] = hi0[at_hi]
    out[at_lo] = lo0[at_lo]
    return out


def _illinois(fun, lo, hi, f_lo, f_hi, iters: int = 50, rtol: float = 1e-14):
    """Vectorized Illinois root finder for decreasing functions.

    Maintains f(lo) >= 0 >= f(hi) componentwise; converges superlinearly where
    plain bisection would burn a fixed budget.  Returns the midpoint of the
    final bracket.
    """
    lo, hi = lo.copy(), hi.copy()
    f_lo, f_hi = f_lo.copy(), f_hi.copy()
    side = np.zeros(lo.shape, dtype=int)    # +1: lo moved last, -1: hi moved last
    for _ in range(iters):
        width = hi - lo
        scale = np.maximum(np.abs(lo), np.abs(hi)) + 1e-300
        live = width > rtol * scale
        if not live.any():
            break
        denom = f_lo - f_hi
        frac = np.where(denom != 0, f_lo / np.where(denom != 0, denom, 1.0), 0.5)
        mid = lo + np.clip(frac, 1e-3, 1 - 1e-3) * width
        f_mid = fun(np.where(live, mid, lo))
        go_lo = f_mid > 0
        stale_hi = live & go_lo & (side == 1)      # hi untouched twice running
        stale_lo = live & ~go_lo & (side == -1)
        new_lo = np.where(live & go_lo, mid, lo)
        new_f_lo = np.where(live & go_lo, f_mid, f_lo)
        new_hi = np.where(live & ~go_lo, mid, hi)
        new_f_hi = np.where(live & ~go_lo, f_mid, f_hi)
        new_f_hi = np.where(stale_hi, 0.5 * new_f_hi, new_f_hi)
        new_f_lo = np.where(stale_lo, 0.5 * new_f_lo, new_f_lo)
        lo, hi, f_lo, f_hi = new_lo, new_hi, new_f_lo, new_f_hi
        side = np.where(live, np.where(go_lo, 1, -1), side)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# Block solvers (all vectorized; each returns the exact block minimizer)
# ---------------------------------------------------------------------------

def solve_alpha(ws: Workspace, dec: Decision, aux: AuxVars) -> np.ndarray:
    """Exact minimizer of the layer-split block on [1, alpha_cap]."""
    active = dec.chi > 0
    qbar = np.where(active, dec.chi * aux.q, 0.0).sum(axis=1)
    z = aux.z

    if ws.ws == 0:
        denom = z + qbar
        out = np.where(denom > 0,
                       ws.ups * qbar / np.where(denom > 0, denom, 1.0),
                       dec.alpha)
        return np.clip(out, 1.0, ws.alpha_cap)

    def deriv(a):
        frac = 1.0 - a / ws.ups
        pole = 2.0 * ws.lipschitz**2 * ws.ws / (ws.k_samples * ws.ups * frac**2)
        return pole + 2.0 * z * a - 2.0 * qbar * (ws.ups - a)

    return _vector_bisect(deriv, np.full(ws.n, 1.0), np.full(ws.n, ws.alpha_cap))


def solve_user_freq(ws: Workspace, dec: Decision, cfg: InnerConfig) -> np.ndarray:
    """Closed-form user-frequency block: cube root of the delay/energy balance."""
    if ws.wt == 0 and ws.we == 0:
        return ws.f_max_user.copy()
    f_min = cfg.f_min_frac * ws.f_max_user
    coef = 2.0 * ws.kappa1 * ws.we
    f_star = np.where(coef > 0,
                      np.cbrt(ws.wt / np.where(coef > 0, coef, 1.0)),
                      ws.f_max_user)
    return np.clip(f_star, f_min, ws.f_max_user)


def solve_edge_freq(ws: Workspace, dec: Decision, aux: AuxVars,
                    cfg: InnerConfig, edge_active: np.ndarray) -> np.ndarray:
    """Per-server multiplier bisection for the edge-frequency equality blocks.

    The per-user stationarity condition is a quadratic in f^3, so the response
    to a trial multiplier is closed form; the multiplier is bisected until the
    chi-weighted allocations exhaust each server's budget.
    """
    f_edge = dec.f_edge.copy()
    if (ws.wt == 0 and ws.we == 0) or not np.any(edge_active):
        return f_edge
    chi = dec.chi
    k2 = ws.kappa2[None, :]
    c2 = np.broadcast_to(k2 * ws.we, chi.shape)
    ratio2 = (ws.ce_de[None, :] / ws.psi[:, None]) ** 2

    # Budget left after pairs with no edge work keep their current allocation.
    inactive = (chi > 0) & ~edge_active
    budget = ws.f_max_edge - np.sum(np.where(inactive, chi * f_edge, 0.0), axis=0)
    servers = np.flatnonzero(edge_active.any(axis=0) & (budget > 0))
    if servers.size == 0:
        return f_edge
    f_cap = 1e12 * np.max(ws.f_max_edge)

    def response(mu_row: np.ndarray) -> np.ndarray:
        """f(mu) for every pair, one trial multiplier per server."""
        mu = mu_row[None, :]
        beta = c2 * ws.wt + 2.0 * aux.q * mu * ratio2
        with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
            x = np.where(
                c2 > 0,
                (-beta + np.sqrt(beta**2 + 8.0 * c2**2 * ws.wt**2))
                / np.where(c2 > 0, 4.0 * c2**2, 1.0),
                np.where(mu > 0,
                         ws.wt**2 / np.where(mu > 0, 2.0 * aux.q * mu * ratio2, 1.0),
                         np.inf),
            )
        return np.minimum(np.cbrt(np.maximum(x, 0.0)), f_cap)

    def used(mu_row: np.ndarray) -> np.ndarray:
        f = response(mu_row)
        return np.sum(np.where(edge_active, chi * f, 0.0), axis=0)

    in_servers = np.isin(np.arange(ws.m), servers)
    safe_budget = np.where(in_servers, budget, 1.0)

    def gap(mu_row):
        return np.where(in_servers, used(mu_row) - safe_budget, 0.0)

    scale = _edge_slope_scale(ws, aux, chi, edge_active)
    lo, hi = -scale, scale.copy()
    g_lo = gap(lo)
    for _ in range(300):
        need = g_lo < 0
        if not need.any():
            break
        lo = np.where(need, lo * 4.0, lo)
        g_lo = gap(lo)
    else:
        raise SolverError("edge-frequency multiplier bracket (low side) not found")
    g_hi = gap(hi)
    for _ in range(300):
        need = g_hi > 0
        if not need.any():
            break
        hi = np.where(need, hi * 4.0, hi)
        g_hi = gap(hi)
    else:
        raise SolverError("edge-frequency multiplier bracket (high side) not found")

    f_new = response(_illinois(gap, lo, hi, g_lo, g_hi))

    for m in servers:
        rows = edge_active[:, m]
        tot = float(np.dot(chi[rows, m], f_new[rows, m]))
        if tot <= 0:
            raise SolverError(f"edge-frequency bisection degenerate on server {m}")
        f_edge[rows, m] = f_new[rows, m] * (budget[m] / tot)
    return f_edge


def _edge_slope_scale(ws, aux, chi, edge_active):
    counts = np.maximum(edge_active.sum(axis=0), 1)
    fe = np.broadcast_to((ws.f_max_edge / counts)[None, :], chi.shape)
    k2 = ws.kappa2[None, :]
    bb = (ws.psi[:, None] / ws.ce_de[None, :])**2 * (
        -ws.wt**2 / fe**3 + k2 * ws.we * ws.wt + 2.0 * (k2 * ws.we)**2 * fe**3)
    slope = np.where(edge_active, np.abs(bb) / (2.0 * aux.q), 0.0)
    top = slope.max(axis=0)
    return np.where(top > 0, top, 1.0)


def solve_power(ws: Workspace, dec: Decision, aux: AuxVars, cfg: InnerConfig) -> np.ndarray:
    """Derivative-sign bisection of the transmit-power block on [p_min, p_max]."""
    if ws.we == 0:
        return dec.p.copy()
    active = dec.chi > 0
    chi_a = np.where(active, dec.chi, 0.0)
    b = np.where(active, dec.b, 1.0)
    p_min = cfg.p_min_frac * ws.p_max
    s = ws.payload[:, None]

    def deriv(p):
        u = ws.gain * p[:, None] / (ws.sigma2 * b)
        lnu = np.log1p(u)
        quad = 2.0 * s**2 * aux.nu * p[:, None]
        recip = (LN2**2 * ws.gain
                 / (2.0 * b**3 * aux.nu * ws.sigma2 * (u + 1.0) * lnu**3))
        return (chi_a * ws.we * (quad - recip)).sum(axis=1)

    return _vector_bisect(deriv, p_min.copy(), ws.p_max.copy())


def solve_bandwidth(ws: Workspace, dec: Decision, aux: AuxVars, cfg: InnerConfig) -> np.ndarray:
    """Per-server multiplier bisection for the bandwidth equality blocks."""
    if ws.we == 0:
        return dec.b.copy()
    b_out = dec.b.copy()
    chi = dec.chi
    active = chi > 0
    gp = ws.gain * dec.p[:, None]
    s2 = ws.sigma2
    b_hi_cap = np.where(active, ws.b_max[None, :] / np.where(active, chi, 1.0), 1.0)
    b_floor = 1e-13 * ws.b_max[None, :] * np.ones_like(b_out)

    def slope(b):
        """chi-free derivative of the rate-reciprocal term: negative, increasing."""
        u = gp / (s2 * b)
        lnu = np.log1p(u)
        inner = gp / (s2 * lnu * (u + 1.0) * b) - 1.0
        return ws.we * LN2**2 / (2.0 * aux.nu * lnu**2 * b**3) * inner

    def slope_deriv(b):
        u = gp / (s2 * b)
        lnu = np.log1p(u)
        r = b * lnu / LN2
        rp = (lnu - u / (u + 1.0)) / LN2
        rpp = -(u**2) / (LN2 * b * (u + 1.0) ** 2)
        return ws.we * (3.0 * rp**2 - rpp * r) / (2.0 * r**4 * aux.nu)

    slope_at_cap = slope(b_hi_cap)
    slope_at_floor = slope(b_floor)

    def response(mu_row, warm):
        """Per-pair root of slope(b) = -mu via safeguarded Newton in [floor, cap].

        Roots at or beyond a bound are snapped to it exactly, otherwise servers
        with a single user would approach their capacity only geometrically and
        the multiplier bracket could never close.
        """
        target = -mu_row[None, :]
        at_cap = slope_at_cap <= target
        at_floor = slope_at_floor >= target
        b = np.clip(warm, b_floor, b_hi_cap)
        lo, hi = b_floor.copy(), b_hi_cap.copy()
        for _ in range(12):
            g = slope(b) - target
            lo = np.where(g < 0, b, lo)
            hi = np.where(g > 0, b, hi)
            with np.errstate(invalid="ignore", divide="ignore"):
                step = b - g / slope_deriv(b)
            inside = np.isfinite(step) & (step > lo) & (step < hi)
            b_new = np.where(inside, step, 0.5 * (lo + hi))
            if np.max(np.abs(b_new - b) / np.maximum(b, 1e-300)) < 1e-15:
                b = b_new
                break
            b = b_new
        return np.where(at_cap, b_hi_cap, np.where(at_floor, b_floor, b))

    counts = np.maximum(active.sum(axis=0), 1)
    b_eq = np.broadcast_to((ws.b_max / counts)[None, :], chi.shape)
    sl_eq = np.where(active, np.abs(slope(np.where(active, b_eq, 1.0))), 0.0)
    scale = np.maximum(sl_eq.max(axis=0), 1e-300)
    servers = np.flatnonzero(active.any(axis=0))
    in_servers = np.isin(np.arange(ws.m), servers)

    state = {"warm": np.where(active, b_out, 1.0)}

    def gap_log(lam):
        b = response(np.exp(lam), state["warm"])
        state["warm"] = b
        tot = np.sum(np.where(active, chi * b, 0.0), axis=0)
        return np.where(in_servers, tot - ws.b_max, 0.0)

    lam_lo = np.log(1e-12 * scale)
    lam_hi = np.log(4.0 * scale)
    g_lo = gap_log(lam_lo)
    for _ in range(300):
        need = g_lo < 0
        if not need.any():
            break
        lam_lo = np.where(need, lam_lo - np.log(4.0), lam_lo)
        g_lo = gap_log(lam_lo)
    else:
        raise SolverError("bandwidth multiplier bracket (low side) not found")
    g_hi = gap_log(lam_hi)
    for _ in range(300):
        need = g_hi > 0
        if not need.any():
            break
        lam_hi = np.where(need, lam_hi + np.log(4.0), lam_hi)
        g_hi = gap_log(lam_hi)
    else:
        raise SolverError("bandwidth multiplier bracket (high side) not found")

    lam = _illinois(gap_log, lam_lo, lam_hi, g_lo, g_hi)
    b_mid = response(np.exp(lam), state["warm"])

    for m in servers:
        rows = active[:, m]
        tot = float(np.dot(chi[rows, m], b_mid[rows, m]))
        if tot <= 0:
            raise SolverError(f"bandwidth bisection degenerate on server {m}")
        b_out[rows, m] = b_mid[rows, m] * (ws.b_max[m] / tot)
    return b_out


# ---------------------------------------------------------------------------
# Inner convex solve and the alternating loop
# ---------------------------------------------------------------------------

def solve_inner(scenario_or_ws, dec: Decision, aux: AuxVars,
                cfg: InnerConfig | None = None,
                fixed_alpha: bool = False) -> tuple[Decision, int]:
    """Block-coordinate minimization of the surrogate at fixed auxiliaries.

    Returns the minimizer and the number of sweeps used.  The surrogate value
    never increases across sweeps; stops once the relative decrease falls
    below ``block_tol`` or at the sweep cap.
    """
    ws = scenario_or_ws if isinstance(scenario_or_ws, Workspace) else Workspace(scenario_or_ws)
    cfg = cfg or InnerConfig()
    dec = dec.copy()
    active = dec.chi > 0
    if fixed_alpha:
        edge_active = active & ((ws.ups - dec.alpha)[:, None] > EDGE_EPS)
    else:
        edge_active = active

    k_prev = surrogate_value(ws, dec, aux)
    sweeps = 0
    for sweeps in range(1, cfg.max_block_sweeps + 1):
        if not fixed_alpha:
            dec.alpha = solve_alpha(ws, dec, aux)
        dec.f_user = solve_user_freq(ws, dec, cfg)
        dec.f_edge = solve_edge_freq(ws, dec, aux, cfg, edge_active)
        dec.p = solve_power(ws, dec, aux, cfg)
        dec.b = solve_bandwidth(ws, dec, aux, cfg)
        k_now = surrogate_value(ws, dec, aux)
        if k_prev - k_now <= cfg.block_tol * (1.0 + abs(k_now)):
            break
        k_prev = k_now
    return dec, sweeps


def default_init(scenario: Scenario, chi: np.ndarray,
                 cfg: InnerConfig | None = None) -> Decision:
    """Midpoint/equal-split starting decision for a given association.

    Power starts at its floor: the uplink energy is strictly increasing in
    power, so the floor is a dominant choice and any start above it only adds
    iterations that crawl back down.
    """
    ws = Workspace(scenario)
    cfg = cfg or InnerConfig()
    chi = np.asarray(chi, dtype=float)
    alpha = np.full(ws.n, 0.5 * (1.0 + ws.alpha_cap))
    if cfg.init_p == "midpoint":
        p = 0.5 * (cfg.p_min_frac * ws.p_max + ws.p_max)
    else:
        p = cfg.p_min_frac * ws.p_max
    f_user = 0.5 * ws.f_max_user

    b = np.tile(ws.b_max / ws.n, (ws.n, 1))
    f_edge = np.tile(ws.f_max_edge / ws.n, (ws.n, 1))
    counts = chi.sum(axis=0)
    for m in np.flatnonzero(counts > 0):
        rows = chi[:, m] > 0
        b[rows, m] = ws.b_max[m] / counts[m]
        f_edge[rows, m] = ws.f_max_edge[m] / counts[m]
    return Decision(alpha, p, b, f_user, f_edge, chi)


def ao_solve(scenario: Scenario, chi: np.ndarray,
             init: Decision | None = None,
             cfg: InnerConfig | None = None,
             fixed_alpha: bool = False) -> tuple[Decision, AoTrace, float]:
    """Alternating loop at fixed association: aux update <-> inner convex solve.

    Returns (decision, trace, kkt_residual).  The interleaved surrogate-value
    sequence in the trace is non-increasing; convergence is declared when the
    decrease between consecutive aux updates drops below ``ao_tol * (1+|K|)``.
    """
    cfg = cfg or InnerConfig()
    ws = Workspace(scenario)
    dec = init.copy() if init is not None else default_init(scenario, chi, cfg)
    violations = check_decision(scenario, dec)
    if violations:
        raise InfeasibleDecisionError(violations)

    trace = AoTrace()
    t0 = time.perf_counter()
    k_prev = None
    for it in range(1, cfg.max_ao_iters + 1):
        aux = aux_optimal(ws, dec)
        k_at_aux = surrogate_value(ws, dec, aux)   # equals the true objective here
        trace.k_values.append(k_at_aux)
        trace.h_values.append(k_at_aux)
        trace.iterations = it
        if k_prev is not None and abs(k_prev - k_at_aux) < cfg.ao_tol * (1.0 + abs(k_at_aux)):
            trace.converged = True
            break
        k_prev = k_at_aux
        dec, sweeps = solve_inner(ws, dec, aux, cfg, fixed_alpha=fixed_alpha)
        trace.sweeps.append(sweeps)
        trace.k_values.append(surrogate_value(ws, dec, aux))
    trace.wall_time = time.perf_counter() - t0
    resid = kkt_residual(scenario, dec, p_min_frac=cfg.p_min_frac,
                         f_min_frac=cfg.f_min_frac, skip_alpha=fixed_alpha)
    return dec, trace, resid


def kkt_residual(scenario: Scenario, dec: Decision,
                 p_min_frac: float = DEFAULT_P_MIN_FRAC,
                 f_min_frac: float = DEFAULT_F_MIN_FRAC,
                 skip_alpha: bool = False) -> float:
    """Projected-gradient stationarity residual of the objective at a decision.

    Gradients are taken in relative coordinates (each variable scaled by its
    box width or capacity) so blocks are comparable.  Interior coordinates
    contribute their absolute scaled gradient, bound-active coordinates only
    their sign violation, and each per-server equality block contributes the
    midrange deviation of its per-user multiplier estimates.
    """
    ws = Workspace(scenario)
    g = grad_objective(ws, dec)
    active = dec.chi > 0
    edge_active = active & ((ws.ups - dec.alpha)[:, None] > EDGE_EPS)
    res = 0.0

    def box_res(grad, x, lo, hi, width):
        scaled = grad * width
        tol = 1e-7 * width
        out = np.abs(scaled)
        out = np.where(x <= lo + tol, np.maximum(0.0, -scaled), out)
        out = np.where(x >= hi - tol, np.maximum(0.0, scaled), out)
        return float(np.max(out)) if out.size else 0.0

    if not skip_alpha:
        res = max(res, box_res(g.d_alpha, dec.alpha,
                               np.full(ws.n, 1.0), np.full(ws.n, ws.alpha_cap),
                               np.full(ws.n, ws.ups)))
    res = max(res, box_res(g.d_p, dec.p, p_min_frac * ws.p_max, ws.p_max, ws.p_max))
    res = max(res, box_res(g.d_f_user, dec.f_user,
                           f_min_frac * ws.f_max_user, ws.f_max_user, ws.f_max_user))

    for m in range(ws.m):
        rows = active[:, m]
        if np.any(rows) and ws.we > 0:
            v = g.d_b[rows, m] / dec.chi[rows, m] * ws.b_max[m]
            res = max(res, 0.5 * float(v.max() - v.min()))
        rows_e = edge_active[:, m]
        if np.any(rows_e) and (ws.wt > 0 or ws.we > 0):
            v = g.d_f_edge[rows_e, m] / dec.chi[rows_e, m] * ws.f_max_edge[m]
            res = max(res, 0.5 * float(v.max() - v.min()))
    return res
