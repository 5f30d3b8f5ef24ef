"""User-to-server association via exact penalty and convex-concave iterations.

With the continuous variables held fixed, the objective is linear in the
association matrix chi, so the relaxed problem (row sums one, capacity rows,
box [0,1]) is an LP.  Binarity is enforced by adding the concave penalty
rho * sum chi(1-chi) to the objective; each CCCP step replaces the penalty by
its tangent at the current iterate (a linear over-estimator, so the penalized
objective never increases) and solves the resulting LP.  If the minimizer is
insufficiently binary the penalty weight is escalated and the iteration
continues from the current point.  Multi-start repeats the whole procedure
from seeded random feasible associations and keeps the best objective.

Capacity rows use the decision's candidate bandwidth/frequency allocations as
inequalities: with allocations frozen from the previous continuous stage the
per-server equalities are generically unattainable in chi alone, and the next
continuous stage rebalances the allocations over the chosen associations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import SolverError
from .model import Decision, Scenario, Workspace
from .simplex import solve_lp

MOVE_TOL = 1e-8


# Initial penalty weight as a fraction of the largest finite cost.  Starting
# small matters: a penalty at full cost scale makes every binary start a fixed
# point of the tangent LP, so the very first step could never leave a bad
# greedy/random start.  Small rho makes the first step the relaxed LP optimum,
# after which doubling drives the iterate binary.
RHO_INIT_FRAC = 1e-3


@dataclass
class PenaltyConfig:
    """Penalty schedule, iteration caps and restart count for the chi stage."""

    rho_init: float | None = None      # default: RHO_INIT_FRAC * max finite |cost|
    rho_growth: float = 2.0
    binarity_tol: float = 1e-6
    max_cccp_iters: int = 60
    restarts: int = 3
    rng_seed: int = 0

    def __post_init__(self):
        if self.rho_init is not None and not self.rho_init > 0:
            raise ValueError("rho_init must be > 0")
        if not self.rho_growth > 1:
            raise ValueError("rho_growth must be > 1")
        if not 0 < self.binarity_tol < 0.25:
            raise ValueError("binarity_tol must lie in (0, 0.25)")
        if self.max_cccp_iters < 1 or self.restarts < 1:
            raise ValueError("iteration caps and restarts must be >= 1")


@dataclass
class CccpTrace:
    """Per-iteration record of one penalized descent run."""

    rho: list = field(default_factory=list)
    penalized: list = field(default_factory=list)
    assoc_cost: list = field(default_factory=list)
    binarity_gap: list = field(default_factory=list)
    movement: list = field(default_factory=list)
    iterations: int = 0
    converged: bool = False
    final_gap: float = 0.0
    max_fractional: tuple = ()


def assoc_linear_costs(scenario: Scenario, dec: Decision) -> np.ndarray:
    """Per-pair cost of assigning user n to server m at the frozen continuous
    variables: uplink energy plus the edge share of compute delay/energy.

    Pairs with zero uplink rate (or no candidate allocation) get +inf and are
    excluded from the association LP.
    """
    ws = Workspace(scenario)
    r = ws.rates(dec.p, dec.b)
    cost = np.full((ws.n, ws.m), np.inf)
    ok = (r > 0) & (dec.f_edge > 0)
    uplink = np.zeros_like(r)
    payload_power = np.broadcast_to((ws.payload * dec.p)[:, None], r.shape)
    uplink[ok] = payload_power[ok] / r[ok]
    edge = ws.edge_per_layer(np.where(ok, dec.f_edge, 0.0))
    layers = (ws.ups - dec.alpha)[:, None]
    cost[ok] = (ws.we * uplink + layers * edge)[ok]
    return cost


def assoc_constant(scenario: Scenario, dec: Decision) -> float:
    """chi-independent part of the objective at the frozen continuous variables."""
    ws = Workspace(scenario)
    local = float(np.dot(dec.alpha, ws.local_per_layer(dec.f_user)))
    if ws.ws > 0:
        local += ws.ws * float(np.sum(ws.stability_bounds(dec.alpha)))
    return local


def assoc_objective(costs: np.ndarray, chi: np.ndarray) -> float:
    """sum chi * cost, +inf when any weight sits on a forbidden pair."""
    on_forbidden = (chi > 0) & ~np.isfinite(costs)
    if np.any(on_forbidden):
        return float("inf")
    return float(np.sum(np.where(chi > 0, chi * costs, 0.0)))


def linearize_penalty(chi_prev: np.ndarray) -> tuple[np.ndarray, float]:
    """First-order expansion of sum chi(chi-1) at chi_prev.

    Returns (slope, constant): slope = 2 chi_prev - 1 per entry and constant
    = -sum chi_prev^2, so the expansion is sum slope*chi + constant.  Being a
    tangent from below of a convex function, its NEGATIVE dominates the
    concave binarity penalty sum chi(1-chi) everywhere on [0,1] and touches it
    at chi_prev, which is what makes each penalized LP step a descent step.
    """
    chi_prev = np.asarray(chi_prev, dtype=float)
    slope = 2.0 * chi_prev - 1.0
    constant = -float(np.sum(chi_prev**2))
    return slope, constant


def penalty_value(chi: np.ndarray) -> float:
    return float(np.sum(chi * (1.0 - chi)))


class AssocLp:
    """The association LP structure: row sums one, two capacity rows per
    server, box [0,1].  Built once per cost matrix shape; re-solves under new
    costs reuse the previous basis."""

    def __init__(self, costs: np.ndarray, b_coef: np.ndarray, f_coef: np.ndarray,
                 b_max: np.ndarray, f_max: np.ndarray):
        n, m = costs.shape
        allowed = np.isfinite(costs)
        if not np.all(allowed.any(axis=1)):
            user = int(np.flatnonzero(~allowed.any(axis=1))[0])
            raise SolverError(f"user {user} has no reachable server")
        self.shape = (n, m)
        self.pairs = np.argwhere(allowed)
        nv = len(self.pairs)
        self.a_eq = np.zeros((n, nv))
        self.a_ub = np.zeros((2 * m, nv))
        for j, (i, k) in enumerate(self.pairs):
            self.a_eq[i, j] = 1.0
            self.a_ub[k, j] = b_coef[i, k]
            self.a_ub[m + k, j] = f_coef[i, k]
        self.b_eq = np.ones(n)
        self.b_ub = np.concatenate([b_max, f_max])
        self.upper = np.ones(nv)
        self._warm = None

    def solve(self, costs: np.ndarray) -> np.ndarray:
        c = costs[self.pairs[:, 0], self.pairs[:, 1]]
        res = solve_lp(c, self.a_eq, self.b_eq, self.a_ub, self.b_ub,
                       upper=self.upper, warm=self._warm)
        if res.status != "optimal":
            raise SolverError(
                f"association LP infeasible (phase-1 residual {res.infeasibility:.3e})")
        self._warm = res.basis
        chi = np.zeros(self.shape)
        chi[self.pairs[:, 0], self.pairs[:, 1]] = res.x
        return np.clip(chi, 0.0, 1.0)


def solve_assoc_lp(costs: np.ndarray, b_coef: np.ndarray, f_coef: np.ndarray,
                   b_max: np.ndarray, f_max: np.ndarray) -> np.ndarray:
    """One association LP solve (fresh structure; see AssocLp for re-solves)."""
    return AssocLp(costs, b_coef, f_coef, b_max, f_max).solve(costs)


def _check_relaxed_feasible(chi, b_coef, f_coef, b_max, f_max):
    if np.any(chi < -1e-9) or np.any(chi > 1 + 1e-9):
        raise SolverError("association start outside [0,1]")
    if np.max(np.abs(chi.sum(axis=1) - 1.0)) > 1e-9:
        raise SolverError("association start violates the per-user row sum")
    used_b = (chi * b_coef).sum(axis=0)
    used_f = (chi * f_coef).sum(axis=0)
    if np.any(used_b > b_max * (1 + 1e-8)) or np.any(used_f > f_max * (1 + 1e-8)):
        raise SolverError("association start violates a capacity row")


def round_binary(chi: np.ndarray, costs: np.ndarray, b_coef: np.ndarray,
                 f_coef: np.ndarray, b_max: np.ndarray, f_max: np.ndarray) -> np.ndarray:
    """Row-argmax rounding with a capacity repair pass.

    Overflowing servers shed their smallest-regret users to the next-cheapest
    server with room; gives up (returning the best effort) after n*m moves.
    """
    n, m = chi.shape
    out = np.zeros_like(chi)
    rows = np.arange(n)
    pick = np.argmax(np.where(np.isfinite(costs), chi, -np.inf), axis=1)
    out[rows, pick] = 1.0

    for _ in range(n * m):
        used_b = (out * b_coef).sum(axis=0)
        used_f = (out * f_coef).sum(axis=0)
        over_b = used_b - b_max
        over_f = used_f - f_max
        bad = np.flatnonzero((over_b > b_max * 1e-9) | (over_f > f_max * 1e-9))
        if bad.size == 0:
            return out
        k = int(bad[np.argmax(np.maximum(over_b[bad] / b_max[bad],
                                         over_f[bad] / f_max[bad]))])
        users = np.flatnonzero(out[:, k] > 0)
        best_move = None
        for i in users:
            for k2 in np.argsort(costs[i]):
                if k2 == k or not np.isfinite(costs[i, k2]):
                    continue
                if (used_b[k2] + b_coef[i, k2] <= b_max[k2] * (1 + 1e-12)
                        and used_f[k2] + f_coef[i, k2] <= f_max[k2] * (1 + 1e-12)):
                    regret = costs[i, k2] - costs[i, k]
                    if best_move is None or regret < best_move[0]:
                        best_move = (regret, i, int(k2))
                    break
        if best_move is None:
            break
        _, i, k2 = best_move
        out[i, k] = 0.0
        out[i, k2] = 1.0
    return out


def cccp_associate(scenario: Scenario, dec: Decision, chi_init: np.ndarray,
                   cfg: PenaltyConfig | None = None) -> tuple[np.ndarray, CccpTrace]:
    """Penalized descent to a (near-)binary association from one start."""
    cfg = cfg or PenaltyConfig()
    ws = Workspace(scenario)
    costs = assoc_linear_costs(scenario, dec)
    b_coef, f_coef = dec.b, dec.f_edge
    b_max, f_max = ws.b_max, ws.f_max_edge
    chi = np.asarray(chi_init, dtype=float).copy()
    _check_relaxed_feasible(chi, b_coef, f_coef, b_max, f_max)

    finite = costs[np.isfinite(costs)]
    if cfg.rho_init is not None:
        rho = cfg.rho_init
    else:
        rho = max(RHO_INIT_FRAC * float(np.abs(finite).max()), 1e-12)
    trace = CccpTrace()

    lp = AssocLp(costs, b_coef, f_coef, b_max, f_max)
    lp_costs = np.where(np.isfinite(costs), costs, np.inf)
    stalled = 0
    gap_at_escalation = None
    stuck_escalations = 0
    for it in range(1, cfg.max_cccp_iters + 1):
        slope, _ = linearize_penalty(chi)
        chi_new = lp.solve(np.where(np.isfinite(lp_costs), lp_costs - rho * slope, np.inf))
        movement = float(np.max(np.abs(chi_new - chi)))
        chi = chi_new
        gap = float(np.max(chi * (1.0 - chi)))
        pen_now = assoc_objective(costs, chi) + rho * penalty_value(chi)
        trace.rho.append(rho)
        trace.penalized.append(pen_now)
        trace.assoc_cost.append(assoc_objective(costs, chi))
        trace.binarity_gap.append(gap)
        trace.movement.append(movement)
        trace.iterations = it
        # Ties between equal-value vertices can keep the iterate moving with a
        # flat penalized objective; treat two flat steps as settled at this rho.
        if len(trace.penalized) >= 2 and abs(trace.penalized[-2] - pen_now) <= 1e-12 * (1.0 + abs(pen_now)):
            stalled += 1
        else:
            stalled = 0
        if movement < MOVE_TOL or stalled >= 2:
            stalled = 0
            if gap <= cfg.binarity_tol:
                trace.converged = True
                break
            # Capacity-locked fractional vertices survive any penalty weight
            # (no single exchange is feasible); stop escalating once the gap
            # has not moved across three weight increases and let the rounding
            # pass finish the job.
            if gap_at_escalation is not None and abs(gap - gap_at_escalation) < 1e-9:
                stuck_escalations += 1
                if stuck_escalations >= 3:
                    break
            else:
                stuck_escalations = 0
            gap_at_escalation = gap
            rho *= cfg.rho_growth

    trace.final_gap = float(np.max(chi * (1.0 - chi)))
    if not trace.converged:
        worst = np.unravel_index(np.argmax(chi * (1.0 - chi)), chi.shape)
        trace.max_fractional = (int(worst[0]), int(worst[1]), float(chi[worst]))

    chi_bin = round_binary(chi, costs, b_coef, f_coef, b_max, f_max)
    return chi_bin, trace


def multistart_associate(scenario: Scenario, dec: Decision,
                         cfg: PenaltyConfig | None = None,
                         chi_init: np.ndarray | None = None
                         ) -> tuple[np.ndarray, list[CccpTrace]]:
    """Run the penalized descent from several feasible starts, keep the best.

    The first start is ``chi_init`` (or the greedy max-rate association);
    the remaining ``restarts - 1`` are seeded random feasible associations.
    Deterministic for a fixed rng_seed.
    """
    cfg = cfg or PenaltyConfig()
    costs = assoc_linear_costs(scenario, dec)
    starts = [chi_init if chi_init is not None else greedy_association(scenario, dec)]
    for i in range(cfg.restarts - 1):
        rng = np.random.default_rng([cfg.rng_seed, i])
        starts.append(random_association(scenario, rng, dec))

    best_chi, best_val, traces = None, np.inf, []
    for chi0 in starts:
        try:
            chi_bin, trace = cccp_associate(scenario, dec, chi0, cfg)
        except SolverError:
            continue
        traces.append(trace)
        val = assoc_objective(costs, chi_bin)
        if val < best_val:
            best_chi, best_val = chi_bin, val
    if best_chi is None:
        raise SolverError("no association start produced a feasible result")
    return best_chi, traces


# ---------------------------------------------------------------------------
# Baseline association builders
# ---------------------------------------------------------------------------

def _slot_cap(n: int, m: int) -> int:
    return -(-n // m)


def greedy_association(scenario: Scenario, dec: Decision | None = None) -> np.ndarray:
    """Each user takes the highest-rate server that still has a user slot.

    Bandwidth limitation is proxied by a per-server slot cap of ceil(N/M)
    users; candidate rates use the decision's allocations when given, else
    an equal bandwidth split at full power.
    """
    ws = Workspace(scenario)
    if dec is not None:
        r = ws.rates(dec.p, dec.b)
    else:
        b = np.tile(ws.b_max / ws.n, (ws.n, 1))
        r = ws.rates(ws.p_max, b)
    cap = _slot_cap(ws.n, ws.m)
    load = np.zeros(ws.m, dtype=int)
    chi = np.zeros((ws.n, ws.m))
    order = np.argsort(-r.max(axis=1), kind="stable")
    for n in order:
        ranked = np.argsort(-r[n], kind="stable")
        for m in ranked:
            if load[m] < cap:
                chi[n, m] = 1.0
                load[m] += 1
                break
    return chi


def random_association(scenario: Scenario, rng: np.random.Generator,
                       dec: Decision | None = None) -> np.ndarray:
    """Uniformly random server per user, honoring the same slot cap."""
    ws = Workspace(scenario)
    cap = _slot_cap(ws.n, ws.m)
    load = np.zeros(ws.m, dtype=int)
    chi = np.zeros((ws.n, ws.m))
    for n in rng.permutation(ws.n):
        open_servers = np.flatnonzero(load < cap)
        m = int(rng.choice(open_servers))
        chi[n, m] = 1.0
        load[m] += 1
    return chi
