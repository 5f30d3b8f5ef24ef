"""Reference method, comparison baselines, and experiment sweeps.

Every method funnels through the same model-evaluation path and emits one
results row with raw energy/delay/stability aggregates next to the weighted
objective.  The delay_s column is the aggregate the delay weight multiplies
inside the objective (total compute delay); avg_delay_s is the reporting
metric (mean per-user local + transmission + edge delay).

Methods
-------
proposed         full scheme: surrogate-based continuous stage + penalized
                 association with multi-start
alternating_opt  plain coordinate descent on the objective itself (no
                 surrogate), greedy association
alpha_only       optimizes the layer split only, random feasible resources
resource_only    optimizes resources only, random integer layer split
greedy_assoc     full continuous stage at the greedy max-rate association
random_assoc     full continuous stage at a random association
local_only       every layer trained on the device (stability weight forced
                 to zero: the bound diverges at the fully-local split)
edge_only        single local layer, everything else at the servers
"""

from __future__ import annotations

import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .assoc_solver import cccp_associate, greedy_association, random_association, PenaltyConfig
from .errors import DomainError
from .inner_solver import _vector_bisect, ao_solve, default_init, kkt_residual, solve_user_freq
from .model import Decision, Scenario, Weights, Workspace
from .orchestrator import SolverConfig, Solution, candidate_fill, round_alpha, solve

METHODS = (
    "proposed", "alternating_opt", "alpha_only", "resource_only",
    "greedy_assoc", "random_assoc", "local_only", "edge_only",
)


def method_scenario(scenario: Scenario, method: str) -> Scenario:
    """The scenario a method is evaluated under (local_only zeroes the
    stability weight so its objective stays finite at the full-local split)."""
    if method == "local_only":
        w = scenario.weights
        return Scenario(scenario.llm, scenario.users, scenario.servers,
                        scenario.channel,
                        Weights(w.wt, w.we, 0.0, w.t_ref, w.e_ref, w.s_ref))
    return scenario


def run_method(scenario: Scenario, method: str,
               cfg: SolverConfig | None = None, seed: int = 0) -> Solution:
    """Run one method end to end; all outputs share the Solution shape."""
    if method not in METHODS:
        raise DomainError(f"unknown method {method!r}; expected one of {METHODS}")
    cfg = cfg or SolverConfig()
    cfg = replace(cfg, seed=seed)
    sc = method_scenario(scenario, method)
    ws = Workspace(sc)
    t0 = time.perf_counter()

    if method == "proposed":
        return solve(sc, cfg)

    rng = np.random.default_rng([seed, METHODS.index(method)])
    if method == "random_assoc":
        chi = random_association(sc, rng)
    else:
        chi = greedy_association(sc)

    if method in ("greedy_assoc", "random_assoc"):
        dec, trace, _ = ao_solve(sc, chi, cfg=cfg.inner)
        dec = round_alpha(sc, dec, cfg)
        traces = [trace]
    elif method == "alternating_opt":
        dec, sweeps = plain_descent(sc, chi, cfg)
        dec = round_alpha(sc, dec, cfg)
        traces = []
    elif method == "alpha_only":
        dec = _random_resources(sc, chi, rng, cfg)
        dec.alpha = _alpha_block_exact(ws, dec)
        hi = ws.ups - 1.0 if ws.ws > 0 else ws.ups
        dec.alpha = np.clip(np.rint(dec.alpha), 1.0, hi)
        traces = []
    elif method == "resource_only":
        dec = default_init(sc, chi, cfg.inner)
        hi = int(ws.ups) - 1 if ws.ws > 0 else int(ws.ups)
        dec.alpha = rng.integers(1, hi + 1, size=ws.n).astype(float)
        dec, trace, _ = ao_solve(sc, chi, init=dec, cfg=cfg.inner, fixed_alpha=True)
        traces = [trace]
    elif method in ("local_only", "edge_only"):
        dec = default_init(sc, chi, cfg.inner)
        dec.alpha = np.full(ws.n, ws.ups if method == "local_only" else 1.0)
        dec, trace, _ = ao_solve(sc, chi, init=dec, cfg=cfg.inner, fixed_alpha=True)
        traces = [trace]

    resid = kkt_residual(sc, dec, p_min_frac=cfg.inner.p_min_frac,
                         f_min_frac=cfg.inner.f_min_frac, skip_alpha=True)
    return Solution(decision=dec, breakdown=ws.breakdown(dec), ao_traces=traces,
                    cccp_traces=[], kkt_residual=resid,
                    binarity_gap=float(np.max(dec.chi * (1 - dec.chi))),
                    outer_rounds=1,
                    converged=all(t.converged for t in traces),
                    wall_time=time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# Plain coordinate descent on the objective (the no-surrogate baseline)
# ---------------------------------------------------------------------------

def plain_descent(scenario: Scenario, chi: np.ndarray,
                  cfg: SolverConfig | None = None,
                  tol: float = 1e-9, max_sweeps: int = 60) -> tuple[Decision, int]:
    """Gauss-Seidel on H itself: exact 1-D blocks, capacity blocks by nested
    multiplier bisection on the objective's own derivatives."""
    cfg = cfg or SolverConfig()
    ws = Workspace(scenario)
    dec = default_init(scenario, chi, cfg.inner)
    active = dec.chi > 0
    h_prev = ws.objective(dec)
    sweeps = 0
    for sweeps in range(1, max_sweeps + 1):
        dec.alpha = _alpha_block_exact(ws, dec)
        dec.f_user = solve_user_freq(ws, dec, cfg.inner)
        dec.f_edge = _equality_block(ws, dec, active, kind="freq")
        dec.p = _power_block_exact(ws, dec, cfg.inner)
        if ws.we > 0:
            dec.b = _equality_block(ws, dec, active, kind="bandwidth")
        h_now = ws.objective(dec)
        if h_prev - h_now <= tol * (1.0 + abs(h_now)):
            break
        h_prev = h_now
    return dec, sweeps


def _alpha_block_exact(ws: Workspace, dec: Decision) -> np.ndarray:
    a = ws.local_per_layer(dec.f_user)
    active = dec.chi > 0
    bmat = ws.edge_per_layer(np.where(active, dec.f_edge, 0.0))
    drift = a - (dec.chi * bmat).sum(axis=1)     # constant part of dH/dalpha

    if ws.ws == 0:
        return np.where(drift >= 0, 1.0, ws.alpha_cap)

    def deriv(al):
        frac = 1.0 - al / ws.ups
        pole = 2.0 * ws.lipschitz**2 * ws.ws / (ws.k_samples * ws.ups * frac**2)
        return drift + pole

    return _vector_bisect(deriv, np.full(ws.n, 1.0), np.full(ws.n, ws.alpha_cap))


def _power_block_exact(ws: Workspace, dec: Decision, icfg) -> np.ndarray:
    if ws.we == 0:
        return dec.p.copy()
    active = dec.chi > 0
    chi_a = np.where(active, dec.chi, 0.0)
    b = np.where(active, dec.b, 1.0)
    s = ws.payload[:, None]
    import math
    ln2 = math.log(2.0)

    def deriv(p):
        gp = ws.gain * p[:, None]
        bs2 = b * ws.sigma2
        lnu = np.log1p(gp / bs2)
        val = ln2 * ws.we * s * ((gp + bs2) * lnu - gp) / (b * (gp + bs2) * lnu**2)
        return (chi_a * val).sum(axis=1)

    return _vector_bisect(deriv, icfg.p_min_frac * ws.p_max, ws.p_max.copy())


def _equality_block(ws: Workspace, dec: Decision, active: np.ndarray,
                    kind: str) -> np.ndarray:
    """Per-server equality block on H via nested bisection.

    kind="freq": allocate edge frequency; kind="bandwidth": allocate bandwidth.
    """
    import math
    ln2 = math.log(2.0)
    chi = dec.chi
    if kind == "freq":
        out = dec.f_edge.copy()
        cap_total = ws.f_max_edge
        gap = np.maximum(ws.ups - dec.alpha, 0.0)[:, None]
        relevant = active & (gap > 0)

        def slope(v):
            return (gap * (2.0 * ws.we * ws.kappa2[None, :] * v * ws.psi[:, None]
                           / ws.ce_de[None, :]
                           - ws.wt * ws.psi[:, None] / (ws.ce_de[None, :] * v**2)))
    else:
        out = dec.b.copy()
        cap_total = ws.b_max
        relevant = active
        gp = ws.gain * dec.p[:, None]
        s = ws.payload[:, None]

        def slope(v):
            u = gp / (ws.sigma2 * v)
            lnu = np.log1p(u)
            return (ws.we * ln2 * s * gp * dec.p[:, None]
                    / (ws.sigma2 * lnu**2 * (u + 1.0) * v**3)
                    - ws.we * ln2 * s * dec.p[:, None] / (lnu * v**2))

    if (ws.wt == 0 and ws.we == 0) or not np.any(relevant):
        return out
    cap_pair = np.where(relevant, cap_total[None, :] / np.where(relevant, chi, 1.0), 1.0)
    floor = 1e-13 * cap_total[None, :] * np.ones_like(out)

    def respond(mu_row):
        target = -mu_row[None, :]
        lo, hi = floor.copy(), cap_pair.copy()
        at_cap = slope(cap_pair) <= target
        at_floor = slope(floor) >= target
        v = np.clip(np.where(relevant, out, 1.0), lo, hi)
        for _ in range(60):
            g = slope(v) - target
            lo = np.where(g < 0, v, lo)
            hi = np.where(g > 0, v, hi)
            v = 0.5 * (lo + hi)
        return np.where(at_cap, cap_pair, np.where(at_floor, floor, v))

    def used(mu_row):
        return np.sum(np.where(relevant, chi * respond(mu_row), 0.0), axis=0)

    servers = np.flatnonzero(relevant.any(axis=0))
    in_servers = np.isin(np.arange(ws.m), servers)
    counts = np.maximum(relevant.sum(axis=0), 1)
    v_eq = np.broadcast_to((cap_total / counts)[None, :], chi.shape)
    sl = np.where(relevant, np.abs(slope(np.where(relevant, v_eq, 1.0))), 0.0)
    scale = np.maximum(sl.max(axis=0), 1e-300)

    mu_lo, mu_hi = -4.0 * scale, 4.0 * scale
    for _ in range(200):
        need = (used(mu_lo) < cap_total) & in_servers
        if not need.any():
            break
        mu_lo = np.where(need, mu_lo * 4.0, mu_lo)
    for _ in range(200):
        need = (used(mu_hi) > cap_total) & in_servers
        if not need.any():
            break
        mu_hi = np.where(need, mu_hi * 4.0, mu_hi)
    for _ in range(90):
        mid = 0.5 * (mu_lo + mu_hi)
        over = used(mid) > cap_total
        mu_lo = np.where(over, mid, mu_lo)
        mu_hi = np.where(over, mu_hi, mid)
    v_fin = respond(0.5 * (mu_lo + mu_hi))
    for m in servers:
        rows = relevant[:, m]
        tot = float(np.dot(chi[rows, m], v_fin[rows, m]))
        if tot > 0:
            out[rows, m] = v_fin[rows, m] * (cap_total[m] / tot)
    return out


def _random_resources(scenario: Scenario, chi: np.ndarray,
                      rng: np.random.Generator, cfg: SolverConfig) -> Decision:
    """Random feasible resources over a fixed association (for alpha_only)."""
    ws = Workspace(scenario)
    dec = default_init(scenario, chi, cfg.inner)
    dec.p = rng.uniform(cfg.inner.p_min_frac * ws.p_max, ws.p_max)
    dec.f_user = rng.uniform(0.3 * ws.f_max_user, ws.f_max_user)
    for m in range(ws.m):
        rows = np.flatnonzero(chi[:, m] > 0)
        if rows.size == 0:
            continue
        wb = rng.uniform(0.2, 1.0, size=rows.size)
        dec.b[rows, m] = ws.b_max[m] * wb / (chi[rows, m] @ wb)
        wf = rng.uniform(0.2, 1.0, size=rows.size)
        dec.f_edge[rows, m] = ws.f_max_edge[m] * wf / (chi[rows, m] @ wf)
    return dec


# ---------------------------------------------------------------------------
# Rows and sweeps
# ---------------------------------------------------------------------------

def result_row(scenario: Scenario, method: str, sol: Solution, seed: int) -> dict:
    sc = method_scenario(scenario, method)
    ws = Workspace(sc)
    energy, delay, stability, avg_delay = ws.raw_metrics(sol.decision)
    w = sc.weights
    return {
        "seed": seed, "method": method, "N": ws.n, "M": ws.m,
        "omega_t": w.wt, "omega_e": w.we, "omega_s": w.ws,
        "energy_J": energy, "delay_s": delay, "stability_bound": stability,
        "objective": sol.objective,
        "outer_rounds": sol.outer_rounds,
        "ao_iters": sol.ao_iterations(),
        "cccp_iters": sol.cccp_iterations(),
        "kkt_residual": sol.kkt_residual,
        "runtime_ms": sol.wall_time * 1000.0,
        "avg_delay_s": avg_delay,
    }


@dataclass
class SweepSpec:
    """One experiment sweep: which methods, which axis, which seeds."""

    kind: str                       # default | weight_e | weight_t | weight_s | users | servers
    seeds: tuple = (0, 1, 2)
    values: tuple = ()              # sweep axis (weights, user counts, server counts)
    n_users: int = 50
    n_servers: int = 10
    methods: tuple = ()
    jobs: int = 1
    gen_overrides: dict = field(default_factory=dict)

    def __post_init__(self):
        defaults = {
            "default": METHODS,
            "weight_e": ("proposed", "alternating_opt", "alpha_only", "resource_only"),
            "weight_t": ("proposed", "alternating_opt", "alpha_only", "resource_only"),
            "weight_s": ("proposed", "alternating_opt", "alpha_only", "resource_only"),
            "users": ("proposed", "greedy_assoc", "random_assoc"),
            "servers": ("proposed",),
        }
        if self.kind not in defaults:
            raise DomainError(f"unknown sweep kind {self.kind!r}")
        if not self.methods:
            self.methods = defaults[self.kind]
        if not self.values:
            self.values = {
                "default": (1.0,),
                "weight_e": tuple(float(v) for v in range(1, 11)),
                "weight_t": tuple(float(v) for v in range(1, 11)),
                "weight_s": tuple(float(v) for v in range(1, 11)),
                "users": (20, 40, 60, 80, 100),
                "servers": (5, 10, 15),
            }[self.kind]


def _sweep_scenario(spec: SweepSpec, seed: int, value) -> Scenario:
    from .scenario_io import GenParams, generate
    n, m = spec.n_users, spec.n_servers
    if spec.kind == "users":
        n = int(value)
    elif spec.kind == "servers":
        m = int(value)
    sc = generate(GenParams(n_users=n, n_servers=m, rng_seed=seed,
                            **spec.gen_overrides))
    if spec.kind.startswith("weight_"):
        w = sc.weights
        wt, we, ws_ = w.wt, w.we, w.ws
        if spec.kind == "weight_e":
            we = float(value)
        elif spec.kind == "weight_t":
            wt = float(value)
        else:
            ws_ = float(value)
        sc = Scenario(sc.llm, sc.users, sc.servers, sc.channel,
                      Weights(wt, we, ws_, w.t_ref, w.e_ref, w.s_ref))
    return sc


def _run_task(args):
    spec, seed, value, method = args
    scenario = _sweep_scenario(spec, seed, value)
    try:
        sol = run_method(scenario, method, seed=seed)
        row = result_row(scenario, method, sol, seed)
        row["status"] = "ok"
    except Exception as e:  # partial failures become rows, the sweep continues
        row = {c: "" for c in _result_columns()}
        row.update({"seed": seed, "method": method,
                    "N": scenario.n_users, "M": scenario.n_servers,
                    "status": f"error: {type(e).__name__}"})
    return row


def _result_columns():
    from .scenario_io import RESULT_COLUMNS
    return RESULT_COLUMNS


def run_sweep(spec: SweepSpec) -> tuple[list[dict], list[dict]]:
    """Run every (seed, value, method) point; returns (result_rows, trace_rows).

    Rows come back in deterministic order regardless of worker count.  A
    failed point does not stop the sweep: it is kept as a row carrying a
    "status" note (the fixed results schema has no status column, so callers
    split such rows into a failure sidecar before writing the CSV).
    """
    if spec.kind == "servers":
        return [], convergence_traces(spec)

    tasks = [(spec, seed, value, method)
             for seed in spec.seeds for value in spec.values
             for method in spec.methods]
    if spec.jobs > 1:
        with ProcessPoolExecutor(max_workers=spec.jobs) as pool:
            rows = list(pool.map(_run_task, tasks))
    else:
        rows = [_run_task(t) for t in tasks]
    for row in rows:
        if row.get("status") == "ok":
            row.pop("status")
    return rows, []


def split_failures(rows: list[dict]) -> tuple[list[dict], list[dict]]:
    """(clean_rows, failed_rows): failed rows keep their status note."""
    clean = [r for r in rows if "status" not in r]
    failed = [r for r in rows if "status" in r]
    return clean, failed


def convergence_traces(spec: SweepSpec) -> list[dict]:
    """Association-stage convergence traces for each server count."""
    trace_rows = []
    for value in spec.values:
        for seed in spec.seeds:
            scenario = _sweep_scenario(spec, seed, value)
            ws = Workspace(scenario)
            chi = greedy_association(scenario)
            dec, _, _ = ao_solve(scenario, chi)
            filled = candidate_fill(scenario, dec)
            _, trace = cccp_associate(scenario, filled, chi,
                                      PenaltyConfig(rng_seed=seed))
            for i in range(trace.iterations):
                trace_rows.append({
                    "seed": seed, "method": "proposed",
                    "N": ws.n, "M": ws.m, "iteration": i + 1,
                    "rho": trace.rho[i],
                    "penalized_objective": trace.penalized[i],
                    "assoc_objective": trace.assoc_cost[i],
                    "binarity_gap": trace.binarity_gap[i],
                })
    return trace_rows
