"""Overall scheme: alternate the continuous stage and the association stage.

Round r fixes the association and drives (alpha, p, b, f_user, f_edge) to a
stationary point of the weighted objective, then freezes those and re-decides
the association by penalized descent with multi-start.  A candidate
association is only accepted if it does not worsen the exactly-evaluated
objective, so the outer sequence is non-increasing.  After the outer loop
converges, the layer splits are rounded to integers once and a final
continuous pass re-optimizes the resources at the frozen integer splits.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace

import numpy as np

from .assoc_solver import PenaltyConfig, greedy_association, multistart_associate
from .errors import StageError
from .inner_solver import AoTrace, InnerConfig, ao_solve, default_init, kkt_residual
from .model import Decision, ObjectiveBreakdown, Scenario, Workspace, check_decision


@dataclass
class SolverConfig:
    """Everything the end-to-end solve needs: tolerances, caps, seeds."""

    inner: InnerConfig = field(default_factory=InnerConfig)
    penalty: PenaltyConfig = field(default_factory=PenaltyConfig)
    outer_tol: float = 1e-5
    max_outer_rounds: int = 20
    seed: int = 0

    def __post_init__(self):
        if not self.outer_tol > 0:
            raise ValueError("outer_tol must be > 0")
        if self.max_outer_rounds < 1:
            raise ValueError("max_outer_rounds must be >= 1")


@dataclass
class Solution:
    """Final decision (integer splits, binary association) plus diagnostics."""

    decision: Decision
    breakdown: ObjectiveBreakdown
    ao_traces: list
    cccp_traces: list
    kkt_residual: float
    binarity_gap: float
    outer_rounds: int
    converged: bool
    wall_time: float
    outer_objectives: list = field(default_factory=list)

    @property
    def objective(self) -> float:
        return self.breakdown.total

    def ao_iterations(self) -> int:
        return sum(t.iterations for t in self.ao_traces)

    def cccp_iterations(self) -> int:
        return sum(t.iterations for t in self.cccp_traces)


def candidate_fill(scenario: Scenario, dec: Decision) -> Decision:
    """Price every pair at the fair per-server share for the association stage.

    Allocations frozen from the continuous stage sum exactly to each server's
    capacity, which would let the association LP admit no incoming user at
    all; and tiny 1/N placeholder rates would make every move look terrible.
    Pricing all pairs at capacity / ceil(N/M) instead turns the capacity rows
    into a per-server user-slot budget under which current assignments,
    swaps and rebalances are all comparable.  The accepted association is
    re-evaluated exactly after the next continuous stage rebalances anyway.
    """
    ws = Workspace(scenario)
    dec = dec.copy()
    slots = -(-ws.n // ws.m)
    dec.b = np.tile(ws.b_max / slots, (ws.n, 1))
    dec.f_edge = np.tile(ws.f_max_edge / slots, (ws.n, 1))
    return dec


def round_alpha(scenario: Scenario, dec: Decision,
                cfg: SolverConfig | None = None) -> Decision:
    """Round layer splits to integers, then re-optimize resources once.

    With a positive stability weight the fully-local split is excluded
    (the bound diverges there); with zero weight it is allowed.
    """
    cfg = cfg or SolverConfig()
    ws = Workspace(scenario)
    dec = dec.copy()
    hi = ws.ups - 1.0 if ws.ws > 0 else ws.ups
    dec.alpha = np.clip(np.rint(dec.alpha), 1.0, hi)
    polished, _, _ = ao_solve(scenario, dec.chi, init=dec, cfg=cfg.inner,
                              fixed_alpha=True)
    return polished


def solve(scenario: Scenario, cfg: SolverConfig | None = None) -> Solution:
    """Run the full scheme on one scenario."""
    cfg = cfg or SolverConfig()
    ws = Workspace(scenario)
    t0 = time.perf_counter()

    try:
        chi = greedy_association(scenario)
    except Exception as e:  # pragma: no cover - defensive
        raise StageError("init", e) from e

    dec = default_init(scenario, chi, cfg.inner)
    pcfg = replace(cfg.penalty, rng_seed=cfg.seed)
    ao_traces: list[AoTrace] = []
    cccp_traces: list = []
    outer_objectives = []
    h_prev = None
    converged = False
    rounds = 0

    for rounds in range(1, cfg.max_outer_rounds + 1):
        try:
            dec, trace, _ = ao_solve(scenario, chi, init=dec, cfg=cfg.inner)
        except Exception as e:
            raise StageError("continuous", e) from e
        ao_traces.append(trace)
        h_now = ws.objective(dec)

        if ws.m > 1:
            try:
                filled = candidate_fill(scenario, dec)
                chi_new, traces = multistart_associate(scenario, filled, pcfg,
                                                       chi_init=chi)
                cccp_traces.extend(traces)
            except Exception as e:
                raise StageError("association", e) from e
            if np.any(chi_new != chi):
                # The proposal was priced at frozen allocations, which cannot
                # see the per-server equalities; accept it only if it still
                # wins after the continuous stage rebalances them.
                cand = filled.copy()
                cand.chi = chi_new
                try:
                    dec_new, trace_new, _ = ao_solve(scenario, chi_new,
                                                     init=cand, cfg=cfg.inner)
                except Exception as e:
                    raise StageError("continuous", e) from e
                h_new = ws.objective(dec_new)
                if h_new < h_now:
                    ao_traces.append(trace_new)
                    chi, dec, h_now = chi_new, dec_new, h_new

        outer_objectives.append(h_now)
        if h_prev is not None and abs(h_prev - h_now) <= cfg.outer_tol * (1.0 + abs(h_now)):
            converged = True
            break
        h_prev = h_now

    try:
        final = round_alpha(scenario, dec, cfg)
    except Exception as e:
        raise StageError("rounding", e) from e

    resid = kkt_residual(scenario, final, p_min_frac=cfg.inner.p_min_frac,
                         f_min_frac=cfg.inner.f_min_frac, skip_alpha=True)
    gap = float(np.max(final.chi * (1.0 - final.chi)))
    violations = check_decision(scenario, final)
    if violations:
        raise StageError("validation", RuntimeError("; ".join(map(str, violations))))
    breakdown = ws.breakdown(final)
    return Solution(decision=final, breakdown=breakdown, ao_traces=ao_traces,
                    cccp_traces=cccp_traces, kkt_residual=resid,
                    binarity_gap=gap, outer_rounds=rounds,
                    converged=converged, wall_time=time.perf_counter() - t0,
                    outer_objectives=outer_objectives)
