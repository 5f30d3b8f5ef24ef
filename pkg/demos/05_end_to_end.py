"""Full planning run: both stages alternating, integer rounding, diagnostics.

Solves one default-sized instance end to end, prints the outer objective
sequence, and round-trips the solution through its JSON form.
"""

import json
import os
import tempfile

import numpy as np

from edgesplit.model import Workspace
from edgesplit.orchestrator import solve
from edgesplit.scenario_io import (
    GenParams,
    generate,
    load_solution,
    save_scenario,
    save_solution,
)

sc = generate(GenParams(n_users=50, n_servers=10, rng_seed=42))
sol = solve(sc)
ws = Workspace(sc)

print(f"objective   : {sol.objective:.6f}")
print(f"outer rounds: {sol.outer_rounds}  objective per round: "
      f"{[round(v, 6) for v in sol.outer_objectives]}")
print(f"alternating iterations: {sol.ao_iterations()}  "
      f"association LP steps: {sol.cccp_iterations()}")
print(f"kkt residual: {sol.kkt_residual:.2e}   binarity gap: {sol.binarity_gap}")
print(f"wall time   : {sol.wall_time:.2f}s")

energy, delay, stability, avg_delay = ws.raw_metrics(sol.decision)
print(f"\nraw metrics : {energy:.1f} J total energy, {avg_delay:.1f} s average "
      f"per-user delay, stability bound {stability:.4f}")
loads = sol.decision.chi.sum(axis=0).astype(int)
print(f"server loads: {loads.tolist()}")

with tempfile.TemporaryDirectory() as tmp:
    sc_path = os.path.join(tmp, "scenario.json")
    sol_path = os.path.join(tmp, "solution.json")
    save_scenario(sc, sc_path)
    save_solution(sol, sol_path)
    back = load_solution(sol_path)
    same = np.array_equal(back.decision.alpha, sol.decision.alpha)
    print(f"\nserialized scenario: {os.path.getsize(sc_path)} bytes, "
          f"solution: {os.path.getsize(sol_path)} bytes, round-trip intact: {same}")
