"""Small benchmark sweep, results CSV, and the four figures.

Runs the method comparison and a short energy-weight sweep at demo scale,
writes the results and trace CSVs, then invokes the figure package's CLI on
them (install it from plots/ first).
"""

import os
import shutil
import subprocess
import sys

from edgesplit.bench import METHODS, SweepSpec, run_method, result_row, run_sweep
from edgesplit.scenario_io import GenParams, generate, write_results_csv, write_trace_csv

OUT = os.path.join(os.path.dirname(__file__), "_output")
os.makedirs(OUT, exist_ok=True)

rows = []
print("method comparison on two seeds (12 users, 3 servers):")
for seed in (0, 1):
    sc = generate(GenParams(n_users=12, n_servers=3, rng_seed=seed))
    for method in METHODS:
        sol = run_method(sc, method, seed=seed)
        row = result_row(sc, method, sol, seed)
        rows.append(row)
        if seed == 0:
            print(f"  {method:16s} objective {row['objective']:9.4f}  "
                  f"energy {row['energy_J']:12.1f} J")

print("\nenergy-weight sweep 1..6 (reference method only):")
spec = SweepSpec(kind="weight_e", seeds=(0,), values=tuple(float(v) for v in range(1, 7)),
                 methods=("proposed",), n_users=12, n_servers=3)
sweep_rows, _ = run_sweep(spec)
for r in sweep_rows:
    print(f"  omega_e = {r['omega_e']:3.0f}: energy {r['energy_J']:10.1f} J")
rows += sweep_rows

trace_spec = SweepSpec(kind="servers", seeds=(0,), values=(2, 3), n_users=12)
_, trace_rows = run_sweep(trace_spec)

results_csv = os.path.join(OUT, "results.csv")
traces_csv = os.path.join(OUT, "traces.csv")
write_results_csv(results_csv, rows)
write_trace_csv(traces_csv, trace_rows)
print(f"\nwrote {results_csv} ({len(rows)} rows) and {traces_csv} "
      f"({len(trace_rows)} rows)")

if shutil.which("plots") is None:
    print("figure package not installed (pip install -e plots/) -- skipping rendering")
    sys.exit(0)
for fig, src in (("fig2", results_csv), ("fig3", results_csv),
                 ("fig4", traces_csv), ("fig5", results_csv)):
    out = os.path.join(OUT, f"{fig}.png")
    subprocess.run(["plots", "--csv", src, "--fig", fig, "--out", out], check=True)
print(f"figures under {OUT}")
