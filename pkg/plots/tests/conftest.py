import numpy as np
import pytest

from edgesplit_plots.schema import RESULT_COLUMNS, TRACE_COLUMNS


def _result_row(seed, method, n=50, m=10, wt=1.0, we=1.0, ws=1.0,
                energy=1e4, delay=1e5, stab=0.01, avg_delay=2e3):
    return {
        "seed": seed, "method": method, "N": n, "M": m,
        "omega_t": wt, "omega_e": we, "omega_s": ws,
        "energy_J": energy, "delay_s": delay, "stability_bound": stab,
        "objective": 3.0, "outer_rounds": 2, "ao_iters": 12, "cccp_iters": 4,
        "kkt_residual": 1e-7, "runtime_ms": 900.0, "avg_delay_s": avg_delay,
    }


def write_csv(path, rows, columns):
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(repr(row[c]) if isinstance(row[c], float)
                              else str(row[c]) for c in columns))
    path.write_text("\n".join(lines) + "\n")


@pytest.fixture
def results_csv(tmp_path):
    """Synthetic results covering the bar, weight-sweep, and user-sweep figures."""
    rng = np.random.default_rng(0)
    rows = []
    for seed in range(3):
        for method, scale in (("proposed", 1.0), ("edge_only", 1.2),
                              ("local_only", 30.0), ("alternating_opt", 1.1),
                              ("alpha_only", 2.0), ("resource_only", 8.0),
                              ("greedy_assoc", 1.15), ("random_assoc", 1.5)):
            stab = float("inf") if method == "local_only" else 0.01 * scale
            ws = 0.0 if method == "local_only" else 1.0
            rows.append(_result_row(seed, method, ws=ws,
                                    energy=1e4 * scale, delay=1e5 * scale,
                                    stab=stab, avg_delay=2e3 * scale))
        for we in range(1, 11):
            for method in ("proposed", "alternating_opt"):
                rows.append(_result_row(seed, method, we=float(we),
                                        energy=1e4 / we**0.6 + rng.uniform(0, 10)))
        for n in (20, 40, 60, 80, 100):
            for method in ("proposed", "greedy_assoc", "random_assoc"):
                rows.append(_result_row(seed, method, n=n,
                                        energy=150.0 * n, avg_delay=30.0 * n))
    path = tmp_path / "results.csv"
    write_csv(path, rows, RESULT_COLUMNS)
    return str(path)


@pytest.fixture
def traces_csv(tmp_path):
    rows = []
    for m in (5, 10, 15):
        for seed in (0, 1):
            pen = 10.0 * m
            for it in range(1, 6 + m // 5):
                pen *= 0.7
                rows.append({
                    "seed": seed, "method": "proposed", "N": 100, "M": m,
                    "iteration": it, "rho": 0.01,
                    "penalized_objective": pen, "assoc_objective": pen * 0.98,
                    "binarity_gap": max(0.25 - 0.05 * it, 0.0),
                })
    path = tmp_path / "traces.csv"
    write_csv(path, rows, TRACE_COLUMNS)
    return str(path)
