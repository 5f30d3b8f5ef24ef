"""Command-line front end.

Subcommands
-----------
generate   sample a scenario file from the default parameter ranges
solve      run one method on a scenario (from --config or generated inline)
sweep      run an experiment sweep and emit the results CSV
stability  replace-one verification of the stability bound, CSV report
trace      association-stage convergence traces per server count

Exit codes: 0 success, 2 validation error, 3 solver non-convergence (partial
output is still written).

Notes
-----
The average-delay column (avg_delay_s) is the mean over users of local
compute delay + uplink transmission time + edge compute delay at the solved
allocation; delay_s is the compute-delay aggregate the objective weighs.
Baseline associations honor bandwidth limits through a per-server slot cap
of ceil(N/M) users.
"""

from __future__ import annotations

import argparse
import sys

from .bench import METHODS, SweepSpec, result_row, run_method, run_sweep
from .errors import DomainError, InfeasibleDecisionError, SolverError, StageError
from .model import Scenario, Weights
from .orchestrator import SolverConfig
from .inner_solver import InnerConfig
from .assoc_solver import PenaltyConfig
from .scenario_io import (
    GenParams,
    ParseError,
    RESULT_COLUMNS,
    generate,
    load_scenario,
    save_scenario,
    save_solution,
    write_results_csv,
    write_trace_csv,
)
from .stability_lab import STABILITY_COLUMNS, report_rows, verify_as_bound

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NONCONVERGED = 3


def _add_common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", metavar="PATH", help="scenario JSON file")
    p.add_argument("--seed", type=int, default=0, help="base RNG seed")
    p.add_argument("--n", type=int, default=50, help="number of users")
    p.add_argument("--m", type=int, default=10, help="number of servers")
    p.add_argument("--weights", default=None,
                   help="wt,we,ws weighting factors (default 1,1,1)")
    p.add_argument("--restarts", type=int, default=3,
                   help="association multi-start count")
    p.add_argument("--tol", type=float, default=1e-10,
                   help="alternating-loop relative tolerance")
    p.add_argument("--max-iter", type=int, default=200,
                   help="alternating-loop iteration cap")
    p.add_argument("--out", metavar="PATH", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--jobs", type=int, default=1, help="parallel sweep workers")


def _parse_weights(text: str | None) -> tuple[float, float, float]:
    if text is None:
        return (1.0, 1.0, 1.0)
    parts = text.split(",")
    if len(parts) != 3:
        raise DomainError("--weights expects wt,we,ws")
    return tuple(float(v) for v in parts)  # type: ignore[return-value]


def _config(args) -> SolverConfig:
    inner = InnerConfig(ao_tol=args.tol, max_ao_iters=args.max_iter)
    penalty = PenaltyConfig(restarts=args.restarts, rng_seed=args.seed)
    return SolverConfig(inner=inner, penalty=penalty, seed=args.seed)


def _scenario(args) -> Scenario:
    if args.config:
        sc = load_scenario(args.config)
    else:
        wt, we, ws_ = _parse_weights(args.weights)
        sc = generate(GenParams(n_users=args.n, n_servers=args.m,
                                rng_seed=args.seed, weights=(wt, we, ws_)))
        return sc
    if args.weights is not None:
        wt, we, ws_ = _parse_weights(args.weights)
        w = sc.weights
        sc = Scenario(sc.llm, sc.users, sc.servers, sc.channel,
                      Weights(wt, we, ws_, w.t_ref, w.e_ref, w.s_ref))
    return sc


def cmd_generate(args) -> int:
    sc = _scenario(args)
    if args.out:
        save_scenario(sc, args.out)
    else:
        from .scenario_io import scenario_to_dict
        import json
        print(json.dumps(scenario_to_dict(sc), indent=1))
    return EXIT_OK


def cmd_solve(args) -> int:
    sc = _scenario(args)
    sol = run_method(sc, args.method, cfg=_config(args), seed=args.seed)
    if args.format == "json":
        if args.out:
            save_solution(sol, args.out)
        else:
            import json
            from .scenario_io import solution_to_dict
            print(json.dumps(solution_to_dict(sol), indent=1))
    else:
        rows = [result_row(sc, args.method, sol, args.seed)]
        if args.out:
            write_results_csv(args.out, rows)
        else:
            from .scenario_io import format_csv
            print(format_csv(rows, RESULT_COLUMNS), end="")
    return EXIT_OK if sol.converged else EXIT_NONCONVERGED


def cmd_sweep(args) -> int:
    from .bench import split_failures
    from .scenario_io import format_csv, _atomic_write

    seeds = tuple(range(args.seed, args.seed + args.seeds))
    values = tuple(float(v) for v in args.values.split(",")) if args.values else ()
    spec = SweepSpec(kind=args.kind, seeds=seeds, values=values,
                     n_users=args.n, n_servers=args.m, jobs=args.jobs)
    rows, trace_rows = run_sweep(spec)
    rows, failed = split_failures(rows)
    out = args.out or f"sweep_{args.kind}.csv"
    if rows:
        write_results_csv(out, rows)
        print(f"wrote {len(rows)} rows to {out}")
    if failed:
        side = out.replace(".csv", "") + ".failures.csv"
        _atomic_write(side, format_csv(failed, RESULT_COLUMNS + ["status"]))
        print(f"warning: {len(failed)} points failed; see {side}", file=sys.stderr)
    if trace_rows:
        trace_out = out if not rows else out.replace(".csv", "_traces.csv")
        write_trace_csv(trace_out, trace_rows)
        print(f"wrote {len(trace_rows)} trace rows to {trace_out}")
    return EXIT_OK


def cmd_stability(args) -> int:
    k_grid = [int(v) for v in args.k_grid.split(",")]
    a_grid = [float(v) for v in args.alpha_grid.split(",")]
    l_grid = [float(v) for v in args.l_grid.split(",")]
    reports = verify_as_bound(args.trials, k_grid, a_grid, l_grid, seed=args.seed)
    rows = report_rows(reports)
    from .scenario_io import format_csv, _atomic_write
    text = format_csv(rows, STABILITY_COLUMNS)
    if args.out:
        _atomic_write(args.out, text)
        print(f"wrote {len(rows)} trial rows to {args.out}")
    else:
        print(text, end="")
    worst = max(r.tightness for r in reports)
    print(f"zero violations across {len(reports)} cells; "
          f"max gap/bound ratio {worst:.3f}", file=sys.stderr)
    return EXIT_OK


def cmd_trace(args) -> int:
    m_values = tuple(int(v) for v in args.m_list.split(","))
    seeds = tuple(range(args.seed, args.seed + args.seeds))
    spec = SweepSpec(kind="servers", seeds=seeds, values=m_values, n_users=args.n)
    _, trace_rows = run_sweep(spec)
    out = args.out or "traces.csv"
    write_trace_csv(out, trace_rows)
    print(f"wrote {len(trace_rows)} trace rows to {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="edgesplit", description=__doc__,
                                 formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("generate", help="sample a scenario file")
    _add_common(p)
    p.set_defaults(fn=cmd_generate)

    p = sub.add_parser("solve", help="run one method on a scenario")
    _add_common(p)
    p.add_argument("--method", choices=METHODS, default="proposed")
    p.set_defaults(fn=cmd_solve)

    p = sub.add_parser("sweep", help="run an experiment sweep")
    p.add_argument("kind", choices=("default", "weight_e", "weight_t",
                                    "weight_s", "users", "servers"))
    _add_common(p)
    p.add_argument("--seeds", type=int, default=3, help="number of seeds")
    p.add_argument("--values", default=None, help="comma list of sweep values")
    p.set_defaults(fn=cmd_sweep)

    p = sub.add_parser("stability", help="verify the replace-one bound")
    _add_common(p)
    p.add_argument("--trials", type=int, default=200)
    p.add_argument("--k-grid", default="20,50,200")
    p.add_argument("--alpha-grid", default="0,0.25,0.5,0.9")
    p.add_argument("--l-grid", default="0.5,1,2")
    p.set_defaults(fn=cmd_stability)

    p = sub.add_parser("trace", help="association convergence traces")
    _add_common(p)
    p.add_argument("--m-list", default="5,10,15")
    p.add_argument("--seeds", type=int, default=3, help="number of seeds")
    p.set_defaults(fn=cmd_trace)
    return ap


def main(argv: list[str] | None = None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as e:
        return EXIT_VALIDATION if e.code not in (0, None) else EXIT_OK
    try:
        return args.fn(args)
    except (DomainError, ParseError, InfeasibleDecisionError, ValueError,
            FileNotFoundError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_VALIDATION
    except (SolverError, StageError) as e:
        print(f"solver failure: {e}", file=sys.stderr)
        return EXIT_NONCONVERGED


if __name__ == "__main__":
    sys.exit(main())
