import json
import os
import subprocess
import sys

import pytest

from edgesplit.cli import EXIT_NONCONVERGED, EXIT_OK, EXIT_VALIDATION, main
from edgesplit.scenario_io import RESULT_COLUMNS, TRACE_COLUMNS, load_scenario


class TestGenerate:
    def test_writes_loadable_scenario(self, tmp_path):
        out = str(tmp_path / "sc.json")
        assert main(["generate", "--n", "4", "--m", "2", "--seed", "3",
                     "--out", out]) == EXIT_OK
        sc = load_scenario(out)
        assert sc.n_users == 4 and sc.n_servers == 2

    def test_weights_flag(self, tmp_path):
        out = str(tmp_path / "sc.json")
        main(["generate", "--n", "2", "--m", "1", "--weights", "2,3,4",
              "--out", out])
        sc = load_scenario(out)
        assert (sc.weights.wt, sc.weights.we, sc.weights.ws) == (2.0, 3.0, 4.0)

    def test_bad_weights_exit_2(self):
        assert main(["generate", "--weights", "1,2"]) == EXIT_VALIDATION


class TestSolve:
    def test_csv_row(self, tmp_path):
        sc_path = str(tmp_path / "sc.json")
        main(["generate", "--n", "3", "--m", "2", "--seed", "1", "--out", sc_path])
        out = str(tmp_path / "row.csv")
        code = main(["solve", "--config", sc_path, "--method", "greedy_assoc",
                     "--seed", "1", "--out", out])
        assert code == EXIT_OK
        header, row = open(out).read().splitlines()
        assert header == ",".join(RESULT_COLUMNS)
        assert row.split(",")[1] == "greedy_assoc"

    def test_json_solution(self, tmp_path):
        sc_path = str(tmp_path / "sc.json")
        main(["generate", "--n", "2", "--m", "2", "--seed", "2", "--out", sc_path])
        out = str(tmp_path / "sol.json")
        assert main(["solve", "--config", sc_path, "--format", "json",
                     "--out", out, "--seed", "2"]) == EXIT_OK
        data = json.loads(open(out).read())
        assert "decision" in data and "kkt_residual" in data

    def test_missing_scenario_exit_2(self):
        assert main(["solve", "--config", "/does/not/exist.json"]) == EXIT_VALIDATION

    def test_nonconvergence_exit_3(self, tmp_path):
        sc_path = str(tmp_path / "sc.json")
        main(["generate", "--n", "4", "--m", "2", "--seed", "4", "--out", sc_path])
        out = str(tmp_path / "row.csv")
        # one alternating iteration cannot converge; partial output still lands
        code = main(["solve", "--config", sc_path, "--max-iter", "1",
                     "--method", "greedy_assoc", "--out", out, "--seed", "4"])
        assert code == EXIT_NONCONVERGED
        assert os.path.exists(out)


class TestSweepAndTrace:
    def test_sweep_writes_csv(self, tmp_path):
        out = str(tmp_path / "rows.csv")
        code = main(["sweep", "users", "--n", "4", "--m", "2", "--seeds", "1",
                     "--values", "3,4", "--out", out])
        assert code == EXIT_OK
        lines = open(out).read().splitlines()
        assert lines[0] == ",".join(RESULT_COLUMNS)
        assert len(lines) == 1 + 2 * 3   # two user counts x three methods

    def test_trace_writes_csv(self, tmp_path):
        out = str(tmp_path / "traces.csv")
        code = main(["trace", "--n", "6", "--m-list", "2,3", "--seeds", "1",
                     "--out", out])
        assert code == EXIT_OK
        lines = open(out).read().splitlines()
        assert lines[0] == ",".join(TRACE_COLUMNS)
        assert len(lines) > 2

    def test_default_sweep_runs_all_methods(self, tmp_path):
        out = str(tmp_path / "rows.csv")
        code = main(["sweep", "default", "--n", "4", "--m", "2", "--seeds", "1",
                     "--out", out])
        assert code == EXIT_OK
        lines = open(out).read().splitlines()
        methods = {line.split(",")[1] for line in lines[1:]}
        assert len(methods) == 8


class TestStability:
    def test_report(self, tmp_path):
        out = str(tmp_path / "stab.csv")
        code = main(["stability", "--trials", "10", "--k-grid", "20",
                     "--alpha-grid", "0.5", "--l-grid", "1", "--out", out])
        assert code == EXIT_OK
        lines = open(out).read().splitlines()
        assert lines[0] == "k,alpha,L,trial,max_gap,bound,ratio"
        assert len(lines) == 11


class TestConsoleScript:
    def test_entry_point_runs(self, tmp_path):
        out = str(tmp_path / "sc.json")
        proc = subprocess.run(
            [sys.executable, "-m", "edgesplit.cli", "generate", "--n", "2",
             "--m", "1", "--out", out],
            capture_output=True, text=True)
        assert proc.returncode == 0
        assert load_scenario(out).n_users == 2
