import json
import subprocess
import sys
from pathlib import Path

import pytest

from chargeplan.cli import main
from chargeplan.evcec import load_solution
from chargeplan.instance import load
from chargeplan.report import parse_csv

SRC = Path(__file__).resolve().parent.parent / "src"


def run_cli(args, **kw):
    """Run the CLI in-process, capturing stdout; returns (exit_code, stdout)."""
    import io
    from contextlib import redirect_stdout

    buf = io.StringIO()
    with redirect_stdout(buf):
        try:
            code = main(args)
        except SystemExit as exc:  # argparse errors
            code = exc.code
    return code, buf.getvalue()


class TestGenerate:
    def test_preset_small_model_size(self, tmp_path):
        out = tmp_path / "inst.json"
        code, _ = run_cli(["generate", "--preset", "small", "--mj", "10",
                           "--seed", "7", "--out", str(out)])
        assert code == 0
        inst = load(out)
        from chargeplan.evcec import build_evcec

        assert build_evcec(inst).model.num_binaries == 1320

    def test_same_flags_identical_files(self, tmp_path):
        a, b = tmp_path / "a.json", tmp_path / "b.json"
        argv = ["generate", "--preset", "tiny", "--seed", "3"]
        assert run_cli(argv + ["--out", str(a)])[0] == 0
        assert run_cli(argv + ["--out", str(b)])[0] == 0
        assert a.read_bytes() == b.read_bytes()

    def test_zero_zones_usage_error(self, tmp_path):
        code, _ = run_cli(["generate", "--zones", "0", "--locations", "3",
                           "--out", str(tmp_path / "x.json")])
        assert code not in (0, None)

    def test_preset_conflicts_with_sizes(self, tmp_path):
        code, _ = run_cli(["generate", "--preset", "tiny", "--zones", "4",
                           "--out", str(tmp_path / "x.json")])
        assert code not in (0, None)

    def test_explicit_sizes(self, tmp_path):
        out = tmp_path / "inst.json"
        code, _ = run_cli(["generate", "--zones", "3", "--locations", "3",
                           "--nodes", "3", "--mj", "2", "--seed", "1",
                           "--out", str(out)])
        assert code == 0
        inst = load(out)
        assert inst.n_zones == 3 and len(inst.tree) == 3


@pytest.fixture(scope="module")
def tiny_file(tmp_path_factory):
    path = tmp_path_factory.mktemp("insts") / "tiny.json"
    code, _ = run_cli(["generate", "--preset", "tiny", "--seed", "1", "--out", str(path)])
    assert code == 0
    return path


class TestSolve:
    def test_heuristic_feasible_exit_zero(self, tiny_file, tmp_path):
        out = tmp_path / "sol.json"
        code, stdout = run_cli(["solve", "--algo", "heuristic",
                                "--instance", str(tiny_file), "--out", str(out)])
        assert code == 0
        dep, meta = load_solution(out)
        assert meta["algorithm"] == "heuristic"
        rows = parse_csv(stdout)
        assert len(rows) == 1 and rows[0]["algo"] == "heuristic"
        assert rows[0]["service_ok"] == "yes"

    def test_approx_row_has_bound_and_gap(self, tiny_file):
        code, stdout = run_cli(["solve", "--algo", "approx",
                                "--instance", str(tiny_file)])
        assert code == 0
        row = parse_csv(stdout)[0]
        assert row["lb"] != "" and row["gap"] != ""
        assert float(row["z"]) >= float(row["lb"]) - 1e-6

    def test_bp_matches_mip(self, tiny_file):
        code_m, out_m = run_cli(["solve", "--algo", "mip", "--instance", str(tiny_file)])
        code_b, out_b = run_cli(["solve", "--algo", "bp", "--instance", str(tiny_file)])
        assert code_m == 0 and code_b == 0
        zm = float(parse_csv(out_m)[0]["z"])
        zb = float(parse_csv(out_b)[0]["z"])
        assert abs(zm - zb) / zm <= 1e-6

    def test_b_override_changes_threshold(self, tiny_file):
        code, stdout = run_cli(["solve", "--algo", "heuristic",
                                "--instance", str(tiny_file), "--b", "2"])
        assert code == 0
        assert parse_csv(stdout)[0]["b"] == "2"

    def test_root_only_flag_accepted(self, tiny_file):
        code, stdout = run_cli(["solve", "--algo", "bp", "--root-only",
                                "--instance", str(tiny_file)])
        assert code == 0
        assert parse_csv(stdout)[0]["z"] != ""

    def test_exhausted_budget_without_incumbent_exits_3(self, tiny_file):
        code, _ = run_cli(["solve", "--algo", "mip", "--instance", str(tiny_file),
                           "--time-limit", "0.000001"])
        assert code == 3


class TestBenchmark:
    def test_tiny_matrix_writes_reports(self, tmp_path):
        out_dir = tmp_path / "bench"
        code, stdout = run_cli([
            "benchmark", "--suite", "tiny", "--seeds", "1", "--b-values", "0",
            "--algos", "heuristic,approx", "--out-dir", str(out_dir),
            "--time-limit", "60",
        ])
        assert code == 0
        csv_text = (out_dir / "report.csv").read_text()
        rows = parse_csv(csv_text)
        assert {r["algo"] for r in rows} == {"heuristic", "approx"}
        assert (out_dir / "report.txt").exists()

    def test_b_sweep_monotone_for_exact_solver(self, tmp_path):
        out_dir = tmp_path / "sweep"
        code, _ = run_cli([
            "benchmark", "--suite", "tiny", "--seeds", "1",
            "--b-values", "0,2", "--algos", "mip",
            "--out-dir", str(out_dir), "--time-limit", "120",
        ])
        assert code == 0
        rows = parse_csv((out_dir / "report.csv").read_text())
        z = {r["b"]: float(r["z"]) for r in rows}
        assert z["2"] <= z["0"] + 1e-6


class TestConsoleEntry:
    def test_module_invocation(self, tmp_path):
        out = tmp_path / "inst.json"
        proc = subprocess.run(
            [sys.executable, "-m", "chargeplan.cli", "generate", "--preset", "tiny",
             "--seed", "2", "--out", str(out)],
            capture_output=True, text=True,
            env={"PYTHONPATH": str(SRC), "PATH": "/usr/bin:/bin"},
        )
        assert proc.returncode == 0, proc.stderr
        assert out.exists()


TIMING_COLUMNS = ("t_s", "ts_pct")


def strip_timing(rows):
    return [{k: v for k, v in r.items() if k not in TIMING_COLUMNS} for r in rows]


class TestDeterminism:
    def test_single_worker_reports_identical_modulo_walltime(self, tmp_path):
        outs = []
        for tag in ("one", "two"):
            out_dir = tmp_path / tag
            code, _ = run_cli([
                "benchmark", "--suite", "tiny", "--seeds", "1", "--b-values", "0,1",
                "--algos", "heuristic,approx", "--out-dir", str(out_dir),
                "--time-limit", "60",
            ])
            assert code == 0
            outs.append(parse_csv((out_dir / "report.csv").read_text()))
        assert strip_timing(outs[0]) == strip_timing(outs[1])

    def test_worker_pool_matches_sequential(self, tmp_path):
        import os

        seq_dir = tmp_path / "seq"
        par_dir = tmp_path / "par"
        argv = ["benchmark", "--suite", "tiny", "--seeds", "2", "--b-values", "0",
                "--algos", "heuristic", "--time-limit", "60"]
        code, _ = run_cli(argv + ["--out-dir", str(seq_dir)])
        assert code == 0
        old = os.environ.get("EVCEC_THREADS")
        os.environ["EVCEC_THREADS"] = "2"
        try:
            code, _ = run_cli(argv + ["--out-dir", str(par_dir)])
        finally:
            if old is None:
                os.environ.pop("EVCEC_THREADS", None)
            else:
                os.environ["EVCEC_THREADS"] = old
        assert code == 0
        seq = parse_csv((seq_dir / "report.csv").read_text())
        par = parse_csv((par_dir / "report.csv").read_text())
        assert strip_timing(seq) == strip_timing(par)


class TestCgLog:
    def test_bp_run_log_written(self, tiny_file, tmp_path):
        log = tmp_path / "run.cg.txt"
        code, _ = run_cli(["solve", "--algo", "bp", "--instance", str(tiny_file),
                           "--cg-log", str(log)])
        assert code == 0
        text = log.read_text()
        assert "branch node depth=0" in text
        assert "rmp=" in text and "rc[" in text
