import csv
import io
import subprocess
import sys

import pytest

from resampling_es import cli
from resampling_es.scalar_math import QuadratureError


def run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def parse(text):
    comments = [line for line in text.splitlines() if line.startswith("#")]
    rows = list(csv.reader(io.StringIO("\n".join(l for l in text.splitlines()
                                                  if not l.startswith("#")))))
    return comments, rows[0], rows[1:]


def test_help_exits_zero(capsys):
    with pytest.raises(SystemExit) as info:
        cli.main(["--help"])
    assert info.value.code == 0
    assert "lambda-crit" in capsys.readouterr().out


@pytest.mark.parametrize("argv", [
    [],
    ["bogus"],
    ["progress-rate", "--theta", "2.0"],
    ["progress-rate", "--theta", "abc"],
    ["progress-rate", "--lambda", "0"],
    ["csa-rate", "--c", "1.5"],
    ["csa-rate", "--c", "0.5", "--mode", "c1_chain"],
    ["stationary-delta", "--mode", "full_sigma"],
    ["progress-rate", "--steps", "100", "--burnin", "1000"],
    ["sphere", "--dsigma", "-1"],
])
def test_usage_errors_exit_one(argv, capsys):
    try:
        code = cli.main(argv)
    except SystemExit as exc:
        code = exc.code
    assert code == cli.EXIT_USAGE


def test_progress_rate_table(capsys):
    code, out, _ = run(["progress-rate", "--theta", "0.1,0.5", "--lambda", "5", "10",
                        "--steps", "5000", "--burnin", "100", "--seed", "3"], capsys)
    assert code == 0
    comments, header, rows = parse(out)
    assert header == ["theta", "lambda", "phi_star", "phi_star_over_lambda", "stderr", "steps",
                      "seed"]
    assert len(rows) == 4
    assert "# seed: 3" in comments and "# command: progress-rate" in comments
    assert [(r[0], r[1]) for r in rows] == [("0.1", "5"), ("0.5", "5"), ("0.1", "10"),
                                            ("0.5", "10")]
    phi = rows[0][2]
    assert len(phi.lstrip("-").replace(".", "").lstrip("0").split("e")[0]) <= 15
    assert float(rows[0][3]) == pytest.approx(float(phi) / 5, rel=1e-14)


def test_output_is_deterministic_and_job_independent(tmp_path, capsys):
    paths = [tmp_path / f"{i}.csv" for i in range(3)]
    base = ["csa-rate", "--theta", "0.2", "0.6", "1.0", "--steps", "3000", "--burnin", "100"]
    assert cli.main(base + ["--out", str(paths[0])]) == 0
    assert cli.main(base + ["--out", str(paths[1])]) == 0
    assert cli.main(base + ["--jobs", "3", "--out", str(paths[2])]) == 0
    # only the echoed out path and job count may differ
    strip = lambda p: [l for l in p.read_bytes().splitlines()
                       if not l.startswith((b"# out", b"# jobs"))]
    a, b, c = (strip(p) for p in paths)
    assert a == b == c


def test_stationary_delta_modes(capsys):
    code, out, _ = run(["stationary-delta", "--mode", "csa", "--theta", "0.3", "--lambda", "5",
                        "--c", "1", "0.5", "--steps", "3000", "--burnin", "100"], capsys)
    assert code == 0
    _, header, rows = parse(out)
    assert header[:6] == ["mode", "theta", "lambda", "c", "d_sigma", "mean_delta"]
    assert len(rows) == 2 and rows[0][0] == "csa"
    code, out, _ = run(["stationary-delta", "--theta", "0.3", "--lambda", "5", "--steps", "3000",
                        "--burnin", "100"], capsys)
    _, _, rows = parse(out)
    assert rows[0][0] == "constant_sigma" and rows[0][3] == ""


def test_sphere_table(capsys):
    code, out, _ = run(["sphere", "--c", "1", "--dsigma", "1", "--steps", "500",
                        "--replicates", "3", "--n", "10"], capsys)
    assert code == 0
    _, header, rows = parse(out)
    assert header[:3] == ["d_sigma", "c", "mean_log_eta"]
    assert rows[0][6] == "3" and float(rows[0][2]) < 0


def test_boundary_tables_and_trace(tmp_path, capsys):
    trace = tmp_path / "trace.csv"
    code, out, _ = run(["lambda-crit", "--theta", "0.1", "0.2", "--c", "0.2", "--bound", "5",
                        "--replicates", "5", "--trace", str(trace)], capsys)
    assert code == 0
    _, header, rows = parse(out)
    assert header[:5] == ["theta", "c", "d_sigma", "lambda_crit", "bracket_width"]
    assert [r[3] for r in rows] == ["7", "4"]
    _, theader, trows = parse(trace.read_text())
    assert theader == ["theta", "c", "d_sigma", "tested", "verdict", "steps", "final_log_sigma"]
    assert {r[4] for r in trows} <= {"diverged", "converged", "indeterminate"}
    code, out, _ = run(["c-crit", "--theta", "0.3", "--lambda", "10", "--bound", "5",
                        "--replicates", "3"], capsys)
    assert code == 0
    _, header, rows = parse(out)
    assert header[3] == "c_crit" and float(rows[0][4]) <= 0.009


def test_boundary_not_found_is_logged(capsys):
    code, out, err = run(["lambda-crit", "--theta", "0.01", "--c", "1", "--bound", "5",
                          "--steps", "100"], capsys)
    assert code == 0
    assert "indeterminate" in err or "no diverging" in err


def test_numeric_failure_exit_code(monkeypatch, capsys):
    def boom(*a, **k):
        raise QuadratureError("forced", 1.0)

    monkeypatch.setattr(cli, "progress_rate", boom)
    code, _, err = run(["progress-rate", "--theta", "0.1", "--steps", "2000"], capsys)
    assert code == cli.EXIT_NUMERIC and "numeric failure" in err


def test_verify_quick_and_fault(capsys):
    code, out, _ = run(["verify", "--quick"], capsys)
    assert code == 0 and "FAIL" not in out
    code, out, _ = run(["verify", "--quick", "--inject-fault"], capsys)
    assert code == cli.EXIT_VERIFY
    assert "FAIL  stationary_mean_g_dot_n" in out


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "resampling_es", "csa-rate", "--theta", "0.5",
                          "--steps", "2000", "--burnin", "10"], capture_output=True, text=True)
    assert res.returncode == 0
    assert res.stdout.startswith("# resampling_es")
