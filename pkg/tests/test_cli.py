import csv
import json
import math

import numpy as np
import pytest

from crisp.cli import SuccessCriteria, evaluate_success, load_suite, main
from crisp.problems import Trajectory


def _traj(**terminal):
    names = tuple(terminal)
    return Trajectory(names, np.array([0.0, 1.0]), np.array([[0.0] * len(names), list(terminal.values())]))


GROUPS = {"translation": ("x",), "angle": ("theta",)}


def test_success_exact_hit():
    ok, metrics = evaluate_success(_traj(x=1.0, theta=0.0), {"x": 1.0, "theta": 0.0},
                                   violation=0.0, groups=GROUPS, angle_names=("theta",))
    assert ok and metrics["translation"] == 0.0


def test_success_fails_on_violation_alone():
    ok, _ = evaluate_success(_traj(x=1.0, theta=0.0), {"x": 1.0, "theta": 0.0},
                             violation=1e-4, groups=GROUPS)
    assert not ok


def test_success_fails_on_large_angle_and_wraps():
    ok, m = evaluate_success(_traj(x=0.0, theta=math.pi / 4), {"x": 0.0, "theta": 0.0},
                             groups=GROUPS, angle_names=("theta",))
    assert not ok and m["angle"] == pytest.approx(math.pi / 4)
    ok, m = evaluate_success(_traj(x=0.0, theta=2 * math.pi + 0.01), {"x": 0.0, "theta": 0.0},
                             groups=GROUPS, angle_names=("theta",))
    assert ok and m["angle"] == pytest.approx(0.01)


def test_translation_uses_group_norm():
    ok, m = evaluate_success(_traj(x1=0.06, x2=0.08), {"x1": 0.0, "x2": 0.0},
                             groups={"translation": ("x1", "x2")})
    assert m["translation"] == pytest.approx(0.1) and not ok


def test_criteria_must_be_positive():
    with pytest.raises(ValueError):
        SuccessCriteria(angle=0.0)


def test_solve_toy_writes_outputs(tmp_path):
    out = tmp_path / "run"
    assert main(["solve", "--problem", "toy_mpcc", "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["result"]["status"] == "Success"
    rows = list(csv.reader(open(out / "trajectory.csv")))
    assert rows[0] == ["time", "x1", "x2"]
    for line in (out / "trace.jsonl").read_text().splitlines():
        assert json.loads(line)["schema_version"] == 1
    assert "wall_time" in json.loads((out / "timing.json").read_text())
    assert "wall_time" not in (out / "summary.json").read_text()


def test_trajectory_csv_round_trips_floats(tmp_path):
    out = tmp_path / "run"
    main(["solve", "--problem", "cq_fail_toy", "--set", "k_max=3", "--out", str(out)])
    rows = list(csv.reader(open(out / "trajectory.csv")))
    values = [float(v) for v in rows[1][1:]]
    assert all(repr(v) == repr(float(f"{v:.17g}")) for v in values)


def test_solve_usage_errors_exit_1(tmp_path, capsys):
    assert main(["solve", "--problem", "nope", "--out", str(tmp_path)]) == 1
    assert main(["solve", "--problem", "toy_mpcc", "--set", "bogus=1", "--out", str(tmp_path)]) == 1
    assert main(["solve", "--problem", "transport", "--params", str(tmp_path / "missing.toml")]) == 1
    assert main(["frobnicate"]) == 1


def test_penalty_max_out_exits_2(tmp_path):
    out = tmp_path / "pmo"
    code = main(["solve", "--problem", "cq_fail_toy", "--set", "mu0=10", "--set", "mu_max=10", "--out", str(out)])
    assert code == 2
    assert json.loads((out / "summary.json").read_text())["result"]["status"] == "PenaltyMaxOut"


def test_output_dir_from_environment(tmp_path, monkeypatch):
    monkeypatch.setenv("CRISP_OUTPUT_DIR", str(tmp_path / "env"))
    assert main(["solve", "--problem", "toy_mpcc"]) == 0
    assert (tmp_path / "env" / "summary.json").exists()


def test_bench_is_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["bench", "--suite", "toys", "--out", str(a)]) == 0
    assert main(["bench", "--suite", "toys", "--jobs", "2", "--out", str(b)]) == 0
    printed = capsys.readouterr().out
    assert "success %" in printed and "med. track err" in printed
    for name in ("summary.json", "runs.csv", "summary.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    summary = json.loads((a / "summary.json").read_text())
    for row in summary["summary"]:
        flagged = sum(r["success"] for r in summary["runs"] if r["problem"] == row["problem"])
        assert row["successes"] == flagged


def test_bench_suite_file_and_empty_suite(tmp_path):
    suite = tmp_path / "suite.toml"
    suite.write_text('[[run]]\nproblem = "toy_mpcc"\nx0 = [1.0, 1.0]\n')
    assert main(["bench", "--suite", str(suite), "--out", str(tmp_path / "o")]) == 0
    empty = tmp_path / "empty.toml"
    empty.write_text("# nothing here\n")
    assert main(["bench", "--suite", str(empty), "--out", str(tmp_path / "e")]) == 1
    assert main(["bench", "--suite", "no-such-suite"]) == 1


def test_builtin_suites_cover_problems():
    assert len(load_suite("cartpole")) == 10
    assert {r["scenario"] for r in load_suite("push_box")} == {f"goal_{45 * k:03d}" for k in range(8)}


def test_check_command(tmp_path, capsys):
    assert main(["check", "--problem", "transport", "--verbose", "--points", "1"]) == 0
    out = capsys.readouterr().out
    assert "eq_jacobian" in out and "passive rollout" in out
    bad = tmp_path / "bad.toml"
    bad.write_text("kind = 'transport'\nhorizon = 10\ndt = 0.02\n[params]\nm1 = -1.0\n")
    assert main(["check", "--problem", "transport", "--params", str(bad)]) == 1
