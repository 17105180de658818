"""Acceptance criteria. Each test prints one ``criterion N: PASS|FAIL`` line.

Criteria 5 to 7 run full-horizon benchmark solves and take several minutes
on one core.
"""

import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np
import pytest

from crisp.cli import RunConfig, execute_run
from crisp.nlp import PenaltyVector
from crisp.problems import build_problem, cq_fail_stationary_x1, cq_fail_toy, toy_mpcc
from crisp.qp import QpStatus, solve_qp, solve_qp_oracle
from crisp.solver import SolverConfig, SolveStatus, solve, stationarity_certificate

from conftest import random_qp

TIGHT = SolverConfig(eps_p=1e-7, eps_r=1e-7)
TOY_STARTS = ([1.0, 1.0], [2.0, 0.5], [-1.0, 3.0])
CQ_STARTS = np.random.default_rng(5).uniform([0.2, -1.0], [2.0, 1.0], size=(5, 2))
CARTPOLE_ICS = ("tilt_right", "into_wall", "offset")
TRANSPORT_SCENARIOS = ("middle", "left_to_right", "right_to_left", "rolling", "reversal")
PUSH_BOX_GOALS = tuple(f"goal_{45 * k:03d}" for k in range(8))


def report(capsys, number, passed, detail):
    with capsys.disabled():
        print(f"\ncriterion {number}: {'PASS' if passed else 'FAIL'} ({detail})")


@pytest.fixture(scope="module")
def toy_runs():
    runs = []
    for x0 in TOY_STARTS:
        t0 = time.perf_counter()
        rep = solve(toy_mpcc(), np.array(x0), TIGHT)
        runs.append((rep, time.perf_counter() - t0))
    return runs


@pytest.fixture(scope="module")
def cq_full_run():
    return solve(cq_fail_toy(), np.array([1.0, 0.5]), TIGHT.replace(eps_c=1e-10))


def test_criterion_1_toy_mpcc(toy_runs, capsys):
    worst_dist = max(np.linalg.norm(r.x_star) for r, _ in toy_runs)
    worst_viol = max(r.max_violation for r, _ in toy_runs)
    slowest = max(t for _, t in toy_runs)
    ok = (all(r.status is SolveStatus.SUCCESS for r, _ in toy_runs)
          and worst_dist <= 1e-4 and worst_viol < 1e-6 and slowest < 1.0)
    report(capsys, 1, ok, f"max |x*| {worst_dist:.1e}, max violation {worst_viol:.1e}, slowest {slowest:.2f} s")
    assert ok


def test_criterion_2_cq_failure_toy(cq_full_run, capsys):
    target = cq_fail_stationary_x1(10.0)
    fixed = TIGHT.replace(mu0=10.0, mu_max=10.0)
    errors = [abs(solve(cq_fail_toy(), x0, fixed).x_star[0] - target) for x0 in CQ_STARTS]
    full_x1 = abs(cq_full_run.x_star[0])
    bound = 1.0 / math.sqrt(6e6) + 1e-4
    ok = max(errors) <= 1e-4 and full_x1 <= bound and cq_full_run.max_violation < 1e-6
    report(capsys, 2, ok, f"fixed-mu max |x1 - target| {max(errors):.1e}; "
                          f"escalated |x1| {full_x1:.2e} (bound {bound:.2e}), "
                          f"violation {cq_full_run.max_violation:.1e}, status {cq_full_run.status.value}")
    assert ok


def test_criterion_3_certificates(toy_runs, cq_full_run, capsys):
    cases = [(toy_mpcc(), r) for r, _ in toy_runs] + [(cq_fail_toy(), cq_full_run)]
    worst = np.inf
    for prob, rep in cases:
        if rep.status is not SolveStatus.SUCCESS:
            continue
        cert = stationarity_certificate(prob, rep.x_star, rep.mu, n_dirs=64, include_axes=False)
        worst = min(worst, cert.min_directional_derivative)
    successes = sum(rep.status is SolveStatus.SUCCESS for _, rep in cases)
    ok = successes == len(cases) and worst >= -1e-3
    report(capsys, 3, ok, f"{successes}/{len(cases)} successes, min directional derivative {worst:.2e}")
    assert ok


def test_criterion_4_qp_backend(capsys):
    rng = np.random.default_rng(4)
    qps = [random_qp(rng) for _ in range(100)]
    t0 = time.perf_counter()
    sols = [solve_qp(qp) for qp in qps]
    elapsed = time.perf_counter() - t0
    obj_err = max(abs(s.objective - solve_qp_oracle(qp).objective) for s, qp in zip(sols, qps))
    kkt = max(s.kkt.max() for s in sols)
    optimal = sum(s.status is QpStatus.OPTIMAL for s in sols)
    ok = optimal == 100 and obj_err <= 1e-6 and kkt <= 1e-8 and elapsed < 10.0
    report(capsys, 4, ok, f"{optimal}/100 optimal, max objective gap {obj_err:.1e}, "
                          f"max KKT residual {kkt:.1e}, {elapsed:.2f} s")
    assert ok


def _runs(problem, scenarios, guess):
    return [execute_run(RunConfig(problem=problem, scenario=s, guess=guess))[:2] for s in scenarios]


def test_criterion_5_cartpole(capsys):
    runs = _runs("cartpole_softwalls", CARTPOLE_ICS, "rollout")
    good = [rec for rec, rep in runs if rec["success"] and rep.iterations < 1000]
    detail = ", ".join(f"{rec['scenario']} {rec['status']} in {rec['iterations']} it" for rec, _ in runs)
    ok = len(good) >= 3
    report(capsys, 5, ok, f"{len(good)}/{len(runs)} succeed: {detail}")
    assert ok


def test_criterion_6_transport(capsys):
    runs = _runs("transport", TRANSPORT_SCENARIOS, "zero")
    good = [rec for rec, _ in runs if rec["tracking_error"] <= 1e-2 and rec["max_violation"] < 1e-5]
    worst = max(rec["tracking_error"] for rec in good) if good else float("nan")
    ok = len(good) >= 3
    report(capsys, 6, ok, f"{len(good)}/{len(runs)} scenarios within 1e-2, worst of those {worst:.1e}")
    assert ok


def test_criterion_7_push_box(capsys):
    successes, worst_product = 0, 0.0
    for goal in PUSH_BOX_GOALS:
        rec, rep = execute_run(RunConfig(problem="push_box", scenario=goal, guess="zero"))[:2]
        prob = build_problem("push_box", scenario=goal)
        c_eq, _ = prob.constraints(rep.x_star)
        rows = [i for i, lab in enumerate(prob.eq_labels) if lab.startswith("complementarity")]
        worst_product = max(worst_product, float(np.abs(c_eq[rows]).max()))
        successes += rec["success"]
    ok = successes >= 4 and worst_product < 1e-5
    report(capsys, 7, ok, f"{successes}/8 goals succeed, max |a*b| {worst_product:.1e}")
    assert ok


def test_criterion_8_property_suites(capsys):
    here = Path(__file__).parent
    proc = subprocess.run([sys.executable, "-m", "pytest", "-q", "-p", "no:cacheprovider",
                           str(here / "test_properties.py")], capture_output=True, text=True, cwd=here.parent)
    summary = proc.stdout.strip().splitlines()[-1] if proc.stdout.strip() else proc.stderr[-200:]
    ok = proc.returncode == 0
    report(capsys, 8, ok, f"property suites, 100 cases each: {summary}")
    assert ok
