import math

import numpy as np
import pytest

from crisp.errors import SpecError
from crisp.nlp import check_derivatives, constraint_violation
from crisp.problems import (build_problem, decode_trajectory, encode_trajectory, initial_guess,
                            load_spec, problem_names, problem_spec)
from crisp.problems.cartpole import POSITIVE as CARTPOLE_POSITIVE
from crisp.problems.pushing import circle_targets, t_geometry

from conftest import SHIPPED


def test_registry_lists_everything():
    assert set(SHIPPED) | {"toy_mpcc", "cq_fail_toy"} == set(problem_names())
    with pytest.raises(KeyError):
        build_problem("nope")


@pytest.mark.parametrize("name", SHIPPED)
def test_derivatives_at_random_points(small_problems, name):
    prob = small_problems[name]
    rng = np.random.default_rng(7)
    report = check_derivatives(prob, rng.normal(size=prob.n_vars))
    assert report.passed, {k: v.bad_rows[:3] for k, v in report.blocks.items()}


@pytest.mark.parametrize("name", SHIPPED)
def test_passive_rollout_satisfies_dynamics(name):
    prob = build_problem(name, horizon=60)
    x = initial_guess(prob, "rollout")
    viol = constraint_violation(prob, x)
    rows = [i for i, lab in enumerate(prob.labels) if lab.startswith(("dynamics", "initial"))]
    assert viol.per_row[rows].max() <= 1e-10


def test_default_problem_sizes():
    sizes = {n: build_problem(n) for n in ("transport", "push_box")}
    assert (sizes["transport"].n_vars, sizes["transport"].m_eq, sizes["transport"].m_ineq) == (1600, 1600, 1200)
    assert (sizes["push_box"].n_vars, sizes["push_box"].m_eq, sizes["push_box"].m_ineq) == (1800, 2600, 1600)


def test_encode_decode_round_trip():
    prob = build_problem("waiter", horizon=7)
    x = np.random.default_rng(0).normal(size=prob.n_vars)
    traj = decode_trajectory(prob, x)
    assert traj.values.shape == (7, 13)
    np.testing.assert_allclose(traj.time, np.arange(7) * prob.layout.dt)
    np.testing.assert_array_equal(encode_trajectory(prob, traj), x)
    assert traj.terminal["N"] == x[-1]


def test_scenarios_override_initial_state_and_target():
    spec = problem_spec("transport", scenario="right_to_left")
    assert spec.initial_state["x1"] == 3.8 and spec.target["x1"] == -0.8
    assert spec.initial_state["x2"] == 3.0
    with pytest.raises(SpecError):
        problem_spec("transport", scenario="missing")


def test_builders_do_not_mutate_the_callers_spec():
    spec = load_spec("cartpole_softwalls")
    before = spec.positive
    build_problem("cartpole_softwalls", horizon=4)
    from crisp.problems.cartpole import cartpole_softwalls
    cartpole_softwalls(spec.replace(horizon=4))
    assert spec.positive == before


def test_spec_validation(tmp_path):
    spec = load_spec("cartpole_softwalls", positive=CARTPOLE_POSITIVE)
    with pytest.raises(SpecError, match="horizon"):
        spec.replace(horizon=1)
    with pytest.raises(SpecError, match="dt"):
        spec.replace(dt=-0.1)
    bad = dict(spec.params, mc=-1.0)
    with pytest.raises(SpecError, match="mc"):
        spec.replace(params=bad)
    broken = tmp_path / "broken.toml"
    broken.write_text("kind = 'cartpole_softwalls'\nhorizon = [\n")
    with pytest.raises(SpecError, match="cannot parse"):
        load_spec("cartpole_softwalls", broken)
    with pytest.raises(SpecError, match="not found"):
        load_spec("cartpole_softwalls", tmp_path / "missing.toml")


def test_unknown_weight_name_rejected(tmp_path):
    spec = problem_spec("transport").replace(horizon=4)
    spec.terminal_weights["nonsense"] = 1.0
    from crisp.problems.transport import transport
    with pytest.raises(SpecError, match="nonsense"):
        transport(spec)


def test_tracking_objective_frozen_value():
    # transport target is the origin; at x = 0 only the initial offset matters, so J(0) = 0
    prob = build_problem("transport", horizon=5)
    assert prob.objective_value(np.zeros(prob.n_vars)) == pytest.approx(0.0)
    x = np.zeros(prob.n_vars)
    x[prob.layout.index("x1", [4])] = 2.0
    x[prob.layout.index("u", [0, 1])] = 1.0
    # 0.5 * 1e4 * 2^2 + 0.5 * 1e-3 * (1 + 1)
    assert prob.objective_value(x) == pytest.approx(2e4 + 1e-3)


def test_circle_targets_and_t_geometry():
    pts = circle_targets()
    assert len(pts) == 8
    assert pts[2] == pytest.approx((0.0, 3.0), abs=1e-12)
    assert all(math.hypot(*p) == pytest.approx(3.0) for p in pts)
    geo = t_geometry({"l": 0.1, "d_c": 18.5 / 7})
    assert geo["y_top"] - geo["y_bar"] == pytest.approx(0.1)
    assert geo["y_bar"] - geo["y_bottom"] == pytest.approx(0.3)


def test_complementarity_products_vanish_on_cartpole_rollout():
    prob = build_problem("cartpole_softwalls", horizon=50)
    x = initial_guess(prob, "rollout")
    c_eq, _ = prob.constraints(x)
    rows = [i for i, lab in enumerate(prob.eq_labels) if lab.startswith("complementarity")]
    assert np.abs(c_eq[rows]).max() <= 1e-12


def test_noisy_guess_is_seeded():
    prob = build_problem("hopper", horizon=10)
    a = initial_guess(prob, "noisy", seed=3)
    b = initial_guess(prob, "noisy", seed=3)
    c = initial_guess(prob, "noisy", seed=4)
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a, c)
    toy = build_problem("toy_mpcc")
    with pytest.raises(ValueError):
        initial_guess(toy, "rollout")
