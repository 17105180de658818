import numpy as np
import pytest

from crisp.nlp import PenaltyVector, eval_merit
from crisp.problems import cq_fail_toy, toy_mpcc
from crisp.qp import solve_qp
from crisp.subproblem import apply_second_order_correction, build_subproblem, model_value


def test_shapes_and_costs():
    prob = toy_mpcc()
    mu = PenaltyVector(np.array([7.0]), np.array([3.0, 5.0]))
    qp = build_subproblem(prob, np.array([1.0, 1.0]), mu, 0.5)
    assert qp.n_z == 2 + 2 * 1 + 2
    np.testing.assert_array_equal(qp.q[2:], [7.0, 7.0, 3.0, 5.0])
    np.testing.assert_array_equal(qp.ub[:2], [0.5, 0.5])
    assert np.all(qp.lb[2:] == 0) and np.all(np.isinf(qp.ub[2:]))


def test_rejects_nonpositive_radius():
    prob = toy_mpcc()
    with pytest.raises(ValueError):
        build_subproblem(prob, np.zeros(2), PenaltyVector.uniform(prob), 0.0)


def test_model_frozen_value_on_toy():
    # at (1, 1): grad J = (2, 2), H = 2I, product row x1*x2 - 1 linearizes to 1 + p1 + p2
    prob = toy_mpcc()
    mu = PenaltyVector.uniform(prob, 10.0)
    x = np.array([1.0, 1.0])
    qp = build_subproblem(prob, x, mu, 1.0)
    p = np.array([-0.5, -0.25])
    expected = 2.0 + 2 * (-0.75) + (0.25 + 0.0625) + 10 * abs(1 - 0.75)
    assert model_value(qp, prob, x, mu, p) == pytest.approx(expected)


def test_qp_step_decreases_model():
    prob = cq_fail_toy()
    mu = PenaltyVector.uniform(prob, 10.0)
    x = np.array([0.5, 0.3])
    qp = build_subproblem(prob, x, mu, 0.2)
    sol = solve_qp(qp)
    p = sol.z[qp.slice_map["p"]]
    assert np.max(np.abs(p)) <= 0.2 + 1e-8
    assert model_value(qp, prob, x, mu, p) <= eval_merit(prob, x, mu) + 1e-10


def test_soc_matches_constraints_at_trial_point():
    prob = toy_mpcc()
    mu = PenaltyVector.uniform(prob, 10.0)
    x = np.array([0.3, 0.8])
    qp = build_subproblem(prob, x, mu, 1.0)
    p = np.array([0.2, -0.1])
    soc = apply_second_order_correction(qp, prob, x, p)
    lin = qp.lin
    c_eq, c_in = prob.constraints(x + p)
    np.testing.assert_allclose(lin.J_eq @ p - soc.b_eq, c_eq, atol=1e-14)
    np.testing.assert_allclose(lin.J_ineq @ p - soc.b_ineq, c_in, atol=1e-14)
