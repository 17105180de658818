import numpy as np
import pytest
import scipy.sparse as sp

from crisp.errors import DuplicateConstraint, NonFiniteEvaluation, NotConvexError
from crisp.nlp import (NlpProblem, PenaltyVector, ProblemBuilder, ProductMode, QuadraticObjective,
                       VariableLayout, assert_psd, check_derivatives, constraint_violation,
                       eval_merit)
from crisp.problems import cq_fail_toy, toy_mpcc


def test_layout_indexing_is_knot_major():
    layout = VariableLayout(("a", "b", "c"), horizon=4, dt=0.1)
    assert layout.n_vars == 12
    np.testing.assert_array_equal(layout.index("b"), [1, 4, 7, 10])
    np.testing.assert_array_equal(layout.index("c", [0, 2]), [2, 8])
    assert layout.reshape(np.arange(12))[2, 1] == 7


def test_toy_merit_frozen_values():
    prob = toy_mpcc()
    mu = PenaltyVector.uniform(prob, 10.0)
    # J = 1 + 4, product |1*2| = 2 -> 5 + 10*2
    assert eval_merit(prob, np.array([1.0, 2.0]), mu) == pytest.approx(25.0)
    # x1 = -1 violates x1 >= 0 by 1 and the product by 3
    assert eval_merit(prob, np.array([-1.0, 3.0]), mu) == pytest.approx(10.0 + 10 * 1 + 10 * 3)
    viol = constraint_violation(prob, np.array([-1.0, 3.0]))
    assert viol.max == pytest.approx(3.0)


def test_cq_toy_merit_frozen_value():
    prob = cq_fail_toy()
    mu = PenaltyVector.uniform(prob, 10.0)
    # x = (-1, 0): both cubic rows equal -1
    assert eval_merit(prob, np.array([-1.0, 0.0]), mu) == pytest.approx(-1.0 + 20.0)


def test_merit_rejects_mismatched_penalties():
    prob = toy_mpcc()
    with pytest.raises(ValueError):
        eval_merit(prob, np.zeros(2), PenaltyVector(np.ones(3), np.ones(2)))
    with pytest.raises(ValueError):
        eval_merit(prob, np.zeros(3), PenaltyVector.uniform(prob))


def test_complementarity_row_counts_per_mode():
    eq = toy_mpcc(ProductMode.EQUALITY)
    ineq = toy_mpcc(ProductMode.INEQUALITY)
    assert (eq.m_eq, eq.m_ineq) == (1, 2)
    assert (ineq.m_eq, ineq.m_ineq) == (0, 3)
    assert any(label.startswith("complementarity:x1*x2") for label in eq.eq_labels)


def _builder():
    layout = VariableLayout(("a", "b", "c"))
    b = ProblemBuilder(layout=layout)
    b.objective = QuadraticObjective(sp.identity(3))
    for name in layout.names:
        b.register(name, b.var(name))
    return b


def test_shared_operand_gets_one_sign_row():
    b = _builder()
    b.complementarity("a", "b")
    b.complementarity("a", "c")
    prob = b.build()
    assert prob.m_ineq == 3
    assert prob.m_eq == 2


def test_duplicates_rejected():
    b = _builder()
    with pytest.raises(DuplicateConstraint):
        b.register("a", b.var("a"))
    b.complementarity("a", "b")
    with pytest.raises(DuplicateConstraint):
        b.complementarity("b", "a")


def test_nonconvex_objective_rejected():
    with pytest.raises(NotConvexError):
        assert_psd(np.array([[1.0, 2.0], [2.0, 1.0]]))
    with pytest.raises(NotConvexError):
        NlpProblem(2, QuadraticObjective(np.diag([1.0, -1.0])))
    assert_psd(np.array([[1.0, 1.0], [1.0, 1.0]]))


def test_nonfinite_rows_are_named():
    layout = VariableLayout(("a",))
    b = ProblemBuilder(layout=layout)
    b.objective = QuadraticObjective(np.eye(1))
    b.add_ineq(1.0 / b.var("a"), "inverse", kind="bound")
    prob = b.build()
    with pytest.raises(NonFiniteEvaluation, match="bound:inverse"):
        with np.errstate(divide="ignore"):
            prob.constraints(np.zeros(1))


def test_derivative_check_flags_a_wrong_jacobian():
    prob = toy_mpcc()
    good = check_derivatives(prob, np.array([0.3, -0.7]))
    assert good.passed and good.max_rel_error < 1e-6

    from crisp.expr import Expr
    a = Expr.select([0])
    # value says x^2 but the derivative is reported as 1
    wrong = Expr(1, a.rows, a.cols, lambda x: (x[[0]] ** 2, np.ones(1)))
    bad = NlpProblem(2, QuadraticObjective(np.eye(2)), eq=wrong, eq_labels=["dynamics:bad[0]"])
    report = check_derivatives(bad, np.array([2.0, 0.0]))
    assert not report.passed
    assert report.blocks["eq_jacobian"].bad_rows == ["dynamics:bad[0]"]
    assert report.blocks["gradient"].passed
