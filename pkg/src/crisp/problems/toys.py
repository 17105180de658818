"""Two-variable test problems with known solutions."""

from __future__ import annotations

import numpy as np

from ..nlp import FunctionObjective, ProblemBuilder, ProductMode, QuadraticObjective, VariableLayout


def toy_mpcc(complementarity_mode=ProductMode.EQUALITY):
    """``min x1^2 + x2^2`` subject to ``0 <= x1 _|_ x2 >= 0``; optimum at the origin."""
    layout = VariableLayout(("x1", "x2"))
    b = ProblemBuilder(layout=layout, name="toy_mpcc", complementarity_mode=complementarity_mode)
    b.objective = QuadraticObjective(2.0 * np.eye(2))
    b.register("x1", b.var("x1"))
    b.register("x2", b.var("x2"))
    b.complementarity("x1", "x2")
    return b.build()


def cq_fail_toy():
    """``min x1`` s.t. ``x1^3 - x2 >= 0`` and ``x1^3 + x2 >= 0``.

    The feasible set is ``x1 >= |x2|^(1/3)``, so the optimum is the origin,
    where both constraint gradients are ``(0, -+1)`` and no constraint
    qualification holds. With a fixed penalty ``mu`` the merit function is
    stationary at ``(-1/sqrt(6 mu), 0)`` instead.
    """
    layout = VariableLayout(("x1", "x2"))
    b = ProblemBuilder(layout=layout, name="cq_fail_toy")
    b.objective = FunctionObjective(
        lambda x: x[0],
        lambda x: np.array([1.0, 0.0]),
        lambda x: np.zeros((2, 2)),
    )
    x1, x2 = b.var("x1"), b.var("x2")
    cube = x1 * x1 * x1
    b.add_ineq(cube - x2, "cubic_lower")
    b.add_ineq(cube + x2, "cubic_upper")
    return b.build()


def cq_fail_stationary_x1(mu):
    return -1.0 / np.sqrt(6.0 * mu)


__all__ = ["toy_mpcc", "cq_fail_toy", "cq_fail_stationary_x1"]
