import numpy as np
import pytest
import scipy.sparse as sp

from crisp.problems import build_problem
from crisp.subproblem import QpData

SHIPPED = ("cartpole_softwalls", "push_box", "push_t", "transport", "hopper", "waiter")


def random_qp(rng, n=None, m_eq=None, m_in=None, boxed=None):
    """A small feasible convex QP in the canonical backend form."""
    n = n or int(rng.integers(2, 5))
    m_eq = int(rng.integers(0, 2)) if m_eq is None else m_eq
    m_in = int(rng.integers(0, 4)) if m_in is None else m_in
    boxed = rng.random() < 0.7 if boxed is None else boxed
    rank = int(rng.integers(1, n + 1))
    M = rng.normal(size=(n, rank))
    P = M @ M.T + (1e-3 * np.eye(n) if rng.random() < 0.5 else 0.0)
    q = rng.normal(size=n)
    z0 = rng.normal(size=n)
    A_eq = rng.normal(size=(m_eq, n))
    A_in = rng.normal(size=(m_in, n))
    b_in = A_in @ z0 - rng.uniform(0.0, 1.0, size=m_in)
    if boxed:
        lb, ub = z0 - rng.uniform(0.1, 2.0, n), z0 + rng.uniform(0.1, 2.0, n)
    else:
        # without a box the problem must stay bounded
        P = P + np.eye(n)
        lb, ub = np.full(n, -np.inf), np.full(n, np.inf)
    return QpData(sp.csr_matrix(P), q, 0.0, sp.csr_matrix(A_eq), A_eq @ z0,
                  sp.csr_matrix(A_in), b_in, lb, ub)


@pytest.fixture(scope="session")
def small_problems():
    """Every shipped trajectory problem at a short horizon."""
    return {name: build_problem(name, horizon=5) for name in SHIPPED}
