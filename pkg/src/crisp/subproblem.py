"""Elastic trust-region QP subproblem.

The QP variable is ``z = (p, v, w, t)``: the trial step ``p`` plus
nonnegative elastic slacks for equality rows (``v - w``) and inequality
rows (``t``). Slack costs are the per-row penalties, so the QP optimum is
the minimizer of the nonsmooth l1 model of the merit function inside the
box ``|p|_inf <= delta``. Because every row has its own slack, the QP is
always feasible.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
import scipy.sparse as sp

from .errors import NonFiniteEvaluation


@dataclass
class Linearization:
    x: np.ndarray
    J: float
    grad: np.ndarray
    H: sp.csr_matrix
    c_eq: np.ndarray
    J_eq: sp.csr_matrix
    c_ineq: np.ndarray
    J_ineq: sp.csr_matrix


@dataclass
class QpData:
    P: sp.csr_matrix
    q: np.ndarray
    constant: float
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_ineq: sp.csr_matrix
    b_ineq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    slice_map: dict = field(default_factory=dict)
    lin: Linearization | None = None

    @property
    def n_z(self):
        return self.q.size

    def canonical_point(self):
        """The always-feasible point ``p = 0`` with slacks absorbing ``c``."""
        z = np.zeros(self.n_z)
        c_eq, c_in = -self.b_eq, -self.b_ineq
        sm = self.slice_map
        z[sm["v"]] = np.maximum(c_eq, 0.0)
        z[sm["w"]] = np.maximum(-c_eq, 0.0)
        z[sm["t"]] = np.maximum(-c_in, 0.0)
        return z


def _slices(n, m_e, m_i):
    return {
        "p": slice(0, n),
        "v": slice(n, n + m_e),
        "w": slice(n + m_e, n + 2 * m_e),
        "t": slice(n + 2 * m_e, n + 2 * m_e + m_i),
    }


def build_subproblem(problem, x_k, mu, delta):
    if not delta > 0:
        raise ValueError("trust-region radius must be positive")
    x_k = np.asarray(x_k, dtype=float)
    n, m_e, m_i = problem.n_vars, problem.m_eq, problem.m_ineq
    J = problem.objective_value(x_k)
    grad = np.asarray(problem.objective.gradient(x_k), dtype=float)
    if not np.isfinite(grad).all():
        raise NonFiniteEvaluation("objective gradient")
    H = sp.csr_matrix(problem.objective.hessian(x_k))
    if not np.isfinite(H.data).all():
        raise NonFiniteEvaluation("objective hessian")
    c_eq, J_eq, c_in, J_in = problem.linearize(x_k)
    lin = Linearization(x_k.copy(), J, grad, H, c_eq, J_eq, c_in, J_in)

    n_z = n + 2 * m_e + m_i
    P = sp.block_diag([H, sp.csr_matrix((n_z - n, n_z - n))], format="csr")
    q = np.concatenate([grad, mu.mu_eq, mu.mu_eq, mu.mu_ineq])
    eye_e = sp.identity(m_e, format="csr")
    A_eq = sp.hstack([J_eq, -eye_e, eye_e, sp.csr_matrix((m_e, m_i))], format="csr")
    A_in = sp.hstack([J_in, sp.csr_matrix((m_i, 2 * m_e)), sp.identity(m_i, format="csr")],
                     format="csr")
    lb = np.concatenate([np.full(n, -float(delta)), np.zeros(n_z - n)])
    ub = np.concatenate([np.full(n, float(delta)), np.full(n_z - n, np.inf)])
    return QpData(P, q, J, A_eq, -c_eq.copy(), A_in, -c_in.copy(), lb, ub,
                  _slices(n, m_e, m_i), lin)


def model_value(qp, problem, x_k, mu, p):
    """Nonsmooth local model ``q_mu(p)`` of the merit function.

    Uses the constraint constants stored in ``qp``, so after a
    second-order correction the corrected constants are used.
    """
    lin = qp.lin
    if lin is None:
        lin = build_subproblem(problem, x_k, mu, 1.0).lin
    p = np.asarray(p, dtype=float)
    if p.shape != (problem.n_vars,):
        raise ValueError(f"p must have length {problem.n_vars}")
    quad = lin.J + lin.grad @ p + 0.5 * p @ (lin.H @ p)
    r_eq = lin.J_eq @ p - qp.b_eq
    r_in = lin.J_ineq @ p - qp.b_ineq
    return float(quad + mu.mu_eq @ np.abs(r_eq) + mu.mu_ineq @ np.maximum(0.0, -r_in))


def apply_second_order_correction(qp, problem, x_k, p_trial):
    """Shift constraint constants by the curvature remainder at ``x_k + p_trial``."""
    lin = qp.lin
    p_trial = np.asarray(p_trial, dtype=float)
    c_eq_t, c_in_t = problem.constraints(np.asarray(x_k, dtype=float) + p_trial)
    d_eq = c_eq_t - lin.c_eq - lin.J_eq @ p_trial
    d_in = c_in_t - lin.c_ineq - lin.J_ineq @ p_trial
    return replace(qp, b_eq=-(lin.c_eq + d_eq), b_ineq=-(lin.c_ineq + d_in))
