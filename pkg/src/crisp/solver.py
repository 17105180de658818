"""Outer trust-region loop on the exact l1 penalty merit function."""

from __future__ import annotations

import dataclasses
import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .errors import NonFiniteEvaluation, QpFailure
from .nlp import PenaltyVector, constraint_violation, eval_merit
from .qp import BACKENDS, QpStatus
from .subproblem import apply_second_order_correction, build_subproblem, model_value


class SolveStatus(str, enum.Enum):
    SUCCESS = "Success"
    PENALTY_MAX_OUT = "PenaltyMaxOut"
    MAX_ITERATIONS = "MaxIterations"
    QP_FAILURE = "QpFailure"
    CANCELLED = "Cancelled"


class _Converged:
    """Returned by :func:`reduction_ratio` when the predicted reduction vanishes."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "CONVERGED"


CONVERGED = _Converged()
PENALTY_MAX_OUT = SolveStatus.PENALTY_MAX_OUT


@dataclass
class SolverConfig:
    k_max: int = 1000
    delta0: float = 1.0
    delta_max: float = 10.0
    mu0: float = 10.0
    mu_max: float = 1e6
    eta_low: float = 0.25
    eta_high: float = 0.75
    gamma_shrink: float = 0.25
    gamma_expand: float = 2.0
    eps_c: float = 1e-6
    eps_p: float = 1e-3
    eps_r: float = 1e-3
    qp_tol: float = 1e-8
    qp_backend: str = "reference"
    complementarity_mode: str = "equality"
    trust_reset_on_penalty_bump: bool = True
    penalty_factor: float = 10.0
    certificate_dirs: int = 32

    def __post_init__(self):
        problems = []
        if not 0 < self.eta_low < self.eta_high < 1:
            problems.append("need 0 < eta_low < eta_high < 1")
        if not 0 < self.gamma_shrink < 1 < self.gamma_expand:
            problems.append("need 0 < gamma_shrink < 1 < gamma_expand")
        if not 0 < self.delta0 <= self.delta_max:
            problems.append("need 0 < delta0 <= delta_max")
        if not 0 < self.mu0 <= self.mu_max:
            problems.append("need 0 < mu0 <= mu_max")
        for name in ("eps_c", "eps_p", "eps_r", "qp_tol"):
            if not getattr(self, name) > 0:
                problems.append(f"{name} must be positive")
        if self.k_max < 1:
            problems.append("k_max must be at least 1")
        if self.penalty_factor <= 1:
            problems.append("penalty_factor must exceed 1")
        if self.qp_backend not in BACKENDS:
            problems.append(f"unknown qp_backend {self.qp_backend!r}")
        if self.complementarity_mode not in ("equality", "inequality"):
            problems.append("complementarity_mode must be 'equality' or 'inequality'")
        if problems:
            raise ValueError("invalid SolverConfig: " + "; ".join(problems))

    def replace(self, **changes):
        return dataclasses.replace(self, **changes)

    def with_overrides(self, pairs):
        """Apply ``key=value`` strings, coercing to each field's type."""
        types = {f.name: type(f.default) for f in dataclasses.fields(self)}
        changes = {}
        for pair in pairs:
            key, sep, raw = pair.partition("=")
            key = key.strip()
            if not sep or key not in types:
                raise ValueError(f"bad override {pair!r}")
            kind = types[key]
            if kind is bool:
                value = raw.strip().lower() in ("1", "true", "yes", "on")
            elif kind is int:
                value = int(float(raw))
            else:
                value = kind(raw)
            changes[key] = value
        return self.replace(**changes)


@dataclass
class IterationRecord:
    iteration: int
    merit: float
    J: float
    max_violation: float
    delta: float
    rho: float | None
    step_norm_inf: float
    soc_used: bool
    accepted: bool
    mu_max_entry: float
    qp_iterations: int = 0
    penalty_bumped: bool = False

    def as_dict(self):
        return dataclasses.asdict(self)


@dataclass
class StationarityCertificate:
    n_directions: int
    min_directional_derivative: float
    fd_step: float


@dataclass
class SolveReport:
    status: SolveStatus
    x_star: np.ndarray
    iterations: int
    trace: list = field(default_factory=list)
    certificates: StationarityCertificate | None = None
    wall_time: float = 0.0
    mu: PenaltyVector | None = None
    max_violation: float = np.nan
    objective: float = np.nan
    message: str = ""


def reduction_ratio(ared, pred):
    if pred < 1e-14:
        return CONVERGED
    return ared / pred


def update_trust_region(rho, step_inf_norm, delta, config):
    if rho < config.eta_low:
        return config.gamma_shrink * delta
    # interior-point steps stop a hair short of the box, so "on the boundary" is relative
    if rho > config.eta_high and step_inf_norm >= (1.0 - 1e-3) * delta:
        return min(config.gamma_expand * delta, config.delta_max)
    return delta


def update_penalties(mu, violations, config):
    """Scale penalties of rows violated by at least ``eps_c``.

    Returns :data:`PENALTY_MAX_OUT` when a violated row is already at
    ``mu_max`` and so cannot be increased.
    """
    m_e = mu.mu_eq.size
    bad = violations.per_row >= config.eps_c
    if not bad.any():
        return mu
    current = np.concatenate([mu.mu_eq, mu.mu_ineq])
    if (current[bad] >= mu.mu_max).any():
        return PENALTY_MAX_OUT
    bumped = current.copy()
    bumped[bad] = np.minimum(current[bad] * config.penalty_factor, mu.mu_max)
    return PenaltyVector(bumped[:m_e], bumped[m_e:], mu.mu_max)


def stationarity_certificate(problem, x_star, mu, n_dirs=32, fd_step=1e-5, seed=0,
                             include_axes=None):
    """Minimum one-sided finite-difference directional derivative of the merit.

    Samples ``n_dirs`` random unit directions plus, for problems of modest
    size, all signed coordinate axes.
    """
    if n_dirs < 1 or fd_step <= 0:
        raise ValueError("n_dirs >= 1 and fd_step > 0 are required")
    x_star = np.asarray(x_star, dtype=float)
    n = x_star.size
    rng = np.random.default_rng(seed)
    dirs = rng.normal(size=(n_dirs, n))
    dirs /= np.linalg.norm(dirs, axis=1, keepdims=True)
    if include_axes is None:
        include_axes = n <= 500
    if include_axes:
        eye = np.eye(n)
        dirs = np.vstack([dirs, eye, -eye])
    base = eval_merit(problem, x_star, mu)
    worst = np.inf
    for d in dirs:
        worst = min(worst, (eval_merit(problem, x_star + fd_step * d, mu) - base) / fd_step)
    return StationarityCertificate(len(dirs), float(worst), fd_step)


def _is_cancelled(cancel):
    if cancel is None:
        return False
    if hasattr(cancel, "is_set"):
        return cancel.is_set()
    return bool(cancel())


def solve(problem, x0, config=None, callback=None, cancel=None, mu0=None):
    """Run the trust-region penalty method from ``x0``.

    ``callback`` receives each :class:`IterationRecord`; ``cancel`` is an
    event-like object (``is_set()``) or a zero-argument callable polled
    once per outer iteration.
    """
    config = config or SolverConfig()
    t_start = time.perf_counter()
    x = np.array(x0, dtype=float)
    if x.shape != (problem.n_vars,):
        raise ValueError(f"x0 must have length {problem.n_vars}, got {x.shape}")
    backend = BACKENDS[config.qp_backend]
    mu = mu0.copy() if mu0 is not None else PenaltyVector.uniform(problem, config.mu0, config.mu_max)
    delta = config.delta0
    trace = []
    warm = None

    def finish(status, k, message=""):
        viol = constraint_violation(problem, x)
        cert = None
        if status is SolveStatus.SUCCESS and config.certificate_dirs > 0:
            cert = stationarity_certificate(problem, x, mu, config.certificate_dirs)
        return SolveReport(status, x.copy(), k, trace, cert, time.perf_counter() - t_start,
                           mu, viol.max, problem.objective_value(x), message)

    k = 0
    try:
        phi = eval_merit(problem, x, mu)
        for k in range(config.k_max):
            if _is_cancelled(cancel):
                return finish(SolveStatus.CANCELLED, k, "cancelled by caller")

            qp = build_subproblem(problem, x, mu, delta)
            sol = backend(qp, tol=config.qp_tol, warm_start=warm)
            if sol.status is QpStatus.NUMERICAL_FAILURE:
                return finish(SolveStatus.QP_FAILURE, k, f"QP backend failed at iteration {k}")
            warm = sol
            p = sol.z[qp.slice_map["p"]]
            pred = phi - model_value(qp, problem, x, mu, p)
            trial = eval_merit(problem, x + p, mu)
            ared = phi - trial
            rho = reduction_ratio(ared, pred)
            soc_used = False
            accepted = True

            if rho is CONVERGED:
                accepted = False
                p = np.zeros_like(p)
                rho_logged = None
            else:
                if ared < 0:
                    soc_used = True
                    qp_soc = apply_second_order_correction(qp, problem, x, p)
                    sol_soc = backend(qp_soc, tol=config.qp_tol, warm_start=sol)
                    if sol_soc.status is QpStatus.NUMERICAL_FAILURE:
                        return finish(SolveStatus.QP_FAILURE, k, f"QP backend failed on SOC at iteration {k}")
                    p = sol_soc.z[qp.slice_map["p"]]
                    trial = eval_merit(problem, x + p, mu)
                    ared = phi - trial
                    # ratio keeps the predicted reduction of the uncorrected step
                    rho = ared / pred
                    accepted = ared >= 0
                rho_logged = float(rho)

            step_norm = float(np.max(np.abs(p), initial=0.0))
            if accepted:
                x = x + p
                phi = trial
                delta = update_trust_region(rho, step_norm, delta, config)
            elif rho is not CONVERGED:
                delta = config.gamma_shrink * delta

            record = IterationRecord(
                iteration=k, merit=phi, J=problem.objective_value(x),
                max_violation=constraint_violation(problem, x).max, delta=delta,
                rho=rho_logged, step_norm_inf=step_norm, soc_used=soc_used,
                accepted=accepted, mu_max_entry=mu.max_entry(), qp_iterations=sol.iterations)

            if delta < config.eps_r or step_norm < config.eps_p:
                viol = constraint_violation(problem, x)
                if viol.max < config.eps_c:
                    trace.append(record)
                    if callback:
                        callback(record)
                    return finish(SolveStatus.SUCCESS, k + 1)
                new_mu = update_penalties(mu, viol, config)
                if new_mu is PENALTY_MAX_OUT:
                    trace.append(record)
                    if callback:
                        callback(record)
                    return finish(SolveStatus.PENALTY_MAX_OUT, k + 1,
                                  f"violation {viol.max:.3e} with penalties at mu_max")
                mu = new_mu
                phi = eval_merit(problem, x, mu)
                record.penalty_bumped = True
                record.mu_max_entry = mu.max_entry()
                if config.trust_reset_on_penalty_bump:
                    delta = config.delta0
                    record.delta = delta

            trace.append(record)
            if callback:
                callback(record)
    except NonFiniteEvaluation as exc:
        raise NonFiniteEvaluation(exc.label, k) from exc
    except QpFailure:
        return finish(SolveStatus.QP_FAILURE, k)
    return finish(SolveStatus.MAX_ITERATIONS, config.k_max)
