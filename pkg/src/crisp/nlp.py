"""Problem abstraction, merit function and derivative validation.

Problems are written as

    min J(x)  s.t.  c_i(x) = 0 (i in E),  c_i(x) >= 0 (i in I)

with a convex objective. Constraint rows are :class:`~crisp.expr.Expr`
objects stacked into one equality and one inequality block.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DuplicateConstraint, NonFiniteEvaluation, NotConvexError
from .expr import Expr, JacobianAssembler


# ---------------------------------------------------------------------------
# layout


@dataclass(frozen=True)
class VariableLayout:
    """Per-knot variable names for a flat, knot-major decision vector.

    ``x[k * n_per_knot + j]`` is variable ``names[j]`` at knot ``k``.
    ``groups`` maps a role ("state", "control", "force", "slack") to names.
    """

    names: tuple
    horizon: int = 1
    dt: float | None = None
    groups: dict = field(default_factory=dict)

    @property
    def n_per_knot(self):
        return len(self.names)

    @property
    def n_vars(self):
        return self.horizon * len(self.names)

    def column(self, name):
        return self.names.index(name)

    def index(self, name, knots=None):
        """Flat indices of ``name`` at ``knots`` (all knots by default)."""
        j = self.column(name)
        knots = np.arange(self.horizon) if knots is None else np.asarray(knots)
        return knots * self.n_per_knot + j

    def reshape(self, x):
        return np.asarray(x).reshape(self.horizon, self.n_per_knot)


# ---------------------------------------------------------------------------
# objective


class QuadraticObjective:
    """``0.5 x'Hx + g'x + c`` with a constant sparse Hessian."""

    def __init__(self, H, g=None, c=0.0):
        H = sp.csr_matrix(H)
        self.H = ((H + H.T) * 0.5).tocsr()
        n = H.shape[0]
        self.g = np.zeros(n) if g is None else np.asarray(g, dtype=float)
        self.c = float(c)

    @classmethod
    def tracking(cls, weights, reference):
        """``0.5 sum w_j (x_j - r_j)^2`` for a diagonal weight vector."""
        w = np.asarray(weights, dtype=float)
        r = np.asarray(reference, dtype=float)
        return cls(sp.diags(w), -w * r, 0.5 * float(np.sum(w * r * r)))

    def value(self, x):
        return 0.5 * float(x @ (self.H @ x)) + float(self.g @ x) + self.c

    def gradient(self, x):
        return self.H @ x + self.g

    def hessian(self, x):
        return self.H


class FunctionObjective:
    """Objective given by three user callables."""

    def __init__(self, value, gradient, hessian):
        self._value, self._gradient, self._hessian = value, gradient, hessian

    def value(self, x):
        return float(self._value(x))

    def gradient(self, x):
        return np.asarray(self._gradient(x), dtype=float)

    def hessian(self, x):
        return sp.csr_matrix(self._hessian(x))


def assert_psd(H, tol=1e-10):
    """Raise :class:`NotConvexError` unless ``H`` is PSD to ``tol``."""
    H = sp.csr_matrix(H)
    n = H.shape[0]
    if n == 0:
        return
    off = H - sp.diags(H.diagonal())
    if off.count_nonzero() == 0:
        d = H.diagonal()
        if d.min() < -tol:
            raise NotConvexError(f"objective Hessian has pivot {d.min():.3e}")
        return
    dense = H.toarray()
    if np.max(np.abs(dense - dense.T)) > 1e-12:
        raise NotConvexError("objective Hessian is not symmetric")
    try:
        np.linalg.cholesky(dense + tol * np.eye(n))
    except np.linalg.LinAlgError:
        lam = np.linalg.eigvalsh(dense).min()
        if lam < -tol:
            raise NotConvexError(f"objective Hessian has eigenvalue {lam:.3e}") from None


# ---------------------------------------------------------------------------
# problem


class NlpProblem:
    """A nonlinear program with labelled constraint rows.

    Evaluators are pure functions of ``x``; a problem may be shared
    read-only between concurrent solves.
    """

    def __init__(self, n_vars, objective, eq=None, ineq=None, eq_labels=None,
                 ineq_labels=None, layout=None, name="problem", meta=None,
                 check_convexity=True):
        self.n_vars = int(n_vars)
        self.objective = objective
        self.eq = eq if eq is not None else Expr.constant(np.zeros(0))
        self.ineq = ineq if ineq is not None else Expr.constant(np.zeros(0))
        self.eq_labels = list(eq_labels) if eq_labels is not None else [f"eq[{i}]" for i in range(self.eq.size)]
        self.ineq_labels = list(ineq_labels) if ineq_labels is not None else [f"ineq[{i}]" for i in range(self.ineq.size)]
        if len(self.eq_labels) != self.eq.size or len(self.ineq_labels) != self.ineq.size:
            raise ValueError("one label per constraint row is required")
        self.layout = layout
        self.name = name
        self.meta = dict(meta or {})
        self._asm_eq = JacobianAssembler(self.eq.rows, self.eq.cols, (self.eq.size, self.n_vars))
        self._asm_ineq = JacobianAssembler(self.ineq.rows, self.ineq.cols, (self.ineq.size, self.n_vars))
        if check_convexity:
            assert_psd(objective.hessian(np.zeros(self.n_vars)))

    @property
    def m_eq(self):
        return self.eq.size

    @property
    def m_ineq(self):
        return self.ineq.size

    @property
    def labels(self):
        return self.eq_labels + self.ineq_labels

    def _finite(self, values, labels):
        bad = ~np.isfinite(values)
        if bad.any():
            raise NonFiniteEvaluation(labels[int(np.argmax(bad))])

    def objective_value(self, x):
        v = self.objective.value(x)
        if not np.isfinite(v):
            raise NonFiniteEvaluation("objective")
        return v

    def constraints(self, x):
        """``(c_eq, c_ineq)`` at ``x``."""
        c_eq = self.eq.value(x)
        c_in = self.ineq.value(x)
        self._finite(c_eq, self.eq_labels)
        self._finite(c_in, self.ineq_labels)
        return c_eq, c_in

    def linearize(self, x):
        """Values and Jacobians of both constraint blocks at ``x``."""
        c_eq, d_eq = self.eq(x)
        c_in, d_in = self.ineq(x)
        self._finite(c_eq, self.eq_labels)
        self._finite(c_in, self.ineq_labels)
        J_eq = self._asm_eq(d_eq)
        J_in = self._asm_ineq(d_in)
        for J, labels in ((J_eq, self.eq_labels), (J_in, self.ineq_labels)):
            bad = ~np.isfinite(J.data)
            if bad.any():
                rows = np.repeat(np.arange(J.shape[0]), np.diff(J.indptr))
                raise NonFiniteEvaluation(labels[rows[np.argmax(bad)]])
        return c_eq, J_eq, c_in, J_in

    def jacobians(self, x):
        _, J_eq, _, J_in = self.linearize(x)
        return J_eq, J_in


# ---------------------------------------------------------------------------
# penalties, merit, violation


@dataclass
class PenaltyVector:
    mu_eq: np.ndarray
    mu_ineq: np.ndarray
    mu_max: float = 1e6

    @classmethod
    def uniform(cls, problem, mu0=10.0, mu_max=1e6):
        return cls(np.full(problem.m_eq, float(mu0)), np.full(problem.m_ineq, float(mu0)), float(mu_max))

    def copy(self):
        return PenaltyVector(self.mu_eq.copy(), self.mu_ineq.copy(), self.mu_max)

    def max_entry(self):
        return float(max(self.mu_eq.max(initial=0.0), self.mu_ineq.max(initial=0.0)))

    def scaled(self, factor):
        return PenaltyVector(self.mu_eq * factor, self.mu_ineq * factor, self.mu_max * factor)


@dataclass
class ViolationReport:
    max_eq: float
    max_ineq: float
    per_row: np.ndarray

    @property
    def max(self):
        return max(self.max_eq, self.max_ineq)


def _penalty(c_eq, c_in, mu):
    return float(mu.mu_eq @ np.abs(c_eq) + mu.mu_ineq @ np.maximum(0.0, -c_in))


def eval_merit(problem, x, mu):
    """Weighted exact l1 penalty merit ``J + sum mu|c_E| + sum mu [c_I]^-``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (problem.n_vars,):
        raise ValueError(f"x must have length {problem.n_vars}")
    if mu.mu_eq.shape != (problem.m_eq,) or mu.mu_ineq.shape != (problem.m_ineq,):
        raise ValueError("penalty dimensions do not match the constraint counts")
    c_eq, c_in = problem.constraints(x)
    return problem.objective_value(x) + _penalty(c_eq, c_in, mu)


def constraint_violation(problem, x):
    c_eq, c_in = problem.constraints(np.asarray(x, dtype=float))
    v_eq = np.abs(c_eq)
    v_in = np.maximum(0.0, -c_in)
    return ViolationReport(float(v_eq.max(initial=0.0)), float(v_in.max(initial=0.0)),
                           np.concatenate([v_eq, v_in]))


# ---------------------------------------------------------------------------
# builder and complementarity


class ProductMode(enum.Enum):
    EQUALITY = "equality"
    INEQUALITY = "inequality"


@dataclass(frozen=True)
class ComplementaritySpec:
    """``0 <= a(x) _|_ b(x) >= 0`` between two registered expressions."""

    lhs: str
    rhs: str
    product_mode: ProductMode = ProductMode.EQUALITY


class ProblemBuilder:
    """Accumulates labelled constraint rows and builds an :class:`NlpProblem`."""

    def __init__(self, n_vars=None, layout=None, name="problem",
                 complementarity_mode=ProductMode.EQUALITY):
        if n_vars is None:
            if layout is None:
                raise ValueError("need n_vars or a layout")
            n_vars = layout.n_vars
        self.n_vars = int(n_vars)
        self.layout = layout
        self.name = name
        self.complementarity_mode = ProductMode(complementarity_mode)
        self.objective = None
        self.meta = {}
        self._eq, self._eq_labels = [], []
        self._ineq, self._ineq_labels = [], []
        self._exprs = {}
        self._pairs = set()
        self._signed = set()

    def var(self, name, knots=None):
        return Expr.select(self.layout.index(name, knots))

    def _labels(self, kind, label, size, tags):
        tags = range(size) if tags is None else tags
        return [f"{kind}:{label}[{t}]" for t in tags]

    def add_eq(self, expr, label, kind="dynamics", tags=None):
        self._eq.append(expr)
        self._eq_labels += self._labels(kind, label, expr.size, tags)

    def add_ineq(self, expr, label, kind="bound", tags=None):
        self._ineq.append(expr)
        self._ineq_labels += self._labels(kind, label, expr.size, tags)

    def register(self, name, expr, tags=None):
        if name in self._exprs:
            raise DuplicateConstraint(f"expression {name!r} already registered")
        self._exprs[name] = (expr, tags)
        return name

    def expression(self, name):
        return self._exprs[name][0]

    def complementarity(self, lhs, rhs, mode=None):
        spec = ComplementaritySpec(lhs, rhs, ProductMode(mode) if mode else self.complementarity_mode)
        expand_complementarity(spec, self)
        return spec

    def build(self, check_convexity=True):
        if self.objective is None:
            raise ValueError("objective not set")
        return NlpProblem(
            self.n_vars, self.objective,
            Expr.concat(self._eq), Expr.concat(self._ineq),
            self._eq_labels, self._ineq_labels,
            layout=self.layout, name=self.name, meta=self.meta,
            check_convexity=check_convexity,
        )


def expand_complementarity(spec, builder):
    """Append ``a >= 0``, ``b >= 0`` and the product row for one pair.

    Sign rows are emitted once per operand, so an expression shared by
    several pairs is not constrained twice.
    """
    key = frozenset((spec.lhs, spec.rhs))
    if key in builder._pairs:
        raise DuplicateConstraint(f"complementarity {spec.lhs} _|_ {spec.rhs} already expanded")
    a, tags = builder._exprs[spec.lhs]
    b, _ = builder._exprs[spec.rhs]
    if a.size != b.size:
        raise ValueError(f"operand sizes differ: {a.size} vs {b.size}")
    builder._pairs.add(key)
    for name, expr in ((spec.lhs, a), (spec.rhs, b)):
        if name not in builder._signed:
            builder._signed.add(name)
            builder.add_ineq(expr, name, kind="complementarity", tags=builder._exprs[name][1])
    name = f"{spec.lhs}*{spec.rhs}"
    if spec.product_mode is ProductMode.EQUALITY:
        builder.add_eq(a * b, name, kind="complementarity", tags=tags)
    else:
        builder.add_ineq(-(a * b), name, kind="complementarity", tags=tags)


# ---------------------------------------------------------------------------
# derivative checks


@dataclass
class BlockCheck:
    max_rel_error: float
    passed: bool
    bad_rows: list


@dataclass
class DerivReport:
    blocks: dict
    threshold: float

    @property
    def passed(self):
        return all(b.passed for b in self.blocks.values())

    @property
    def max_rel_error(self):
        return max((b.max_rel_error for b in self.blocks.values()), default=0.0)


def _compare(analytic, fd, threshold, labels=None):
    err = np.abs(analytic - fd) / np.maximum(1.0, np.abs(fd))
    if err.size == 0:
        return BlockCheck(0.0, True, [])
    row_err = err.max(axis=1) if err.ndim == 2 else err
    bad = np.flatnonzero(row_err > threshold)
    bad_rows = [labels[i] for i in bad] if labels is not None else bad.tolist()
    return BlockCheck(float(err.max()), bad.size == 0, bad_rows)


def check_derivatives(problem, x, h=1e-6, threshold=1e-4):
    """Compare analytic derivatives with central finite differences."""
    if h <= 0:
        raise ValueError("h must be positive")
    x = np.asarray(x, dtype=float)
    n = problem.n_vars
    obj = problem.objective
    c_eq, J_eq, c_in, J_in = problem.linearize(x)
    g = obj.gradient(x)
    H = sp.csr_matrix(obj.hessian(x)).toarray()

    fd_g = np.empty(n)
    fd_H = np.empty((n, n))
    fd_eq = np.empty((problem.m_eq, n))
    fd_in = np.empty((problem.m_ineq, n))
    xp = x.copy()
    for j in range(n):
        xp[j] = x[j] + h
        fp, gp = obj.value(xp), obj.gradient(xp)
        ep, ip = problem.eq.value(xp), problem.ineq.value(xp)
        xp[j] = x[j] - h
        fm, gm = obj.value(xp), obj.gradient(xp)
        em, im = problem.eq.value(xp), problem.ineq.value(xp)
        xp[j] = x[j]
        fd_g[j] = (fp - fm) / (2 * h)
        fd_H[:, j] = (gp - gm) / (2 * h)
        fd_eq[:, j] = (ep - em) / (2 * h)
        fd_in[:, j] = (ip - im) / (2 * h)

    blocks = {
        "gradient": _compare(g, fd_g, threshold),
        "hessian": _compare(H, fd_H, threshold),
        "eq_jacobian": _compare(J_eq.toarray(), fd_eq, threshold, problem.eq_labels),
        "ineq_jacobian": _compare(J_in.toarray(), fd_in, threshold, problem.ineq_labels),
    }
    return DerivReport(blocks, threshold)
