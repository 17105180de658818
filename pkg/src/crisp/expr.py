"""Vector-valued expressions of a flat decision vector with sparse Jacobians.

An :class:`Expr` maps ``x`` (length ``n``) to a vector of ``size`` values.
Its Jacobian is stored in coordinate form with a *fixed* pattern
(``rows``, ``cols``) decided when the expression is built; evaluation only
produces the matching ``data`` array. Duplicate coordinates are allowed and
are summed on assembly.

The operators implement the elementary differentiation rules (sum,
product, quotient, sin/cos) so that problem builders can write dynamics
and contact constraints in plain arithmetic and still get exact
derivatives. This is deliberately small: elementwise operations on vectors
of equal length, nothing more.
"""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp


class Expr:
    __slots__ = ("size", "rows", "cols", "_fn")

    def __init__(self, size, rows, cols, fn):
        self.size = int(size)
        self.rows = np.asarray(rows, dtype=np.int64)
        self.cols = np.asarray(cols, dtype=np.int64)
        self._fn = fn

    def __call__(self, x):
        """Return ``(values, jac_data)``."""
        return self._fn(x)

    def value(self, x):
        return self._fn(x)[0]

    def jacobian(self, x, n_vars):
        _, data = self._fn(x)
        return sp.csr_matrix((data, (self.rows, self.cols)), shape=(self.size, n_vars))

    # -- constructors -----------------------------------------------------

    @staticmethod
    def select(index):
        """``x[index]`` as an expression."""
        index = np.asarray(index, dtype=np.int64)
        m = index.size
        ones = np.ones(m)
        return Expr(m, np.arange(m), index, lambda x: (x[index], ones))

    @staticmethod
    def linear(A, b=None):
        """``A @ x + b`` for a sparse or dense matrix ``A``."""
        A = sp.csr_matrix(A)
        coo = A.tocoo()
        data = coo.data.copy()
        m = A.shape[0]
        b = np.zeros(m) if b is None else np.broadcast_to(np.asarray(b, float), (m,)).copy()
        return Expr(m, coo.row, coo.col, lambda x: (A @ x + b, data))

    @staticmethod
    def constant(values):
        values = np.atleast_1d(np.asarray(values, dtype=float)).copy()
        empty = np.zeros(0)
        return Expr(values.size, [], [], lambda x: (values, empty))

    @staticmethod
    def concat(exprs):
        exprs = [e for e in exprs]
        if not exprs:
            return Expr.constant(np.zeros(0))
        offsets = np.cumsum([0] + [e.size for e in exprs])
        rows = np.concatenate([e.rows + off for e, off in zip(exprs, offsets)])
        cols = np.concatenate([e.cols for e in exprs])

        def fn(x):
            parts = [e(x) for e in exprs]
            return (np.concatenate([p[0] for p in parts]),
                    np.concatenate([p[1] for p in parts]))

        return Expr(offsets[-1], rows, cols, fn)

    # -- arithmetic -------------------------------------------------------

    def _check(self, other):
        if self.size != other.size:
            raise ValueError(f"size mismatch: {self.size} vs {other.size}")

    def __add__(self, other):
        if isinstance(other, Expr):
            self._check(other)
            a, b = self, other

            def fn(x):
                va, da = a(x)
                vb, db = b(x)
                return va + vb, np.concatenate([da, db])

            return Expr(a.size, np.concatenate([a.rows, b.rows]),
                        np.concatenate([a.cols, b.cols]), fn)
        c = np.asarray(other, dtype=float)
        a = self

        def fn(x):
            va, da = a(x)
            return va + c, da

        return Expr(a.size, a.rows, a.cols, fn)

    __radd__ = __add__

    def __neg__(self):
        a = self

        def fn(x):
            va, da = a(x)
            return -va, -da

        return Expr(a.size, a.rows, a.cols, fn)

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Expr):
            self._check(other)
            a, b = self, other
            ar, br = a.rows, b.rows

            def fn(x):
                va, da = a(x)
                vb, db = b(x)
                return va * vb, np.concatenate([da * vb[ar], db * va[br]])

            return Expr(a.size, np.concatenate([a.rows, b.rows]),
                        np.concatenate([a.cols, b.cols]), fn)
        c = np.asarray(other, dtype=float)
        a = self
        c_rows = c[a.rows] if c.ndim else c

        def fn(x):
            va, da = a(x)
            return va * c, da * c_rows

        return Expr(a.size, a.rows, a.cols, fn)

    __rmul__ = __mul__

    def reciprocal(self):
        a = self
        ar = a.rows

        def fn(x):
            va, da = a(x)
            inv = 1.0 / va
            return inv, -da * (inv * inv)[ar]

        return Expr(a.size, a.rows, a.cols, fn)

    def __truediv__(self, other):
        if isinstance(other, Expr):
            return self * other.reciprocal()
        return self * (1.0 / np.asarray(other, dtype=float))

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def square(self):
        a = self
        ar = a.rows

        def fn(x):
            va, da = a(x)
            return va * va, 2.0 * da * va[ar]

        return Expr(a.size, a.rows, a.cols, fn)

    def sin(self):
        a = self
        ar = a.rows

        def fn(x):
            va, da = a(x)
            return np.sin(va), da * np.cos(va)[ar]

        return Expr(a.size, a.rows, a.cols, fn)

    def cos(self):
        a = self
        ar = a.rows

        def fn(x):
            va, da = a(x)
            return np.cos(va), -da * np.sin(va)[ar]

        return Expr(a.size, a.rows, a.cols, fn)

    def __repr__(self):
        return f"Expr(size={self.size}, nnz={self.rows.size})"


def sin(e):
    return e.sin()


def cos(e):
    return e.cos()


class JacobianAssembler:
    """Sum duplicate coordinates into a CSR matrix with a frozen pattern."""

    def __init__(self, rows, cols, shape):
        self.shape = shape
        m, n = shape
        key = np.asarray(rows, np.int64) * max(n, 1) + np.asarray(cols, np.int64)
        uniq, self._slot = np.unique(key, return_inverse=True)
        self._slot = self._slot.ravel()
        self._nnz = uniq.size
        u_rows = uniq // max(n, 1)
        self._indices = (uniq % max(n, 1)).astype(np.int32)
        self._indptr = np.searchsorted(u_rows, np.arange(m + 1)).astype(np.int32)

    def __call__(self, data):
        vals = np.bincount(self._slot, weights=data, minlength=self._nnz)
        return sp.csr_matrix((vals, self._indices.copy(), self._indptr.copy()),
                             shape=self.shape)
