"""Convex QP backends.

All backends accept a QP in the canonical form used by the subproblem
builder::

    minimize    0.5 z'Pz + q'z
    subject to  A_eq z  = b_eq
                A_ineq z >= b_ineq
                lb <= z <= ub

``reference`` is a primal-dual interior-point method (Mehrotra
predictor-corrector) on a Ruiz-equilibrated copy of the problem. Each
Newton system is the quasi-definite augmented KKT matrix, factored with a
sparse LDL' (``qdldl``) whose symbolic analysis is reused across
iterations. ``oracle`` enumerates active sets and is only meant for tiny
instances in tests.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
import qdldl
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ProblemTooLarge


class QpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    MAX_ITER = "MaxIter"
    NUMERICAL_FAILURE = "NumericalFailure"


@dataclass
class KktResiduals:
    primal_res: float
    dual_res: float
    gap: float

    def max(self):
        return max(self.primal_res, self.dual_res, self.gap)


@dataclass
class QpSolution:
    z: np.ndarray
    y_eq: np.ndarray
    y_ineq: np.ndarray
    y_bounds: np.ndarray
    status: QpStatus
    kkt: KktResiduals
    iterations: int
    objective: float = np.nan
    score: float = np.nan


def _inf_norm(v):
    return float(np.max(np.abs(v), initial=0.0))


def qp_objective(qp, z):
    return 0.5 * float(z @ (qp.P @ z)) + float(qp.q @ z)


def kkt_residuals(qp, sol):
    """Infinity-norm KKT residuals of a primal-dual pair."""
    z = sol.z
    lb, ub = qp.lb, qp.ub
    r_eq = qp.A_eq @ z - qp.b_eq
    r_in = qp.A_ineq @ z - qp.b_ineq
    low = np.where(np.isfinite(lb), lb - z, 0.0)
    upp = np.where(np.isfinite(ub), z - ub, 0.0)
    primal = max(_inf_norm(r_eq), _inf_norm(np.minimum(r_in, 0.0)),
                 float(np.max(low, initial=0.0)), float(np.max(upp, initial=0.0)), 0.0)

    yb = sol.y_bounds
    stat = qp.P @ z + qp.q - qp.A_eq.T @ sol.y_eq - qp.A_ineq.T @ sol.y_ineq - yb
    # sign conditions: y_ineq >= 0; bound duals may only push from a finite side
    sign = max(float(np.max(-sol.y_ineq, initial=0.0)),
               float(np.max(np.where(np.isfinite(lb), 0.0, np.maximum(yb, 0.0)), initial=0.0)),
               float(np.max(np.where(np.isfinite(ub), 0.0, np.maximum(-yb, 0.0)), initial=0.0)))
    dual = max(_inf_norm(stat), sign)

    yl = np.maximum(yb, 0.0)
    yu = np.maximum(-yb, 0.0)
    gl = np.where(np.isfinite(lb), (z - np.where(np.isfinite(lb), lb, 0.0)) * yl, 0.0)
    gu = np.where(np.isfinite(ub), (np.where(np.isfinite(ub), ub, 0.0) - z) * yu, 0.0)
    gap = max(_inf_norm(r_in * sol.y_ineq), _inf_norm(gl), _inf_norm(gu))
    return KktResiduals(primal, dual, gap)


# ---------------------------------------------------------------------------
# interior point


def _col_norms(M, n):
    if M.nnz == 0:
        return np.zeros(n)
    return np.asarray(abs(M).max(axis=0).todense()).ravel()


def _row_norms(M, m):
    if M.nnz == 0:
        return np.zeros(m)
    return np.asarray(abs(M).max(axis=1).todense()).ravel()


def _ruiz(P, A_eq, A_in, q, d_max, iters=15):
    """Symmetric Ruiz equilibration of the KKT matrix, plus cost scaling.

    ``d_max`` caps the cumulative variable scaling so that a narrow box
    does not collapse to a sliver the barrier cannot resolve.
    """
    n = P.shape[0]
    m_e, m_i = A_eq.shape[0], A_in.shape[0]
    D = np.ones(n)
    E_e = np.ones(m_e)
    E_i = np.ones(m_i)
    Ps, Ae, Ai = P, A_eq, A_in
    for _ in range(iters):
        cn = np.maximum.reduce([_col_norms(Ps, n), _col_norms(Ae, n), _col_norms(Ai, n)])
        d = 1.0 / np.sqrt(np.where(cn > 1e-8, cn, 1.0))
        e_e = 1.0 / np.sqrt(np.where((r := _row_norms(Ae, m_e)) > 1e-8, r, 1.0))
        e_i = 1.0 / np.sqrt(np.where((r := _row_norms(Ai, m_i)) > 1e-8, r, 1.0))
        d, e_e, e_i = (np.clip(v, 1e-4, 1e4) for v in (d, e_e, e_i))
        d = np.clip(D * d, 1e-4, d_max) / D
        Dd = sp.diags(d)
        Ps = Dd @ Ps @ Dd
        Ae = sp.diags(e_e) @ Ae @ Dd
        Ai = sp.diags(e_i) @ Ai @ Dd
        D *= d
        E_e *= e_e
        E_i *= e_i
        if max(np.abs(1 - d).max(initial=0), np.abs(1 - e_e).max(initial=0),
               np.abs(1 - e_i).max(initial=0)) < 1e-3:
            break
    pn = _col_norms(Ps, n)
    scale = max(float(pn.mean()) if n else 0.0, _inf_norm(D * q))
    c = 1.0 / scale if scale > 0 else 1.0
    c = float(np.clip(c, 1e-6, 1e4))
    return D, E_e, E_i, c, sp.csr_matrix(Ps * c), sp.csr_matrix(Ae), sp.csr_matrix(Ai)


class InteriorPoint:
    """Single-threaded IPM workspace for one QP."""

    delta = 1e-9  # dual regularization of the quasi-definite KKT matrix

    def __init__(self, qp, regularization=0.0):
        self.qp = qp
        P = sp.csr_matrix(qp.P)
        A_eq = sp.csr_matrix(qp.A_eq)
        A_in = sp.csr_matrix(qp.A_ineq)
        self.n, self.m_e, self.m_i = P.shape[0], A_eq.shape[0], A_in.shape[0]
        width = qp.ub - qp.lb
        d_max = np.where(np.isfinite(width), np.maximum(width, 1.0), 1e4)
        D, Ee, Ei, c, Ps, Ae, Ai = _ruiz(P, A_eq, A_in, qp.q, d_max)
        self.D, self.Ee, self.Ei, self.c = D, Ee, Ei, c
        self.P, self.Ae, self.Ai = Ps, Ae, Ai
        self.AeT, self.AiT = Ae.T.tocsr(), Ai.T.tocsr()
        self.q = c * D * qp.q
        self.be = Ee * qp.b_eq
        self.bi = Ei * qp.b_ineq
        self.lb = qp.lb / D
        self.ub = qp.ub / D
        self.hasl = np.isfinite(self.lb)
        self.hasu = np.isfinite(self.ub)
        self.lbf = np.where(self.hasl, self.lb, 0.0)
        self.ubf = np.where(self.hasu, self.ub, 0.0)
        self.rho = max(regularization, 0.0) + 1e-11
        self._build_pattern()
        self._ldl = None

    def _build_pattern(self):
        n, me, mi = self.n, self.m_e, self.m_i
        N = n + me + mi
        Pu = sp.triu(self.P, k=1).tocoo()
        Aec = self.Ae.tocoo()
        Aic = self.Ai.tocoo()
        rows = np.concatenate([Pu.row, np.arange(N), Aec.col, Aic.col])
        cols = np.concatenate([Pu.col, np.arange(N), n + Aec.row, n + me + Aic.row])
        diag0 = np.zeros(N)
        diag0[:n] = self.P.diagonal()
        vals = np.concatenate([Pu.data, diag0, Aec.data, Aic.data])
        key = cols.astype(np.int64) * N + rows
        uniq, inv = np.unique(key, return_inverse=True)
        self.K_data = np.bincount(inv.ravel(), weights=vals, minlength=uniq.size)
        self.K_indices = (uniq % N).astype(np.int32)
        colidx = uniq // N
        self.K_indptr = np.searchsorted(colidx, np.arange(N + 1)).astype(np.int32)
        self.diag_pos = np.flatnonzero(self.K_indices == colidx)
        self.N = N

    def _factor(self, sigma_b, w):
        d = self.K_data.copy()
        upd = np.concatenate([sigma_b + self.rho, np.full(self.m_e, -self.delta), -w - self.delta])
        d[self.diag_pos] += upd
        K = sp.csc_matrix((d, self.K_indices, self.K_indptr), shape=(self.N, self.N))
        if self._ldl is None:
            self._ldl = qdldl.Solver(K, upper=True)
        else:
            self._ldl.update(K, upper=True)
        self._sigma_b, self._w = sigma_b, w

    def _kkt_mult(self, v):
        n, me = self.n, self.m_e
        dz, dy, dl = v[:n], v[n:n + me], v[n + me:]
        top = self.P @ dz + self._sigma_b * dz + self.AeT @ dy + self.AiT @ dl
        mid = self.Ae @ dz
        bot = self.Ai @ dz - self._w * dl
        return np.concatenate([top, mid, bot])

    def _newton(self, rhs, refine=3):
        sol = self._ldl.solve(rhs)
        for _ in range(refine):
            r = rhs - self._kkt_mult(sol)
            if _inf_norm(r) <= 1e-14 * max(1.0, _inf_norm(rhs)):
                break
            sol = sol + self._ldl.solve(r)
        return sol

    def _unscale(self, z, y, lam, zl, zu):
        c = self.c
        return (self.D * z, self.Ee * y / c, self.Ei * lam / c,
                (np.where(self.hasl, zl, 0.0) - np.where(self.hasu, zu, 0.0)) / (c * self.D))

    def _normalized_residual(self, sol):
        """Largest KKT residual relative to the magnitude of the terms it balances.

        Stationarity is normalized row by row so that large penalty costs on
        slack columns do not loosen the test on the step columns.
        """
        qp, z = self.qp, sol.z
        terms = [np.abs(qp.q), np.abs(qp.P @ z), np.abs(qp.A_eq.T @ sol.y_eq),
                 np.abs(qp.A_ineq.T @ sol.y_ineq), np.abs(sol.y_bounds)]
        scale_d = np.maximum.reduce(terms + [np.ones_like(z)])
        stat = qp.P @ z + qp.q - qp.A_eq.T @ sol.y_eq - qp.A_ineq.T @ sol.y_ineq - sol.y_bounds
        dual = max(float(np.max(np.abs(stat) / scale_d, initial=0.0)),
                   float(np.max(-sol.y_ineq, initial=0.0)) / max(1.0, _inf_norm(sol.y_ineq)))
        scale_p = max(1.0, _inf_norm(qp.b_eq), _inf_norm(qp.b_ineq),
                      _inf_norm(qp.A_eq @ z), _inf_norm(qp.A_ineq @ z))
        scale_g = max(1.0, abs(qp_objective(qp, z)))
        return max(sol.kkt.primal_res / scale_p, dual, sol.kkt.gap / scale_g)

    def _make_solution(self, z, y, lam, zl, zu, status, it):
        zu_, ye, yi, yb = self._unscale(z, y, lam, zl, zu)
        zu_ = np.clip(zu_, self.qp.lb, self.qp.ub)
        sol = QpSolution(zu_, ye, yi, yb, status, None, it)
        sol.kkt = kkt_residuals(self.qp, sol)
        sol.objective = qp_objective(self.qp, zu_)
        return sol

    def _initial_point(self, warm_start):
        n = self.n
        if warm_start is not None and warm_start.z.shape == (n,):
            z = warm_start.z / self.D
        else:
            z = np.zeros(n)
        z = np.clip(z, np.where(self.hasl, self.lb, -np.inf), np.where(self.hasu, self.ub, np.inf))
        theta = 1.0
        both = self.hasl & self.hasu
        half = np.where(both, 0.5 * (self.ubf - self.lbf), np.inf)
        sl = np.where(self.hasl, np.maximum(z - self.lbf, np.minimum(theta, half)), 1.0)
        su = np.where(self.hasu, np.maximum(self.ubf - z, np.minimum(theta, half)), 1.0)
        sl = np.maximum(sl, 1e-8)
        su = np.maximum(su, 1e-8)
        s = np.maximum(self.Ai @ z - self.bi, theta)
        return z, np.zeros(self.m_e), np.ones(self.m_i), s, sl, np.where(self.hasl, 1.0, 0.0), su, np.where(self.hasu, 1.0, 0.0)

    def solve(self, tol=1e-8, warm_start=None, max_iter=100):
        n = self.n
        hasl, hasu = self.hasl, self.hasu
        nl, nu = int(hasl.sum()), int(hasu.sum())
        m_c = self.m_i + nl + nu
        z, y, lam, s, sl, zl, su, zu = self._initial_point(warm_start)

        def step_to_boundary(v, dv):
            neg = dv < 0
            if not neg.any():
                return 1.0
            return float(min(1.0, np.min(-v[neg] / dv[neg])))

        best = None
        for it in range(max_iter + 1):
            rd = self.P @ z + self.q - self.AeT @ y - self.AiT @ lam - zl + zu
            re = self.Ae @ z - self.be
            ri = self.Ai @ z - s - self.bi
            rl = np.where(hasl, z - sl - self.lbf, 0.0)
            ru = np.where(hasu, z + su - self.ubf, 0.0)
            mu = (s @ lam + (sl * zl)[hasl].sum() + (su * zu)[hasu].sum()) / max(m_c, 1)

            if not all(np.isfinite(v).all() for v in (z, y, lam, s, sl, su, zl, zu)):
                break
            sol = self._make_solution(z, y, lam, zl, zu, QpStatus.MAX_ITER, it)
            sol.score = self._normalized_residual(sol)
            if best is None or sol.score <= best.score:
                best = sol
            if sol.score <= tol:
                self._lam = lam
                out = self._polish(sol, tol, z, sl, zl, su, zu)
                out.iterations = it
                return out
            if it == max_iter:
                break

            sigma_b = np.where(hasl, zl / sl, 0.0) + np.where(hasu, zu / su, 0.0)
            w = s / lam
            try:
                self._factor(sigma_b, w)
            except Exception:
                return self._failure(best, it)

            def direction(rc_i, rc_l, rc_u):
                r1 = -rd - np.where(hasl, (rc_l + zl * rl) / sl, 0.0) \
                    + np.where(hasu, (rc_u - zu * ru) / su, 0.0)
                rhs = np.concatenate([r1, -re, -rc_i / lam - ri])
                sol_ = self._newton(rhs)
                dz = sol_[:n]
                dy = -sol_[n:n + self.m_e]
                dlam = -sol_[n + self.m_e:]
                ds = self.Ai @ dz + ri
                dsl = np.where(hasl, dz + rl, 0.0)
                dzl = np.where(hasl, (-rc_l - zl * dsl) / sl, 0.0)
                dsu = np.where(hasu, -ru - dz, 0.0)
                dzu = np.where(hasu, (-rc_u - zu * dsu) / su, 0.0)
                return dz, dy, dlam, ds, dsl, dzl, dsu, dzu

            def max_step(d):
                _, _, dlam, ds, dsl, dzl, dsu, dzu = d
                a = min(step_to_boundary(s, ds), step_to_boundary(lam, dlam))
                if nl:
                    a = min(a, step_to_boundary(sl[hasl], dsl[hasl]), step_to_boundary(zl[hasl], dzl[hasl]))
                if nu:
                    a = min(a, step_to_boundary(su[hasu], dsu[hasu]), step_to_boundary(zu[hasu], dzu[hasu]))
                return a

            rc_i = s * lam
            rc_l = np.where(hasl, sl * zl, 0.0)
            rc_u = np.where(hasu, su * zu, 0.0)
            aff = direction(rc_i, rc_l, rc_u)
            if not np.isfinite(aff[0]).all():
                return self._failure(best, it)
            a_aff = max_step(aff)
            _, _, dlam_a, ds_a, dsl_a, dzl_a, dsu_a, dzu_a = aff
            mu_aff = ((s + a_aff * ds_a) @ (lam + a_aff * dlam_a)
                      + ((sl + a_aff * dsl_a) * (zl + a_aff * dzl_a))[hasl].sum()
                      + ((su + a_aff * dsu_a) * (zu + a_aff * dzu_a))[hasu].sum()) / max(m_c, 1)
            sigma = float(np.clip((mu_aff / mu) ** 3, 0.0, 1.0)) if mu > 0 else 0.0

            cor = direction(rc_i + ds_a * dlam_a - sigma * mu,
                            np.where(hasl, rc_l + dsl_a * dzl_a - sigma * mu, 0.0),
                            np.where(hasu, rc_u + dsu_a * dzu_a - sigma * mu, 0.0))
            if not np.isfinite(cor[0]).all():
                return self._failure(best, it)
            a = min(1.0, 0.99 * max_step(cor))
            dz, dy, dlam, ds, dsl, dzl, dsu, dzu = cor
            z = z + a * dz
            y = y + a * dy
            lam = lam + a * dlam
            s = s + a * ds
            sl = np.where(hasl, sl + a * dsl, 1.0)
            zl = np.where(hasl, zl + a * dzl, 0.0)
            su = np.where(hasu, su + a * dsu, 1.0)
            zu = np.where(hasu, zu + a * dzu, 0.0)

        if best is None:
            return self._failure(None, max_iter)
        best.status = QpStatus.MAX_ITER
        best.iterations = max_iter
        return best

    def _failure(self, best, it):
        if best is None:
            n = self.n
            z = np.clip(np.zeros(n), self.qp.lb, self.qp.ub)
            best = QpSolution(z, np.zeros(self.m_e), np.zeros(self.m_i), np.zeros(n),
                              QpStatus.NUMERICAL_FAILURE, None, it)
            best.kkt = kkt_residuals(self.qp, best)
            best.objective = qp_objective(self.qp, z)
        best.status = QpStatus.NUMERICAL_FAILURE
        best.iterations = it
        return best

    def _polish(self, sol, tol, z, sl, zl, su, zu):
        """Re-solve the equality-constrained KKT system on the detected active set.

        Bounds judged active are fixed exactly; active inequality rows become
        equalities. The polished pair replaces the IPM iterate only if it is
        sign-consistent and has a smaller normalized residual.
        """
        sol.status = QpStatus.OPTIMAL
        try:
            cand = self._active_set_solve(z, sl, zl, su, zu)
        except Exception:
            cand = None
        if cand is not None:
            cand.score = self._normalized_residual(cand)
            if cand.score <= min(tol, sol.score) and cand.kkt.max() <= sol.kkt.max():
                return cand
        return sol

    def _active_set_solve(self, z, sl, zl, su, zu):
        n, me = self.n, self.m_e
        s = self.Ai @ z - self.bi
        at_l = self.hasl & (zl > sl)
        at_u = self.hasu & (zu > su) & ~at_l
        fixed = at_l | at_u
        free = np.flatnonzero(~fixed)
        zf = np.where(at_l, self.lbf, np.where(at_u, self.ubf, 0.0))
        act = self._lam > np.maximum(s, 0.0)
        G = sp.vstack([self.Ae, self.Ai[np.flatnonzero(act)]], format="csc")
        h = np.concatenate([self.be, self.bi[act]])
        Gf = G[:, free]
        Pf = self.P.tocsc()[free][:, free]
        rhs_z = -(self.q[free] + self.P.tocsr()[free] @ zf)
        rhs_y = h - G @ zf
        nf, mg = free.size, G.shape[0]
        reg = 1e-10
        K = sp.bmat([[Pf + reg * sp.identity(nf), Gf.T], [Gf, -reg * sp.identity(mg)]], format="csc")
        K_true = sp.bmat([[Pf, Gf.T], [Gf, None]], format="csc")
        lu = spla.splu(K)
        rhs = np.concatenate([rhs_z, rhs_y])
        sol = lu.solve(rhs)
        for _ in range(5):
            sol = sol + lu.solve(rhs - K_true @ sol)
        zz = zf.copy()
        zz[free] = sol[:nf]
        nu = -sol[nf:]
        y = nu[:me]
        lam = np.zeros(self.m_i)
        lam[act] = nu[me:]
        if (lam < 0).any():
            return None
        rd = self.P @ zz + self.q - self.AeT @ y - self.AiT @ lam
        zl_ = np.where(at_l, np.maximum(rd, 0.0), 0.0)
        zu_ = np.where(at_u, np.maximum(-rd, 0.0), 0.0)
        out = self._make_solution(zz, y, lam, zl_, zu_, QpStatus.OPTIMAL, 0)
        return out

def solve_qp(qp, tol=1e-8, warm_start=None, max_iter=100, regularization=0.0):
    """Solve a convex QP with the reference interior-point backend.

    A warm start only seeds the primal iterate; if the warm-started run
    does not reach ``Optimal`` the problem is re-solved cold. A numerical
    failure is retried once with extra primal regularization.
    """
    sol = InteriorPoint(qp, regularization).solve(tol, warm_start, max_iter)
    if warm_start is not None and sol.status is not QpStatus.OPTIMAL:
        sol = InteriorPoint(qp, regularization).solve(tol, None, max_iter)
    if sol.status is QpStatus.NUMERICAL_FAILURE:
        retry = InteriorPoint(qp, regularization + 1e-9).solve(tol, None, max_iter)
        if retry.status is not QpStatus.NUMERICAL_FAILURE:
            return retry
    return sol


# ---------------------------------------------------------------------------
# active-set enumeration oracle


def solve_qp_oracle(qp, max_constraints=25, feas_tol=1e-9):
    """Exact QP solution by enumerating candidate active sets.

    Every subset of inequality rows and finite bounds (with at most one
    side of each box active) is treated as equalities; the resulting KKT
    system is solved in the least-squares sense and the feasible
    consistent candidate with the lowest objective wins.
    """
    P = sp.csr_matrix(qp.P).toarray()
    q = np.asarray(qp.q, float)
    Ae = sp.csr_matrix(qp.A_eq).toarray()
    Ai = sp.csr_matrix(qp.A_ineq).toarray()
    be, bi, lb, ub = qp.b_eq, qp.b_ineq, qp.lb, qp.ub
    n, me, mi = P.shape[0], Ae.shape[0], Ai.shape[0]
    hasl, hasu = np.isfinite(lb), np.isfinite(ub)
    total = me + mi + int(hasl.sum()) + int(hasu.sum())
    if total > max_constraints:
        raise ProblemTooLarge(f"{total} constraints exceed the enumeration bound {max_constraints}")

    # candidate rows: inequality rows, then one unit row per finite bound
    lo_idx, up_idx = np.flatnonzero(hasl), np.flatnonzero(hasu)
    eye = np.eye(n)
    C = np.vstack([Ai, eye[lo_idx], eye[up_idx]])
    hc = np.concatenate([bi, lb[lo_idx], ub[up_idx]])
    kind = np.concatenate([np.zeros(mi, int), np.ones(lo_idx.size, int), np.full(up_idx.size, 2)])
    owner = np.concatenate([np.arange(mi), lo_idx, up_idx])

    # cartesian product of per-row choices; a box offers {free, lower, upper}
    U = C.shape[0]
    groups = [np.array([[False], [True]]) for _ in range(mi)]
    cols = [[i] for i in range(mi)]
    for j in range(n):
        opts = [c for c in range(mi, U) if owner[c] == j]
        if opts:
            groups.append(np.vstack([np.zeros(len(opts), bool), np.eye(len(opts), dtype=bool)]))
            cols.append(opts)
    masks = np.zeros((1, U), dtype=bool)
    for g, cc in zip(groups, cols):
        rep = np.repeat(masks, len(g), axis=0)
        rep[:, cc] = np.tile(g, (len(masks), 1))
        masks = rep
    sizes = masks.sum(axis=1) + me
    masks = masks[sizes <= n]
    sizes = sizes[sizes <= n]

    scale = max(1.0, np.abs(P).max(initial=0), np.abs(q).max(initial=0))
    best_val, best = np.inf, None
    for k in np.unique(sizes):
        sel = masks[sizes == k]
        B = len(sel)
        idx = np.nonzero(sel)[1].reshape(B, k - me)
        G = np.concatenate([np.broadcast_to(Ae, (B, me, n)), C[idx]], axis=1)
        h = np.concatenate([np.broadcast_to(be, (B, me)), hc[idx]], axis=1)
        K = np.zeros((B, n + k, n + k))
        K[:, :n, :n] = P
        K[:, :n, n:] = np.transpose(G, (0, 2, 1))
        K[:, n:, :n] = G
        rhs = np.concatenate([np.broadcast_to(-q, (B, n)), h], axis=1)
        # symmetric pseudo-inverse through an eigendecomposition
        w, V = np.linalg.eigh(K)
        cut = 1e-12 * np.abs(w).max(axis=1, keepdims=True)
        w_inv = np.where(np.abs(w) > cut, 1.0 / np.where(w == 0, 1.0, w), 0.0)
        sol = np.einsum("bij,bj->bi", V, w_inv * np.einsum("bji,bj->bi", V, rhs))
        resid = np.abs(np.einsum("bij,bj->bi", K, sol) - rhs).max(axis=1)
        sol[:, n:] *= -1.0
        z = sol[:, :n]
        ok = resid <= 1e-8 * scale
        if mi:
            ok &= (z @ Ai.T - bi).min(axis=1) >= -feas_tol
        ok &= np.all(np.where(hasl, z >= lb - feas_tol, True), axis=1)
        ok &= np.all(np.where(hasu, z <= ub + feas_tol, True), axis=1)
        if not ok.any():
            continue
        vals = 0.5 * np.einsum("bi,ij,bj->b", z, P, z) + z @ q
        vals = np.where(ok, vals, np.inf)
        b = int(np.argmin(vals))
        if vals[b] < best_val - 1e-12:
            best_val = vals[b]
            best = (idx[b], sol[b])

    if best is None:
        raise ValueError("no feasible active set found; QP is infeasible or unbounded")
    rows, sol = best
    z = np.clip(sol[:n], lb, ub)
    nu = sol[n:]
    y_in = np.zeros(mi)
    y_b = np.zeros(n)
    for r, c in enumerate(rows):
        if kind[c] == 0:
            y_in[owner[c]] = nu[me + r]
        else:
            y_b[owner[c]] = nu[me + r]
    out = QpSolution(z, nu[:me].copy(), y_in, y_b, QpStatus.OPTIMAL, None, 0)
    out.kkt = kkt_residuals(qp, out)
    out.objective = qp_objective(qp, z)
    return out


BACKENDS = {
    "reference": solve_qp,
    "oracle": lambda qp, tol=1e-8, warm_start=None, **kw: solve_qp_oracle(qp),
}
