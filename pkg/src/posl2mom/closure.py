"""Positivity-constrained L2 moment closure.

Solves, per cell,

    min 1/2 ||W||^2   s.t.  A L W = lam,  W >= 0,

with a primal-dual interior-point method (Mehrotra predictor-corrector).
Iterates stay strictly positive; ``min_weight`` of a solution documents the
attained strict positivity.  The equality constraints are orthogonalized
internally (QR of (A L)^T) so the normal equations stay well conditioned at
high moment order; residuals are always reported against the original
constraints.

The unconstrained least-norm solution W = (AL)^T ((AL)(AL)^T)^-1 lam doubles
as a fast path: whenever it is strictly positive it already satisfies the
KKT system of the inequality-constrained problem.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular
from scipy.optimize import linprog

from .basis import MomentBasis
from .errors import ConditioningError

_STEP_FRACTION = 0.995


@dataclass
class ClosureSolution:
    W: np.ndarray
    iterations: int
    constraint_residual: float
    min_weight: float
    status: str  # solved | infeasible | max-iterations
    mu: np.ndarray | None = None  # equality multipliers
    nu: np.ndarray | None = None  # nonnegativity multipliers (>= 0)

    @property
    def objective(self) -> float:
        return 0.5 * float(self.W @ self.W)


@dataclass
class RealizabilityReport:
    realizable: bool
    witness: np.ndarray | None = None

    @property
    def witness_min(self) -> float | None:
        return None if self.witness is None else float(self.witness.min())


@dataclass
class BatchClosureResult:
    """Per-cell closure outcomes of a batched solve."""

    W: np.ndarray
    iterations: np.ndarray
    constraint_residual: np.ndarray
    min_weight: np.ndarray
    solved: np.ndarray  # boolean mask


class L2Closure:
    """Reusable solver for one moment basis.

    Immutable after construction apart from per-call scratch arrays, so one
    instance can serve concurrent per-cell solves.
    """

    def __init__(self, basis: MomentBasis, eq_tol: float = 1e-9, gap_tol: float = 1e-9,
                 kkt_tol: float = 1e-8, comp_tol: float = 1e-8, max_iter: int = 200):
        self.basis = basis
        self.eq_tol = eq_tol
        self.gap_tol = gap_tol
        self.kkt_tol = kkt_tol
        self.comp_tol = comp_tol
        self.max_iter = max_iter
        B = basis.B
        self._square = basis.n_count == basis.m_count
        if self._square:
            self._Binv = np.linalg.inv(B)
            return
        Q, R = np.linalg.qr(B.T)  # B^T (n, m) = Q R
        if np.abs(np.diag(R)).min() <= basis.n_count * np.finfo(float).eps * np.abs(np.diag(R)).max():
            raise ConditioningError("moment constraint matrix is numerically rank deficient")
        self.Q = Q
        self.R = R
        # least-norm map: W0 = P @ lam
        self._P = Q @ np.linalg.inv(R).T

    # -- fast path -------------------------------------------------------

    def unconstrained(self, lam: np.ndarray) -> np.ndarray:
        """Least-norm solution of A L W = lam without positivity (batched)."""
        if self._square:
            return np.asarray(lam) @ self._Binv.T
        return np.asarray(lam) @ self._P.T

    # -- single-cell API -------------------------------------------------

    def solve(self, lam: np.ndarray, warm: np.ndarray | None = None) -> ClosureSolution:
        lam = np.asarray(lam, dtype=float)
        scale = max(1.0, np.abs(lam).max())
        if lam[0] <= 0.0:
            # zeroth moment of a nonnegative weight vector is nonnegative
            return ClosureSolution(W=np.zeros(self.basis.n_count), iterations=0,
                                   constraint_residual=np.inf, min_weight=0.0,
                                   status="infeasible")
        if self._square:
            W = self._Binv @ lam
            res = np.abs(self.basis.B @ W - lam).max() / scale
            status = "solved" if W.min() >= 0 else "infeasible"
            return ClosureSolution(W=W, iterations=0, constraint_residual=float(res),
                                   min_weight=float(W.min()), status=status,
                                   mu=np.linalg.solve(self.basis.B.T, W),
                                   nu=np.zeros(self.basis.n_count))
        W0 = self.unconstrained(lam)
        if W0.min() > 0:
            mu = solve_triangular(self.R, self.Q.T @ W0)
            res = np.abs(self.basis.B @ W0 - lam).max() / scale
            return ClosureSolution(W=W0, iterations=0, constraint_residual=float(res),
                                   min_weight=float(W0.min()), status="solved",
                                   mu=mu, nu=np.zeros_like(W0))
        batch = self.solve_batch(lam[None, :], warm=None if warm is None else warm[None, :],
                                 fast_path=False, _keep_mult=True)
        W = batch.W[0]
        status = "solved" if batch.solved[0] else self._classify_failure(lam)
        return ClosureSolution(W=W, iterations=int(batch.iterations[0]),
                               constraint_residual=float(batch.constraint_residual[0]),
                               min_weight=float(batch.min_weight[0]), status=status,
                               mu=self._mu[0], nu=self._nu[0])

    def _classify_failure(self, lam: np.ndarray) -> str:
        report = check_realizability(self.basis, lam)
        return "max-iterations" if report.realizable else "infeasible"

    # -- batched interior-point method -----------------------------------

    def solve_batch(self, lams: np.ndarray, warm: np.ndarray | None = None,
                    fast_path: bool = True, _keep_mult: bool = False) -> BatchClosureResult:
        """Solve many closure problems sharing this basis.

        With ``fast_path`` the strictly positive least-norm solutions are
        accepted outright and only the remaining cells run the interior-point
        iteration.
        """
        lams = np.atleast_2d(np.asarray(lams, dtype=float))
        c, m = lams.shape
        n = self.basis.n_count
        scale = np.maximum(1.0, np.abs(lams).max(axis=1))

        W = self.unconstrained(lams)
        iters = np.zeros(c, dtype=int)
        if fast_path:
            need = W.min(axis=1) <= 0.0
        else:
            need = np.ones(c, dtype=bool)
        if _keep_mult:
            self._mu = np.zeros((c, m))
            self._nu = np.zeros((c, n))
        solved = ~need
        if need.any():
            idx = np.flatnonzero(need)
            sub_warm = None if warm is None else warm[idx]
            w, mtil, z, it, ok = self._ipm(lams[idx], scale[idx], sub_warm)
            if not ok.all() and sub_warm is not None:
                # a stale warm start can stall the iteration; retry those cold
                retry = np.flatnonzero(~ok)
                w2, m2, z2, it2, ok2 = self._ipm(lams[idx[retry]],
                                                 scale[idx[retry]], None)
                w[retry], mtil[retry], z[retry] = w2, m2, z2
                it[retry] += it2
                ok[retry] = ok2
            W[idx] = w
            iters[idx] = it
            solved[idx] = ok
            if _keep_mult:
                self._mu[idx] = solve_triangular(self.R, mtil.T).T
                self._nu[idx] = z
        resid = np.abs(W @ self.basis.B.T - lams).max(axis=1) / scale
        return BatchClosureResult(W=W, iterations=iters, constraint_residual=resid,
                                  min_weight=W.min(axis=1), solved=solved)

    def _ipm(self, lams, scale, warm):
        Q = self.Q
        c, m = lams.shape
        n = self.basis.n_count
        y = solve_triangular(self.R, lams.T, trans="T").T  # (c, m)

        if warm is not None:
            floor = 1e-10 * np.maximum(np.abs(warm).mean(axis=1, keepdims=True), 1.0)
            w = np.maximum(warm, floor)
        else:
            w0 = self.unconstrained(lams)
            shift = np.maximum(0.1 * np.abs(w0).mean(axis=1, keepdims=True), 1e-8)
            w = np.maximum(w0, shift)
        z = np.maximum(0.1 * np.abs(w).mean(axis=1, keepdims=True), 1e-8) * np.ones_like(w)
        mtil = np.zeros((c, m))

        iters = np.zeros(c, dtype=int)
        done = np.zeros(c, dtype=bool)

        for it in range(1, self.max_iter + 1):
            act = ~done
            if not act.any():
                break
            wa, za, ma = w[act], z[act], mtil[act]
            ya, la, sc = y[act], lams[act], scale[act]

            rd = wa - ma @ Q.T - za                       # dual residual
            rp = wa @ Q - ya                              # primal residual (orthonormalized)
            gap = np.einsum("ij,ij->i", wa, za) / n

            res = np.abs(wa @ self.basis.B.T - la).max(axis=1) / sc
            obj = 0.5 * np.einsum("ij,ij->i", wa, wa)
            conv = (
                (res <= self.eq_tol)
                & (gap <= self.gap_tol * (1.0 + obj))
                & (np.abs(rd).max(axis=1) <= self.kkt_tol * (1.0 + np.abs(wa).max(axis=1)))
            )
            if conv.any():
                ids = np.flatnonzero(act)[conv]
                done[ids] = True
                iters[ids] = it - 1
                act = ~done
                keep = ~conv
                wa, za, ma, ya, la = wa[keep], za[keep], ma[keep], ya[keep], la[keep]
                rd, rp, gap = rd[keep], rp[keep], gap[keep]
                if not act.any():
                    break

            d = wa / (wa + za)                            # (ca, n)
            Mn = (Q.T[None, :, :] * d[:, None, :]) @ Q    # normal matrices (ca, m, m)
            Mn[:, np.arange(m), np.arange(m)] += 1e-14    # guard against exact singularity
            lu = np.linalg.cholesky(Mn)

            def kkt_solve(rc):
                rhs = -rp + (d * (rd + rc / wa)) @ Q
                t = np.linalg.solve(lu, rhs[..., None])
                dm = np.linalg.solve(np.transpose(lu, (0, 2, 1)), t)[..., 0]
                dw = d * (dm @ Q.T - rd - rc / wa)
                dz = (-rc - za * dw) / wa
                return dw, dz, dm

            # predictor
            rc_aff = wa * za
            dwa, dza, _ = kkt_solve(rc_aff)
            ap = _max_step(wa, dwa)
            ad = _max_step(za, dza)
            gap_aff = np.einsum("ij,ij->i", wa + ap[:, None] * dwa, za + ad[:, None] * dza) / n
            sigma = np.clip(gap_aff / np.maximum(gap, 1e-300), 0.0, 1.0) ** 3

            # corrector
            rc = wa * za + dwa * dza - (sigma * gap)[:, None]
            dw, dz, dm = kkt_solve(rc)
            ap = _STEP_FRACTION * _max_step(wa, dw)
            ad = _STEP_FRACTION * _max_step(za, dz)

            w[act] = wa + ap[:, None] * dw
            z[act] = za + ad[:, None] * dz
            mtil[act] = ma + ad[:, None] * dm

        iters[~done] = self.max_iter
        return w, mtil, z, iters, done


def _max_step(x, dx):
    """Largest alpha in (0, 1] keeping x + alpha dx > 0, per row."""
    ratio = np.where(dx < 0, -x / np.where(dx < 0, dx, -1.0), np.inf)
    return np.minimum(1.0, ratio.min(axis=1))


def solve_positive_l2(basis: MomentBasis, lam: np.ndarray, warm: np.ndarray | None = None,
                      **opts) -> ClosureSolution:
    """One-shot positivity-constrained closure solve."""
    return L2Closure(basis, **opts).solve(lam, warm=warm)


def check_realizability(basis: MomentBasis, lam: np.ndarray) -> RealizabilityReport:
    """Phase-1 feasibility: is there z >= 0 with A L z = lam?

    Solved with an auxiliary linear program (HiGHS), independent of the
    interior-point closure path.  The witness, when found, certifies
    realizability; its attained positivity is reported, not forced.
    """
    lam = np.asarray(lam, dtype=float)
    if lam[0] <= 0.0:
        return RealizabilityReport(realizable=False)
    res = linprog(c=np.zeros(basis.n_count), A_eq=basis.B, b_eq=lam,
                  bounds=(0, None), method="highs")
    if not res.success:
        return RealizabilityReport(realizable=False)
    return RealizabilityReport(realizable=True, witness=res.x)


def solve_dg(basis: MomentBasis, lam: np.ndarray) -> np.ndarray:
    """Unconstrained DG projection: node values of alpha^T P_M with G alpha = lam.

    G is the Gram matrix of the basis under the discrete quadrature inner
    product.  The result carries no positivity guarantee.
    """
    lam = np.asarray(lam, dtype=float)
    sqw = np.sqrt(basis.weights)
    _, Rt = np.linalg.qr((basis.A * sqw).T)  # G = A L A^T = Rt^T Rt
    diag = np.abs(np.diag(Rt))
    if diag.min() <= basis.n_count * np.finfo(float).eps * diag.max():
        raise ConditioningError("Gram matrix of the moment basis is numerically singular")
    alpha = solve_triangular(Rt, solve_triangular(Rt, lam, trans="T"))
    return basis.A.T @ alpha
