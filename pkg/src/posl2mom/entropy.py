"""Discrete Maxwellian weight vectors by entropy minimization.

1D: dual Newton iteration on the exponential family
``W_i = exp(P_cons(xi_i) . alpha)`` matching the discrete conserved moments.
2D planar: the reduced Maxwellians h1, h2 are parametrized by
(rho, v1, v2, theta) and a Newton correction on those parameters enforces
the four discrete conservation constraints shared by the pair.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import macro_from_conserved
from .errors import EntropyFailureError, NonPhysicalStateError
from .quadrature import VelocityGrid

_ARMIJO = 1e-4
_MAX_HALVINGS = 50
_MAX_NEWTON = 100


@dataclass
class EntropySolution:
    W: np.ndarray
    alpha: np.ndarray
    iterations: int
    constraint_residual: float


@dataclass
class BatchEntropyResult:
    W: np.ndarray  # (c, n); for 2D this is W of h1
    W2: np.ndarray | None  # (c, n) reduced h2 weights, 2D only
    alpha: np.ndarray
    iterations: np.ndarray
    constraint_residual: np.ndarray
    ok: np.ndarray


def _cons_basis(grid: VelocityGrid) -> np.ndarray:
    """Rows of P_cons evaluated at the nodes: (1, xi, xi^2) for 1D."""
    xi = grid.points[:, 0]
    return np.stack([np.ones_like(xi), xi, xi * xi])


def _alpha_init(cons: np.ndarray) -> np.ndarray:
    """Dual coefficients of the continuous Maxwellian (1D)."""
    rho, v, theta = macro_from_conserved(cons, dim=1)
    v = v[..., 0]
    a0 = np.log(rho / np.sqrt(2.0 * np.pi * theta)) - v * v / (2.0 * theta)
    return np.stack([a0, v / theta, -1.0 / (2.0 * theta)], axis=-1)


def discrete_maxwellian_batch(grid: VelocityGrid, cons: np.ndarray,
                              tol: float = 1e-8) -> BatchEntropyResult:
    """Solve many 1D entropy-minimization problems at once.

    ``cons`` holds the raw conserved moments (rho, rho v, rho(theta+v^2)) per
    row; failures are flagged per cell rather than raised.
    """
    cons = np.atleast_2d(np.asarray(cons, dtype=float))
    c = cons.shape[0]
    rho, _, theta = macro_from_conserved(cons, dim=1)
    bad = ~((rho > 0) & (theta > 0) & np.isfinite(cons).all(axis=1))
    ok = ~bad

    Pc = _cons_basis(grid)  # (3, n)
    wq = grid.weights
    scale = np.maximum(1.0, np.abs(cons).max(axis=1))

    alpha = np.zeros((c, 3))
    alpha[ok] = _alpha_init(cons[ok])
    W = np.zeros((c, grid.count))
    iters = np.zeros(c, dtype=int)
    resid = np.full(c, np.inf)

    def dual_value(a):
        e = np.exp(np.minimum(a @ Pc, 700.0))
        return e @ wq - np.einsum("ij,ij->i", a, cons_act), e

    active = ok.copy()
    cons_act = cons[active]
    a_act = alpha[active]
    phi, e = dual_value(a_act)
    for it in range(1, _MAX_NEWTON + 1):
        if not active.any():
            break
        mom = (e * wq) @ Pc.T  # (ca, 3)
        r = mom - cons_act
        rn = np.abs(r).max(axis=1) / scale[active]
        conv = rn <= tol
        if conv.any():
            ids = np.flatnonzero(active)[conv]
            alpha[ids] = a_act[conv]
            W[ids] = e[conv]
            iters[ids] = it - 1
            resid[ids] = rn[conv]
            active[ids] = False
            keep = ~conv
            cons_act, a_act, phi, e, r = cons_act[keep], a_act[keep], phi[keep], e[keep], r[keep]
            if not active.any():
                break
        H = np.einsum("ki,ci,li->ckl", Pc, e * wq, Pc)
        try:
            step = -np.linalg.solve(H, r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            ids = np.flatnonzero(active)
            ok[ids] = False
            resid[ids] = np.abs(r).max(axis=1) / scale[ids]
            active[ids] = False
            break
        slope = np.einsum("ij,ij->i", r, step)  # directional derivative of the dual
        # near the optimum the predicted decrease drops below the rounding
        # level of the dual value itself; take the plain Newton step there
        tiny = np.abs(slope) <= 1e-13 * (1.0 + np.abs(phi))
        t = np.ones(len(a_act))
        for _ in range(_MAX_HALVINGS):
            phi_new, e_new = dual_value(a_act + t[:, None] * step)
            accept = tiny | (phi_new <= phi + _ARMIJO * t * slope)
            if accept.all():
                break
            t = np.where(accept, t, 0.5 * t)
        a_act = a_act + t[:, None] * step
        phi, e = dual_value(a_act)
    else:
        ids = np.flatnonzero(active)
        ok[ids] = False
        mom = (e * wq) @ Pc.T
        resid[ids] = np.abs(mom - cons_act).max(axis=1) / scale[ids]
        iters[ids] = _MAX_NEWTON
        alpha[ids] = a_act
        W[ids] = e

    return BatchEntropyResult(W=W, W2=None, alpha=alpha, iterations=iters,
                              constraint_residual=resid, ok=ok)


def discrete_maxwellian(grid: VelocityGrid, conserved: np.ndarray,
                        tol: float = 1e-8) -> EntropySolution:
    """Entropy-minimizing positive weight vector matching 1D conserved moments."""
    conserved = np.asarray(conserved, dtype=float)
    rho, _, theta = macro_from_conserved(conserved, dim=1)
    if not (rho > 0 and theta > 0):
        raise NonPhysicalStateError(
            f"conserved moments give rho={rho}, theta={theta}")
    out = discrete_maxwellian_batch(grid, conserved[None, :], tol=tol)
    if not out.ok[0]:
        raise EntropyFailureError(
            "entropy Newton iteration did not converge",
            iterations=int(out.iterations[0]),
            residual=float(out.constraint_residual[0]),
        )
    return EntropySolution(W=out.W[0], alpha=out.alpha[0],
                           iterations=int(out.iterations[0]),
                           constraint_residual=float(out.constraint_residual[0]))


# -- 2D planar reduced Maxwellians ---------------------------------------


def reduced_maxwellian_batch(grid: VelocityGrid, cons: np.ndarray,
                             tol: float = 1e-8) -> BatchEntropyResult:
    """Discrete reduced Maxwellian pair (h1, h2) matching 2D conserved moments.

    ``cons`` rows are (rho, rho v1, rho v2, <|xi|^2 h1> + <h2>).  The analytic
    reduced Maxwellians are projected onto the grid and (rho, v, theta) is
    Newton-corrected until the four discrete constraints hold within tol.
    """
    cons = np.atleast_2d(np.asarray(cons, dtype=float))
    c = cons.shape[0]
    rho0, v0, th0 = macro_from_conserved(cons, dim=2)
    ok = (rho0 > 0) & (th0 > 0) & np.isfinite(cons).all(axis=1)

    xi1 = grid.points[:, 0]
    xi2 = grid.points[:, 1]
    sq = xi1 * xi1 + xi2 * xi2
    wq = grid.weights
    scale = np.maximum(1.0, np.abs(cons).max(axis=1))

    p = np.column_stack([rho0, v0[:, 0], v0[:, 1], th0])  # (c, 4)
    p[~ok] = np.nan
    iters = np.zeros(c, dtype=int)
    resid = np.full(c, np.inf)

    def fields(params):
        rho, v1, v2, th = (params[:, k][:, None] for k in range(4))
        d1 = xi1[None, :] - v1
        d2 = xi2[None, :] - v2
        d2sum = d1 * d1 + d2 * d2
        h1 = rho / (2.0 * np.pi * th) * np.exp(-d2sum / (2.0 * th))
        return h1, d1, d2, d2sum

    def momfun(params):
        h1, _, _, _ = fields(params)
        th = params[:, 3][:, None]
        hw = h1 * wq
        return np.column_stack([
            hw.sum(axis=1), hw @ xi1, hw @ xi2, hw @ sq + th[:, 0] * hw.sum(axis=1),
        ])

    active = ok.copy()
    for it in range(1, _MAX_NEWTON + 1):
        if not active.any():
            break
        pa = p[active]
        h1, d1, d2, d2sum = fields(pa)
        th = pa[:, 3][:, None]
        hw = h1 * wq
        mass = hw.sum(axis=1)
        m = np.column_stack([mass, hw @ xi1, hw @ xi2, hw @ sq + th[:, 0] * mass])
        r = m - cons[active]
        rn = np.abs(r).max(axis=1) / scale[active]
        conv = rn <= tol
        if conv.any():
            ids = np.flatnonzero(active)[conv]
            iters[ids] = it - 1
            resid[ids] = rn[conv]
            active[ids] = False
            if not active.any():
                break
            keep = ~conv
            pa, h1, d1, d2, d2sum, th, hw = (x[keep] for x in (pa, h1, d1, d2, d2sum, th, hw))
            r = r[keep]
        # derivative fields of h1 wrt (rho, v1, v2, theta)
        dh = np.stack([
            h1 / pa[:, 0][:, None],
            h1 * d1 / th,
            h1 * d2 / th,
            h1 * (d2sum / (2.0 * th * th) - 1.0 / th),
        ], axis=1)  # (ca, 4, n)
        dhw = dh * wq
        J = np.empty((len(pa), 4, 4))
        J[:, 0, :] = dhw.sum(axis=2)
        J[:, 1, :] = dhw @ xi1
        J[:, 2, :] = dhw @ xi2
        J[:, 3, :] = dhw @ sq + th * dhw.sum(axis=2)
        J[:, 3, 3] += hw.sum(axis=1)  # d h2 / d theta carries an extra h1 term
        try:
            step = -np.linalg.solve(J, r[..., None])[..., 0]
        except np.linalg.LinAlgError:
            ids = np.flatnonzero(active)
            ok[ids] = False
            active[ids] = False
            break
        rnorm = np.abs(r).max(axis=1)
        tiny = rnorm <= 1e-13 * scale[active]  # below attainable rounding level
        t = np.ones(len(pa))
        for _ in range(_MAX_HALVINGS):
            trial = pa + t[:, None] * step
            valid = (trial[:, 0] > 0) & (trial[:, 3] > 0)
            rnew = np.full_like(rnorm, np.inf)
            if valid.any():
                rnew[valid] = np.abs(momfun(trial[valid]) - cons[active][valid]).max(axis=1)
            accept = valid & (tiny | (rnew <= (1.0 - _ARMIJO * t) * rnorm))
            if accept.all():
                break
            t = np.where(accept, t, 0.5 * t)
        p[active] = pa + t[:, None] * step
    else:
        ids = np.flatnonzero(active)
        ok[ids] = False
        m = momfun(p[ids])
        resid[ids] = np.abs(m - cons[ids]).max(axis=1) / scale[ids]
        iters[ids] = _MAX_NEWTON

    h1, _, _, _ = fields(p) if ok.any() else (np.zeros((c, grid.count)),) * 4
    h1 = np.nan_to_num(h1, nan=0.0)
    W2 = h1 * p[:, 3][:, None]
    W2 = np.nan_to_num(W2, nan=0.0)
    return BatchEntropyResult(W=h1, W2=W2, alpha=p, iterations=iters,
                              constraint_residual=resid, ok=ok)
