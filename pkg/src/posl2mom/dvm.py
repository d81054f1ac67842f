"""Discrete-velocity reference solver (explicit Euler + first-order upwind).

Also provides the velocity-box/node-count refinement loop used to generate
reference solutions for the convergence studies.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .entropy import discrete_maxwellian_batch, reduced_maxwellian_batch
from .errors import CflViolationError, EntropyFailureError
from .quadrature import VelocityGrid, velocity_grid
from .scheme import BoundaryData, maxwellian_weights_batch


@dataclass
class DvmState:
    grid: VelocityGrid
    x_lo: float
    x_hi: float
    nx: int
    time: float
    f: np.ndarray                 # (nx, n) or (nx, nx, n); h1 in 2D
    f2: np.ndarray | None = None  # (nx, nx, n) reduced h2 weights

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def dx(self) -> float:
        return (self.x_hi - self.x_lo) / self.nx

    def cell_centers(self) -> np.ndarray:
        return self.x_lo + (np.arange(self.nx) + 0.5) * self.dx

    def conserved(self) -> np.ndarray:
        """Raw conserved moments per cell from direct quadrature sums."""
        g = self.grid
        w = g.weights
        if self.dim == 1:
            xi = g.points[:, 0]
            P = np.stack([w, w * xi, w * xi * xi])
            return self.f @ P.T
        xi1, xi2 = g.points[:, 0], g.points[:, 1]
        sq = xi1**2 + xi2**2
        rho = self.f @ w
        m1 = self.f @ (w * xi1)
        m2 = self.f @ (w * xi2)
        en = self.f @ (w * sq) + self.f2 @ w
        return np.stack([rho, m1, m2, en], axis=-1)

    def copy(self) -> "DvmState":
        return DvmState(grid=self.grid, x_lo=self.x_lo, x_hi=self.x_hi, nx=self.nx,
                        time=self.time, f=self.f.copy(),
                        f2=None if self.f2 is None else self.f2.copy())


@dataclass
class RefinementOutcome:
    box: tuple[float, float]
    n: int
    log: list  # rows (cycle, lo, hi, n, delta)
    converged: bool


def initialize_dvm(grid: VelocityGrid, macro_at, x_lo: float, x_hi: float, nx: int,
                   space_quad: int = 10, chunk: int = 4096) -> DvmState:
    """Cell-averaged node values of a local-Maxwellian field."""
    xq, wq = np.polynomial.legendre.leggauss(space_quad)
    xq = 0.5 * (xq + 1.0)
    wq = 0.5 * wq
    dx = (x_hi - x_lo) / nx
    edges = x_lo + dx * np.arange(nx)
    if grid.dim == 1:
        pts = (edges[:, None] + dx * xq[None, :]).ravel()
        rho, v, theta = macro_at(pts)
        f = np.empty((pts.size, grid.count))
        for s in range(0, pts.size, chunk):
            e = min(s + chunk, pts.size)
            f[s:e] = maxwellian_weights_batch(grid, rho[s:e],
                                              np.reshape(v, (pts.size, 1))[s:e],
                                              theta[s:e], "full")
        f = (f.reshape(nx, space_quad, -1) * wq[None, :, None]).sum(axis=1)
        return DvmState(grid=grid, x_lo=x_lo, x_hi=x_hi, nx=nx, time=0.0, f=f)
    cell_pts = edges[:, None] + dx * xq[None, :]
    p1 = cell_pts[:, :, None, None]
    p2 = cell_pts[None, None, :, :]
    pts = np.stack(np.broadcast_arrays(p1, p2), axis=-1).reshape(-1, 2)
    rho, v, theta = macro_at(pts)
    v = np.reshape(v, (pts.shape[0], 2))
    h1 = np.empty((pts.shape[0], grid.count))
    h2 = np.empty_like(h1)
    for s in range(0, pts.shape[0], chunk):
        e = min(s + chunk, pts.shape[0])
        h1[s:e] = maxwellian_weights_batch(grid, rho[s:e], v[s:e], theta[s:e], "h1")
        h2[s:e] = maxwellian_weights_batch(grid, rho[s:e], v[s:e], theta[s:e], "h2")
    wcell = (wq[:, None] * wq[None, :])[None, :, None, :, None]
    shape = (nx, space_quad, nx, space_quad, grid.count)
    h1 = (h1.reshape(shape) * wcell).sum(axis=(1, 3))
    h2 = (h2.reshape(shape) * wcell).sum(axis=(1, 3))
    return DvmState(grid=grid, x_lo=x_lo, x_hi=x_hi, nx=nx, time=0.0, f=h1, f2=h2)


def dvm_step(state: DvmState, boundary: BoundaryData, dt: float, kn: float,
             coll_c: float = 1.0, omega_exp: float = 1.0,
             entropy_tol: float = 1e-8) -> DvmState:
    """One explicit Euler step: upwind transport + BGK relaxation.

    The update is assembled as a nonnegative combination, so weights stay
    >= 0 whenever the combined CFL/collision coefficient is; a produced
    negative weight raises CflViolationError.
    """
    g = state.grid
    ratio = dt / state.dx
    cons = state.conserved()
    flat = cons.reshape(-1, cons.shape[-1])
    rho = flat[:, 0]
    if state.dim == 1:
        v = flat[:, 1] / rho
        theta = flat[:, 2] / rho - v**2
    else:
        v2 = (flat[:, 1] ** 2 + flat[:, 2] ** 2) / rho**2
        theta = (flat[:, 3] - rho * v2) / (3.0 * rho)
    tau_inv = coll_c * rho * theta ** (1.0 - omega_exp) / kn
    r = (dt * tau_inv)

    if state.dim == 1:
        ent = discrete_maxwellian_batch(g, flat, tol=entropy_tol)
    else:
        ent = reduced_maxwellian_batch(g, flat, tol=entropy_tol)
    if not ent.ok.all():
        bad = int(np.flatnonzero(~ent.ok)[0])
        raise EntropyFailureError(f"DVM entropy solve failed in cell {bad} at t={state.time:.6g}")

    new = state.copy()
    pdfs = [(0, state.f, ent.W)]
    if state.dim == 2:
        pdfs.append((1, state.f2, ent.W2))
    for pidx, f, fm in pdfs:
        fm = fm.reshape(f.shape)
        rr = r.reshape(f.shape[:-1] + (1,))
        if state.dim == 1:
            xi = g.points[:, 0]
            xip = np.maximum(xi, 0.0) * ratio
            xim = np.minimum(xi, 0.0) * ratio
            gl = boundary.weights["left"][pidx][None, :]
            gr = boundary.weights["right"][pidx][None, :]
            up = np.concatenate([gl, f[:-1]], axis=0)
            dn = np.concatenate([f[1:], gr], axis=0)
            lead = 1.0 - (xip - xim)[None, :] - rr
            fn = lead * f + xip[None, :] * up - xim[None, :] * dn + rr * fm
        else:
            xi1, xi2 = g.points[:, 0], g.points[:, 1]
            a1p, a1m = np.maximum(xi1, 0) * ratio, np.minimum(xi1, 0) * ratio
            a2p, a2m = np.maximum(xi2, 0) * ratio, np.minimum(xi2, 0) * ratio
            gl = boundary.weights["left"][pidx]
            grt = boundary.weights["right"][pidx]
            gb = boundary.weights["bottom"][pidx]
            gt = boundary.weights["top"][pidx]
            up1 = np.concatenate([np.broadcast_to(gl, (1,) + f.shape[1:]), f[:-1]], axis=0)
            dn1 = np.concatenate([f[1:], np.broadcast_to(grt, (1,) + f.shape[1:])], axis=0)
            up2 = np.concatenate([np.broadcast_to(gb, (f.shape[0], 1, f.shape[2])), f[:, :-1]], axis=1)
            dn2 = np.concatenate([f[:, 1:], np.broadcast_to(gt, (f.shape[0], 1, f.shape[2]))], axis=1)
            lead = 1.0 - (a1p - a1m + a2p - a2m)[None, None, :] - rr
            fn = (lead * f + a1p * up1 - a1m * dn1 + a2p * up2 - a2m * dn2 + rr * fm)
        if fn.min() < 0.0:
            raise CflViolationError(
                f"negative weight {fn.min():.3e} produced at t={state.time:.6g}; "
                "time step violates the positivity CFL range")
        if pidx == 0:
            new.f = fn
        else:
            new.f2 = fn
    new.time = state.time + dt
    return new


def run_dvm(grid: VelocityGrid, macro_at, boundary: BoundaryData, x_lo: float,
            x_hi: float, nx: int, t_end: float, kn: float, dt: float | None = None,
            coll_c: float = 1.0, omega_exp: float = 1.0, cfl: float = 0.5,
            step_callback=None) -> DvmState:
    """Initialize and march the DVM to t_end."""
    state = initialize_dvm(grid, macro_at, x_lo, x_hi, nx)
    speed = max(max(abs(lo), abs(hi)) for lo, hi in grid.box)
    if dt is None:
        dt = cfl * state.dx / speed / (2.0 if grid.dim == 2 else 1.0)
    while state.time < t_end - 1e-13:
        step = min(dt, t_end - state.time)
        state = dvm_step(state, boundary, step, kn, coll_c, omega_exp)
        if step_callback is not None:
            step_callback(state)
    return state


def refine_reference(case, tolerance: float = 1e-5, n_start: int = 50,
                     n_max: int = 350, n_step: int = 50, widen: float = 0.5,
                     max_halfwidth: float = 10.0, nx: int | None = None,
                     kn: float | None = None, cutoff_c: float = 3.5,
                     sweep: bool = True):
    """Velocity-box/N refinement of the DVM reference solution (1D cases).

    One refinement cycle fixes the velocity box (starting from the cutoff
    estimate of the initial data) and sweeps N from ``n_start`` up to
    ``n_max``.  The refinement terminates as soon as the relative change of
    the conserved-field spatial-L2 norms (max over mass, momentum, energy)
    between two subsequent cycles drops below ``tolerance``;
    otherwise the box widens by ``widen`` per side and the sweep repeats.
    ``sweep=False`` skips the intermediate-N runs of each cycle (they do not
    enter the termination criterion).  Returns (RefinementOutcome, DvmState).
    """
    nx = case.nx if nx is None else nx
    kn = case.kn if kn is None else kn
    lo, hi = case.cutoff(cutoff_c)
    log = []
    prev = None  # conserved fields of the previous cycle's final run
    final = None
    cycle = 0
    converged = False
    n_values = list(range(n_start, n_max + 1, n_step)) if sweep else [n_max]
    while True:
        last_fields = None
        for n in n_values:
            grid = velocity_grid(n, lo, hi, dim=1)
            boundary = BoundaryData.for_grid(grid, case.boundary_macros)
            speed = max(abs(lo), abs(hi))
            dt = 0.5 * ((case.x_hi - case.x_lo) / nx) / speed
            final = run_dvm(grid, case.initial_macro, boundary, case.x_lo, case.x_hi,
                            nx, case.t_end, kn, dt=dt)
            norms = np.linalg.norm(final.conserved(), axis=0)
            ref = prev if n == n_values[-1] and prev is not None else last_fields
            delta = np.inf
            if ref is not None:
                delta = float((np.abs(norms - ref) / np.maximum(ref, 1e-300)).max())
            log.append((cycle, lo, hi, n, delta))
            last_fields = norms
        if prev is not None and delta < tolerance:
            converged = True
            break
        prev = last_fields
        if hi - lo >= 2.0 * max_halfwidth:
            break
        lo -= widen
        hi += widen
        cycle += 1
    return RefinementOutcome(box=(lo, hi), n=n_values[-1], log=log, converged=converged), final
