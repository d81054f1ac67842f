"""Monomial moment basis on a velocity grid.

Monomials are evaluated in scaled coordinates (box center / half-width per
dimension) to keep the Vandermonde matrix well conditioned at high order.
Moment vectors produced here live in those scaled coordinates; the affine
change-of-basis back to raw monomial moments is exact (binomial expansion)
and is applied whenever physical quantities (density, velocity, temperature,
fluxes of conserved quantities) are recovered.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import comb

import numpy as np

from .errors import ConfigurationError, NonPhysicalStateError
from .quadrature import VelocityGrid


@dataclass(frozen=True)
class MacroState:
    """Density, bulk velocity and temperature (energy units)."""

    rho: float
    v: np.ndarray
    theta: float

    def __post_init__(self):
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))

    @property
    def dim(self) -> int:
        return self.v.size


def monomial_exponents(dim: int, order: int) -> np.ndarray:
    """Exponent table of the moment basis, shape (M_count, dim).

    1D: degrees 0..order-1.  2D: all multi-indices of total degree <= order-1,
    ordered by ascending total degree, then ascending second-component exponent.
    """
    if dim == 1:
        return np.arange(order, dtype=int)[:, None]
    rows = []
    for deg in range(order):
        for b2 in range(deg + 1):
            rows.append((deg - b2, b2))
    return np.array(rows, dtype=int)


def moment_count(dim: int, order: int) -> int:
    return order if dim == 1 else order * (order + 1) // 2


@dataclass(frozen=True)
class MomentBasis:
    """Matrices of the discrete moment map: A (basis at nodes), L (weights), Xi.

    ``B = A @ diag(weights)`` maps a weight vector W to scaled moments
    ``lam = B @ W``.  ``raw_transform`` maps scaled moments to raw monomial
    moments with the same exponent ordering.
    """

    grid: VelocityGrid
    order: int
    exponents: np.ndarray
    A: np.ndarray
    B: np.ndarray = field(repr=False)
    raw_transform: np.ndarray = field(repr=False)
    center: np.ndarray
    halfwidth: np.ndarray

    @property
    def dim(self) -> int:
        return self.grid.dim

    @property
    def m_count(self) -> int:
        return self.A.shape[0]

    @property
    def n_count(self) -> int:
        return self.A.shape[1]

    @property
    def weights(self) -> np.ndarray:
        return self.grid.weights

    def scaled_points(self) -> np.ndarray:
        return (self.grid.points - self.center) / self.halfwidth


def _raw_transform(exponents: np.ndarray, center: np.ndarray, halfwidth: np.ndarray) -> np.ndarray:
    """T with raw_moments = T @ scaled_moments.

    Row m, column j: product over dimensions of C(m_d, j_d) c_d^(m_d-j_d) s_d^j_d.
    """
    m = exponents.shape[0]
    index = {tuple(e): k for k, e in enumerate(exponents)}
    T = np.zeros((m, m))
    for row, e in enumerate(exponents):
        # iterate over all sub-multi-indices j <= e
        for j0 in range(e[0] + 1):
            if exponents.shape[1] == 1:
                col = index[(j0,)]
                T[row, col] += comb(int(e[0]), j0) * center[0] ** (e[0] - j0) * halfwidth[0] ** j0
            else:
                for j1 in range(e[1] + 1):
                    col = index[(j0, j1)]
                    T[row, col] += (
                        comb(int(e[0]), j0) * center[0] ** (e[0] - j0) * halfwidth[0] ** j0
                        * comb(int(e[1]), j1) * center[1] ** (e[1] - j1) * halfwidth[1] ** j1
                    )
    return T


def build_basis(grid: VelocityGrid, order: int, allow_square: bool = False) -> MomentBasis:
    """Moment basis of max total degree order-1 on the given velocity grid.

    ``allow_square`` permits n_count == m_count (used when relating the moment
    method to its underlying discrete-velocity method in tests).
    """
    if order < 1:
        raise ConfigurationError(f"moment order must be >= 1, got {order}")
    exps = monomial_exponents(grid.dim, order)
    m = exps.shape[0]
    n = grid.count
    if n < m or (n == m and not allow_square):
        raise ConfigurationError(
            f"moment method needs more quadrature nodes than moments: n={n}, m={m}"
        )
    lo = np.array([b[0] for b in grid.box])
    hi = np.array([b[1] for b in grid.box])
    center = 0.5 * (lo + hi)
    halfwidth = 0.5 * (hi - lo)
    xhat = (grid.points - center) / halfwidth  # (n, dim)
    # A[k, i] = prod_d xhat[i, d] ** exps[k, d]
    A = np.ones((m, n))
    for d in range(grid.dim):
        A *= xhat[:, d][None, :] ** exps[:, d][:, None]
    B = A * grid.weights[None, :]
    T = _raw_transform(exps, center, halfwidth)
    A.flags.writeable = False
    B.flags.writeable = False
    T.flags.writeable = False
    return MomentBasis(
        grid=grid, order=order, exponents=exps, A=A, B=B,
        raw_transform=T, center=center, halfwidth=halfwidth,
    )


def moments(basis: MomentBasis, W: np.ndarray) -> np.ndarray:
    """Discrete moments lam = A L W.  W may carry leading batch axes."""
    return np.asarray(W) @ basis.B.T


def raw_moments(basis: MomentBasis, lam: np.ndarray) -> np.ndarray:
    """Raw monomial moments from scaled moments."""
    return np.asarray(lam) @ basis.raw_transform.T


def conserved_moments(basis: MomentBasis, lam: np.ndarray, lam2: np.ndarray | None = None) -> np.ndarray:
    """Conserved (mass, momentum, energy) raw moments.

    1D: (rho, rho v, rho(theta + v^2)) from lam.  2D: the four planar
    conserved quantities from the reduced-pdf pair (lam = h1 moments,
    lam2 = h2 moments): (rho, rho v1, rho v2, <|xi|^2 h1> + <h2>).
    """
    raw = raw_moments(basis, lam)
    if basis.dim == 1:
        return raw[..., :3]
    if lam2 is None:
        raise ValueError("2D conserved moments need the h2 moment vector")
    idx = {tuple(e): k for k, e in enumerate(basis.exponents)}
    rho = raw[..., idx[(0, 0)]]
    m1 = raw[..., idx[(1, 0)]]
    m2 = raw[..., idx[(0, 1)]]
    sq = raw[..., idx[(2, 0)]] + raw[..., idx[(0, 2)]]
    h2_0 = raw_moments(basis, lam2)[..., idx[(0, 0)]]
    return np.stack([rho, m1, m2, sq + h2_0], axis=-1)


def macro_from_conserved(cons: np.ndarray, dim: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(rho, v, theta) arrays from conserved moments; no positivity checks.

    ``cons`` has trailing axis 3 (1D) or 4 (2D planar); v gets a trailing
    axis of size dim.
    """
    cons = np.asarray(cons)
    rho = cons[..., 0]
    if dim == 1:
        v = cons[..., 1:2] / rho[..., None]
        theta = cons[..., 2] / rho - v[..., 0] ** 2
    else:
        v = cons[..., 1:3] / rho[..., None]
        theta = (cons[..., 3] - rho * np.sum(v**2, axis=-1)) / (3.0 * rho)
    return rho, v, theta


def macro_from_moments(basis: MomentBasis, lam: np.ndarray, lam2: np.ndarray | None = None) -> MacroState:
    """Recover the macroscopic state of a single cell's moment vector(s)."""
    cons = conserved_moments(basis, lam, lam2)
    if cons[..., 0] <= 0:
        raise NonPhysicalStateError(f"non-positive density {cons[..., 0]}")
    rho, v, theta = macro_from_conserved(cons, basis.dim)
    if theta <= 0:
        raise NonPhysicalStateError(f"non-positive temperature {theta}")
    return MacroState(rho=float(rho), v=v, theta=float(theta))


def maxwellian_values(grid: VelocityGrid, macro: MacroState, variant: str = "full") -> np.ndarray:
    """Maxwell-Boltzmann pdf values at the grid nodes.

    1D uses variant "full".  For 2D planar flows the reduced pdfs are
    "h1" (rho/(2 pi theta) Gaussian) and "h2" (theta times h1).
    """
    rho, v, theta = macro.rho, macro.v, macro.theta
    d2 = np.sum((grid.points - v[None, :]) ** 2, axis=1)
    gauss = np.exp(-d2 / (2.0 * theta))
    if variant == "full":
        if grid.dim != 1:
            raise ValueError("variant 'full' is the 1D Maxwellian")
        return rho / np.sqrt(2.0 * np.pi * theta) * gauss
    if variant == "h1":
        return rho / (2.0 * np.pi * theta) * gauss
    if variant == "h2":
        return rho / (2.0 * np.pi) * gauss
    raise ValueError(f"unknown Maxwellian variant {variant!r}")
