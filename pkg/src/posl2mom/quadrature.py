"""Gauss-Legendre quadrature rules on intervals and velocity boxes."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class QuadratureRule1D:
    """Gauss-Legendre nodes/weights on a closed interval."""

    nodes: np.ndarray
    weights: np.ndarray
    interval: tuple[float, float]

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass(frozen=True)
class VelocityGrid:
    """Quadrature points of a truncated velocity box (1D interval or 2D tensor box).

    ``points`` has shape (count, dim), ``weights`` shape (count,).
    ``components[d]`` is the d-th velocity component of every point,
    aligned with ``points`` (row-major in the first component for dim=2).
    """

    dim: int
    points: np.ndarray
    weights: np.ndarray
    box: tuple[tuple[float, float], ...]
    rule: QuadratureRule1D = field(repr=False)

    @property
    def count(self) -> int:
        return self.weights.size

    @property
    def components(self) -> tuple[np.ndarray, ...]:
        return tuple(self.points[:, d] for d in range(self.dim))


def gauss_legendre(n: int, lo: float, hi: float) -> QuadratureRule1D:
    """n-point Gauss-Legendre rule on [lo, hi].

    Exact for polynomials of degree <= 2n-1.
    """
    if n < 1:
        raise ValueError(f"need at least one quadrature node, got n={n}")
    if not lo < hi:
        raise ValueError(f"empty interval [{lo}, {hi}]")
    x, w = np.polynomial.legendre.leggauss(n)
    half = 0.5 * (hi - lo)
    mid = 0.5 * (hi + lo)
    nodes = mid + half * x
    weights = half * w
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return QuadratureRule1D(nodes=nodes, weights=weights, interval=(float(lo), float(hi)))


def tensor_grid(rule: QuadratureRule1D, dim: int) -> VelocityGrid:
    """Tensor product of a 1D rule over a velocity box of the given dimension."""
    if dim not in (1, 2):
        raise ValueError(f"velocity dimension must be 1 or 2, got {dim}")
    if dim == 1:
        points = rule.nodes[:, None].copy()
        weights = rule.weights.copy()
        box = (rule.interval,)
    else:
        # Row-major in the first component: point (i, j) = (xi_i, xi_j).
        x1, x2 = np.meshgrid(rule.nodes, rule.nodes, indexing="ij")
        points = np.column_stack([x1.ravel(), x2.ravel()])
        weights = np.outer(rule.weights, rule.weights).ravel()
        box = (rule.interval, rule.interval)
    points.flags.writeable = False
    weights.flags.writeable = False
    return VelocityGrid(dim=dim, points=points, weights=weights, box=box, rule=rule)


def velocity_grid(n: int, lo: float, hi: float, dim: int = 1) -> VelocityGrid:
    """Convenience constructor: n-point rule per dimension on [lo, hi]^dim."""
    return tensor_grid(gauss_legendre(n, lo, hi), dim)
