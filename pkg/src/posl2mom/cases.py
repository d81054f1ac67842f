"""Benchmark case definitions, the velocity-cutoff estimator and error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .basis import MacroState, MomentBasis, macro_from_conserved
from .errors import ConfigurationError, UndefinedMetricError
from .quadrature import VelocityGrid


@dataclass
class ErrorReport:
    metric: str
    value: float
    config: dict = field(default_factory=dict)


@dataclass
class CaseSpec:
    """One benchmark configuration: domain, horizon, initial/boundary data.

    ``initial_macro(points)`` returns (rho, v, theta) arrays; ``pdf`` is set
    only for the pure-closure study (a node-value function of xi).
    """

    identifier: str
    dim: int
    x_lo: float
    x_hi: float
    t_end: float
    kn: float
    order: int
    n: int
    nx: int
    box: tuple[float, float]
    initial_macro: object = None
    boundary_macros: dict = field(default_factory=dict)
    pdf: object = None
    center: tuple = ()

    def cutoff(self, c: float = 3.5, samples: int = 2001) -> tuple[float, float]:
        """Velocity-cutoff estimate of the initial + boundary data (per-dim max)."""
        if self.initial_macro is None:
            return self.box
        if self.dim == 1:
            pts = np.linspace(self.x_lo, self.x_hi, samples)
        else:
            s1 = np.linspace(self.x_lo, self.x_hi, 101)
            pts = np.stack(np.meshgrid(s1, s1, indexing="ij"), axis=-1).reshape(-1, 2)
        _, v, theta = self.initial_macro(pts)
        v = np.reshape(v, (-1,) if self.dim == 1 else (-1, self.dim))
        theta = np.asarray(theta, dtype=float).ravel()
        for macro in self.boundary_macros.values():
            bv = macro.v if self.dim == 1 else macro.v[None, :]
            v = np.concatenate([v, bv])
            theta = np.concatenate([theta, [macro.theta]])
        bounds = velocity_cutoff(v, theta, c)
        if self.dim == 1:
            return bounds
        return (min(b[0] for b in bounds), max(b[1] for b in bounds))


def velocity_cutoff(v_field, theta_field, c: float):
    """(xi_min, xi_max) = (inf(v - c sqrt(theta)), sup(v + c sqrt(theta))).

    ``v_field`` is (p,) or (p, dim); returns one (lo, hi) pair in 1D and a
    list of per-dimension pairs otherwise.
    """
    v = np.asarray(v_field, dtype=float)
    theta = np.asarray(theta_field, dtype=float)
    if np.any(theta <= 0):
        raise ConfigurationError("velocity cutoff needs theta > 0 everywhere")
    spread = c * np.sqrt(theta)
    if v.ndim == 1:
        return (float((v - spread).min()), float((v + spread).max()))
    pairs = []
    for d in range(v.shape[1]):
        pairs.append((float((v[:, d] - spread).min()), float((v[:, d] + spread).max())))
    return pairs


def bimodal_pdf(xi, theta0=3.0, u0=-4.0, theta1=4.0, u1=5.0):
    """Sum of two Gaussians, far from any Maxwellian."""
    xi = np.asarray(xi, dtype=float)
    g0 = np.exp(-((xi - u0) ** 2) / (2.0 * theta0)) / np.sqrt(2.0 * np.pi * theta0)
    g1 = np.exp(-((xi - u1) ** 2) / (2.0 * theta1)) / np.sqrt(2.0 * np.pi * theta1)
    return g0 + g1


def _piecewise_macro(left: MacroState, right: MacroState):
    def macro_at(pts):
        pts = np.asarray(pts, dtype=float)
        mask = pts <= 0.0
        rho = np.where(mask, left.rho, right.rho)
        v = np.where(mask, left.v[0], right.v[0])
        theta = np.where(mask, left.theta, right.theta)
        return rho, v, theta
    return macro_at


def _bubble_macro(center, amplitude=1.0, width=100.0):
    cx = np.asarray(center, dtype=float)

    def macro_at(pts):
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        d2 = np.sum((pts - cx[None, :]) ** 2, axis=1)
        rho = 1.0 + amplitude * np.exp(-width * d2)
        v = np.zeros((pts.shape[0], 2))
        theta = np.ones(pts.shape[0])
        return rho, v, theta
    return macro_at


def make_case(identifier: str, **overrides) -> CaseSpec:
    """Construct one of the four benchmark cases; keyword overrides applied last."""
    if identifier == "bimodal":
        spec = CaseSpec(identifier="bimodal", dim=1, x_lo=0.0, x_hi=0.0,
                        t_end=0.0, kn=np.inf, order=9, n=40, nx=1,
                        box=(-20.0, 20.0), pdf=bimodal_pdf)
    elif identifier == "sod":
        left = MacroState(7.0, 0.0, 1.0)
        right = MacroState(1.0, 0.0, 1.0)
        spec = CaseSpec(identifier="sod", dim=1, x_lo=-2.0, x_hi=2.0, t_end=0.3,
                        kn=0.1, order=10, n=30, nx=1000, box=(-7.0, 7.0),
                        initial_macro=_piecewise_macro(left, right),
                        boundary_macros={"left": left, "right": right})
    elif identifier == "two-beam":
        left = MacroState(1.0, 1.0, 1.0)
        right = MacroState(1.0, -1.0, 1.0)
        spec = CaseSpec(identifier="two-beam", dim=1, x_lo=-2.0, x_hi=2.0,
                        t_end=0.3, kn=0.1, order=7, n=30, nx=1000,
                        box=(-5.0, 5.0),
                        initial_macro=_piecewise_macro(left, right),
                        boundary_macros={"left": left, "right": right})
    elif identifier == "bubble2d":
        center = overrides.pop("center", (1.0, 1.0))
        far = MacroState(1.0, np.zeros(2), 1.0)
        spec = CaseSpec(identifier="bubble2d", dim=2, x_lo=0.0, x_hi=1.0,
                        t_end=0.2, kn=0.1, order=5, n=40, nx=150,
                        box=(-7.0, 7.0), center=tuple(center),
                        initial_macro=_bubble_macro(center),
                        boundary_macros={s: far for s in ("left", "right", "bottom", "top")})
    else:
        raise ConfigurationError(f"unknown case identifier {identifier!r}")
    bad = set(overrides) - set(spec.__dataclass_fields__)
    if bad:
        raise ConfigurationError(f"unknown case overrides: {sorted(bad)}")
    return replace(spec, **overrides)


def error_highest_moment(basis: MomentBasis, f_node_values: np.ndarray,
                         W_M: np.ndarray) -> float:
    """Relative error of the first unclosed raw moment, |<xi^M (W-f)> / <xi^M f>|.

    The closure carries orders 0..M-1, so the tested exponent is basis.order.
    """
    xi = basis.grid.points[:, 0]
    w = basis.grid.weights
    probe = w * xi ** basis.order
    den = float(probe @ f_node_values)
    if abs(den) < 1e-14:
        raise UndefinedMetricError(
            f"reference moment of order {basis.order} is {den:.3e}; "
            "relative error undefined")
    return abs(float(probe @ (W_M - f_node_values)) / den)


def _conserved_fields(state) -> np.ndarray:
    cons = state.conserved() if callable(getattr(state, "conserved", None)) else np.asarray(state)
    return np.asarray(cons)


def error_cons(state_a, state_b, config: dict | None = None) -> ErrorReport:
    """Relative spatial-L2 error of the full conserved-moment vector.

    Both states live on the same spatial mesh (piecewise-constant cell values;
    the common sqrt(dx) factor cancels in the ratio).
    """
    qa = _conserved_fields(state_a)
    qb = _conserved_fields(state_b)
    if qa.shape != qb.shape:
        raise ConfigurationError(f"mesh mismatch: {qa.shape} vs {qb.shape}")
    den = float(np.linalg.norm(qb))
    if den == 0.0:
        raise UndefinedMetricError("zero reference norm in E_cons")
    value = float(np.linalg.norm(qa - qb)) / den
    return ErrorReport(metric="E_cons", value=value, config=config or {})


def error_macro(state_a, state_b, config: dict | None = None) -> dict[str, ErrorReport]:
    """E_cons plus per-quantity relative L2 errors (rho, v..., theta)."""
    qa = _conserved_fields(state_a)
    qb = _conserved_fields(state_b)
    if qa.shape != qb.shape:
        raise ConfigurationError(f"mesh mismatch: {qa.shape} vs {qb.shape}")
    dim = 1 if qa.shape[-1] == 3 else 2
    out = {"E_cons": error_cons(qa, qb, config)}
    ra, va, ta = macro_from_conserved(qa, dim)
    rb, vb, tb = macro_from_conserved(qb, dim)
    names = ["rho"] + [f"v{d + 1}" for d in range(dim)] + ["theta"]
    fields_a = [ra] + [va[..., d] for d in range(dim)] + [ta]
    fields_b = [rb] + [vb[..., d] for d in range(dim)] + [tb]
    for name, fa, fb in zip(names, fields_a, fields_b):
        den = float(np.linalg.norm(fb))
        if den == 0.0:
            raise UndefinedMetricError(f"zero reference norm for {name}")
        out[name] = ErrorReport(metric=name, value=float(np.linalg.norm(fa - fb)) / den,
                                config=config or {})
    return out
