import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from posl2mom import (ConfigurationError, MacroState, NonPhysicalStateError,
                      build_basis, conserved_moments, macro_from_moments,
                      maxwellian_values, moment_count, moments,
                      monomial_exponents, raw_moments, velocity_grid)
from posl2mom.quadrature import QuadratureRule1D, VelocityGrid


def test_two_node_vandermonde():
    grid = velocity_grid(2, -1.0, 1.0)
    basis = build_basis(grid, 2, allow_square=True)
    assert_allclose(basis.A[0], [1.0, 1.0], atol=1e-15)
    assert_allclose(basis.A[1], [-1.0 / np.sqrt(3.0), 1.0 / np.sqrt(3.0)], rtol=1e-14)


@pytest.mark.parametrize("order,count", [(3, 6), (5, 15)])
def test_2d_moment_counts(order, count):
    grid = velocity_grid(8, -1.0, 1.0, dim=2)
    basis = build_basis(grid, order)
    assert basis.m_count == count


def test_2d_count_formula():
    for order in range(1, 9):
        assert moment_count(2, order) == order * (order + 1) // 2


def test_2d_exponent_ordering():
    exps = [tuple(e) for e in monomial_exponents(2, 3)]
    assert exps == [(0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2)]


def test_moments_of_zero_and_constant():
    grid = velocity_grid(2, -1.0, 1.0)
    basis = build_basis(grid, 2, allow_square=True)
    assert_allclose(moments(basis, np.zeros(2)), 0.0, atol=0)
    lam = moments(basis, np.ones(2))
    assert_allclose(lam[0], 2.0, rtol=1e-14)
    assert_allclose(lam[1], 0.0, atol=1e-15)


def test_maxwellian_moments_match_gaussian():
    grid = velocity_grid(40, -7.0, 7.0)
    basis = build_basis(grid, 3)
    W = maxwellian_values(grid, MacroState(1.0, 0.0, 1.0))
    raw = raw_moments(basis, moments(basis, W))
    assert_allclose(raw, [1.0, 0.0, 1.0], atol=1e-8)


def test_conserved_rows_match_direct_quadrature():
    grid = velocity_grid(25, -5.0, 5.0)
    basis = build_basis(grid, 6)
    rng = np.random.default_rng(7)
    W = rng.uniform(0.1, 2.0, grid.count)
    xi = grid.points[:, 0]
    direct = np.array([grid.weights @ W, grid.weights @ (xi * W),
                       grid.weights @ (xi * xi * W)])
    assert_allclose(conserved_moments(basis, moments(basis, W)), direct,
                    rtol=0, atol=1e-13 * max(1.0, direct.max()))


def _unit_box_basis(order=3):
    # on [-1, 1] the scaled and raw monomial coordinates coincide
    return build_basis(velocity_grid(8, -1.0, 1.0), order)


@pytest.mark.parametrize("lam,expect", [
    ((1.0, 0.0, 1.0), (1.0, 0.0, 1.0)),
    ((2.0, 2.0, 4.0), (2.0, 1.0, 1.0)),
    ((7.0, 0.0, 7.0), (7.0, 0.0, 1.0)),
])
def test_macro_from_moments(lam, expect):
    macro = macro_from_moments(_unit_box_basis(), np.array(lam))
    assert_allclose([macro.rho, macro.v[0], macro.theta], expect, rtol=1e-14)


def test_macro_from_moments_rejects_nonphysical():
    basis = _unit_box_basis()
    with pytest.raises(NonPhysicalStateError):
        macro_from_moments(basis, np.array([-1.0, 0.0, 1.0]))
    with pytest.raises(NonPhysicalStateError):
        macro_from_moments(basis, np.array([1.0, 0.0, -1.0]))


def _point_grid(points_1d):
    pts = np.asarray(points_1d, dtype=float)[:, None]
    rule = QuadratureRule1D(nodes=pts[:, 0], weights=np.ones(pts.shape[0]),
                            interval=(float(pts.min()), float(pts.max())))
    return VelocityGrid(dim=1, points=pts, weights=np.ones(pts.shape[0]),
                        box=((float(pts.min()), float(pts.max())),), rule=rule)


def test_maxwellian_values_at_origin():
    grid = _point_grid([-1.0, 0.0, 1.0])
    vals = maxwellian_values(grid, MacroState(1.0, 0.0, 1.0))
    assert_allclose(vals[1], 1.0 / np.sqrt(2.0 * np.pi), rtol=1e-12)
    vals7 = maxwellian_values(grid, MacroState(7.0, 0.0, 1.0))
    assert_allclose(vals7[1], 7.0 / np.sqrt(2.0 * np.pi), rtol=1e-12)


def test_reduced_maxwellian_h2_at_mean_velocity():
    grid = velocity_grid(5, -1.0, 1.0, dim=2)
    macro = MacroState(1.0, np.array([grid.points[7, 0], grid.points[7, 1]]), 0.37)
    vals = maxwellian_values(grid, macro, "h2")
    assert_allclose(vals[7], 1.0 / (2.0 * np.pi), rtol=1e-12)


def test_raw_transform_is_exact_change_of_basis():
    grid = velocity_grid(30, -6.0, 10.0)
    basis = build_basis(grid, 8)
    rng = np.random.default_rng(3)
    W = rng.uniform(0.0, 1.0, grid.count)
    raw = raw_moments(basis, moments(basis, W))
    xi = grid.points[:, 0]
    direct = np.array([grid.weights @ (xi**k * W) for k in range(8)])
    assert_allclose(raw, direct, rtol=1e-10, atol=1e-12 * np.abs(direct).max())


def test_square_or_underdetermined_configuration_rejected():
    grid = velocity_grid(4, -1.0, 1.0)
    with pytest.raises(ConfigurationError):
        build_basis(grid, 5)
    with pytest.raises(ConfigurationError):
        build_basis(grid, 4)  # square only via allow_square
    build_basis(grid, 4, allow_square=True)


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_positive_weights_give_physical_macro(seed):
    grid = velocity_grid(12, -4.0, 4.0)
    basis = build_basis(grid, 4)
    W = np.random.default_rng(seed).uniform(1e-3, 5.0, grid.count)
    macro = macro_from_moments(basis, moments(basis, W))
    assert macro.rho > 0
    assert macro.theta > 0
