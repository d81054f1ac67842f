import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from posl2mom import (L2Closure, bimodal_pdf, build_basis, check_realizability,
                      initialize_field, make_case, moments, solve_dg,
                      solve_positive_l2, velocity_grid)
from posl2mom.errors import ConditioningError


@pytest.fixture(scope="module")
def bimodal_grid():
    return velocity_grid(40, -20.0, 20.0)


def test_moments_of_positive_vector_are_solvable(bimodal_grid):
    basis = build_basis(bimodal_grid, 6)
    rng = np.random.default_rng(11)
    z = rng.uniform(0.05, 3.0, bimodal_grid.count)
    sol = solve_positive_l2(basis, moments(basis, z))
    assert sol.status == "solved"
    assert sol.constraint_residual <= 1e-9
    assert sol.min_weight >= 0.0
    # minimum-norm property: no feasible point beats the solution
    assert sol.objective <= 0.5 * z @ z + 1e-9


def test_bimodal_m9_reconstruction_is_bimodal(bimodal_grid):
    basis = build_basis(bimodal_grid, 9)
    f = bimodal_pdf(bimodal_grid.points[:, 0])
    sol = solve_positive_l2(basis, moments(basis, f))
    assert sol.status == "solved"
    w = sol.W
    interior = (w[1:-1] > w[:-2]) & (w[1:-1] > w[2:])
    peaks = np.flatnonzero(interior) + 1
    peaks = peaks[w[peaks] > 1e-3 * w.max()]  # ignore round-off tail ripples
    assert len(peaks) == 2
    # the two maxima sit near the two Gaussian centers (-4 and 5)
    xi = bimodal_grid.points[:, 0]
    assert abs(xi[peaks[0]] + 4.0) < 2.0
    assert abs(xi[peaks[1]] - 5.0) < 2.0


def test_negative_density_is_infeasible(bimodal_grid):
    basis = build_basis(bimodal_grid, 4)
    lam = moments(basis, np.ones(bimodal_grid.count))
    lam[0] = -lam[0]
    sol = solve_positive_l2(basis, lam)
    assert sol.status == "infeasible"


def test_unrealizable_moments_reported_infeasible():
    grid = velocity_grid(8, -1.0, 1.0)
    basis = build_basis(grid, 3)
    # second raw moment larger than possible on [-1, 1]: <xi^2 w> <= <w>
    lam = np.array([1.0, 0.0, 5.0])
    sol = solve_positive_l2(basis, lam)
    assert sol.status == "infeasible"
    assert not check_realizability(basis, lam).realizable


def test_realizability_of_maxwellian_and_sign_flip(bimodal_grid):
    basis = build_basis(bimodal_grid, 5)
    z = np.exp(-0.5 * bimodal_grid.points[:, 0] ** 2)
    lam = moments(basis, z)
    report = check_realizability(basis, lam)
    assert report.realizable
    assert_allclose(report.witness @ basis.B.T, lam, atol=1e-9 * abs(lam).max())
    assert not check_realizability(basis, -lam).realizable


def test_sod_initial_cells_realizable():
    case = make_case("sod", nx=40)
    grid = velocity_grid(30, *case.box)
    basis = build_basis(grid, 10)
    state = initialize_field(basis, case.initial_macro, case.x_lo, case.x_hi, case.nx)
    for lam in state.lam:
        assert check_realizability(basis, lam).realizable


def test_fast_path_matches_ipm(bimodal_grid):
    # strictly positive least-norm solution: IPM must agree with it
    basis = build_basis(bimodal_grid, 4)
    z = np.full(bimodal_grid.count, 0.7)
    lam = moments(basis, z)
    closure = L2Closure(basis)
    w_fast = closure.solve(lam).W
    assert w_fast.min() > 0
    batch = closure.solve_batch(lam[None, :], fast_path=False)
    assert batch.solved[0]
    assert_allclose(batch.W[0], w_fast, rtol=1e-6, atol=1e-10)


def test_kkt_conditions_at_active_solution(bimodal_grid):
    basis = build_basis(bimodal_grid, 9)
    f = bimodal_pdf(bimodal_grid.points[:, 0])
    lam = moments(basis, f)
    sol = L2Closure(basis).solve(lam)
    assert sol.status == "solved"
    assert sol.min_weight < 1e-6  # positivity actually binds here
    stat = sol.W - basis.B.T @ sol.mu - sol.nu
    assert np.abs(stat).max() <= 1e-8 * (1.0 + np.abs(sol.W).max())
    assert sol.nu.min() >= -1e-12
    assert np.abs(sol.nu * sol.W).max() <= 1e-8


def test_batched_solve_matches_per_cell(bimodal_grid):
    basis = build_basis(bimodal_grid, 7)
    rng = np.random.default_rng(5)
    lams = np.stack([moments(basis, rng.uniform(0.01, 1.0, bimodal_grid.count))
                     for _ in range(20)])
    closure = L2Closure(basis)
    batch = closure.solve_batch(lams)
    assert batch.solved.all()
    for k in range(20):
        single = closure.solve(lams[k])
        assert_allclose(batch.W[k], single.W, rtol=1e-6, atol=1e-9)


def test_warm_start_converges_faster_or_equal(bimodal_grid):
    basis = build_basis(bimodal_grid, 9)
    f = bimodal_pdf(bimodal_grid.points[:, 0])
    lam = moments(basis, f)
    closure = L2Closure(basis)
    cold = closure.solve_batch(lam[None, :], fast_path=False)
    warm = closure.solve_batch(1.0001 * lam[None, :], warm=cold.W, fast_path=False)
    assert warm.solved[0]
    assert warm.iterations[0] <= cold.iterations[0]


def test_square_basis_unique_solution():
    grid = velocity_grid(4, -2.0, 2.0)
    basis = build_basis(grid, 4, allow_square=True)
    z = np.array([0.3, 1.2, 0.8, 0.1])
    lam = moments(basis, z)
    sol = L2Closure(basis).solve(lam)
    assert sol.status == "solved"
    assert_allclose(sol.W, z, rtol=1e-12)


def _brute_force_objective(basis, lam, tol=1e-9):
    """Active-set enumeration oracle for tiny equality-constrained QPs."""
    n = basis.n_count
    best = np.inf
    for active in itertools.chain.from_iterable(
            itertools.combinations(range(n), k) for k in range(n)):
        free = [i for i in range(n) if i not in active]
        if len(free) < basis.m_count:
            continue
        Bf = basis.B[:, free]
        # least-norm solution on the free coordinates
        try:
            w_free = Bf.T @ np.linalg.solve(Bf @ Bf.T, lam)
        except np.linalg.LinAlgError:
            continue
        if w_free.min() < -tol:
            continue
        if np.abs(Bf @ w_free - lam).max() > 1e-8 * max(1, np.abs(lam).max()):
            continue
        best = min(best, 0.5 * w_free @ w_free)
    return best


def test_objective_matches_enumeration_oracle():
    grid = velocity_grid(6, -1.0, 1.0)
    basis = build_basis(grid, 3)
    rng = np.random.default_rng(17)
    for _ in range(10):
        z = rng.uniform(0.0, 1.0, 6)
        z[rng.integers(0, 6)] = 0.0  # push the optimum to the boundary region
        lam = moments(basis, z + 1e-6)
        sol = L2Closure(basis).solve(lam)
        assert sol.status == "solved"
        oracle = _brute_force_objective(basis, lam)
        assert sol.objective <= oracle + 1e-6
        assert sol.objective >= oracle - 1e-6


def test_dg_reproduces_polynomials(bimodal_grid):
    basis = build_basis(bimodal_grid, 6)
    xi = bimodal_grid.points[:, 0]
    vals = 1.0 + 0.2 * xi + 0.01 * xi**3  # degree < M
    w = solve_dg(basis, moments(basis, vals))
    assert_allclose(w, vals, atol=1e-8 * np.abs(vals).max())


def test_dg_bimodal_goes_negative(bimodal_grid):
    basis = build_basis(bimodal_grid, 5)
    f = bimodal_pdf(bimodal_grid.points[:, 0])
    w = solve_dg(basis, moments(basis, f))
    assert w.min() < 0


def test_dg_singular_gram_rejected():
    grid = velocity_grid(6, -1.0, 1.0)
    basis = build_basis(grid, 3)
    broken = type(basis).__new__(type(basis))
    for name, val in vars(basis).items():
        object.__setattr__(broken, name, val)
    A = basis.A.copy()
    A[2] = A[1]  # duplicate row -> singular Gram matrix
    object.__setattr__(broken, "A", A)
    with pytest.raises(ConditioningError):
        solve_dg(broken, np.zeros(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_feasibility_lemma_random_positive_weights(seed):
    grid = velocity_grid(15, -3.0, 3.0)
    basis = build_basis(grid, 5)
    z = np.random.default_rng(seed).uniform(1e-4, 10.0, grid.count)
    sol = L2Closure(basis).solve(moments(basis, z))
    assert sol.status == "solved"
    assert sol.constraint_residual <= 1e-9
