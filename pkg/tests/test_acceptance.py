"""End-to-end accuracy and robustness requirements.

These tests reproduce the benchmark studies at their published operating
points and hold the results to fixed accuracy bands.  They are slower than
the unit suites (minutes in total); the full-resolution 2D comparison is
opt-in via POSL2MOM_RUN_2D_FULL=1.
"""

import os

import numpy as np
import pytest

from posl2mom import (BoundaryData, CflViolationError, EvolveConfig, L2Closure,
                      bimodal_pdf, build_basis, cfl_dt, dvm_step, error_cons,
                      error_highest_moment, error_macro, evolve,
                      initialize_dvm, initialize_field, macro_from_conserved,
                      make_case, moments, run_dvm, solve_dg, velocity_grid)

_cache = {}


def _dvm_reference(identifier, kn):
    """Reference solution at the refinement endpoint configuration."""
    key = ("ref", identifier, kn)
    if key not in _cache:
        case = make_case(identifier)
        grid = velocity_grid(350, *case.box)
        boundary = BoundaryData.for_grid(grid, case.boundary_macros)
        speed = max(abs(b) for b in case.box)
        dt = 0.5 * ((case.x_hi - case.x_lo) / case.nx) / speed
        _cache[key] = run_dvm(grid, case.initial_macro, boundary, case.x_lo,
                              case.x_hi, case.nx, case.t_end, kn, dt=dt)
    return _cache[key]


def _moment_run(identifier, m, kn, nx=None):
    key = ("mom", identifier, m, kn, nx)
    if key not in _cache:
        case = make_case(identifier)
        nx = nx or case.nx
        grid = velocity_grid(case.n, *case.box, dim=case.dim)
        basis = build_basis(grid, m)
        boundary = BoundaryData.for_grid(grid, case.boundary_macros)
        state = initialize_field(basis, case.initial_macro, case.x_lo,
                                 case.x_hi, nx)
        result = evolve(state, boundary, EvolveConfig(t_end=case.t_end, kn=kn))
        # the discrete L2 energy bound must hold at every accepted step
        tr = result.trace
        assert (tr.energy <= tr.b_prev + tr.b_maxwellian + tr.b_inflow).all()
        # realizability: every closure solve produced nonnegative weights
        assert min(result.diagnostics.min_weight) >= 0.0
        _cache[key] = result
    return _cache[key]


# -- 1. closure study on the bimodal distribution ---------------------------

@pytest.fixture(scope="module")
def closure_study():
    grid = velocity_grid(40, -20.0, 20.0)
    f = bimodal_pdf(grid.points[:, 0])
    fnorm = np.linalg.norm(f)
    rows = {}
    for m in range(3, 23):
        basis = build_basis(grid, m)
        lam = moments(basis, f)
        sol = L2Closure(basis).solve(lam)
        assert sol.status == "solved"
        w_dg = solve_dg(basis, lam)
        rows[m] = {
            "e": error_highest_moment(basis, f, sol.W),
            "l2": float(np.linalg.norm(sol.W - f)) / fnorm,
            "l2_dg": float(np.linalg.norm(w_dg - f)) / fnorm,
            "min_w": float(sol.min_weight),
        }
    return rows


def test_closure_weights_positive_for_all_m(closure_study):
    for m, row in closure_study.items():
        assert row["min_w"] > 0.0, f"M={m}"


def test_closure_highest_moment_error_monotone_above_16(closure_study):
    # target behavior: monotone decay of the unclosed-moment error for
    # M >= 16.  Known failure: in this regime the xi^M probe amplifies
    # tail-weight noise of order the QP tolerance by up to 20^22, so the
    # measured sequence is not monotone (independent solvers agree).
    e = [closure_study[m]["e"] for m in range(16, 23)]
    assert np.all(np.diff(e) < 0), f"E(16..22) = {e}"


def test_closure_l2_error_band_at_m22(closure_study):
    assert 2.5e-4 <= closure_study[22]["l2"] <= 2.5e-3


def test_unconstrained_projection_much_worse_at_m22(closure_study):
    assert closure_study[22]["l2_dg"] >= 20.0 * closure_study[22]["l2"]


# -- 2. shock tube convergence point ----------------------------------------

@pytest.mark.slow
def test_sod_m10_error_band():
    ref = _dvm_reference("sod", 0.1)
    result = _moment_run("sod", 10, 0.1)
    err = error_cons(result.state, ref).value
    # known failure: measured error is ~2.5e-3, an order of magnitude below
    # the band.  The reference value the band was built from is inconsistent
    # with its companion statement that the Kn=0.01 minimum (2.3e-3) is 0.95x
    # the Kn=0.1 minimum, which implies ~2.4e-3 -- matching our measurement.
    assert 1.2e-2 <= err <= 4.8e-2, f"E_cons(10,1e3) = {err}"


def test_sod_smoke_m5_runs_to_completion():
    case = make_case("sod", nx=200)
    result = _moment_run("sod", 5, 0.1, nx=200)
    assert result.state.time == pytest.approx(case.t_end, abs=1e-12)
    assert min(result.diagnostics.min_weight) >= 0.0


# -- 3. Knudsen-number sensitivity ------------------------------------------

@pytest.mark.slow
def test_kn_sensitivity_of_low_order_closure():
    err = {}
    for kn in (0.1, 0.01):
        ref = _dvm_reference("sod", kn)
        err[kn] = error_cons(_moment_run("sod", 4, kn).state, ref).value
    assert 1.25e-2 <= err[0.01] <= 5e-2, f"E_cons(4,1e3) Kn=0.01: {err[0.01]}"
    assert err[0.01] < err[0.1]


# -- 4. two-beam interaction --------------------------------------------------

def _within_factor(value, target, factor):
    return target / factor <= value <= target * factor


@pytest.mark.slow
def test_two_beam_kn01_error_bands():
    ref = _dvm_reference("two-beam", 0.1)
    e5 = error_cons(_moment_run("two-beam", 5, 0.1).state, ref).value
    e7 = error_cons(_moment_run("two-beam", 7, 0.1).state, ref).value
    # known marginal failure: measured e5 ~ 3.38e-2 sits 0.6% below the
    # factor-2 band around 6.8e-2 (this solver is slightly more accurate)
    assert _within_factor(e5, 6.8e-2, 2.0), f"E_cons(5,1e3) = {e5}"
    assert _within_factor(e7, 2.5e-2, 2.0), f"E_cons(7,1e3) = {e7}"


@pytest.mark.slow
def test_two_beam_kn001_spatially_dominated():
    ref = _dvm_reference("two-beam", 0.01)
    e5 = error_cons(_moment_run("two-beam", 5, 0.01).state, ref).value
    e7 = error_cons(_moment_run("two-beam", 7, 0.01).state, ref).value
    # known failure: e5 ~ 8.7e-3 matches the 9e-3 target within 3%, but
    # e7 ~ 2.2e-3 keeps improving instead of stagnating at the spatial-error
    # floor -- here the moment solver and the reference share the exact
    # space-time discretization, so that error largely cancels
    assert _within_factor(e5, 9e-3, 2.0), f"E_cons(5,1e3) = {e5}"
    assert _within_factor(e7, 9e-3, 2.0), f"E_cons(7,1e3) = {e7}"
    assert abs(e5 - e7) <= 0.2 * max(e5, e7), f"{e5} vs {e7}"


# -- 5. 2D bubble dispersion --------------------------------------------------

def _bubble_errors(nx, n, m, t_end):
    case = make_case("bubble2d", nx=nx, n=n, t_end=t_end)
    grid = velocity_grid(case.n, *case.box, dim=2)
    boundary = BoundaryData.for_grid(grid, case.boundary_macros)
    key = ("bubble-ref", nx, n, t_end)
    if key not in _cache:
        ref = initialize_dvm(grid, case.initial_macro, case.x_lo, case.x_hi, nx)
        dt = cfl_dt(ref.dx, grid, mode="stability")
        while ref.time < case.t_end - 1e-13:
            ref = dvm_step(ref, boundary, min(dt, case.t_end - ref.time), case.kn)
        _cache[key] = ref
    basis = build_basis(grid, m)
    state = initialize_field(basis, case.initial_macro, case.x_lo, case.x_hi, nx)
    result = evolve(state, boundary, EvolveConfig(t_end=case.t_end, kn=case.kn))
    rho = macro_from_conserved(result.state.conserved(), 2)[0]
    errs = {k: r.value for k, r in error_macro(result.state, _cache[key]).items()}
    return rho, errs


@pytest.mark.slow
def test_bubble_reduced_grid_positive_and_improving():
    rho3, errs3 = _bubble_errors(nx=50, n=10, m=3, t_end=0.2)
    rho5, errs5 = _bubble_errors(nx=50, n=10, m=5, t_end=0.2)
    assert rho3.min() > 0.0 and rho5.min() > 0.0
    for name in errs3:
        assert errs5[name] < errs3[name], (name, errs3[name], errs5[name])


@pytest.mark.optional2d
@pytest.mark.skipif(not os.environ.get("POSL2MOM_RUN_2D_FULL"),
                    reason="full 150x150 2D comparison; set POSL2MOM_RUN_2D_FULL=1")
def test_bubble_full_grid_error_table():
    targets = {"rho": 5.3e-4, "v1": 5e-2, "v2": 4.8e-2, "theta": 5.4e-4}
    rho3, errs3 = _bubble_errors(nx=150, n=40, m=3, t_end=0.2)
    rho5, errs5 = _bubble_errors(nx=150, n=40, m=5, t_end=0.2)
    assert rho5.min() > 0.0
    for name, target in targets.items():
        assert _within_factor(errs5[name], target, 3.0), (name, errs5[name])
        assert errs5[name] < errs3[name]


# -- 6. property suites --------------------------------------------------------

def test_feasibility_of_1000_random_positive_states():
    grid = velocity_grid(15, -3.0, 3.0)
    basis = build_basis(grid, 5)
    rng = np.random.default_rng(123)
    z = rng.uniform(1e-4, 10.0, (1000, grid.count))
    batch = L2Closure(basis).solve_batch(z @ basis.B.T)
    assert batch.solved.all()
    assert batch.constraint_residual.max() <= 1e-9
    assert batch.min_weight.min() >= 0.0


def test_conserved_totals_drift_with_flux_accounting():
    case = make_case("sod", nx=100)
    grid = velocity_grid(30, *case.box)
    basis = build_basis(grid, 5)
    state = initialize_field(basis, case.initial_macro, case.x_lo, case.x_hi,
                             case.nx)
    boundary = BoundaryData.for_grid(grid, case.boundary_macros)
    dt = cfl_dt(state.dx, grid, mode="feasibility")
    result = evolve(state, boundary,
                    EvolveConfig(t_end=50 * dt, kn=case.kn, dt=dt,
                                 cfl_mode="feasibility"))
    d = result.diagnostics
    totals0 = np.asarray(d.conserved_totals[0])
    drift = (np.asarray(d.conserved_totals[-1]) - totals0
             + np.asarray(d.net_outflux[-1]))
    assert np.abs(drift).max() <= 1e-6 * np.abs(totals0).max()


def test_oversized_step_fails_loudly():
    case = make_case("sod", nx=60)
    grid = velocity_grid(20, *case.box)
    basis = build_basis(grid, 5)
    state = initialize_field(basis, case.initial_macro, case.x_lo, case.x_hi,
                             case.nx)
    boundary = BoundaryData.for_grid(grid, case.boundary_macros)
    bad_dt = 3.0 * cfl_dt(state.dx, grid, mode="feasibility")
    with pytest.raises(CflViolationError):
        evolve(state, boundary, EvolveConfig(t_end=5 * bad_dt, kn=case.kn,
                                             dt=bad_dt))


def test_square_basis_moment_solver_tracks_dvm():
    # with as many moments as nodes the closure is the identity map, so the
    # moment trajectory must coincide with the node-value trajectory
    case = make_case("sod", nx=40)
    grid = velocity_grid(6, *case.box)
    basis = build_basis(grid, 6, allow_square=True)
    boundary = BoundaryData.for_grid(grid, case.boundary_macros)
    state = initialize_field(basis, case.initial_macro, case.x_lo, case.x_hi,
                             case.nx)
    dvm = initialize_dvm(grid, case.initial_macro, case.x_lo, case.x_hi,
                         case.nx)
    dt = cfl_dt(state.dx, grid, mode="stability")
    kn = 1e12  # transport-dominated: both solvers use the same explicit flux
    result = evolve(state, boundary, EvolveConfig(t_end=20 * dt, kn=kn, dt=dt))
    for _ in range(20):
        dvm = dvm_step(dvm, boundary, dt, kn)
    mapped = dvm.f @ basis.B.T
    scale = np.abs(mapped).max()
    assert np.abs(result.state.lam - mapped).max() <= 1e-8 * scale


def test_quadrature_exactness_and_entropy_tolerance():
    grid = velocity_grid(12, -2.0, 3.0)
    xi = grid.points[:, 0]
    exact = (3.0**24 - (-2.0)**24) / 24.0
    assert abs(grid.weights @ xi**23 - exact) <= 1e-12 * abs(exact)
    from posl2mom import discrete_maxwellian
    sol = discrete_maxwellian(velocity_grid(30, -7.0, 7.0),
                              np.array([1.3, 0.2, 1.5]))
    assert sol.constraint_residual <= 1e-8
