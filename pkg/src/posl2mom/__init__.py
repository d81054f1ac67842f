"""Positivity-constrained L2 moment method for the Boltzmann-BGK equation.

Library layout:

- ``quadrature``: Gauss-Legendre velocity grids (1D and tensorized 2D)
- ``basis``: monomial moment basis, moment maps, macroscopic recovery
- ``closure``: positivity-constrained L2 closure QP and realizability checks
- ``entropy``: discrete Maxwellians via entropy minimization
- ``scheme``: four-step moment evolution (entropy, collision, closure, transport)
- ``dvm``: discrete-velocity reference solver and reference refinement
- ``cases``: benchmark cases and error metrics
- ``cli``: batch front-end writing CSV artifacts
"""

from .basis import (MacroState, MomentBasis, build_basis, conserved_moments,
                    macro_from_conserved, macro_from_moments, maxwellian_values,
                    moment_count, moments, monomial_exponents, raw_moments)
from .cases import (CaseSpec, ErrorReport, bimodal_pdf, error_cons,
                    error_highest_moment, error_macro, make_case, velocity_cutoff)
from .closure import (BatchClosureResult, ClosureSolution, L2Closure,
                      RealizabilityReport, check_realizability, solve_dg,
                      solve_positive_l2)
from .dvm import DvmState, RefinementOutcome, dvm_step, initialize_dvm, refine_reference, run_dvm
from .entropy import (BatchEntropyResult, EntropySolution, discrete_maxwellian,
                      discrete_maxwellian_batch, reduced_maxwellian_batch)
from .errors import (CflViolationError, ClosureFailureError, ConditioningError,
                     ConfigurationError, EntropyFailureError,
                     NonPhysicalStateError, UndefinedMetricError)
from .quadrature import QuadratureRule1D, VelocityGrid, gauss_legendre, tensor_grid, velocity_grid
from .scheme import (BoundaryData, EvolveConfig, EvolveResult, FieldState,
                     SchemeOperators, boundary_seminorm_sq, cfl_dt,
                     collision_frequency, collision_step, evolve,
                     initialize_field, kinetic_flux, l2_energy_bound_terms,
                     transport_step)

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
