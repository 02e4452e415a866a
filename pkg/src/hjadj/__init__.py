"""Vanishing-viscosity solvers for static Hamilton-Jacobi equations with
adjoint-based diagnostics and effective-Hamiltonian estimation."""

from .grid import (Grid, ScalarField, Topology, VectorField, build_grid,
                   discrete_delta, divergence_conservative, gradient,
                   integrate, laplacian, save_csv)
from .hamiltonians import (H3Certificate, HamiltonianModel, check_coercivity,
                           check_h3, convexity_h3_values, derivative_mismatch,
                           make_builtin)
from .elliptic import (RegularizedProblem, SingularLinearization, SolveResult,
                       apriori_bounds_check, closed_form_reference, residual,
                       solve, solve_with_continuation)
from .adjoint import (AdjointConfig, AdjointTrajectory, MassDrift,
                      SingularSystem, StabilityFailure, boundary_flux,
                      dual_drift, duality_gap, solve_dual_forward,
                      solve_elliptic_adjoint, solve_parabolic_adjoint)
from .diagnostics import (RateFit, ScalingParams, SupersolutionParams,
                          appendix_scaling_check, bounded_dual_check,
                          distance_to_boundary, epsilon_sensitivity,
                          fine_grid_reference, fit_rate,
                          gradient_identity_residual, scaling_params,
                          supersolution_check, supersolution_params,
                          weighted_hessian_integral_elliptic,
                          weighted_hessian_integral_parabolic)
from .homogenize import (EffectiveHamiltonianEstimate, HbarOracle,
                         OracleUnreliable, ergodic_approx, estimate_hbar,
                         hbar_oracle, oscillation, rate_vs_theta, solve_cell)

__version__ = "0.1.0"
