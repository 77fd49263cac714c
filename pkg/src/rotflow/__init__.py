"""rotflow: evolution operators and mild solutions for rotating-frame flow.

Numerical realization of the two-parameter evolution system generated by
diffusion plus an unbounded linear-in-space drift on a truncated periodic
domain, together with the Helmholtz-Leray calculus, a Picard solver for
the nonlinear problem, and verification tooling for the quantitative
smoothing estimates the operators satisfy.
"""

from .field_grid import (Grid, QuadParams, ScalarField, SolverParams,
                         VectorField, affine_resample, curl, divergence,
                         gaussian_convolve, gradient, laplacian, lp_norm,
                         read_field, relative_divergence, sample_at_points,
                         write_field)
from .fields import (gaussian_envelope, gaussian_stream_field, gradient_bump,
                     random_solenoidal, taylor_green)
from .kato_solver import (IterateConstants, KatoReport, Trajectory,
                          convective_term, duhamel_residual, kato_constants,
                          nonlinear_term, picard_iterate, solve_mild)
from .ou_kernel import ClosedFormGaussian, OUEvolution
from .propagator import (CommutationReport, MatrixFunSpec, PropagatorBundle,
                         VectorFunSpec, commutation_check, covariance_matrix,
                         drift_vector, make_bundle, matrix_exp, outflow_drift,
                         propagator_matrix)
from .quadrature import QuadratureError, adaptive_quadrature
from .scenario import Scenario, ScenarioError, load_scenario, parse_scenario
from .vector_evolution import (GeneratorWindow, NotSolenoidalError,
                               apply_generator, evolve_solenoidal,
                               evolve_vector, generator_residual,
                               leray_project)
from .verify import (QBoundsReport, RateFitReport, SmallTimeReport,
                     fit_gradient_rate, fit_lplq_rate, qbounds_check,
                     small_time_limits)

__version__ = "0.1.0"
