"""Numerical laboratory for first-order mean field games on the flat torus.

Value fields come from backward dynamic programming over grid cells,
optimal curves from successor pointers, measures over curves from pushing
an initial distribution along them, and equilibria from damped iteration
of the best-response map.  Every structural claim about these
objects has an executable counterpart here: optimality certificates,
duality chains, continuity residuals, Fenchel consistency, stability.
"""

from .errors import (ConfigError, CoverageGapError, EmptyStencilError,
                     InfeasibleCostError, MFGTorusError, NonFiniteValueError,
                     NotOptimalSupportError, SizeCapError, UnreachableError)
from .field_ce import (AbsContinuityProfile, FieldSample, TestFunction,
                       abs_continuity_profile, compare_with_hp,
                       continuity_residual, default_test_family,
                       directional_derivative_test, field_along_measure,
                       velocity_lookup)
from .hj import ValueField, dpp_check, kinetic_cost_matrix, solve_backward, stability_check
from .measures import (DESK_SCALE_CAP, LARGE, AtomicTorusMeasure, CurveMeasure,
                       DiscreteCurve, EvaluationCurveTable, TransportPlan,
                       group_by_start, mix_curve_measures, transport_cost,
                       wasserstein1, wasserstein1_curves)
from .mfg import (BestResponse, EquilibriumReport, FixedPointRun,
                  FixedPointState, apply_T, certificate_numbers,
                  certify_equilibrium, derive_velocity_cap,
                  equilibrium_value_field, iterate_fixed_point, stationary_seed)
from .models import (ConstantsTable, ModelSpec, ModelTables, PerturbedLagrangian,
                     QGrid, TrigPoly, betino_convergence_sweep,
                     conjugate_unbounded_probe, default_cutoff_offset,
                     default_velocity_cap, numeric_biconjugate, numeric_conjugate)
from .paths import (CertificateReport, CostMatrix, OccupationHistogram,
                    action_of, actions_of_measure, cost_matrix,
                    extract_optimal_curve, occupation_histogram,
                    optimality_certificate, pinned_window_cost)
from .torus import TorusGrid, periodic_displacement, periodic_distance, wrap_points

__version__ = "0.1.0"
