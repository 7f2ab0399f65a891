"""Periodic unfolding and elliptic homogenization on chart grids.

The package provides the discrete unfolding operator and its exchange
identities, periodic cell problems with effective-tensor assembly,
aligned fine-scale and homogenized solvers, a convergence sweep, and
atlas-equivalence checks, plus a JSON-configured command line."""

__version__ = "0.1.0"

from ._kernels import BACKEND, available_backends
from .cell import (CellSolution, CoefficientField, EffectiveTensor,
                   assemble_effective, btilde_quadratic, cell_centers,
                   check_spd, effective_field, solve_cell, solve_cell_rhs)
from .equivalence import (AtlasTransform, InvarianceReport,
                          check_cell_transform, check_invariance,
                          transform_problem, transition_consistency)
from .errors import (AlignmentError, ConfigurationError, GeometryError,
                     NumericError, SolverError, UnfoldHomogError,
                     ValidationError)
from .fieldgrid import (GridFunction, GridVectorField, div_M, grad_M,
                        grid_from_callable, integrate_M, make_grid,
                        metric_pairing, norms, quadrature_weights, to_csv)
from .geometry import (AffineMap, Atlas, Chart, MetricField, UCReport,
                       metric_pair, ramp_partition, single_chart_atlas,
                       validate_uc)
from .linalg import cg
from .solve import (ConvergenceTable, ProblemSpec, SolveResult,
                    TwoScaleCorrector, apriori_bound, check_apriori,
                    convergence_study, oscillating_coefficient,
                    reconstruct_corrector, reference_effective, solve_fine,
                    solve_homogenized, unfolded_l2_gap)
from .unfolding import (ExchangeReport, UnfoldConfig, UnfoldedField,
                        UnfoldedMetric, check_alignment,
                        check_divergence_exchange, check_gradient_exchange,
                        check_metric_exchange, norm_ratio, norm_ratio_bound,
                        overlap_gap, ucm_residual, unfold_global,
                        unfold_local, unfold_metric, unfold_vector)

__all__ = [
    "__version__", "BACKEND", "available_backends",
    "AffineMap", "Atlas", "Chart", "MetricField", "UCReport", "metric_pair",
    "ramp_partition", "single_chart_atlas", "validate_uc",
    "GridFunction", "GridVectorField", "div_M", "grad_M",
    "grid_from_callable", "integrate_M", "make_grid", "metric_pairing",
    "norms", "quadrature_weights", "to_csv",
    "CellSolution", "CoefficientField", "EffectiveTensor",
    "assemble_effective", "btilde_quadratic", "cell_centers", "check_spd",
    "effective_field", "solve_cell", "solve_cell_rhs",
    "ExchangeReport", "UnfoldConfig", "UnfoldedField", "UnfoldedMetric",
    "check_alignment", "check_divergence_exchange",
    "check_gradient_exchange", "check_metric_exchange", "norm_ratio",
    "norm_ratio_bound", "overlap_gap", "ucm_residual", "unfold_global",
    "unfold_local", "unfold_metric", "unfold_vector",
    "ConvergenceTable", "ProblemSpec", "SolveResult", "TwoScaleCorrector",
    "apriori_bound", "check_apriori", "convergence_study",
    "oscillating_coefficient", "reconstruct_corrector",
    "reference_effective", "solve_fine", "solve_homogenized",
    "unfolded_l2_gap",
    "AtlasTransform", "InvarianceReport", "check_cell_transform",
    "check_invariance", "transform_problem", "transition_consistency",
    "AlignmentError", "ConfigurationError", "GeometryError", "NumericError",
    "SolverError", "UnfoldHomogError", "ValidationError",
    "cg",
]
