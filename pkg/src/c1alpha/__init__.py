"""Convex integration of C^{1,alpha} isometric immersions and a rigidity lab.

The construction side builds corrugated immersions stage by stage
(:mod:`c1alpha.corrugation`, :mod:`c1alpha.frame`, :mod:`c1alpha.construction`,
:mod:`c1alpha.iteration`); the analysis side measures Holder norms,
mollification estimates and Gauss-map degrees (:mod:`c1alpha.grid`,
:mod:`c1alpha.mollifier`, :mod:`c1alpha.rigidity`).
"""
from .construction import (
    ImmersionState,
    StepInput,
    corrugation_step,
    metric_defect,
    pullback_metric,
    run_stage,
)
from .corrugation import CorrugationTable, build_profile, default_table, eval_gamma, invert_j0
from .errors import (
    BoundaryProximityError,
    C1AlphaError,
    ConfigError,
    DomainError,
    ResolutionError,
    StageAbort,
)
from .fitting import PowerFit, loglog_fit, semilog_fit
from .frame import PrimitiveFrame, build_frame, decompose_defect
from .grid import Grid, GridField, c_norm, finite_difference, holder_norm
from .iteration import IterationSchedule, choose_parameters, run_iteration
from .mollifier import commutator, convolve, make_kernel, quadratic_estimate_probe
from .rigidity import (
    SurfacePatch,
    brouwer_degree,
    change_of_variables_check,
    christoffel,
    extrinsic_curvature_sum,
    gauss_curvature,
    gauss_map,
)

__version__ = "0.1.0"

__all__ = [
    "BoundaryProximityError", "C1AlphaError", "ConfigError", "CorrugationTable", "DomainError",
    "Grid", "GridField", "ImmersionState", "IterationSchedule", "PowerFit", "PrimitiveFrame",
    "ResolutionError", "StageAbort", "StepInput", "SurfacePatch", "brouwer_degree",
    "build_frame", "build_profile", "c_norm", "change_of_variables_check", "choose_parameters",
    "christoffel", "commutator", "convolve", "corrugation_step", "decompose_defect",
    "default_table", "eval_gamma", "extrinsic_curvature_sum", "finite_difference",
    "gauss_curvature", "gauss_map", "holder_norm", "invert_j0", "loglog_fit", "make_kernel",
    "metric_defect", "pullback_metric", "quadratic_estimate_probe", "run_iteration", "run_stage",
    "semilog_fit",
]
