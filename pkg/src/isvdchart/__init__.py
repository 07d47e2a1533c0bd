"""Cross-covariance change monitoring with an incrementally updated thin SVD."""

from .calibration import (ARLEstimate, CalibrationError, CalibrationResult, CalibrationSpec,
                          estimate_arl, estimate_sigma0, find_control_limit)
from .factored import FactoredMatrix, rank_one_update, reconstruct, scale, truncate
from .model import (Change, EmpiricalModel, ProcessModel, Subgroup, derive_seed,
                    make_perpendicular, process_model, sample_subgroup, sample_unit_sphere,
                    true_cross_covariance)
from .monitor import ChartPoint, MonitorConfig, MonitorState, Sigma0Factors, init, run, statistic, step

__version__ = "0.1.0"

__all__ = [
    "ARLEstimate", "CalibrationError", "CalibrationResult", "CalibrationSpec", "Change",
    "ChartPoint", "EmpiricalModel", "FactoredMatrix", "MonitorConfig", "MonitorState",
    "ProcessModel", "Sigma0Factors", "Subgroup", "derive_seed", "estimate_arl",
    "estimate_sigma0", "find_control_limit", "init", "make_perpendicular", "process_model",
    "rank_one_update", "reconstruct", "run", "sample_subgroup", "sample_unit_sphere",
    "scale", "statistic", "step", "true_cross_covariance", "truncate",
]
