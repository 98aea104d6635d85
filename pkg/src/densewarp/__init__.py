"""Density-on-density regression through a warping function."""
from importlib.metadata import PackageNotFoundError, version

from .errors import (
    ConfigurationError,
    DegenerateInputError,
    DensewarpError,
    DomainError,
    InputError,
    StructuralError,
)
from .estimator import FitConfig, RegressionData, WarpFit, cross_validate, fit, fit_cv, predict
from .grid_density import Grid, GridDensity, SampleSet, integrate, kde
from .inference import PointwiseCI, ci_for_beta, ci_for_w, sandwich_variance
from .simulation import SimConfig, SimResult, run_replications
from .sphere import HalfDensity, TangentVector, exp_map, fisher_rao_distance, hellinger, log_map
from .warping import BasisExpansion, WarpingFunction, act, compose, invert, warp_distance, weight_to_warp

try:
    __version__ = version("artifact")
except PackageNotFoundError:  # running from a source tree
    __version__ = "0.1.0"

__all__ = [
    "BasisExpansion", "ConfigurationError", "DegenerateInputError", "DensewarpError", "DomainError",
    "FitConfig", "Grid", "GridDensity", "HalfDensity", "InputError", "PointwiseCI", "RegressionData",
    "SampleSet", "SimConfig", "SimResult", "StructuralError", "TangentVector", "WarpFit",
    "WarpingFunction", "act", "ci_for_beta", "ci_for_w", "compose", "cross_validate", "exp_map",
    "fisher_rao_distance", "fit", "fit_cv", "hellinger", "integrate", "invert", "kde", "log_map",
    "predict", "run_replications", "sandwich_variance", "warp_distance", "weight_to_warp",
]
