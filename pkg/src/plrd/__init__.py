"""Partial linear estimation for sharp regression discontinuity designs."""

from importlib.metadata import PackageNotFoundError, version

try:
    __version__ = version("artifact")
except PackageNotFoundError:
    __version__ = "0.0.0"

from .bandwidth import SmDiagnostics, sm_bandwidth
from .estimate import PleResult, ple_estimate
from .ik import ik_bandwidth
from .kernels import Kernel, get_kernel, kernel_functionals
from .ple import PleFit, min_feasible_bandwidth, ple_fit
from .simulation import SimStudy, dgp_sample, run_study
from .smoothing import LocPolyConfig, RdDataset, smoother_matrix
from .variance import confidence_interval, estimate_variance

__all__ = [
    "Kernel", "LocPolyConfig", "PleFit", "PleResult", "RdDataset", "SimStudy", "SmDiagnostics",
    "confidence_interval", "dgp_sample", "estimate_variance", "get_kernel", "ik_bandwidth",
    "kernel_functionals", "min_feasible_bandwidth", "ple_estimate", "ple_fit", "run_study",
    "sm_bandwidth", "smoother_matrix",
]
