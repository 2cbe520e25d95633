"""End-to-end estimation: bandwidth rule, sparsity floor, fit, variance and interval."""

from dataclasses import dataclass
from functools import partial
import math

from .bandwidth import sm_bandwidth
from .errors import DomainError
from .ik import ik_bandwidth
from .kernels import get_kernel
from .ple import apply_floor, min_feasible_bandwidth, ple_fit, stage
from .smoothing import LocPolyConfig
from .variance import confidence_interval, estimate_variance


def parse_bandwidth_rule(rule):
    """``'sm'``, ``'ik'`` or ``'fixed:<h>'`` (a bare number means fixed)."""
    if isinstance(rule, (int, float)):
        return "fixed", float(rule)
    text = str(rule).strip().lower()
    if text in ("sm", "ik"):
        return text, None
    if text.startswith("fixed:"):
        text = text[len("fixed:"):]
    try:
        h = float(text)
    except ValueError:
        raise DomainError(f"bandwidth rule must be 'sm', 'ik' or 'fixed:<h>', got {rule!r}") from None
    if not (h > 0 and math.isfinite(h)):
        raise DomainError(f"fixed bandwidth must be positive, got {h}")
    return "fixed", h


@dataclass(frozen=True, eq=False)
class PleResult:
    fit: object
    variance: object
    ci: object
    rule: str
    h_requested: float
    h_used: float
    floor: object
    diagnostics: object = None

    @property
    def tau_hat(self):
        return self.fit.tau_hat

    @property
    def se(self):
        return self.variance.se


def select_bandwidth(data, rule, degree, kernel, h_min):
    """Bandwidth requested by ``rule`` (before the sparsity floor) and SM diagnostics."""
    name, value = parse_bandwidth_rule(rule)
    if name == "fixed":
        return value, None
    if name == "ik":
        return ik_bandwidth(data, kernel), None
    h, diag = sm_bandwidth(data, kernel, degree, h_min=h_min)
    return min(diag.h_unclamped, data.x_range), diag


def fit_with_rule(data, rule, degree=1, kernel="epanechnikov"):
    """Floor, bandwidth rule and fit.

    Returns ``(config, fit, h_requested, floor, diagnostics)``.
    """
    kernel = get_kernel(kernel)
    floor = stage("min_feasible_bandwidth", min_feasible_bandwidth, data, degree, kernel)
    h_req, diag = stage("bandwidth", select_bandwidth, data, rule, degree, kernel, floor.h_min)
    h, floor = apply_floor(h_req, floor)
    config = LocPolyConfig(degree, kernel, h)
    fit = stage("ple_fit", ple_fit, data, config)
    return config, fit, h_req, floor, diag


def _refit_tau(rule, degree, kernel, data):
    return fit_with_rule(data, rule, degree, kernel)[1].tau_hat


def deletion_refit(rule, degree=1, kernel="epanechnikov"):
    """Refit callable for the delete-one-observation jackknives.

    Each reduced sample goes through the whole pipeline again, so a
    data-driven rule reselects its bandwidth and the floor is recomputed.
    """
    return partial(_refit_tau, rule, degree, get_kernel(kernel))


def ple_estimate(data, degree=1, kernel="epanechnikov", bandwidth="sm", alpha=0.05,
                 variance="ple_wu"):
    """Partial linear estimate of the jump with a data-driven or fixed bandwidth.

    The requested bandwidth is raised to the smallest feasible bandwidth when
    needed (``floor.binding``). The delete-one-observation variances rerun the
    bandwidth rule on every reduced sample. Errors are tagged with the failing
    stage.
    """
    config, fit, h_req, floor, diag = fit_with_rule(data, bandwidth, degree, kernel)
    nn = None if diag is None else (diag.sigma2_minus, diag.sigma2_plus)
    refit = deletion_refit(bandwidth, degree, kernel)
    var = stage("variance", estimate_variance, variance, data, config, fit, nn=nn, refit=refit)
    ci = stage("confidence_interval", confidence_interval, fit.tau_hat, var.se, alpha)
    return PleResult(fit, var, ci, parse_bandwidth_rule(bandwidth)[0], h_req, config.bandwidth,
                     floor, diag)
