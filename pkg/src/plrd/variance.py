"""Variance estimators for the partial linear estimator and the normal confidence interval."""

from dataclasses import dataclass, field
from statistics import NormalDist
import math

import numpy as np

from .bandwidth import nn_variance
from .density import density_at_cutoff
from .errors import (DeletionInfeasibleError, DomainError, LeverageDegenerateError, PlrdError,
                     SparsityError)
from .kernels import kernel_functionals
from .ple import ple_fit

METHODS = ("ple_wu", "hinkley", "hinkley_orig", "wu_orig", "porter_plugin", "dpi")

LEVERAGE_TOL = 1e-12


@dataclass(frozen=True)
class VarianceEstimate:
    method: str
    value: float
    intermediates: dict = field(default_factory=dict, compare=False)

    @property
    def se(self):
        return math.sqrt(self.value)


@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    alpha: float
    center: float

    @property
    def width(self):
        return self.upper - self.lower

    def covers(self, value):
        return self.lower <= value <= self.upper


def variance_ple_wu(fit):
    """Wu-weighted residual-pair jackknife, in closed form.

    ``sum_i (1 - w_i)(tau_(i) - tau)^2 = gram^-2 sum_i r_i^2 d_i^2 / (1 - w_i)``.
    """
    w = fit.leverage
    if np.any(w >= 1.0 - LEVERAGE_TOL):
        i = int(np.argmax(w))
        raise LeverageDegenerateError(
            f"observation {i} carries all of the treatment contrast (leverage {w[i]:.6g})",
            index=i)
    terms = fit.r ** 2 * fit.d_resid ** 2 / (1.0 - w)
    return VarianceEstimate("ple_wu", float(terms.sum()) / fit.gram ** 2,
                            {"max_leverage": float(w.max())})


def variance_hinkley(fit):
    """Hinkley-weighted residual-pair jackknife."""
    n = fit.n
    terms = fit.r ** 2 / (1.0 - 1.0 / n) * fit.d_resid ** 2
    return VarianceEstimate("hinkley", float(terms.sum()) / fit.gram ** 2)


def deletion_estimates(data, config, refit=None):
    """``tau_hat`` recomputed with each observation removed.

    ``refit(reduced_data)`` returns the estimate on a reduced sample; by
    default the estimator is refitted at the full-data bandwidth.
    """
    if refit is None:
        def refit(sub):
            return ple_fit(sub, config).tau_hat
    taus = np.empty(data.n)
    keep = np.ones(data.n, dtype=bool)
    for i in range(data.n):
        keep[i] = False
        try:
            taus[i] = refit(data.subset(keep))
        except PlrdError as exc:
            raise DeletionInfeasibleError(
                f"estimate undefined after deleting observation {i}: {exc.message}",
                index=i) from exc
        keep[i] = True
    return taus


def variance_delete_observation(data, config, fit, flavor="wu", refit=None, taus=None):
    """Delete-one-observation jackknife using full-data leverages.

    ``refit`` is passed to :func:`deletion_estimates`; precomputed deletion
    estimates can be supplied as ``taus`` instead.
    """
    if flavor not in ("hinkley", "wu"):
        raise DomainError(f"flavor must be 'hinkley' or 'wu', got {flavor!r}")
    if taus is None:
        taus = deletion_estimates(data, config, refit)
    diff = taus - fit.tau_hat
    w = fit.leverage
    n = data.n
    if flavor == "wu":
        value = float(np.sum((1.0 - w) * diff ** 2))
        method = "wu_orig"
    else:
        value = float(np.sum((n * (1.0 - w) * diff) ** 2)) / (n * (n - 1))
        method = "hinkley_orig"
    return VarianceEstimate(method, value, {"refits": n})


def variance_porter_plugin(fit, density, nn_minus, nn_plus):
    """Asymptotic plug-in variance ``C_P1 (s2+ + s2-) / (4 f n h)``."""
    c_p1 = kernel_functionals(fit.kernel).porter_cp1
    value = c_p1 * (nn_plus + nn_minus) / (4.0 * density.f_c * fit.n * fit.h)
    return VarianceEstimate("porter_plugin", value,
                            {"c_p1": c_p1, "f_c": density.f_c, "density_floored": density.floored,
                             "sigma2_minus": nn_minus, "sigma2_plus": nn_plus})


def nn_residual_variances(data, tau_hat, J=3):
    """Nearest-neighbour variance at each design point on jump-adjusted responses."""
    if data.n < J + 1:
        raise SparsityError(f"need at least {J + 1} observations for {J} nearest neighbours", J=J)
    z = data.y - tau_hat * data.d
    order = np.argsort(data.x, kind="stable")
    xs, zs = data.x[order], z[order]
    n = data.n
    out = np.empty(n)
    for pos in range(n):
        # merge outward from pos, nearest first; ties go to the lower side
        lo, hi, picked = pos - 1, pos + 1, []
        while len(picked) < J:
            if hi >= n or (lo >= 0 and xs[pos] - xs[lo] <= xs[hi] - xs[pos]):
                picked.append(lo)
                lo -= 1
            else:
                picked.append(hi)
                hi += 1
        out[order[pos]] = J / (J + 1.0) * (zs[pos] - zs[picked].mean()) ** 2
    return out


def variance_dpi(data, fit, J=3):
    """Direct plug-in ``M diag(sigma2_NN) M'`` with ``M = (G'G)^{-1} G'(I - L')``."""
    if fit.smoother is None:
        raise DomainError("fit carries no smoother matrix")
    L = fit.smoother.entries
    # G'(I - L') = d_resid' - (L d_resid)'
    m = (fit.d_resid - L @ fit.d_resid) / fit.gram
    s2 = nn_residual_variances(data, fit.tau_hat, J)
    return VarianceEstimate("dpi", float(np.sum(m * m * s2)), {"J": J})


def confidence_interval(tau_hat, se, alpha=0.05):
    if not 0.0 < alpha < 1.0:
        raise DomainError(f"alpha must lie in (0, 1), got {alpha}")
    if not se >= 0:
        raise DomainError(f"standard error must be non-negative, got {se}")
    z = NormalDist().inv_cdf(1.0 - alpha / 2.0)
    return ConfidenceInterval(tau_hat - z * se, tau_hat + z * se, alpha, tau_hat)


def estimate_variance(method, data, config, fit, density=None, nn=None, refit=None,
                      deletions=None):
    """Dispatch to the named variance estimator.

    ``density`` and ``nn = (sigma2_minus, sigma2_plus)`` are only used by
    ``porter_plugin`` and computed when missing. ``refit`` and ``deletions``
    are only used by the delete-one-observation methods.
    """
    if method == "ple_wu":
        return variance_ple_wu(fit)
    if method == "hinkley":
        return variance_hinkley(fit)
    if method == "wu_orig":
        return variance_delete_observation(data, config, fit, "wu", refit, deletions)
    if method == "hinkley_orig":
        return variance_delete_observation(data, config, fit, "hinkley", refit, deletions)
    if method == "dpi":
        return variance_dpi(data, fit)
    if method == "porter_plugin":
        if density is None:
            density = density_at_cutoff(data)
        if nn is None:
            nn = (nn_variance(data, "below"), nn_variance(data, "above"))
        return variance_porter_plugin(fit, density, *nn)
    raise DomainError(f"unknown variance method {method!r}; expected one of {METHODS}")
