"""Partial linear estimator of the jump at the cutoff."""

from dataclasses import dataclass

import numpy as np

from .errors import (BandwidthTooSmallError, DatasetUnusableError, DegenerateContrastError,
                     PlrdError)
from .kernels import get_kernel
from .smoothing import LocPolyConfig, smooth_at_design, smoother_matrix

GRAM_TOL = 1e-12
BISECTION_STEPS = 30


@dataclass(frozen=True, eq=False)
class PleFit:
    """Point estimate plus the residualised quantities the variance estimators need.

    ``d_resid`` and ``y_resid`` are ``d - E_hat(D|x)`` and ``y - E_hat(Y|x)``;
    ``r = y_resid - d_resid * tau_hat``; ``leverage = d_resid**2 / gram``.
    """

    tau_hat: float
    h: float
    degree: int
    kernel: str
    d_resid: np.ndarray
    y_resid: np.ndarray
    r: np.ndarray
    leverage: np.ndarray
    gram: float
    smoother: object = None

    @property
    def n(self):
        return self.d_resid.size


def ple_fit(data, config):
    """Fit ``tau_hat = (G'G)^{-1} G'(I - L')Y`` with ``G = (I - L')D``."""
    L = smoother_matrix(data, config)
    d = data.d
    d_resid = d - L.fitted(d)
    y_resid = data.y - L.fitted(data.y)
    gram = float(d_resid @ d_resid)
    if not gram > GRAM_TOL * data.n:
        raise DegenerateContrastError(
            f"treatment contrast vanishes after smoothing (G'G={gram:.3g}) at h={config.bandwidth:.6g}",
            gram=gram, bandwidth=config.bandwidth)
    tau = float(d_resid @ y_resid) / gram
    return PleFit(
        tau_hat=tau,
        h=config.bandwidth,
        degree=config.degree,
        kernel=config.kernel.name,
        d_resid=d_resid,
        y_resid=y_resid,
        r=y_resid - d_resid * tau,
        leverage=d_resid ** 2 / gram,
        gram=gram,
        smoother=L,
    )


def ple_objective(data, config, tau):
    """Least-squares criterion minimised by the estimator, evaluated at ``tau``."""
    L = smoother_matrix(data, config)
    z = data.y - np.multiply.outer(np.atleast_1d(tau), data.d)
    resid = z - z @ L.entries
    out = (resid ** 2).sum(axis=-1)
    return out if np.ndim(tau) else float(out[0])


@dataclass(frozen=True)
class BandwidthFloor:
    h_min: float
    binding: bool = False


def _feasible(data, degree, kernel, h):
    # same checks as ple_fit without forming the dense smoother
    try:
        d = data.d
        d_resid = d - smooth_at_design(data.x, d, LocPolyConfig(degree, kernel, h))
    except BandwidthTooSmallError:
        return False
    return float(d_resid @ d_resid) > GRAM_TOL * data.n


def _infeasible_below(data, degree):
    """A bandwidth at or below which no finite-support fit can succeed.

    Every point needs ``degree + 1`` distinct observations strictly inside its
    window, and some window must straddle the cutoff.
    """
    xs = np.unique(data.x)
    gap = float(xs[xs >= data.cutoff][0] - xs[xs < data.cutoff][-1])
    if degree == 0 or xs.size <= degree:
        return gap
    # distance from each distinct point to its degree-th nearest distinct neighbour
    m = xs.size
    best = np.full(m, np.inf)
    for left in range(degree + 1):
        right = degree - left
        i = np.arange(left, m - right)
        span = np.maximum(xs[i] - xs[i - left], xs[i + right] - xs[i])
        best[i] = np.minimum(best[i], span)
    return max(gap, float(best.max()))


def min_feasible_bandwidth(data, degree, kernel):
    """Smallest bandwidth (to bisection accuracy) at which :func:`ple_fit` succeeds."""
    kernel = get_kernel(kernel)
    top = data.x_range
    if not top > 0 or not _feasible(data, degree, kernel, top):
        raise DatasetUnusableError(
            f"no feasible bandwidth up to range(x)={top:.6g} for degree {degree}",
            degree=degree)
    lo = min(_infeasible_below(data, degree), top)
    if lo > 0 and _feasible(data, degree, kernel, lo):
        lo, hi = 0.0, lo
    else:
        hi = min(2.0 * lo, top) if lo > 0 else top
        while not _feasible(data, degree, kernel, hi):
            lo, hi = hi, min(2.0 * hi, top)
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (lo + hi)
        if _feasible(data, degree, kernel, mid):
            hi = mid
        else:
            lo = mid
    return BandwidthFloor(hi)


def apply_floor(h, floor):
    if h < floor.h_min:
        return floor.h_min, BandwidthFloor(floor.h_min, True)
    return h, floor


def stage(name, fn, *args, **kwargs):
    """Run ``fn`` tagging any package error with the stage name."""
    try:
        return fn(*args, **kwargs)
    except PlrdError as exc:
        raise exc.with_stage(name)
