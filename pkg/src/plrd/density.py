"""Gaussian kernel density and density-derivative estimation at the cutoff."""

from dataclasses import dataclass
import math

import numpy as np
from numpy.polynomial import hermite_e

from .errors import DegenerateInputError, DomainError

_SQRT_PI = math.sqrt(math.pi)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _phi_deriv(s, u):
    """s-th derivative of the standard normal density."""
    coef = np.zeros(s + 1)
    coef[s] = 1.0
    return (-1) ** s * hermite_e.hermeval(u, coef) * np.exp(-0.5 * u * u) / _SQRT_2PI


def _phi_deriv_at_zero(s):
    if s % 2:
        return 0.0
    return (-1) ** (s // 2) * _double_factorial(s - 1) / _SQRT_2PI


def _double_factorial(k):
    return math.prod(range(k, 0, -2)) if k > 0 else 1


def kde_at(x_data, point, h, derivative_order=0):
    """Gaussian kernel estimate of the ``derivative_order``-th density derivative at ``point``."""
    if not h > 0:
        raise DomainError(f"bandwidth must be positive, got {h}")
    if derivative_order not in (0, 1, 2):
        raise DomainError(f"unsupported derivative order {derivative_order}")
    x = np.asarray(x_data, dtype=float)
    u = (point - x) / h
    total = _phi_deriv(derivative_order, u).sum()
    return float(total / (x.size * h ** (1 + derivative_order)))


def _psi_normal_scale(s, sigma):
    return (-1) ** (s // 2) * math.factorial(s) / (
        (2.0 * sigma) ** (s + 1) * math.factorial(s // 2) * _SQRT_PI)


def _psi_hat(x, s, g):
    """Kernel estimate of the density functional psi_s = E f^(s)(X)."""
    n = x.size
    i, j = np.triu_indices(n, k=1)
    off = _phi_deriv(s, (x[i] - x[j]) / g).sum()
    return (n * _phi_deriv_at_zero(s) + 2.0 * off) / (n * n * g ** (s + 1))


def _pilot(s, psi_next, n):
    # AMSE-optimal bandwidth for psi_s given an estimate of psi_{s+2}
    return (2.0 * _phi_deriv_at_zero(s) / (-psi_next * n)) ** (1.0 / (s + 3))


def kde_bandwidth(x_data, derivative_order=0, stages=2):
    """Direct plug-in bandwidth for Gaussian estimation of the r-th density derivative.

    Starts from a normal-scale estimate of ``psi_{2r+2+2*stages}`` and runs
    ``stages`` kernel functional estimation steps down to ``psi_{2r+4}``.
    """
    x = np.asarray(x_data, dtype=float)
    n = x.size
    if n < 4:
        raise DomainError("need at least 4 observations for a plug-in bandwidth")
    sigma = float(np.std(x, ddof=1))
    if not sigma > 0:
        raise DegenerateInputError("running variable has zero spread")
    r = derivative_order
    top = 2 * r + 4 + 2 * stages
    psi = _psi_normal_scale(top, sigma)
    for s in range(top - 2, 2 * r + 3, -2):
        est = _psi_hat(x, s, _pilot(s, psi, n))
        # an estimate with the wrong sign cannot define a bandwidth
        psi = est if est * (-1) ** (s // 2) > 0 else _psi_normal_scale(s, sigma)
    r_kr = math.factorial(2 * r) / (2 ** (2 * r + 1) * math.factorial(r) * _SQRT_PI)
    return float(((2 * r + 1) * r_kr / ((-1) ** r * psi * n)) ** (1.0 / (2 * r + 5)))


@dataclass(frozen=True)
class DensityEstimate:
    f_c: float
    f1_c: float
    f2_c: float
    bandwidths: tuple
    n: int
    f_c_raw: float
    floored: bool


def density_at_cutoff(data):
    """Density of the running variable and its first two derivatives at the cutoff.

    The density is floored at ``1 / (n * range(x))`` so that it can be used as
    a denominator; ``floored`` records whether the floor was applied.
    """
    hs = tuple(kde_bandwidth(data.x, r) for r in (0, 1, 2))
    f0, f1, f2 = (kde_at(data.x, data.cutoff, h, r) for r, h in enumerate(hs))
    floor = 1.0 / (data.n * data.x_range)
    return DensityEstimate(max(f0, floor), f1, f2, hs, data.n, f0, f0 < floor)
