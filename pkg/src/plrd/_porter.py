"""Porter's one-sided kernel functionals for the local-constant partial linear estimator.

This file is the single place where the constants ``K_0``, ``K_1``, ``K_2`` and
``C_P1`` are defined, so the definitions can be audited in isolation.

Definitions (kernel ``K`` symmetric, second order, support radius ``R``)::

    K_j(u)   = integral_u^R  t**j K(t) dt                      j = 0, 1, 2
    g0(v)    = sign(v) * K_0(|v|)            limiting residualised treatment
    a(u)     = g0(u) - integral K(u - v) g0(v) dv
    C_P1     = integral_0^{2R} a(u)**2 du / (integral_0^R K_0(u)**2 du)**2

``g0`` is the large-sample limit of ``d_i - E_hat(D | x_i)`` at
``x_i = c + u h`` under Nadaraya-Watson weights.  ``a`` is the net weight
that the error at ``c + u h`` receives in the numerator of the estimator
once the smoothing of ``Y`` is accounted for. With these definitions

    sqrt(n h) (tau_hat - tau) -> N(A b_P, C_P1 (s2_plus + s2_minus) / (4 f(c)))

with ``b_P = 2 K_2(0) (f(c) int_0 K_0^2)^-1 ((f'/f) g_2 int_0 K_1 - g_2' int_0 v K_0(v) dv)``.
``tests/test_porter.py`` checks both the bias and the variance against the
exact finite-sample moments of the estimator on a dense deterministic design.
"""

import math

import numpy as np
from scipy import integrate

_EPSABS = 1e-10
_GAUSS_RADIUS = 12.0


def _radius(kernel):
    return _GAUSS_RADIUS if math.isinf(kernel.support) else kernel.support


def _quad(fn, lo, hi, points=None):
    pts = None
    if points:
        pts = sorted({p for p in points if lo < p < hi})
    val, _ = integrate.quad(fn, lo, hi, epsabs=_EPSABS, epsrel=1e-12,
                            limit=400, points=pts or None)
    return val


def tail_moment(kernel, j, u):
    """``K_j(u)``: integral of ``t**j K(t)`` over ``[u, R]``."""
    R = _radius(kernel)
    if u >= R:
        return 0.0
    return _quad(lambda t: t ** j * kernel(t), u, R, points=[0.0])


def _g0(kernel, v):
    if v == 0.0:
        return 0.0
    return math.copysign(tail_moment(kernel, 0, abs(v)), v)


def _net_weight(kernel, u):
    R = _radius(kernel)
    lo, hi = max(u - R, -R), min(u + R, R)
    conv = 0.0
    if hi > lo:
        conv = _quad(lambda v: kernel(u - v) * _g0(kernel, v), lo, hi, points=[0.0, u])
    return _g0(kernel, u) - conv


def porter_functionals(kernel):
    """Return ``dict`` with K2_0, int_K0_sq, int_K1, int_vK0 and C_P1."""
    R = _radius(kernel)
    int_k0_sq = _quad(lambda u: tail_moment(kernel, 0, u) ** 2, 0.0, R)
    int_k1 = _quad(lambda u: tail_moment(kernel, 1, u), 0.0, R)
    int_vk0 = _quad(lambda u: u * tail_moment(kernel, 0, u), 0.0, R)
    a_sq = _quad(lambda u: _net_weight(kernel, u) ** 2, 0.0, 2 * R, points=[R])
    return {
        "k2_0": tail_moment(kernel, 2, 0.0),
        "int_k0_sq": int_k0_sq,
        "int_k1": int_k1,
        "int_vk0": int_vk0,
        "c_p1": a_sq / int_k0_sq ** 2,
    }


def net_weight(kernel, u):
    """Vectorised ``a(u)``; exposed for tests."""
    return np.array([_net_weight(kernel, float(v)) for v in np.atleast_1d(u)])
