"""Imbens-Kalyanaraman MSE-optimal bandwidth for the sharp RD local linear estimator.

Algorithm from Imbens, G. and Kalyanaraman, K. (2012), "Optimal Bandwidth
Choice for the Regression Discontinuity Estimator", Review of Economic
Studies 79(3), 933-959:

1. Pilot window ``h1 = 1.84 S_X n^(-1/5)``; density ``f = (N_- + N_+)/(2 n h1)``;
   side variances from the responses within ``h1`` of the cutoff.
2. Global cubic with a jump gives ``m3``; side pilot bandwidths
   ``h2_pm = 3.56 (s2_pm / (f m3^2))^(1/7) N_pm^(-1/7)``; local quadratics on
   each side within ``h2_pm`` give ``m2_pm`` and the regularisation terms
   ``r_pm = 720 s2_pm / (N2_pm h2_pm^4)``.
3. ``h = C_K ((s2_- + s2_+) / (f ((m2_+ - m2_-)^2 + r_+ + r_-)))^(1/5) n^(-1/5)``.

``C_K`` is the boundary local linear constant of the kernel (3.4375 for the
triangular kernel), computed here by quadrature for any kernel.
"""

from functools import lru_cache

import numpy as np
from scipy import integrate

from .bandwidth import jump_polynomial_fit
from .errors import SparsityError
from .kernels import get_kernel
from .ple import stage


@lru_cache(maxsize=None)
def _ck(name):
    kernel = get_kernel(name)
    hi = kernel.support if kernel.finite_support else np.inf
    nu = [integrate.quad(lambda u: u ** j * kernel(u), 0, hi, epsabs=1e-12)[0] for j in range(4)]
    det = nu[0] * nu[2] - nu[1] ** 2
    c1 = 0.5 * (nu[2] ** 2 - nu[1] * nu[3]) / det
    c2 = integrate.quad(lambda u: ((nu[2] - nu[1] * u) * kernel(u) / det) ** 2, 0, hi,
                        epsabs=1e-12)[0]
    return (c2 / (4.0 * c1 ** 2)) ** 0.2


def ik_constant(kernel):
    return _ck(get_kernel(kernel).name)


def _side_quadratic(x, y, c, h, side):
    mask = (x < c) & (x >= c - h) if side == "below" else (x >= c) & (x <= c + h)
    if np.unique(x[mask]).size < 3:
        raise SparsityError(f"fewer than 3 distinct points {side} the cutoff in the pilot window",
                            side=side, bandwidth=float(h))
    u = x[mask] - c
    X = np.column_stack([np.ones_like(u), u, u * u])
    coef = np.linalg.lstsq(X, y[mask], rcond=None)[0]
    return 2.0 * coef[2], int(mask.sum())


def _ik(data, kernel):
    x, y, c, n = data.x, data.y, data.cutoff, data.n
    h1 = 1.84 * np.std(x, ddof=1) * n ** -0.2
    below = (x < c) & (x >= c - h1)
    above = (x >= c) & (x <= c + h1)
    n_m, n_p = int(below.sum()), int(above.sum())
    if n_m < 2 or n_p < 2:
        raise SparsityError("fewer than two observations on a side of the cutoff in the first "
                            "pilot window", below=n_m, above=n_p)
    f = (n_m + n_p) / (2.0 * n * h1)
    s2m = float(np.var(y[below], ddof=1))
    s2p = float(np.var(y[above], ddof=1))

    m3 = jump_polynomial_fit(data, 3).derivative(3)
    N_m, N_p = int((x < c).sum()), int((x >= c).sum())
    h2m = 3.56 * (s2m / (f * m3 ** 2)) ** (1 / 7) * N_m ** (-1 / 7)
    h2p = 3.56 * (s2p / (f * m3 ** 2)) ** (1 / 7) * N_p ** (-1 / 7)
    m2m, n2m = _side_quadratic(x, y, c, h2m, "below")
    m2p, n2p = _side_quadratic(x, y, c, h2p, "above")
    rm = 720.0 * s2m / (n2m * h2m ** 4)
    rp = 720.0 * s2p / (n2p * h2p ** 4)
    return ik_constant(kernel) * ((s2m + s2p) / (f * ((m2p - m2m) ** 2 + rm + rp))) ** 0.2 * n ** -0.2


def ik_bandwidth(data, kernel="triangular"):
    return stage("ik_bandwidth", _ik, data, kernel)
