"""Kernel functions and the kernel constants used by smoothing and bandwidth selection."""

from dataclasses import dataclass, field
from functools import lru_cache
import math
from typing import Callable, Dict, Tuple

import numpy as np
from scipy import integrate

from ._porter import porter_functionals
from .errors import DomainError, NumericalError

_SQRT_2PI = math.sqrt(2.0 * math.pi)


def _epanechnikov(u):
    return np.where(np.abs(u) <= 1.0, 0.75 * (1.0 - u * u), 0.0)


def _triangular(u):
    return np.where(np.abs(u) <= 1.0, 1.0 - np.abs(u), 0.0)


def _uniform(u):
    return np.where(np.abs(u) <= 1.0, 0.5, 0.0)


def _gaussian(u):
    return np.exp(-0.5 * u * u) / _SQRT_2PI


@dataclass(frozen=True)
class Kernel:
    """Symmetric second-order kernel.

    ``support`` is the radius of the support (``math.inf`` for unbounded).
    Calling the kernel evaluates it elementwise on scalars or arrays.
    """

    name: str
    support: float
    _fn: Callable = field(repr=False, compare=False)

    def __call__(self, u):
        out = self._fn(np.asarray(u, dtype=float))
        return float(out) if np.ndim(out) == 0 else out

    @property
    def finite_support(self):
        return not math.isinf(self.support)


EPANECHNIKOV = Kernel("epanechnikov", 1.0, _epanechnikov)
TRIANGULAR = Kernel("triangular", 1.0, _triangular)
UNIFORM = Kernel("uniform", 1.0, _uniform)
GAUSSIAN = Kernel("gaussian", math.inf, _gaussian)

KERNELS = {k.name: k for k in (EPANECHNIKOV, TRIANGULAR, UNIFORM, GAUSSIAN)}


def get_kernel(kernel):
    """Resolve a kernel name (or pass a :class:`Kernel` through)."""
    if isinstance(kernel, Kernel):
        return kernel
    try:
        return KERNELS[str(kernel).lower()]
    except KeyError:
        raise DomainError(f"unknown kernel {kernel!r}; expected one of {sorted(KERNELS)}") from None


def kernel_eval(kernel, u):
    kernel = get_kernel(kernel)
    arr = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise DomainError("kernel argument must be finite")
    return kernel(arr)


def gaussian_kernel_derivative(order, u):
    """``order``-th derivative of the standard normal density."""
    if order not in (0, 1, 2):
        raise DomainError(f"unsupported derivative order {order}")
    u = np.asarray(u, dtype=float)
    phi = _gaussian(u)
    if order == 0:
        out = phi
    elif order == 1:
        out = -u * phi
    else:
        out = (u * u - 1.0) * phi
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class KernelFunctionals:
    mu2: float
    roughness: float
    porter_k0: float  # integral_0^R K_0(u)^2 du
    porter_k1: float  # integral_0^R K_1(u) du
    porter_k2: float  # K_2(0)
    porter_vk0: float  # integral_0^R u K_0(u) du
    porter_cp1: float
    fg_constants: Dict[Tuple[int, int], float]


def _integrate(fn, kernel):
    lo, hi = (-kernel.support, kernel.support) if kernel.finite_support else (-np.inf, np.inf)
    val, err = integrate.quad(fn, lo, hi, epsabs=1e-10, epsrel=1e-12, limit=200)
    if not np.isfinite(val) or err > 1e-8:
        raise NumericalError(f"quadrature did not converge for kernel {kernel.name}",
                             estimate=val, error=err)
    return val


def kernel_moment(kernel, j):
    """``integral u**j K(u) du`` over the support."""
    kernel = get_kernel(kernel)
    return _integrate(lambda u: u ** j * kernel(u), kernel)


def equivalent_kernel(kernel, nu, rho):
    """Interior equivalent kernel for the ``nu``-th derivative from a degree-``rho`` fit.

    Returns a vectorised callable ``t -> e_nu' S^{-1} (1, t, ..., t^rho)' K(t)``.
    """
    kernel = get_kernel(kernel)
    S = np.array([[kernel_moment(kernel, i + j) for j in range(rho + 1)]
                  for i in range(rho + 1)])
    coef = np.linalg.solve(S, np.eye(rho + 1)[nu])

    def kstar(t):
        t = np.asarray(t, dtype=float)
        powers = np.stack([t ** k for k in range(rho + 1)])
        return np.tensordot(coef, powers, axes=1) * kernel(t)

    return kstar


def fg_constant(kernel, nu, rho):
    """Constant of the interior MSE-optimal bandwidth for estimating ``m^(nu)``.

    ``h = C * (sigma^2 / (m^(rho+1)^2 f n))^(1/(2 rho + 3))``.
    """
    kernel = get_kernel(kernel)
    if not 0 <= nu <= rho or (rho - nu) % 2 == 0:
        raise DomainError(f"need rho - nu odd and nonnegative, got nu={nu}, rho={rho}")
    kstar = equivalent_kernel(kernel, nu, rho)
    r_kstar = _integrate(lambda t: kstar(t) ** 2, kernel)
    bias_mom = _integrate(lambda t: t ** (rho + 1) * kstar(t), kernel)
    num = math.factorial(rho + 1) ** 2 * (2 * nu + 1) * r_kstar
    den = 2.0 * (rho + 1 - nu) * bias_mom ** 2
    return (num / den) ** (1.0 / (2 * rho + 3))


@lru_cache(maxsize=None)
def _functionals(name):
    kernel = KERNELS[name]
    porter = porter_functionals(kernel)
    return KernelFunctionals(
        mu2=kernel_moment(kernel, 2),
        roughness=_integrate(lambda u: kernel(u) ** 2, kernel),
        porter_k0=porter["int_k0_sq"],
        porter_k1=porter["int_k1"],
        porter_k2=porter["k2_0"],
        porter_vk0=porter["int_vk0"],
        porter_cp1=porter["c_p1"],
        fg_constants={(nu, nu + 1): fg_constant(kernel, nu, nu + 1) for nu in (1, 2, 3)},
    )


def kernel_functionals(kernel):
    """Moments, roughness, Porter constants and pilot-bandwidth constants of ``kernel``.

    Results are cached per kernel name; repeated calls return the same object.
    """
    return _functionals(get_kernel(kernel).name)
