"""Plug-in bandwidth for the partial linear estimator, plus rule-of-thumb and DISS helpers.

The smoothness-based bandwidth minimises the asymptotic MSE

    AMSE(h) = h**6 b_P**2 + C_P1 (s2_plus + s2_minus) / (4 n h f(c))

whose minimiser is ``(C_P1 (s2_plus + s2_minus) / (24 n b_P**2 f(c)))**(1/7)``.
The unknowns are replaced by a density estimate at the cutoff, mean-function
derivatives from jump polynomials refitted inside pilot windows, and
nearest-neighbour variances on either side of the cutoff.
"""

from dataclasses import dataclass, field
import math

import numpy as np
from scipy import stats

from .density import density_at_cutoff
from .errors import DegenerateInputError, RankError, SparsityError
from .kernels import UNIFORM, get_kernel, kernel_functionals
from .ple import min_feasible_bandwidth, stage

DERIV_TOL = 1e-10


@dataclass(frozen=True)
class JumpPolyFit:
    """OLS fit of ``y`` on ``1, D, (x-c), ..., (x-c)**q``.

    ``coef[0]`` is the intercept, ``coef[1]`` the jump and ``coef[1 + k]`` the
    coefficient on ``(x - c)**k``.
    """

    coef: np.ndarray
    sigma2: float
    n: int
    degree: int

    @property
    def jump(self):
        return float(self.coef[1])

    def derivative(self, k):
        """k-th derivative of the smooth part at the cutoff."""
        if k > self.degree:
            return 0.0
        return math.factorial(k) * float(self.coef[1 + k])


def jump_polynomial_fit(data, degree):
    q = degree
    if data.n < q + 3:
        raise SparsityError(f"need at least {q + 3} observations for a degree-{q} jump polynomial",
                            n=data.n, degree=q)
    dx = data.x - data.cutoff
    scale = float(np.max(np.abs(dx)))
    if not scale > 0:
        raise RankError("all running-variable values sit on the cutoff")
    u = dx / scale
    X = np.column_stack([np.ones_like(u), data.d] + [u ** k for k in range(1, q + 1)])
    coef, _, rank, _ = np.linalg.lstsq(X, data.y, rcond=None)
    if rank < X.shape[1]:
        raise RankError(f"jump polynomial design of degree {q} is rank deficient",
                        rank=int(rank), columns=X.shape[1])
    resid = data.y - X @ coef
    coef = coef.copy()
    coef[2:] /= scale ** np.arange(1, q + 1)
    return JumpPolyFit(coef, float(resid @ resid) / (data.n - q - 2), data.n, q)


def pilot_bandwidth_fg(nu, data, density, kernel=UNIFORM):
    """Pilot bandwidth for the ``nu``-th derivative, local degree ``rho = nu + 1``.

    Returns ``(h, degenerate)``; when the estimated ``(rho+1)``-th derivative is
    numerically zero the pilot is capped at ``range(x)`` and ``degenerate`` is True.
    """
    if nu not in (1, 2, 3):
        raise ValueError(f"nu must be 1, 2 or 3, got {nu}")
    rho = nu + 1
    fit = jump_polynomial_fit(data, rho + 1)
    m = fit.derivative(rho + 1)
    if abs(m) < DERIV_TOL:
        return data.x_range, True
    const = kernel_functionals(kernel).fg_constants[(nu, rho)]
    h = const * (fit.sigma2 / (m * m * density.f_c * data.n)) ** (1.0 / (2 * rho + 3))
    return h, False


def _window_fit(data, radius, rho):
    """Fit inside ``|x - c| <= radius`` expanding the radius until the fit is usable."""
    dist = np.abs(data.x - data.cutoff)
    order = np.sort(dist)
    need = rho + 3
    below = data.x < data.cutoff
    both = max(dist[below].min(), dist[~below].min())
    start = max(int(np.searchsorted(order, max(radius, both), side="right")), need)
    for k in range(start, data.n + 1):
        r = max(radius, order[k - 1])
        mask = dist <= r
        d = data.d[mask]
        if mask.sum() < need or d.all() or not d.any():
            continue
        try:
            return jump_polynomial_fit(data.subset(mask), rho), r
        except RankError:
            continue
    raise SparsityError(f"no window supports a degree-{rho} jump polynomial", degree=rho)


def windowed_derivatives(data, pilots):
    """Estimate the first three derivatives of the smooth mean at the cutoff.

    For each ``nu`` a degree ``nu + 1`` jump polynomial is fitted to the
    observations within ``pilots[nu - 1]`` of the cutoff. Returns
    ``(derivs, radii, expanded)`` where ``radii`` are the windows actually used.
    """
    derivs, radii, expanded = [], [], []
    for nu, h in zip((1, 2, 3), pilots):
        fit, r = _window_fit(data, h, nu + 1)
        derivs.append(fit.derivative(nu))
        radii.append(r)
        expanded.append(r > h)
    return tuple(derivs), tuple(radii), tuple(expanded)


def nn_variance(data, side, J=3):
    """Sample variance of the responses of the ``J`` observations nearest the cutoff on ``side``.

    Observations tied with the J-th distance are all included and the
    divisor uses the actual count.
    """
    if side == "below":
        mask = data.x < data.cutoff
    elif side == "above":
        mask = data.x >= data.cutoff
    else:
        raise ValueError(f"side must be 'below' or 'above', got {side!r}")
    x, y = data.x[mask], data.y[mask]
    if np.unique(x).size < J:
        raise SparsityError(f"fewer than {J} distinct observations {side} the cutoff",
                            side=side, J=J)
    dist = np.abs(x - data.cutoff)
    d_j = np.sort(dist)[J - 1]
    return float(np.var(y[dist <= d_j], ddof=1))


@dataclass(frozen=True)
class SmDiagnostics:
    f_c: float
    f1_c: float
    f2_c: float
    mu1_c: float
    mu2_c: float
    mu3_c: float
    g2_c: float
    g2p_c: float
    b_p: float
    sigma2_minus: float
    sigma2_plus: float
    h_fg: tuple
    windows: tuple
    h_unclamped: float
    h_min: float
    h_sm: float
    clamps: tuple = field(default_factory=tuple)
    density_bandwidths: tuple = ()

    def as_dict(self):
        return {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.__dict__.items()}


def bias_constant(functionals, f, f1, g2, g2p):
    """Leading bias constant ``b_P`` (bias ~ h**3 b_P)."""
    kf = functionals
    return (2.0 * kf.porter_k2 / (f * kf.porter_k0)
            * (f1 / f * g2 * kf.porter_k1 - g2p * kf.porter_vk0))


def amse_ple(h, b_p, c_p1, s2_sum, n, f):
    h = np.asarray(h, dtype=float)
    return h ** 6 * b_p ** 2 + c_p1 * s2_sum / (4.0 * n * h * f)


def sm_formula(b_p, c_p1, s2_sum, n, f):
    """Closed-form minimiser of :func:`amse_ple`; ``inf`` when ``b_p == 0``."""
    if b_p == 0:
        return math.inf
    return (c_p1 * s2_sum / (24.0 * n * b_p ** 2 * f)) ** (1.0 / 7.0)


def sm_bandwidth(data, kernel, degree=1, h_min=None):
    """Smoothness-based plug-in bandwidth and every intermediate it used."""
    kernel = get_kernel(kernel)
    kf = kernel_functionals(kernel)
    dens = stage("density", density_at_cutoff, data)
    f, f1, f2 = dens.f_c, dens.f1_c, dens.f2_c

    pilots, degenerate = [], []
    for nu in (1, 2, 3):
        h, flag = stage("pilot_bandwidth", pilot_bandwidth_fg, nu, data, dens)
        pilots.append(h)
        degenerate.append(flag)
    (m1, m2, m3), windows, expanded = stage("windowed_derivatives", windowed_derivatives,
                                            data, pilots)
    s2m = stage("nn_variance", nn_variance, data, "below")
    s2p = stage("nn_variance", nn_variance, data, "above")

    g2 = m1 * f1 + m2 * f / 2.0
    g2p = m2 * f1 + m1 * f2 + m3 * f / 2.0 + m2 * f1 / 2.0
    b_p = bias_constant(kf, f, f1, g2, g2p)
    h_raw = sm_formula(b_p, kf.porter_cp1, s2m + s2p, data.n, f)

    clamps = []
    if dens.floored:
        clamps.append("density_floor")
    clamps += [f"pilot_{nu}_derivative_degenerate" for nu, flag in zip((1, 2, 3), degenerate) if flag]
    clamps += [f"pilot_{nu}_window_expanded" for nu, flag in zip((1, 2, 3), expanded) if flag]
    if h_min is None:
        h_min = stage("min_feasible_bandwidth", min_feasible_bandwidth, data, degree, kernel).h_min
    h = h_raw
    if h > data.x_range:
        h = data.x_range
        clamps.append("capped_at_range")
    if h < h_min:
        h = h_min
        clamps.append("raised_to_min_feasible")

    diag = SmDiagnostics(f, f1, f2, m1, m2, m3, g2, g2p, b_p, s2m, s2p, tuple(pilots),
                         tuple(windows), h_raw, h_min, h, tuple(clamps), dens.bandwidths)
    return h, diag


ROT_CONSTANT = 0.9


def _rot_scale(sd, iqr):
    scale = min(sd, iqr / 1.34)
    return scale if scale > 0 else sd


def rot_bandwidth(x_data, constant=ROT_CONSTANT):
    """Rule-of-thumb bandwidth ``constant * min(sd, IQR/1.34) * n**(-1/5)``."""
    x = np.asarray(x_data, dtype=float)
    if x.size < 2:
        raise DegenerateInputError("need at least two observations")
    q75, q25 = np.percentile(x, [75, 25])
    scale = _rot_scale(float(np.std(x, ddof=1)), float(q75 - q25))
    if not scale > 0:
        raise DegenerateInputError("running variable has zero spread")
    return constant * scale * x.size ** -0.2


def diss_m(data, constant=ROT_CONSTANT):
    """Number of observations within a rule-of-thumb bandwidth of the cutoff."""
    h = rot_bandwidth(data.x, constant)
    return int(np.count_nonzero(np.abs(data.x - data.cutoff) <= h))


def expected_m(beta_a, beta_b, n, constant=ROT_CONSTANT):
    """Expected DISS count for ``X = 2Z - 1``, ``Z ~ Beta(a, b)``, cutoff 0.

    The rule-of-thumb bandwidth uses the population scale of ``X``.
    """
    z = stats.beta(beta_a, beta_b)
    sd = 2.0 * float(z.std())
    iqr = 2.0 * float(z.ppf(0.75) - z.ppf(0.25))
    h = constant * _rot_scale(sd, iqr) * n ** -0.2
    return n * float(z.cdf(min(1.0, (1.0 + h) / 2.0)) - z.cdf(max(0.0, (1.0 - h) / 2.0)))
