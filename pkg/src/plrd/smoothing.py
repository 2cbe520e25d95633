"""Local polynomial weights, the smoother matrix and a two-sided local linear comparator."""

from dataclasses import dataclass

import numpy as np

from .errors import BandwidthTooSmallError, DegenerateInputError, DomainError, SparsityError
from .kernels import Kernel, get_kernel

COND_LIMIT = 1e12


@dataclass(frozen=True, eq=False)
class RdDataset:
    """Sharp RD sample: running variable ``x``, response ``y`` and ``cutoff``.

    Treatment is ``d = 1[x >= cutoff]``.
    """

    x: np.ndarray
    y: np.ndarray
    cutoff: float = 0.0

    def __post_init__(self):
        x = np.ascontiguousarray(self.x, dtype=float)
        y = np.ascontiguousarray(self.y, dtype=float)
        if x.ndim != 1 or x.shape != y.shape:
            raise DomainError("x and y must be 1-d arrays of equal length")
        if x.size < 2:
            raise DomainError("need at least two observations")
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.isfinite(self.cutoff)):
            raise DomainError("x, y and cutoff must be finite")
        d = x >= self.cutoff
        if d.all() or not d.any():
            raise DegenerateInputError("need observations on both sides of the cutoff")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)
        object.__setattr__(self, "cutoff", float(self.cutoff))

    @property
    def n(self):
        return self.x.size

    @property
    def d(self):
        return (self.x >= self.cutoff).astype(float)

    @property
    def x_range(self):
        return float(self.x.max() - self.x.min())

    def subset(self, mask):
        return RdDataset(self.x[mask], self.y[mask], self.cutoff)

    def with_y(self, y):
        return RdDataset(self.x, y, self.cutoff)


@dataclass(frozen=True)
class LocPolyConfig:
    degree: int
    kernel: Kernel
    bandwidth: float

    def __post_init__(self):
        object.__setattr__(self, "kernel", get_kernel(self.kernel))
        if self.degree not in range(6):
            raise DomainError(f"degree must be in 0..5, got {self.degree}")
        if not (self.bandwidth > 0 and np.isfinite(self.bandwidth)):
            raise DomainError(f"bandwidth must be positive and finite, got {self.bandwidth}")

    def with_bandwidth(self, h):
        return LocPolyConfig(self.degree, self.kernel, float(h))


@dataclass(frozen=True, eq=False)
class SmootherMatrix:
    """``entries[:, i]`` holds the weights for evaluation at ``x_i``."""

    entries: np.ndarray
    config: LocPolyConfig

    def fitted(self, y):
        """Fitted values ``L' y`` at the design points."""
        return self.entries.T @ np.asarray(y, dtype=float)


def _windows(x, points, kernel, h):
    """Column indices of each evaluation point's kernel window, padded to a rectangle.

    For finite-support kernels the window is a contiguous run of the sorted
    design; entries past the end of a window are flagged in ``valid``.
    """
    n = x.size
    order = np.argsort(x, kind="stable")
    if not kernel.finite_support:
        cols = np.broadcast_to(order, (points.size, n))
        return cols, np.ones(cols.shape, dtype=bool)
    xs = x[order]
    reach = h * kernel.support * (1.0 + 1e-9)
    lo = np.searchsorted(xs, points - reach, side="left")
    hi = np.searchsorted(xs, points + reach, side="right")
    width = max(int((hi - lo).max()), 1)
    pos = lo[:, None] + np.arange(width)
    valid = pos < hi[:, None]
    return order[np.minimum(pos, n - 1)], valid


def _banded_weights(x, points, degree, kernel, h):
    """Local polynomial weights in banded form ``(cols, weights)``.

    Row ``i`` holds the weights for ``points[i]`` on the observations
    ``x[cols[i]]``, sorted by ``x``. Raises BandwidthTooSmallError carrying the
    row index of the first ill-posed evaluation point.
    """
    cols, valid = _windows(x, points, kernel, h)
    u = (x[cols] - points[:, None]) / h
    w = np.where(valid, kernel(u), 0.0)
    active = w > 0
    # positive weights form a contiguous, x-sorted run in every row
    fresh = active.copy()
    fresh[:, 1:] &= ~active[:, :-1] | (u[:, 1:] != u[:, :-1])
    n_distinct = fresh.sum(axis=1)
    short = np.flatnonzero(n_distinct < degree + 1)
    if short.size:
        i = int(short[0])
        raise BandwidthTooSmallError(
            f"fewer than {degree + 1} distinct observations inside the kernel window "
            f"at evaluation point {points[i]:.6g}",
            index=i, eval_point=float(points[i]), bandwidth=float(h))

    if degree == 0:
        return cols, w / w.sum(axis=1, keepdims=True)

    # Design columns are powers of (x_j - point) / h; scaling by h leaves the
    # intercept row unchanged and keeps the moment matrix well conditioned.
    powers = [np.ones_like(u), u]
    for _ in range(2, 2 * degree + 1):
        powers.append(powers[-1] * u)
    moments = np.stack([(w * powers[k]).sum(axis=1) for k in range(2 * degree + 1)], axis=1)
    idx = np.add.outer(np.arange(degree + 1), np.arange(degree + 1))
    S = moments[:, idx]
    cond = np.linalg.cond(S)
    bad = np.flatnonzero(~(cond <= COND_LIMIT))
    if bad.size:
        i = int(bad[0])
        raise BandwidthTooSmallError(
            f"local design ill-conditioned (cond={cond[i]:.3g}) at evaluation point {points[i]:.6g}",
            index=i, eval_point=float(points[i]), bandwidth=float(h))
    e1 = np.zeros((len(points), degree + 1))
    e1[:, 0] = 1.0
    a = np.linalg.solve(S, e1[..., None])[..., 0]
    poly = a[:, 0:1] * powers[0]
    for k in range(1, degree + 1):
        poly = poly + a[:, k:k + 1] * powers[k]
    return cols, poly * w


def _weight_rows(x, points, degree, kernel, h):
    """Dense ``(len(points), n)`` weight rows."""
    cols, w = _banded_weights(x, points, degree, kernel, h)
    out = np.zeros((points.size, x.size))
    rows = np.broadcast_to(np.arange(points.size)[:, None], cols.shape)
    keep = w != 0
    out[rows[keep], cols[keep]] = w[keep]
    return out


def smooth_at_design(x, values, config):
    """Fitted values ``L' v`` for each column of ``values`` without forming ``L``."""
    cols, w = _banded_weights(x, x, config.degree, config.kernel, config.bandwidth)
    v = np.asarray(values, dtype=float)
    return np.einsum("ij,ij...->i...", w, v[cols])


def locpoly_weights(data_x, eval_point, config):
    """Local polynomial weights ``l_j(eval_point)`` for the design ``data_x``.

    The estimate at ``eval_point`` is ``sum_j l_j y_j``; the weights are the
    first row of ``(X'WX)^{-1} X'W`` with ``X`` the design in powers of
    ``x_j - eval_point``.
    """
    x = np.asarray(data_x, dtype=float)
    return _weight_rows(x, np.array([float(eval_point)]), config.degree,
                        config.kernel, config.bandwidth)[0]


def smoother_matrix(data, config):
    """Build the ``n x n`` weight matrix, column ``i`` being the weights at ``x_i``.

    All observations enter every local fit, whichever side of the cutoff they lie on.
    """
    rows = _weight_rows(data.x, data.x, config.degree, config.kernel, config.bandwidth)
    return SmootherMatrix(np.ascontiguousarray(rows.T), config)


def lpe_two_sided(data, kernel, h):
    """Two-sided local linear estimate of the jump at the cutoff.

    Separate local linear fits at ``c`` on ``{x < c}`` and ``{x >= c}``;
    returns ``intercept_above - intercept_below``.
    """
    kernel = get_kernel(kernel)
    c = np.array([data.cutoff])
    est = {}
    for side, mask in (("below", data.x < data.cutoff), ("above", data.x >= data.cutoff)):
        xs = data.x[mask]
        try:
            w = _weight_rows(xs, c, 1, kernel, h)[0]
        except BandwidthTooSmallError as exc:
            raise SparsityError(f"not enough data {side} the cutoff within h={h:.6g}",
                                side=side, bandwidth=float(h)) from exc
        est[side] = float(w @ data.y[mask])
    return est["above"] - est["below"]
