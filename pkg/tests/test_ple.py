import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plrd.errors import (BandwidthTooSmallError, DatasetUnusableError, DegenerateContrastError,
                         DegenerateInputError, PlrdError)
from plrd.estimate import parse_bandwidth_rule, ple_estimate
from plrd.ple import BandwidthFloor, apply_floor, min_feasible_bandwidth, ple_fit, ple_objective
from plrd.simulation import dgp_sample
from plrd.smoothing import LocPolyConfig, RdDataset, smoother_matrix


def grid_argmin(data, config, center, half_width, step=1e-6):
    """Minimise the least-squares objective over successively refined tau grids."""
    lo, hi = center - half_width, center + half_width
    width = hi - lo
    while True:
        grid = np.linspace(lo, hi, 201)
        best = grid[np.argmin(ple_objective(data, config, grid))]
        width = grid[1] - grid[0]
        if width <= step:
            return best, width
        lo, hi = best - 2 * width, best + 2 * width


def random_small(seed, n):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-1, 1, n))
    x[0], x[-1] = -1.0, 1.0
    x[n // 2] = 0.01
    y = np.sin(2 * x) + 0.3 * (x >= 0) + 0.2 * rng.standard_normal(n)
    return RdDataset(x, y, 0.0)


@pytest.mark.parametrize("degree", [0, 1, 2])
def test_exact_on_polynomial_plus_jump(rng, degree):
    x = rng.uniform(-1, 1, 50)
    x[:2] = [-0.5, 0.5]
    coefs = [0.3, 1.2, -0.8][:degree + 1]
    y = np.polyval(coefs[::-1], x) + 0.1 * (x >= 0)
    data = RdDataset(x, y, 0.0)
    fit = ple_fit(data, LocPolyConfig(degree, "epanechnikov", 0.6))
    assert fit.tau_hat == pytest.approx(0.1, abs=1e-8)


def test_closed_form_is_robinson_slope():
    data = random_small(4, 30)
    fit = ple_fit(data, LocPolyConfig(1, "epanechnikov", 0.5))
    slope = np.linalg.lstsq(fit.d_resid[:, None], fit.y_resid, rcond=None)[0][0]
    assert fit.tau_hat == pytest.approx(slope, rel=1e-12)
    L = smoother_matrix(data, LocPolyConfig(1, "epanechnikov", 0.5)).entries
    I = np.eye(data.n)
    G = ((I - L.T) @ data.d)[:, None]
    tau = np.linalg.solve(G.T @ G, G.T @ (I - L.T) @ data.y)
    assert fit.tau_hat == pytest.approx(tau.item(), rel=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_matches_grid_minimiser(seed):
    data = random_small(seed, 20 + seed)
    config = LocPolyConfig(1, "epanechnikov", 0.7)
    fit = ple_fit(data, config)
    best, step = grid_argmin(data, config, 0.0, 5.0)
    assert abs(best - fit.tau_hat) <= step


def test_grid_minimiser_dgp4():
    data = dgp_sample(4, 140, 2024)
    result = ple_estimate(data, bandwidth="sm")
    config = LocPolyConfig(1, "epanechnikov", result.h_used)
    best, step = grid_argmin(data, config, 0.0, 2.0)
    assert abs(best - result.tau_hat) <= step


def test_fit_invariants():
    data = random_small(9, 40)
    fit = ple_fit(data, LocPolyConfig(1, "triangular", 0.5))
    assert fit.leverage.sum() == pytest.approx(1.0, abs=1e-12)
    assert np.all((fit.leverage >= 0) & (fit.leverage <= 1))
    assert fit.gram > 0
    assert fit.tau_hat == pytest.approx(fit.d_resid @ fit.y_resid / fit.gram, rel=1e-14)
    np.testing.assert_allclose(fit.r, fit.y_resid - fit.d_resid * fit.tau_hat)


@settings(deadline=None, max_examples=30)
@given(seed=st.integers(0, 10 ** 6), k=st.floats(-100, 100), s=st.floats(0.01, 100))
def test_location_scale(seed, k, s):
    data = random_small(seed, 25)
    config = LocPolyConfig(1, "epanechnikov", 0.6)
    base = ple_fit(data, config).tau_hat
    assert ple_fit(data.with_y(data.y + k), config).tau_hat == pytest.approx(base, abs=1e-9)
    assert ple_fit(data.with_y(data.y * s), config).tau_hat == pytest.approx(base * s, rel=1e-9,
                                                                               abs=1e-12)


def test_degenerate_contrast():
    # local constant smoothing with tiny windows reproduces D exactly
    x = np.array([-1.0, -0.9, -0.8, 0.8, 0.9, 1.0])
    data = RdDataset(x, np.zeros(6), 0.0)
    with pytest.raises(DegenerateContrastError):
        ple_fit(data, LocPolyConfig(0, "epanechnikov", 0.15))


def test_floor_equally_spaced():
    g = 0.05
    x = np.arange(-20, 20) * g + g / 2
    data = RdDataset(x, np.zeros_like(x), 0.0)
    floor = min_feasible_bandwidth(data, 0, "epanechnikov")
    assert 0 < floor.h_min <= 2 * g
    assert not floor.binding


def _brute_floor(data, degree, grid):
    for h in grid:
        try:
            ple_fit(data, LocPolyConfig(degree, "epanechnikov", h))
            return h
        except PlrdError:
            continue
    return None


def test_floor_isolated_point():
    x = np.array([-0.3, -0.2, -0.1, 0.1, 2.0])
    data = RdDataset(x, np.arange(5.0), 0.0)
    grid = np.arange(1, 40001) * 1e-4
    brute = _brute_floor(data, 1, grid)
    floor = min_feasible_bandwidth(data, 1, "epanechnikov")
    # the isolated point needs its nearest neighbour 1.9 away inside its window
    assert brute - 1e-4 <= floor.h_min <= brute
    assert floor.h_min == pytest.approx(1.9, abs=1e-3)


@pytest.mark.parametrize("seed", range(4))
@pytest.mark.parametrize("degree", [0, 1, 2])
def test_floor_matches_scan(seed, degree):
    rng = np.random.default_rng(seed)
    x = rng.uniform(-1, 1, 15)
    x[:2] = [-0.05, 0.05]
    data = RdDataset(x, rng.standard_normal(15), 0.0)
    floor = min_feasible_bandwidth(data, degree, "epanechnikov")
    ple_fit(data, LocPolyConfig(degree, "epanechnikov", floor.h_min))
    with pytest.raises(PlrdError):
        ple_fit(data, LocPolyConfig(degree, "epanechnikov", floor.h_min * (1 - 1e-6)))


def test_floor_all_identical():
    with pytest.raises(DegenerateInputError):
        RdDataset(np.zeros(5), np.zeros(5), 0.0)
    # all identical on each side: two distinct values cannot support a local quadratic
    data = RdDataset(np.r_[np.zeros(5) - 1, np.ones(5)], np.zeros(10), 0.0)
    with pytest.raises(DatasetUnusableError):
        min_feasible_bandwidth(data, 2, "epanechnikov")


def test_apply_floor():
    floor = BandwidthFloor(0.2)
    assert apply_floor(0.5, floor) == (0.5, floor)
    h, f = apply_floor(0.1, floor)
    assert h == 0.2 and f.binding


def test_estimate_raises_fixed_bandwidth_to_floor():
    data = dgp_sample(3, 140, 5)
    result = ple_estimate(data, bandwidth="fixed:0.001")
    assert result.floor.binding
    assert result.h_used == result.floor.h_min > 0.001
    assert result.h_requested == 0.001


def test_estimate_records_diagnostics():
    data = dgp_sample(1, 200, 6)
    result = ple_estimate(data, bandwidth="sm")
    assert result.rule == "sm"
    assert result.diagnostics.h_sm == result.h_used
    assert result.ci.lower < result.tau_hat < result.ci.upper


def test_estimate_errors_carry_stage():
    x = np.array([-1.0, -0.9, 0.9, 1.0])
    data = RdDataset(x, np.zeros(4), 0.0)
    with pytest.raises(PlrdError) as info:
        ple_estimate(data, degree=2)
    assert info.value.stage is not None


@pytest.mark.parametrize("rule,expected", [
    ("sm", ("sm", None)), ("IK", ("ik", None)), ("fixed:0.25", ("fixed", 0.25)), (0.3, ("fixed", 0.3)),
])
def test_parse_rule(rule, expected):
    assert parse_bandwidth_rule(rule) == expected


@pytest.mark.parametrize("rule", ["cv", "fixed:-1", "fixed:abc"])
def test_parse_rule_rejects(rule):
    with pytest.raises(ValueError):
        parse_bandwidth_rule(rule)
