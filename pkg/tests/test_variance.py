from dataclasses import replace
from statistics import NormalDist
from types import SimpleNamespace

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from plrd.density import density_at_cutoff
from plrd.estimate import deletion_refit, ple_estimate
from plrd.errors import DeletionInfeasibleError, DomainError, LeverageDegenerateError
from plrd.kernels import kernel_functionals
from plrd.ple import ple_fit
from plrd.simulation import dgp_sample
from plrd.smoothing import LocPolyConfig, RdDataset
from plrd.variance import (METHODS, confidence_interval, deletion_estimates, estimate_variance,
                           nn_residual_variances,
                           variance_delete_observation, variance_dpi, variance_hinkley,
                           variance_ple_wu, variance_porter_plugin)

CONFIG = LocPolyConfig(1, "epanechnikov", 0.6)


def noisy(seed, n):
    rng = np.random.default_rng(seed)
    x = np.sort(rng.uniform(-1, 1, n))
    x[0], x[-1] = -0.95, 0.95
    x[n // 2] = 0.02
    y = 0.5 * x - x ** 2 + 0.1 * (x >= 0) + 0.1 * rng.standard_normal(n)
    return RdDataset(x, y, 0.0)


def residual_pair_jackknife(fit):
    d, y = fit.d_resid, fit.y_resid
    total = 0.0
    for i in range(d.size):
        keep = np.arange(d.size) != i
        tau_i = d[keep] @ y[keep] / (d[keep] @ d[keep])
        total += (1 - fit.leverage[i]) * (tau_i - fit.tau_hat) ** 2
    return total


@pytest.mark.parametrize("seed", range(5))
def test_wu_closed_form_equals_jackknife(seed):
    fit = ple_fit(noisy(seed, 6 + seed), LocPolyConfig(1, "epanechnikov", 1.5))
    assert variance_ple_wu(fit).value == pytest.approx(residual_pair_jackknife(fit), rel=1e-10)


def test_wu_zero_residuals(rng):
    x = rng.uniform(-1, 1, 30)
    x[:2] = [-0.5, 0.5]
    fit = ple_fit(RdDataset(x, 1 + 2 * x + 0.1 * (x >= 0), 0.0), CONFIG)
    assert variance_ple_wu(fit).value == pytest.approx(0.0, abs=1e-25)
    assert variance_hinkley(fit).value == pytest.approx(0.0, abs=1e-25)


def test_wu_leverage_degenerate():
    fit = ple_fit(noisy(1, 20), CONFIG)
    lev = np.zeros(fit.n)
    lev[3] = 1.0
    with pytest.raises(LeverageDegenerateError) as info:
        variance_ple_wu(replace(fit, leverage=lev))
    assert info.value.details["index"] == 3


def test_hinkley_equals_wu_with_equal_leverage():
    fit = ple_fit(noisy(2, 12), CONFIG)
    n = fit.n
    d = np.where(np.arange(n) % 2, 0.3, -0.3)
    balanced = replace(fit, d_resid=d, gram=float(d @ d), leverage=d ** 2 / (d @ d))
    assert variance_hinkley(balanced).value == pytest.approx(variance_ple_wu(balanced).value,
                                                             rel=1e-12)


def test_hinkley_direct_formula():
    fit = ple_fit(noisy(3, 10), LocPolyConfig(1, "epanechnikov", 1.2))
    n = fit.n
    G = fit.d_resid
    inv = 1.0 / (G @ G)
    direct = inv * np.sum(fit.r ** 2 / (1 - 1 / n) * G ** 2) * inv
    assert variance_hinkley(fit).value == pytest.approx(direct, rel=1e-12)


def test_delete_observation_noiseless(rng):
    x = rng.uniform(-1, 1, 25)
    x[:2] = [-0.5, 0.5]
    data = RdDataset(x, 0.3 - 1.1 * x + 0.1 * (x >= 0), 0.0)
    fit = ple_fit(data, CONFIG)
    for flavor in ("wu", "hinkley"):
        assert variance_delete_observation(data, CONFIG, fit, flavor).value == pytest.approx(
            0.0, abs=1e-10)


def test_delete_observation_loop_oracle():
    data = noisy(4, 12)
    config = LocPolyConfig(1, "epanechnikov", 1.2)
    fit = ple_fit(data, config)
    n = data.n
    taus = []
    for i in range(n):
        keep = np.arange(n) != i
        taus.append(ple_fit(RdDataset(data.x[keep], data.y[keep], 0.0), config).tau_hat)
    diff = np.array(taus) - fit.tau_hat
    w = fit.leverage
    wu = np.sum((1 - w) * diff ** 2)
    hinkley = np.sum((n * (1 - w) * diff) ** 2) / (n * (n - 1))
    assert variance_delete_observation(data, config, fit, "wu").value == pytest.approx(wu, rel=1e-12)
    assert variance_delete_observation(data, config, fit, "hinkley").value == pytest.approx(
        hinkley, rel=1e-12)


def test_delete_observation_infeasible():
    x = np.array([-1.0, -0.5, -0.05, 0.05, 0.5, 1.0])
    data = RdDataset(x, np.arange(6.0), 0.0)
    config = LocPolyConfig(1, "epanechnikov", 0.55)
    fit = ple_fit(data, config)
    with pytest.raises(DeletionInfeasibleError) as info:
        variance_delete_observation(data, config, fit)
    assert "index" in info.value.details


@pytest.mark.parametrize("rule", ["sm", "ik"])
def test_deletion_refit_reruns_rule(rule):
    data = dgp_sample(1, 40, 11)
    taus = deletion_estimates(data, None, deletion_refit(rule))
    for i in (0, 17, 39):
        keep = np.arange(data.n) != i
        sub = RdDataset(data.x[keep], data.y[keep], 0.0)
        assert taus[i] == ple_estimate(sub, bandwidth=rule).tau_hat


def test_deletion_refit_fixed_matches_reuse():
    data = noisy(4, 30)
    config = LocPolyConfig(1, "epanechnikov", 1.2)
    fit = ple_fit(data, config)
    reuse = variance_delete_observation(data, config, fit, "wu").value
    refit = variance_delete_observation(data, config, fit, "wu", deletion_refit(1.2)).value
    assert refit == pytest.approx(reuse, rel=1e-12)


def test_deletion_precomputed():
    data = noisy(4, 12)
    fit = ple_fit(data, CONFIG)
    taus = fit.tau_hat + np.arange(12.0) / 100
    got = variance_delete_observation(data, CONFIG, fit, "wu", taus=taus).value
    assert got == pytest.approx(np.sum((1 - fit.leverage) * (np.arange(12.0) / 100) ** 2))


def test_ple_estimate_deletion_uses_rule():
    data = dgp_sample(1, 40, 11)
    res = ple_estimate(data, variance="wu_orig")
    taus = deletion_estimates(data, None, deletion_refit("sm"))
    expected = np.sum((1 - res.fit.leverage) * (taus - res.tau_hat) ** 2)
    assert res.variance.value == pytest.approx(expected, rel=1e-12)


def test_delete_observation_bad_flavor():
    data = noisy(5, 12)
    fit = ple_fit(data, CONFIG)
    with pytest.raises(DomainError):
        variance_delete_observation(data, CONFIG, fit, "efron")


def _porter(n, h, s2=0.1295 ** 2, f=0.5):
    fit = SimpleNamespace(n=n, h=h, kernel="epanechnikov")
    dens = SimpleNamespace(f_c=f, floored=False)
    return variance_porter_plugin(fit, dens, s2, s2).value


def test_porter_hand_evaluation():
    c = kernel_functionals("epanechnikov").porter_cp1
    assert _porter(140, 0.2) == pytest.approx(c * 2 * 0.1295 ** 2 / (4 * 0.5 * 140 * 0.2),
                                              rel=1e-14)
    assert _porter(140, 0.2) == pytest.approx(14.218 * 0.0335405 / 56.0, rel=1e-3)


@given(n=st.integers(2, 10 ** 6), h=st.floats(1e-3, 10))
def test_porter_homogeneity(n, h):
    assert _porter(2 * n, h) == pytest.approx(_porter(n, h) / 2, rel=1e-14)
    assert _porter(n, 2 * h) == pytest.approx(_porter(n, h) / 2, rel=1e-14)


def test_nn_residual_variance_oracle():
    data = noisy(6, 40)
    tau = 0.07
    z = data.y - tau * data.d
    out = nn_residual_variances(data, tau, 3)
    for i in range(data.n):
        dist = np.abs(data.x - data.x[i])
        dist[i] = np.inf
        # stable sort on (distance, x) breaks ties toward the lower side
        order = np.lexsort((data.x, dist))[:3]
        assert out[i] == pytest.approx(0.75 * (z[i] - z[order].mean()) ** 2, rel=1e-12)


def test_dpi_constant_responses():
    x = np.linspace(-1, 1, 30)
    data = RdDataset(x, np.full(30, 2.5), 0.0)
    fit = ple_fit(data, CONFIG)
    assert fit.tau_hat == pytest.approx(0.0, abs=1e-12)
    assert variance_dpi(data, replace(fit, tau_hat=0.0)).value == pytest.approx(0.0, abs=1e-25)


def test_dpi_matches_explicit_matrix():
    data = noisy(7, 30)
    fit = ple_fit(data, CONFIG)
    L = fit.smoother.entries
    I = np.eye(data.n)
    G = (I - L.T) @ data.d
    M = G @ (I - L.T) / (G @ G)
    s2 = nn_residual_variances(data, fit.tau_hat)
    assert variance_dpi(data, fit).value == pytest.approx(M @ np.diag(s2) @ M, rel=1e-10)
    np.testing.assert_allclose(M @ np.ones(data.n), 0.0, atol=1e-12)


def test_dpi_near_ple_wu_on_average():
    ratios = []
    for seed in range(40):
        data = dgp_sample(4, 400, seed)
        fit = ple_fit(data, LocPolyConfig(1, "epanechnikov", 0.3))
        ratios.append(variance_dpi(data, fit).value / variance_ple_wu(fit).value)
    assert np.mean(ratios) == pytest.approx(1.0, rel=0.3)


@pytest.mark.parametrize("method", METHODS)
def test_location_and_scale(method):
    data = noisy(8, 24)
    config = LocPolyConfig(1, "epanechnikov", 0.9)
    base = estimate_variance(method, data, config, ple_fit(data, config)).value
    shifted = data.with_y(data.y + 3.0)
    v = estimate_variance(method, shifted, config, ple_fit(shifted, config)).value
    assert v == pytest.approx(base, rel=1e-8)
    scaled = data.with_y(data.y * 2.5)
    v = estimate_variance(method, scaled, config, ple_fit(scaled, config)).value
    assert v == pytest.approx(base * 2.5 ** 2, rel=1e-8)
    assert base >= 0


def test_unknown_method():
    data = noisy(9, 20)
    with pytest.raises(DomainError):
        estimate_variance("bootstrap", data, CONFIG, ple_fit(data, CONFIG))


def test_interval_values():
    ci = confidence_interval(0.0, 1.0, 0.05)
    assert ci.lower == pytest.approx(-1.959964, abs=1e-6)
    assert ci.upper == pytest.approx(1.959964, abs=1e-6)
    zero = confidence_interval(0.3, 0.0, 0.1)
    assert zero.lower == zero.upper == 0.3


@given(tau=st.floats(-10, 10), se=st.floats(0, 10), alpha=st.floats(0.001, 0.999))
def test_interval_invariants(tau, se, alpha):
    ci = confidence_interval(tau, se, alpha)
    assert ci.lower <= ci.center <= ci.upper
    assert ci.width == pytest.approx(2 * NormalDist().inv_cdf(1 - alpha / 2) * se, abs=1e-12)


@pytest.mark.parametrize("alpha", [0.0, 1.0, -0.1, 2.0])
def test_interval_bad_alpha(alpha):
    with pytest.raises(DomainError):
        confidence_interval(0.0, 1.0, alpha)
