import warnings

import numpy as np
import pytest

from densewarp.errors import ConfigurationError, DomainError
from densewarp.estimator import FitConfig, RegressionData, fit
from densewarp.grid_density import Grid
from densewarp.inference import PointwiseCI, ci_for_beta, ci_for_w, sandwich_variance
from densewarp.simulation import SimConfig, simulate_dataset
from densewarp.warping import act, weight_to_warp

from conftest import beta_pdf

G = Grid(501)


@pytest.fixture(scope="module")
def noisy_fit():
    _, data = simulate_dataset(SimConfig(n=60, grid_points=501), np.random.default_rng(8))
    return data, fit(data, FitConfig(), lam=0.0)


def exact_data(n=8):
    truth = weight_to_warp(np.full(G.n_points, 1.5), G)
    rng = np.random.default_rng(0)
    fs = [beta_pdf(G, 2 + rng.uniform(-0.5, 0.5), 5 + rng.uniform(-0.5, 0.5)) for _ in range(n)]
    return RegressionData.from_lists(fs, [act(f, truth) for f in fs])


def test_zero_residuals_give_zero_variance():
    result = fit(exact_data(), lam=0.0)
    # outcomes equal to the fitted predictions, so every residual vanishes
    fs = [f for f, _ in exact_data().pairs]
    data = RegressionData.from_lists(fs, [act(f, result.beta_hat) for f in fs])
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        var = sandwich_variance(result, data)
    assert np.max(var) < 1e-10


def test_doubling_the_data_halves_the_variance(noisy_fit):
    data, result = noisy_fit
    doubled = RegressionData(data.pairs + data.pairs)
    v1 = sandwich_variance(result, data)
    v2 = sandwich_variance(result, doubled)
    np.testing.assert_allclose(v2, v1 / 2, rtol=1e-8)


def test_variance_positive_on_interior(noisy_fit):
    data, result = noisy_fit
    var = sandwich_variance(result, data)
    assert np.all(var >= 0)
    assert np.all(var[1:-1] > 0)


def test_bump_variance_is_available(noisy_fit):
    data, result = noisy_fit
    var = sandwich_variance(result, data, method="bump")
    assert var.shape == (G.n_points,) and np.all(var >= 0)
    with pytest.raises(ConfigurationError):
        sandwich_variance(result, data, method="jackknife")


def test_needs_two_pairs():
    data = exact_data(1)
    result = fit(data, lam=0.0)
    with pytest.raises(ConfigurationError):
        sandwich_variance(result, data)


def test_degenerate_band_collapses(noisy_fit):
    data, result = noisy_fit
    band = ci_for_w(result, data, variance=np.zeros(G.n_points))
    np.testing.assert_array_equal(band.lower, band.upper)
    beta_band = ci_for_beta(result, data, w_band=band)
    np.testing.assert_allclose(beta_band.lower, result.beta_hat.beta_values, atol=1e-15)
    np.testing.assert_allclose(beta_band.upper, result.beta_hat.beta_values, atol=1e-15)


def test_band_nesting_and_level_monotonicity(noisy_fit):
    data, result = noisy_fit
    var = sandwich_variance(result, data)
    widths = []
    for level in (0.8, 0.9, 0.95, 0.99):
        band = ci_for_w(result, data, level, variance=var)
        widths.append(band.width)
    for narrow, wide in zip(widths, widths[1:]):
        assert np.all(wide >= narrow)
    b90 = ci_for_w(result, data, 0.90, variance=var)
    b95 = ci_for_w(result, data, 0.95, variance=var)
    assert np.all(b95.lower <= b90.lower) and np.all(b95.upper >= b90.upper)
    with pytest.raises(DomainError):
        ci_for_w(result, data, 1.0, variance=var)


def test_width_scales_like_inverse_root_n():
    _, small = simulate_dataset(SimConfig(n=100, grid_points=501), np.random.default_rng(1))
    _, extra = simulate_dataset(SimConfig(n=100, grid_points=501), np.random.default_rng(2))
    large = RegressionData(small.pairs + extra.pairs)
    w_small = ci_for_w(fit(small, lam=0.0), small).width
    w_large = ci_for_w(fit(large, lam=0.0), large).width
    ratio = np.median(w_large / w_small)
    assert ratio == pytest.approx(1 / np.sqrt(2), rel=0.10)


def test_identity_data_band_covers_zero():
    data, _ = RegressionData.from_lists([beta_pdf(G, 2, 5)], [beta_pdf(G, 2, 5)]), None
    rng = np.random.default_rng(3)
    fs = [beta_pdf(G, 2 + rng.uniform(-0.5, 0.5), 5 + rng.uniform(-0.5, 0.5)) for _ in range(10)]
    data = RegressionData.from_lists(fs, fs)
    result = fit(data, lam=0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        band = ci_for_w(result, data)
    assert np.all(band.lower <= 1e-8) and np.all(band.upper >= -1e-8)


def test_beta_band_is_a_pair_of_warps(noisy_fit):
    data, result = noisy_fit
    band = ci_for_beta(result, data)
    for edge in (band.lower, band.upper):
        assert edge[0] == 0.0 and edge[-1] == 1.0
        assert np.all(np.diff(edge) > 0)
    assert np.all(band.lower <= band.estimate) and np.all(band.estimate <= band.upper)


def test_pointwise_ci_validation():
    x = np.zeros(G.n_points)
    with pytest.raises(DomainError):
        PointwiseCI(G, x, x + 1, x + 2)
    with pytest.raises(DomainError):
        PointwiseCI(G, x, x, x, level=1.5)
