import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from densewarp.errors import ConfigurationError, StructuralError
from densewarp.estimator import (
    FitConfig,
    RegressionData,
    cross_validate,
    fit,
    gradient,
    objective,
    predict,
)
from densewarp.grid_density import Grid, integrate
from densewarp.simulation import SimConfig, simulate_dataset
from densewarp.sphere import hellinger
from densewarp.warping import BasisExpansion, WarpingFunction, act, basis_matrix, warp_distance, weight_to_warp

from conftest import beta_pdf, uniform

G = Grid(501)
ALPHA_STAR = BasisExpansion(np.array([0.8, 0.5, -0.4, 0.3, 0.6]))


def jittered_predictors(grid, n, rng):
    return [beta_pdf(grid, 2 + rng.uniform(-0.5, 0.5), 5 + rng.uniform(-0.5, 0.5)) for _ in range(n)]


def noiseless(grid, n, alpha=ALPHA_STAR, seed=0):
    b = weight_to_warp(alpha, grid)
    fs = jittered_predictors(grid, n, np.random.default_rng(seed))
    return RegressionData.from_lists(fs, [act(f, b) for f in fs]), b


def identical(grid, n, seed=0):
    fs = jittered_predictors(grid, n, np.random.default_rng(seed))
    return RegressionData.from_lists(fs, fs)


@pytest.fixture(scope="module")
def noisy():
    _, data = simulate_dataset(SimConfig(n=100, grid_points=501), np.random.default_rng(42))
    return data


def test_regression_data_validation(grid, small_grid):
    f = uniform(grid)
    with pytest.raises(StructuralError):
        RegressionData(())
    with pytest.raises(StructuralError):
        RegressionData.from_lists([f], [uniform(small_grid)])
    with pytest.raises(StructuralError):
        RegressionData.from_lists([f, f], [f])
    data = identical(G, 4)
    assert data.n == 4 and data.subset([0, 2]).n == 2
    assert data.swapped().pairs[1] == (data.pairs[1][1], data.pairs[1][0])


def test_objective_examples():
    data = identical(G, 5)
    assert objective(BasisExpansion.zeros(), data, 0.0) == pytest.approx(0.0, abs=1e-8)
    warped, _ = noiseless(G, 5)
    assert objective(ALPHA_STAR, warped, 0.0) == pytest.approx(0.0, abs=1e-6)
    pair = RegressionData.from_lists([uniform(G)], [beta_pdf(G, 2, 2)])
    assert objective(BasisExpansion.zeros(), pair, 0.0) == pytest.approx(1 - np.sqrt(6) * np.pi / 8, abs=1e-3)


def test_objective_penalty_term():
    data = identical(G, 3)
    alpha = BasisExpansion(np.array([0.3, -0.2, 0.1, 0.5, 0.0]))
    w = basis_matrix(G, 4) @ alpha.coefficients
    diff = objective(alpha, data, 0.01) - objective(alpha, data, 0.0)
    assert diff == pytest.approx(0.01 * integrate(w * w, G), rel=1e-12)


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(-2, 2), min_size=5, max_size=5))
def test_objective_equals_mean_squared_hellinger(coef):
    # the objective skips act's renormalization; the gap is O(h^2), under 1e-6 at 1001 points
    grid = Grid(1001)
    data, _ = noiseless(grid, 4, seed=3)
    data = RegressionData.from_lists([f for f, _ in data.pairs], [beta_pdf(grid, 3, 3)] * 4)
    alpha = BasisExpansion(np.array(coef))
    b = weight_to_warp(alpha, grid)
    mean_h2 = np.mean([hellinger(g, act(f, b)) ** 2 for f, g in data.pairs])
    assert objective(alpha, data, 0.0) == pytest.approx(mean_h2, abs=1e-6)


def test_gradient_vanishes_at_truth():
    data, _ = noiseless(G, 10)
    assert np.linalg.norm(gradient(ALPHA_STAR, data, 0.0)) < 1e-4


def test_gradient_of_penalty_is_analytic():
    data = identical(G, 3)
    lam = 0.05
    alpha = BasisExpansion(np.array([0.2, 0.4, -0.3, 0.1, -0.5]))
    phi = basis_matrix(G, 4)
    w = phi @ alpha.coefficients
    analytic = 2 * lam * (phi * G.weights[:, None]).T @ w
    fd = gradient(alpha, data, lam) - gradient(alpha, data, 0.0)
    np.testing.assert_allclose(fd, analytic, atol=1e-6)


def test_gradient_matches_secant(noisy):
    rng = np.random.default_rng(7)
    for _ in range(5):
        alpha = BasisExpansion(rng.normal(0, 1, 5))
        delta = rng.normal(size=5)
        delta /= np.linalg.norm(delta)
        t = 1e-5
        secant = (objective(alpha.with_coefficients(alpha.coefficients + t * delta), noisy, 1e-4)
                  - objective(alpha.with_coefficients(alpha.coefficients - t * delta), noisy, 1e-4)) / (2 * t)
        directional = gradient(alpha, noisy, 1e-4) @ delta
        assert directional == pytest.approx(secant, rel=1e-4, abs=1e-9)


def test_fit_identity_data():
    result = fit(identical(G, 20), FitConfig(), lam=1e-4)
    assert result.converged
    assert warp_distance(result.beta_hat, WarpingFunction.identity(G)) < 1e-3


def test_fit_recovers_noiseless_warp():
    data, truth = noiseless(G, 50, seed=1)
    result = fit(data, FitConfig(), lam=1e-4)
    assert warp_distance(result.beta_hat, truth) < 0.01
    exact = fit(data, FitConfig(), lam=0.0)
    assert warp_distance(exact.beta_hat, truth) < 1e-3
    for f, g in data.pairs[:5]:
        assert hellinger(g, predict(f, exact)) < 1e-3


def test_fit_trace_and_metadata(noisy):
    result = fit(noisy, FitConfig(seed=9), lam=1e-3)
    trace = np.array(result.objective_trace)
    assert np.all(np.diff(trace) <= 0)
    assert result.lambda_used == 1e-3 and result.seed == 9
    assert result.per_unit_hellinger.shape == (noisy.n,)
    assert result.w_hat.shape == (G.n_points,)


def test_fit_reports_non_convergence(noisy):
    result = fit(noisy, FitConfig(max_iter=1), lam=1e-4)
    assert not result.converged and result.n_iter == 1


def test_fit_single_pair_registers_densities():
    truth = weight_to_warp(np.full(G.n_points, 1.5), G)
    f = beta_pdf(G, 2, 5)
    result = fit(RegressionData.from_lists([f], [act(f, truth)]), lam=0.0)
    assert warp_distance(result.beta_hat, truth) < 0.01


def test_predict_identity_fit():
    result = fit(identical(G, 5), lam=1e-4)
    f = beta_pdf(G, 2, 5)
    np.testing.assert_allclose(predict(f, result).values, f.values, atol=1e-3)


def test_cross_validate_tie_goes_to_largest_lambda():
    lam, scores = cross_validate(identical(G, 10), FitConfig(lambda_grid=(1e-4, 1e-3, 1e-2)))
    assert lam == 1e-2
    assert max(scores.values()) < 1e-12


def test_cross_validate_noiseless_warp():
    data, _ = noiseless(G, 20, seed=2)
    lam, scores = cross_validate(data, FitConfig(lambda_grid=(1e-4, 1e-3, 1e-2)))
    assert scores[lam] <= scores[1e-2] + 1e-6


def test_cross_validate_noisy_selection_range(noisy):
    lam, scores = cross_validate(noisy, FitConfig(lambda_grid=(1e-4, 1e-3, 1e-2)))
    assert 1e-4 <= lam <= 1e-2
    assert set(scores) == {1e-4, 1e-3, 1e-2}


def test_cross_validate_needs_enough_pairs():
    with pytest.raises(ConfigurationError):
        cross_validate(identical(G, 3))


def test_fit_config_validation():
    with pytest.raises(ConfigurationError):
        FitConfig(K=0)
    with pytest.raises(ConfigurationError):
        FitConfig(lam=-1)
    with pytest.raises(ConfigurationError):
        FitConfig(lambda_grid=(0.0,))


def test_simultaneous_prewarping_keeps_the_minimum():
    # pre-warping every f and g by the same mild warp leaves the attainable objective unchanged
    _, data = simulate_dataset(SimConfig(n=30, grid_points=501), np.random.default_rng(5))
    pre = weight_to_warp(basis_matrix(G, 4) @ np.array([0.0, 0.1, -0.1, 0.05, 0.0]), G)
    moved = RegressionData.from_lists([act(f, pre) for f, _ in data.pairs], [act(g, pre) for _, g in data.pairs])
    a = fit(data, lam=0.0)
    b = fit(moved, lam=0.0)
    assert b.objective_trace[-1] == pytest.approx(a.objective_trace[-1], abs=1e-4)
