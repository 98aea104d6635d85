import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from densewarp.errors import DegenerateInputError, DomainError, StructuralError
from densewarp.grid_density import (
    Grid,
    GridDensity,
    SampleSet,
    integrate,
    interp_density,
    kde,
    normalize,
    rescale_to_unit,
)
from densewarp.sphere import hellinger

from conftest import beta_pdf


def test_integrate_constant_is_exact():
    for n in (2, 11, 1001):
        g = Grid(n)
        assert integrate(np.ones(n), g) == pytest.approx(1.0, abs=1e-15)


def test_integrate_linear_on_101_points():
    g = Grid(101)
    assert integrate(g.points, g) == pytest.approx(0.5, abs=1e-14)


def test_integrate_beta25_matches_trapezoid_error_term(grid):
    # Euler-Maclaurin: trapezoid error is -h^2/12 (f'(1) - f'(0)) + O(h^4); f'(0)=30, f'(1)=0
    vals = stats.beta(2, 5).pdf(grid.points)
    expected = 1.0 - grid.h**2 / 12 * 30.0
    assert integrate(vals, grid) == pytest.approx(expected, abs=1e-9)
    assert abs(integrate(vals, grid) - 1.0) < 3e-6


def test_integrate_accepts_density_and_batches(grid):
    d = beta_pdf(grid, 2, 5)
    assert integrate(d) == pytest.approx(1.0)
    stacked = np.stack([d.values, np.ones(grid.n_points)])
    np.testing.assert_allclose(integrate(stacked, grid), [1.0, 1.0])


def test_length_mismatch_is_structural(grid):
    with pytest.raises(StructuralError):
        integrate(np.ones(10), grid)
    with pytest.raises(StructuralError):
        Grid(1)


def test_normalize_examples():
    g = Grid(101)
    np.testing.assert_allclose(normalize(np.full(101, 2.0), g).values, 1.0)
    np.testing.assert_allclose(normalize(g.points, g).values, 2 * g.points, atol=1e-14)
    bump = normalize(np.exp(-50 * (g.points - 0.5) ** 2), g)
    assert integrate(bump) == pytest.approx(1.0, abs=1e-10)


def test_normalize_idempotent(grid):
    once = normalize(np.exp(-3 * grid.points), grid)
    twice = normalize(once.values, grid)
    np.testing.assert_allclose(once.values, twice.values, rtol=1e-14)


def test_normalize_rejects_bad_input(grid):
    with pytest.raises(DegenerateInputError):
        normalize(np.zeros(grid.n_points), grid)
    with pytest.raises(DomainError):
        normalize(-np.ones(grid.n_points), grid)


def test_grid_density_invariants(grid):
    with pytest.raises(DomainError):
        GridDensity(grid, np.full(grid.n_points, 2.0))
    bad = np.ones(grid.n_points)
    bad[3] = -1e-3
    with pytest.raises(DomainError):
        GridDensity(grid, bad)
    d = GridDensity(grid, np.ones(grid.n_points))
    with pytest.raises(ValueError):
        d.values[0] = 5.0


def test_kde_mode_of_concentrated_samples(grid):
    rng = np.random.default_rng(1)
    d = kde(SampleSet("u", "predictor", 0.5 + rng.uniform(-1e-3, 1e-3, 50)), grid)
    assert abs(grid.points[np.argmax(d.values)] - 0.5) <= 0.01
    # unimodal: increases then decreases
    peak = np.argmax(d.values)
    assert np.all(np.diff(d.values[: peak + 1]) >= -1e-12)
    assert np.all(np.diff(d.values[peak:]) <= 1e-12)


def test_kde_uniform_sup_norm(grid):
    rng = np.random.default_rng(2)
    d = kde(rng.uniform(size=10_000), grid)
    assert np.max(np.abs(d.values - 1.0)) < 0.1


def test_kde_beta25_hellinger(grid):
    rng = np.random.default_rng(3)
    d = kde(rng.beta(2, 5, size=10_000), grid)
    assert hellinger(d, beta_pdf(grid, 2, 5)) < 0.05


def test_kde_validation(grid):
    with pytest.raises(DegenerateInputError):
        kde(np.full(5, 0.3), grid)
    with pytest.raises(DomainError):
        kde(np.array([0.1, 1.2]), grid)
    with pytest.raises(DomainError):
        kde(np.array([0.1, 0.2]), grid, bandwidth=0.0)


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=2, max_size=40).filter(lambda v: len(set(v)) >= 2))
def test_kde_integrates_to_one(samples):
    g = Grid(201)
    assert integrate(kde(np.array(samples), g)) == pytest.approx(1.0, abs=1e-6)


def test_rescale_examples():
    out, params = rescale_to_unit([2, 4, 6])
    np.testing.assert_allclose(out, [0, 0.5, 1])
    assert params == (2.0, 4.0)
    out, _ = rescale_to_unit([0.0, 0.3, 1.0])
    np.testing.assert_allclose(out, [0.0, 0.3, 1.0])
    out, _ = rescale_to_unit([-1, 0, 3])
    np.testing.assert_allclose(out, [0, 0.25, 1])
    with pytest.raises(DegenerateInputError):
        rescale_to_unit([1.0, 1.0])


@given(st.lists(st.floats(-1e6, 1e6), min_size=2, max_size=50).filter(lambda v: max(v) - min(v) > 1e-3))
def test_rescale_inverse(values):
    x = np.array(values)
    out, (shift, scale) = rescale_to_unit(x)
    assert out.min() == 0.0 and out.max() == 1.0
    np.testing.assert_allclose(shift + scale * out, x, atol=1e-12 * max(1.0, np.abs(x).max()))


def test_interp_density_examples(grid):
    d = beta_pdf(grid, 2, 5)
    np.testing.assert_array_equal(interp_density(d, grid.points), d.values)
    lin = GridDensity(Grid(11), 2 * Grid(11).points)
    assert interp_density(lin, [0.3])[0] == pytest.approx(0.6, abs=1e-14)
    q = np.random.default_rng(4).uniform(size=200)
    assert np.max(np.abs(d(q) - stats.beta(2, 5).pdf(q))) < 1e-3
    with pytest.raises(DomainError):
        interp_density(d, [1.5])


@given(st.floats(0, 1))
def test_interp_bounded_by_neighbours(x):
    g = Grid(51)
    d = beta_pdf(g, 2, 5)
    j = min(int(x * 50), 49)
    lo, hi = sorted((d.values[j], d.values[j + 1]))
    v = d([x])[0]
    assert lo - 1e-12 <= v <= hi + 1e-12
