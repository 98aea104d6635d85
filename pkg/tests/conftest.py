import numpy as np
import pytest
from scipy import stats

from densewarp.grid_density import Grid, normalize
from densewarp.warping import basis_matrix, weight_to_warp


@pytest.fixture(scope="session")
def grid():
    return Grid(1001)


@pytest.fixture(scope="session")
def small_grid():
    return Grid(201)


def beta_pdf(grid, a, b):
    return normalize(stats.beta(a, b).pdf(grid.points), grid)


def uniform(grid):
    return normalize(np.ones(grid.n_points), grid)


def random_density(grid, rng):
    # shapes >= 3 keep f'' bounded, so interpolation and trapezoid errors stay O(h^2)
    a, b = rng.uniform(3.0, 6.0, size=2)
    return beta_pdf(grid, a, b)


def random_warp(grid, rng, scale=1.0):
    """Warp generated by a weight in the default basis with N(0, scale^2) coefficients."""
    return weight_to_warp(basis_matrix(grid, 4) @ rng.normal(0.0, scale, 5), grid)


# one summary line per acceptance criterion, printed after the run
ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, passed: bool, detail: str) -> bool:
    line = f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)
    return passed


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
