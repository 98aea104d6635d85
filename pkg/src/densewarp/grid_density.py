"""Densities on a uniform grid over [0, 1].

Everything downstream works on one shared :class:`Grid`; integrals are
composite trapezoid sums over it.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .errors import DegenerateInputError, DomainError, StructuralError

DEFAULT_GRID_POINTS = 1001
# applied before any square root of a density
DENSITY_FLOOR = 1e-10


@dataclass(frozen=True)
class Grid:
    """Uniform grid on [0, 1] with both endpoints included."""

    n_points: int = DEFAULT_GRID_POINTS

    def __post_init__(self):
        if int(self.n_points) != self.n_points or self.n_points < 2:
            raise StructuralError(f"n_points must be an integer >= 2; got {self.n_points}")

    @cached_property
    def points(self) -> np.ndarray:
        pts = np.linspace(0.0, 1.0, self.n_points)
        pts.flags.writeable = False
        return pts

    @property
    def h(self) -> float:
        return 1.0 / (self.n_points - 1)

    @cached_property
    def weights(self) -> np.ndarray:
        """Trapezoid quadrature weights, so ``weights @ f`` approximates the integral."""
        w = np.full(self.n_points, self.h)
        w[0] = w[-1] = 0.5 * self.h
        w.flags.writeable = False
        return w

    def __len__(self):
        return self.n_points


def _as_values(grid: Grid, values) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.shape[-1] != grid.n_points:
        raise StructuralError(
            f"values have length {arr.shape[-1]} but the grid has {grid.n_points} points"
        )
    return arr


def integrate(d, grid: Grid | None = None):
    """Composite trapezoid integral over [0, 1].

    ``d`` is either a :class:`GridDensity` (or anything with ``grid`` and
    ``values``) or a raw array together with ``grid``. Arrays with more than
    one dimension are integrated along the last axis.
    """
    if grid is None:
        grid, values = d.grid, d.values
    else:
        values = d
    values = _as_values(grid, values)
    return values @ grid.weights


def cumulative_integral(values: np.ndarray, grid: Grid) -> np.ndarray:
    """Running trapezoid integral from 0, same length as ``values`` (starts at 0)."""
    values = np.asarray(values, dtype=float)
    out = np.zeros_like(values)
    np.cumsum(0.5 * grid.h * (values[..., 1:] + values[..., :-1]), axis=-1, out=out[..., 1:])
    return out


@dataclass(frozen=True, eq=False)
class GridDensity:
    """A probability density sampled on ``grid``."""

    grid: Grid
    values: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        values = _as_values(self.grid, self.values).copy()
        if values.ndim != 1:
            raise StructuralError("GridDensity values must be one-dimensional")
        if self.check:
            if not np.all(np.isfinite(values)):
                raise DomainError("density values must be finite")
            if np.any(values < 0):
                raise DomainError("density values must be non-negative")
            total = integrate(values, self.grid)
            if abs(total - 1.0) > 1e-6:
                raise DomainError(f"density integrates to {total:.8g}, expected 1")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    def __call__(self, query):
        return interp_density(self, query)

    def floored(self) -> np.ndarray:
        return np.maximum(self.values, DENSITY_FLOOR)


@dataclass(frozen=True)
class SampleSet:
    """Raw observations for one unit and one variable."""

    unit_id: str
    variable_tag: str
    samples: np.ndarray

    def __post_init__(self):
        if self.variable_tag not in ("predictor", "outcome"):
            raise StructuralError(f"variable_tag must be 'predictor' or 'outcome'; got {self.variable_tag!r}")
        samples = np.asarray(self.samples, dtype=float).ravel()
        if samples.size == 0:
            raise DegenerateInputError(f"unit {self.unit_id!r} has no samples")
        if not np.all(np.isfinite(samples)):
            raise DomainError(f"unit {self.unit_id!r} has non-finite samples")
        object.__setattr__(self, "samples", samples)


def normalize(values, grid: Grid) -> GridDensity:
    """Scale a non-negative grid function to unit integral."""
    values = _as_values(grid, values)
    if np.any(values < 0) or not np.all(np.isfinite(values)):
        raise DomainError("normalize needs finite, non-negative values")
    total = integrate(values, grid)
    if not total > 0:
        raise DegenerateInputError("cannot normalize a function with zero integral")
    return GridDensity(grid, values / total)


def silverman_bandwidth(samples: np.ndarray) -> float:
    m = samples.size
    sigma = np.std(samples, ddof=1) if m > 1 else 0.0
    return float(np.clip(1.06 * sigma * m ** (-0.2), 1e-3, 0.5))


def kde(s: SampleSet | np.ndarray, grid: Grid, bandwidth: float | None = None) -> GridDensity:
    """Gaussian kernel density estimate on [0, 1], reflected at both ends.

    Samples must already be rescaled to the unit interval. The default
    bandwidth is Silverman's rule of thumb, clamped to [1e-3, 0.5].
    """
    samples = s.samples if isinstance(s, SampleSet) else np.asarray(s, dtype=float).ravel()
    if np.unique(samples).size < 2:
        raise DegenerateInputError("kde needs at least two distinct sample values")
    if samples.min() < 0 or samples.max() > 1:
        raise DomainError("kde samples must lie in [0, 1]; rescale first")
    if bandwidth is None:
        bandwidth = silverman_bandwidth(samples)
    elif not bandwidth > 0:
        raise DomainError(f"bandwidth must be positive; got {bandwidth}")

    x = grid.points[:, None]
    dens = np.zeros(grid.n_points)
    for mirrored in (samples, -samples, 2.0 - samples):
        z = (x - mirrored[None, :]) / bandwidth
        dens += np.exp(-0.5 * z * z).sum(axis=1)
    return normalize(dens, grid)


def rescale_to_unit(samples) -> tuple[np.ndarray, tuple[float, float]]:
    """Affinely map samples onto [0, 1].

    Returns the rescaled values and ``(shift, scale)`` such that
    ``original = shift + scale * rescaled``.
    """
    x = np.asarray(samples, dtype=float)
    lo, hi = x.min(), x.max()
    if not hi > lo:
        raise DegenerateInputError("cannot rescale constant data")
    scale = hi - lo
    out = (x - lo) / scale
    # guard the endpoints against rounding
    out[x == lo] = 0.0
    out[x == hi] = 1.0
    return out, (float(lo), float(scale))


def interp_density(d: GridDensity, query) -> np.ndarray:
    """Piecewise-linear evaluation of ``d`` at points in [0, 1]."""
    q = np.asarray(query, dtype=float)
    if np.any(q < -1e-12) or np.any(q > 1 + 1e-12) or not np.all(np.isfinite(q)):
        raise DomainError("interp_density query points must lie in [0, 1]")
    return np.interp(q, d.grid.points, d.values)

