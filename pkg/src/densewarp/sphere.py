"""Geometry of half densities on the unit sphere of L2[0, 1].

A density ``f`` maps to ``p = sqrt(f)``, a unit vector. Distances between
densities are computed from the inner product of their half densities (the
Bhattacharyya coefficient), and the sphere's exponential/log maps, geodesics
and parallel transport are available for building tangent-space errors.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DomainError, StructuralError
from .grid_density import (
    DENSITY_FLOOR,
    Grid,
    GridDensity,
    cumulative_integral,
    integrate,
    normalize,
)

SMALL_ANGLE = 1e-12


@dataclass(frozen=True, eq=False)
class HalfDensity:
    """A point on the unit sphere, usually the square root of a density.

    Only the unit norm is enforced: points reached through ``exp_map`` may
    leave the non-negative orthant and are still valid sphere points.
    """

    grid: Grid
    values: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.grid.n_points,):
            raise StructuralError("HalfDensity values do not match the grid")
        if self.check:
            norm2 = integrate(values * values, self.grid)
            if abs(norm2 - 1.0) > 1e-6:
                raise DomainError(f"half density has squared norm {norm2:.8g}, expected 1")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)


@dataclass(frozen=True, eq=False)
class TangentVector:
    """A function orthogonal to ``base``."""

    base: HalfDensity
    values: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        if values.shape != (self.base.grid.n_points,):
            raise StructuralError("TangentVector values do not match the grid")
        if self.check:
            ip = inner(values, self.base.values, self.base.grid)
            if abs(ip) > 1e-6:
                raise DomainError(f"vector is not tangent: <v, p> = {ip:.3g}")
        values.flags.writeable = False
        object.__setattr__(self, "values", values)

    @property
    def grid(self) -> Grid:
        return self.base.grid

    @property
    def norm(self) -> float:
        return l2_norm(self.values, self.grid)


def inner(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(integrate(a * b, grid))


def l2_norm(a: np.ndarray, grid: Grid) -> float:
    return float(np.sqrt(max(inner(a, a, grid), 0.0)))


def _same_grid(a, b):
    if a.grid != b.grid:
        raise StructuralError(f"grid mismatch: {a.grid.n_points} vs {b.grid.n_points} points")


def _unit(values: np.ndarray, grid: Grid) -> np.ndarray:
    return values / l2_norm(values, grid)


def srf(f: GridDensity) -> HalfDensity:
    """Square-root (half density) representation of ``f``."""
    return HalfDensity(f.grid, np.sqrt(f.floored()))


def srf_inverse(p: HalfDensity) -> GridDensity:
    return normalize(p.values**2, p.grid)


def exp_map(p: HalfDensity, v: TangentVector) -> HalfDensity:
    """Follow the great circle from ``p`` in direction ``v`` for length ``|v|``."""
    _same_grid(p, v)
    norm = v.norm
    if norm >= np.pi:
        raise DomainError(f"tangent norm {norm:.6g} >= pi; exp_map is not one-to-one there")
    if norm < SMALL_ANGLE:
        return p
    out = np.cos(norm) * p.values + np.sin(norm) * v.values / norm
    return HalfDensity(p.grid, _unit(out, p.grid))


def log_map(p: HalfDensity, q: HalfDensity) -> TangentVector:
    """Tangent vector at ``p`` pointing along the geodesic to ``q``."""
    _same_grid(p, q)
    c = inner(p.values, q.values, p.grid)
    if c <= -1 + 1e-9:
        raise DomainError("log_map is undefined for antipodal points")
    theta = np.arccos(np.clip(c, -1.0, 1.0))
    if theta < SMALL_ANGLE:
        return TangentVector(p, np.zeros_like(p.values))
    v = theta / np.sin(theta) * (q.values - c * p.values)
    # remove the residual normal component left by quadrature
    v = v - inner(v, p.values, p.grid) * p.values
    return TangentVector(p, v)


def parallel_transport(v: TangentVector, p2: HalfDensity) -> TangentVector:
    """Transport ``v`` from its base point to ``p2`` along the shortest geodesic."""
    p1 = v.base
    _same_grid(p1, p2)
    s = p1.values + p2.values
    s_norm2 = inner(s, s, p1.grid)
    if s_norm2 < 1e-12:
        raise DomainError("parallel transport is undefined between antipodal points")
    out = v.values - 2.0 * inner(v.values, p2.values, p1.grid) / s_norm2 * s
    return TangentVector(p2, out)


def bhattacharyya(f1: GridDensity, f2: GridDensity) -> float:
    """Affinity ``int sqrt(f1 f2)``, i.e. the inner product of the half densities."""
    _same_grid(f1, f2)
    return float(integrate(np.sqrt(f1.values * f2.values), f1.grid))


def hellinger(f1: GridDensity, f2: GridDensity) -> float:
    """``sqrt(1 - BC)``, evaluated as ``sqrt(0.5 * int (sqrt f1 - sqrt f2)^2)``.

    The two agree for unit-mass inputs; the squared-difference form avoids
    cancellation when the densities are close and is exactly 0 on the diagonal.
    """
    _same_grid(f1, f2)
    diff = np.sqrt(f1.values) - np.sqrt(f2.values)
    h2 = 0.5 * integrate(diff * diff, f1.grid)
    return float(np.sqrt(np.clip(h2, 0.0, 1.0)))


def fisher_rao_distance(f1: GridDensity, f2: GridDensity) -> float:
    """Arc length between the half densities of ``f1`` and ``f2``."""
    return float(np.arccos(np.clip(bhattacharyya(f1, f2), -1.0, 1.0)))


def l2_distance(f1: GridDensity, f2: GridDensity) -> float:
    _same_grid(f1, f2)
    return l2_norm(f1.values - f2.values, f1.grid)


def geodesic(f1: GridDensity, f2: GridDensity, tau: float) -> GridDensity:
    """Density at fraction ``tau`` along the Fisher-Rao geodesic from f1 to f2."""
    if not 0.0 <= tau <= 1.0:
        raise DomainError(f"tau must lie in [0, 1]; got {tau}")
    theta = fisher_rao_distance(f1, f2)
    if theta <= 1e-10:
        return f1
    p1, p2 = np.sqrt(f1.values), np.sqrt(f2.values)
    s = np.sin(theta)
    path = (np.sin((1 - tau) * theta) / s) * p1 + (np.sin(tau * theta) / s) * p2
    return normalize(path**2, f1.grid)


def quantile_function(f: GridDensity, levels: np.ndarray) -> np.ndarray:
    """Invert the piecewise-linear CDF of ``f`` at ``levels``."""
    grid = f.grid
    # a vanishing floor keeps the CDF strictly increasing through zero-density stretches
    cdf = cumulative_integral(f.values + DENSITY_FLOOR, grid)
    cdf /= cdf[-1]
    return np.interp(levels, cdf, grid.points)


def wasserstein_1d(f1: GridDensity, f2: GridDensity, n_quantiles: int = 1000) -> float:
    """2-Wasserstein distance via quantile functions on ``n_quantiles`` mid-levels."""
    _same_grid(f1, f2)
    levels = (np.arange(n_quantiles) + 0.5) / n_quantiles
    diff = quantile_function(f1, levels) - quantile_function(f2, levels)
    return float(np.sqrt(np.mean(diff**2)))


def kl_divergence(f1: GridDensity, f2: GridDensity) -> float:
    """Kullback-Leibler divergence ``int f1 log(f1 / f2)``.

    The integrand is evaluated at cell midpoints of the linear interpolants
    so that log singularities where ``f2`` vanishes on a node stay
    integrable; ``f2`` is floored at the density floor.
    """
    _same_grid(f1, f2)
    a = 0.5 * (f1.values[1:] + f1.values[:-1])
    b = np.maximum(0.5 * (f2.values[1:] + f2.values[:-1]), DENSITY_FLOOR)
    safe_a = np.where(a > 0, a, 1.0)
    terms = np.where(a > 0, a * np.log(safe_a / b), 0.0)
    return float(terms.sum() * f1.grid.h)


def fisher_rao_metric(f: GridDensity, v1: np.ndarray, v2: np.ndarray) -> float:
    """Nonparametric Fisher-Rao inner product ``int v1 v2 / f`` at ``f``."""
    return inner(v1, v2 / f.floored(), f.grid)
