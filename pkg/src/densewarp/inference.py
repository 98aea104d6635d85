"""Pointwise sandwich-variance intervals for the weight function and the warp.

The default ``method="basis"`` differentiates each unit loss ``L_i`` with
respect to the basis coefficients of ``w`` and forms

    A = mean_i d2 L_i,   B = cov_i(d L_i),   Cov(alpha) = A^+ B A^+ / n,

so that ``C_n(omega) = phi(omega)' Cov(alpha) phi(omega)``. ``method="bump"``
instead perturbs ``w`` by a hat function at each grid point and treats every
``w(omega)`` as its own scalar parameter.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import norm

from .errors import ConfigurationError, DomainError
from .estimator import RegressionData, WarpFit, _Problem
from .grid_density import Grid
from .warping import warp_arrays

HESSIAN_STEP = 1e-4
BUMP_HEIGHT = 1e-4
CURVATURE_FLOOR = 1e-8


@dataclass(frozen=True, eq=False)
class PointwiseCI:
    grid: Grid
    estimate: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float = 0.95

    def __post_init__(self):
        if not 0 < self.level < 1:
            raise DomainError(f"level must lie in (0, 1); got {self.level}")
        if np.any(self.lower > self.estimate + 1e-12) or np.any(self.upper < self.estimate - 1e-12):
            raise DomainError("interval does not contain its estimate")

    @property
    def width(self) -> np.ndarray:
        return self.upper - self.lower


def _unit_mean(x: np.ndarray) -> np.ndarray:
    """Mean over the last axis with exactly rounded sums.

    The curvature matrix can be badly conditioned, so ordinary summation
    noise would be amplified; exact sums also make the result invariant to
    reordering or duplicating units.
    """
    flat = x.reshape(-1, x.shape[-1])
    return np.array([math.fsum(row) for row in flat]).reshape(x.shape[:-1]) / x.shape[-1]


def _coefficient_derivatives(fit: WarpFit, data: RegressionData, step: float = HESSIAN_STEP):
    """Per-unit scores (n, P) and the mean unit Hessian (P, P) in coefficient space."""
    problem = _Problem(data, fit.coefficients)
    alpha = fit.coefficients.coefficients
    p = alpha.size
    eye = step * np.eye(p)
    grad_pts = np.concatenate([alpha + eye, alpha - eye])
    hess_pts = np.array([
        alpha + si * eye[k] + sj * eye[l]
        for k in range(p) for l in range(p)
        for si, sj in ((1, 1), (1, -1), (-1, 1), (-1, -1))
    ])
    losses = problem.unit_losses_w(np.concatenate([grad_pts, hess_pts]) @ problem.phi.T)
    scores = ((losses[:p] - losses[p:2 * p]) / (2 * step)).T
    quad = _unit_mean(losses[2 * p:]).reshape(p, p, 4)
    hess = (quad[..., 0] - quad[..., 1] - quad[..., 2] + quad[..., 3]) / (4 * step * step)
    hess = 0.5 * (hess + hess.T)
    if fit.lambda_used > 0:
        hess = hess + 2 * fit.lambda_used * problem.phi.T @ (problem.phi * data.grid.weights[:, None])
    return scores, hess, problem.phi


def coefficient_covariance(fit: WarpFit, data: RegressionData) -> tuple[np.ndarray, np.ndarray]:
    """Sandwich covariance of the coefficients and the basis matrix it refers to.

    Directions that leave ``w`` unchanged (the constant term is collinear
    with a B-spline partition of unity) are projected out before inverting.
    """
    if data.n < 2:
        raise ConfigurationError("sandwich variance needs at least two pairs")
    scores, hess, phi = _coefficient_derivatives(fit, data)
    # orthonormal basis of the coefficient directions that move w
    _, sv, vt = np.linalg.svd(phi, full_matrices=False)
    q = vt[sv > sv[0] * 1e-10].T
    a_r = q.T @ hess @ q
    evals, evecs = np.linalg.eigh(a_r)
    small = np.abs(evals) < CURVATURE_FLOOR
    if np.any(small):
        warnings.warn(
            f"{small.sum()} curvature eigenvalue(s) below {CURVATURE_FLOOR:g}; floored before inversion",
            RuntimeWarning, stacklevel=2,
        )
        evals = np.where(small, np.copysign(CURVATURE_FLOOR, evals + 0.0), evals)
    a_inv = (evecs / evals) @ evecs.T
    centered = scores - _unit_mean(scores.T)
    b_full = _unit_mean(centered.T[:, None, :] * centered.T[None, :, :])
    b_r = q.T @ b_full @ q
    cov = q @ a_inv @ b_r @ a_inv @ q.T / data.n
    return cov, phi


def _bump_variance(fit: WarpFit, data: RegressionData) -> np.ndarray:
    grid = data.grid
    problem = _Problem(data, fit.coefficients)
    w = fit.w_hat
    pts = grid.points
    out = np.empty(grid.n_points)
    t = BUMP_HEIGHT
    base = problem.unit_losses_w(w)
    floored = False
    chunk = 64
    for start in range(0, grid.n_points, chunk):
        js = np.arange(start, min(start + chunk, grid.n_points))
        hats = np.maximum(0.0, 1.0 - np.abs(pts[None, :] - pts[js, None]) / grid.h)
        mass = hats @ grid.weights
        plus = problem.unit_losses_w(w + t * hats)
        minus = problem.unit_losses_w(w - t * hats)
        d1 = (plus - minus) / (2 * t) / mass[:, None]
        d2 = (plus - 2 * base + minus) / (t * t) / (mass * mass)[:, None]
        a = d2.mean(axis=1)
        low = np.abs(a) < CURVATURE_FLOOR
        floored |= bool(low.any())
        a = np.where(low, CURVATURE_FLOOR, a)
        out[js] = d1.var(axis=1) / (a * a) / data.n
    if floored:
        warnings.warn("pointwise curvature floored before inversion", RuntimeWarning, stacklevel=2)
    return out


def sandwich_variance(fit: WarpFit, data: RegressionData, method: str = "basis") -> np.ndarray:
    """Pointwise asymptotic variance ``C_n(omega)`` of ``w_hat`` on the grid."""
    if data.n < 2:
        raise ConfigurationError("sandwich variance needs at least two pairs")
    if data.grid != fit.grid:
        raise ConfigurationError("fit and data use different grids")
    if method == "basis":
        cov, phi = coefficient_covariance(fit, data)
        return np.maximum(np.einsum("gk,kl,gl->g", phi, cov, phi), 0.0)
    if method == "bump":
        return _bump_variance(fit, data)
    raise ConfigurationError(f"unknown sandwich method {method!r}")


def _z(level: float) -> float:
    if not 0 < level < 1:
        raise DomainError(f"level must lie in (0, 1); got {level}")
    return float(norm.ppf(0.5 * (1 + level)))


def ci_for_w(fit: WarpFit, data: RegressionData, level: float = 0.95, method: str = "basis",
             variance: np.ndarray | None = None) -> PointwiseCI:
    """``w_hat +/- z * sqrt(C_n)`` pointwise."""
    if variance is None:
        variance = sandwich_variance(fit, data, method)
    half = _z(level) * np.sqrt(variance)
    w = fit.w_hat
    return PointwiseCI(fit.grid, w, w - half, w + half, level)


def ci_for_beta(fit: WarpFit, data: RegressionData, level: float = 0.95, method: str = "basis",
                w_band: PointwiseCI | None = None) -> PointwiseCI:
    """Map the band for ``w`` through the warp construction.

    The band is the pointwise envelope of the warps generated by the lower
    and upper weight curves (and the estimate itself), so both edges are
    increasing and pinned at 0 and 1.
    """
    if w_band is None:
        w_band = ci_for_w(fit, data, level, method)
    curves, _ = warp_arrays(np.stack([w_band.lower, w_band.upper]), fit.grid)
    est = fit.beta_hat.beta_values
    stacked = np.vstack([curves, est])
    return PointwiseCI(fit.grid, est, stacked.min(axis=0), stacked.max(axis=0), w_band.level)
