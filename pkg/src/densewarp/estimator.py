"""Penalized average-Hellinger estimation of the warping function.

The weight function ``w = sum_k alpha_k phi_k`` is fitted by minimizing

    (1/2n) sum_i int (sqrt(g_i) - sqrt(f_i(beta) beta'))^2 + lam int w^2,

which equals the mean squared Hellinger distance between each outcome
``g_i`` and the warped predictor ``f_i . beta``. The warped predictor is
rescaled to unit mass on the grid (as ``act`` does), so the identity holds
exactly rather than up to quadrature drift.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Sequence

import numba
import numpy as np

from .errors import ConfigurationError, StructuralError
from .grid_density import DENSITY_FLOOR, Grid, GridDensity
from .sphere import hellinger
from .warping import BasisExpansion, WarpingFunction, act, basis_matrix, warp_arrays

logger = logging.getLogger(__name__)

FD_STEP = 1e-6


@dataclass(frozen=True, eq=False)
class RegressionData:
    """Pairs ``(f_i, g_i)`` of predictor and outcome densities on one grid."""

    pairs: tuple[tuple[GridDensity, GridDensity], ...]

    def __post_init__(self):
        pairs = tuple((f, g) for f, g in self.pairs)
        if not pairs:
            raise StructuralError("regression data needs at least one pair")
        grid = pairs[0][0].grid
        for i, (f, g) in enumerate(pairs):
            if f.grid != grid or g.grid != grid:
                raise StructuralError(f"pair {i} is not on the shared grid")
        object.__setattr__(self, "pairs", pairs)
        f_mat = np.stack([f.values for f, _ in pairs])
        g_mat = np.stack([g.values for _, g in pairs])
        f_mat.flags.writeable = False
        g_mat.flags.writeable = False
        object.__setattr__(self, "f_matrix", f_mat)
        object.__setattr__(self, "g_matrix", g_mat)

    @classmethod
    def from_lists(cls, fs: Sequence[GridDensity], gs: Sequence[GridDensity]) -> RegressionData:
        if len(fs) != len(gs):
            raise StructuralError(f"{len(fs)} predictors but {len(gs)} outcomes")
        return cls(tuple(zip(fs, gs)))

    @property
    def n(self) -> int:
        return len(self.pairs)

    @property
    def grid(self) -> Grid:
        return self.pairs[0][0].grid

    def subset(self, index) -> RegressionData:
        return RegressionData(tuple(self.pairs[i] for i in index))

    def swapped(self) -> RegressionData:
        return RegressionData(tuple((g, f) for f, g in self.pairs))


@dataclass(frozen=True)
class FitConfig:
    K: int = 4
    lam: float = 1e-4
    max_iter: int = 500
    grad_tol: float = 1e-6
    cv_folds: int = 5
    lambda_grid: tuple[float, ...] = tuple(np.logspace(-4, -2, 7))
    order: int = 4
    include_constant: bool = True
    seed: int = 0

    def __post_init__(self):
        if self.K < 1:
            raise ConfigurationError("K must be positive")
        if self.lam < 0:
            raise ConfigurationError("lambda must be non-negative")
        if self.max_iter < 1 or self.grad_tol <= 0 or self.cv_folds < 2:
            raise ConfigurationError("max_iter, grad_tol must be positive and cv_folds >= 2")
        if not self.lambda_grid or any(l <= 0 for l in self.lambda_grid):
            raise ConfigurationError("lambda_grid must hold positive values")
        object.__setattr__(self, "lambda_grid", tuple(float(l) for l in self.lambda_grid))

    def empty_expansion(self) -> BasisExpansion:
        return BasisExpansion.zeros(self.K, self.order, self.include_constant)


@dataclass(eq=False)
class WarpFit:
    coefficients: BasisExpansion
    beta_hat: WarpingFunction
    lambda_used: float
    objective_trace: list[float]
    converged: bool
    per_unit_hellinger: np.ndarray
    n_iter: int = 0
    grad_norm: float = float("nan")
    seed: int | None = None
    cv_scores: dict[float, float] | None = None

    @property
    def grid(self) -> Grid:
        return self.beta_hat.grid

    @property
    def w_hat(self) -> np.ndarray:
        return self.coefficients.design_matrix(self.grid) @ self.coefficients.coefficients


@numba.njit(cache=True, nogil=True)
def _unit_losses_kernel(f_t, sqrt_g_t, beta, deriv, weights, floor):
    """Per-unit half-density losses for a batch of warps, shape (B, n).

    Densities come transposed, (G, n), so the inner loop over units is
    contiguous. Each warped predictor is rescaled to unit mass, matching
    ``act``, before it is compared with the outcome.
    """
    n_batch, n_pts = beta.shape
    n_units = f_t.shape[1]
    out = np.zeros((n_batch, n_units))
    warped = np.empty((n_pts, n_units))
    mass = np.empty(n_units)
    scale = n_pts - 1
    for b in range(n_batch):
        mass[:] = 0.0
        for j in range(n_pts):
            pos = beta[b, j] * scale
            if pos < 0.0:
                pos = 0.0
            k = int(pos)
            if k > n_pts - 2:
                k = n_pts - 2
            frac = pos - k
            d = deriv[b, j]
            wj = weights[j]
            for i in range(n_units):
                val = (f_t[k, i] + frac * (f_t[k + 1, i] - f_t[k, i])) * d
                warped[j, i] = val
                mass[i] += wj * val
        for j in range(n_pts):
            wj = 0.5 * weights[j]
            for i in range(n_units):
                val = warped[j, i] / mass[i]
                if val < floor:
                    val = floor
                r = sqrt_g_t[j, i] - np.sqrt(val)
                out[b, i] += wj * r * r
    return out


class _Problem:
    """Precomputed arrays for fast, batched objective evaluations."""

    def __init__(self, data: RegressionData, expansion: BasisExpansion):
        self.grid = data.grid
        self.n = data.n
        self.f = data.f_matrix
        self.sqrt_g = np.sqrt(np.maximum(data.g_matrix, DENSITY_FLOOR))
        self._f_t = np.ascontiguousarray(self.f.T)
        self._sqrt_g_t = np.ascontiguousarray(self.sqrt_g.T)
        self.phi = basis_matrix(self.grid, expansion.n_basis, expansion.order, expansion.include_constant)
        self.weights = self.grid.weights

    def unit_losses_w(self, w: np.ndarray) -> np.ndarray:
        """Per-unit losses ``L_i`` for weight functions of shape (..., G) -> (..., n)."""
        beta, deriv = warp_arrays(w, self.grid)
        lead = beta.shape[:-1]
        g_pts = self.grid.n_points
        losses = _unit_losses_kernel(
            self._f_t, self._sqrt_g_t, beta.reshape(-1, g_pts), deriv.reshape(-1, g_pts),
            self.weights, DENSITY_FLOOR,
        )
        return losses.reshape(lead + (self.n,))

    def objective_w(self, w: np.ndarray, lam: float) -> np.ndarray:
        penalty = (w * w) @ self.weights
        return self.unit_losses_w(w).mean(axis=-1) + lam * penalty

    def objective(self, alpha: np.ndarray, lam: float) -> np.ndarray:
        return self.objective_w(alpha @ self.phi.T, lam)

    def gradient(self, alpha: np.ndarray, lam: float, step: float = FD_STEP) -> np.ndarray:
        p = alpha.size
        shifts = step * np.eye(p)
        batch = np.concatenate([alpha + shifts, alpha - shifts])
        vals = self.objective(batch, lam)
        return (vals[:p] - vals[p:]) / (2 * step)


def objective(alpha: BasisExpansion, data: RegressionData, lam: float) -> float:
    """Penalized half-density least-squares loss at ``alpha``."""
    return float(_Problem(data, alpha).objective(alpha.coefficients, lam))


def gradient(alpha: BasisExpansion, data: RegressionData, lam: float) -> np.ndarray:
    """Central finite-difference gradient of :func:`objective` in coefficient space."""
    return _Problem(data, alpha).gradient(alpha.coefficients, lam)


def _descend(problem: _Problem, alpha0: np.ndarray, lam: float, max_iter: int, grad_tol: float):
    """Quasi-Newton descent with Armijo backtracking (halving, c = 1e-4).

    The inverse-Hessian estimate is a BFGS update; whenever it stops giving a
    descent direction it is reset, which makes the step a plain gradient step.
    """
    alpha = alpha0.copy()
    value = float(problem.objective(alpha, lam))
    trace = [value]
    grad = problem.gradient(alpha, lam)
    gnorm = float(np.linalg.norm(grad))
    h_inv = np.eye(alpha.size)
    it = 0
    while gnorm >= grad_tol and it < max_iter:
        it += 1
        direction = -h_inv @ grad
        slope = float(grad @ direction)
        if slope >= 0:
            h_inv = np.eye(alpha.size)
            direction, slope = -grad, -gnorm**2
        t = 1.0
        accepted = False
        for _ in range(60):
            cand = alpha + t * direction
            cand_value = float(problem.objective(cand, lam))
            if cand_value <= value + 1e-4 * t * slope:
                accepted = True
                break
            t *= 0.5
        if not accepted:
            logger.debug("line search failed at iteration %d (|grad| = %.3g)", it, gnorm)
            break
        new_grad = problem.gradient(cand, lam)
        s, y = cand - alpha, new_grad - grad
        sy = float(s @ y)
        if sy > 1e-16:
            if it == 1:
                h_inv = np.eye(alpha.size) * sy / float(y @ y)
            rho = 1.0 / sy
            v = np.eye(alpha.size) - rho * np.outer(s, y)
            h_inv = v @ h_inv @ v.T + rho * np.outer(s, s)
        alpha, value, grad = cand, cand_value, new_grad
        trace.append(value)
        gnorm = float(np.linalg.norm(grad))
    return alpha, trace, gnorm < grad_tol, it, gnorm


def fit(data: RegressionData, config: FitConfig | None = None, lam: float | None = None) -> WarpFit:
    """Fit the warp by backtracking descent from the identity warp.

    Non-convergence is reported through ``converged=False``; it never raises.
    """
    config = config or FitConfig()
    lam = config.lam if lam is None else lam
    expansion = config.empty_expansion()
    problem = _Problem(data, expansion)
    alpha, trace, converged, n_iter, gnorm = _descend(
        problem, expansion.coefficients.copy(), lam, config.max_iter, config.grad_tol
    )
    if not converged:
        logger.info("fit stopped after %d iterations with |grad| = %.3g", n_iter, gnorm)
    coefs = expansion.with_coefficients(alpha)
    beta, deriv = warp_arrays(alpha @ problem.phi.T, data.grid)
    beta_hat = WarpingFunction(data.grid, beta, deriv)
    per_unit = np.array([hellinger(g, act(f, beta_hat)) for f, g in data.pairs])
    return WarpFit(
        coefficients=coefs,
        beta_hat=beta_hat,
        lambda_used=float(lam),
        objective_trace=trace,
        converged=converged,
        per_unit_hellinger=per_unit,
        n_iter=n_iter,
        grad_norm=gnorm,
        seed=config.seed,
    )


def mean_squared_hellinger(data: RegressionData, beta: WarpingFunction) -> float:
    return float(np.mean([hellinger(g, act(f, beta)) ** 2 for f, g in data.pairs]))


def cross_validate(data: RegressionData, config: FitConfig | None = None) -> tuple[float, dict[float, float]]:
    """Choose the penalty by K-fold cross-validation on held-out mean H^2.

    Folds are contiguous blocks of a seeded permutation of the units. Ties
    (scores within 1e-12) go to the larger penalty.
    """
    config = config or FitConfig()
    k = config.cv_folds
    if data.n < k:
        raise ConfigurationError(f"need at least {k} pairs for {k}-fold cross-validation; got {data.n}")
    perm = np.random.default_rng(config.seed).permutation(data.n)
    folds = np.array_split(perm, k)
    scores = {}
    for lam in config.lambda_grid:
        fold_scores = []
        for j, held in enumerate(folds):
            train = np.concatenate([folds[i] for i in range(k) if i != j])
            fitted = fit(data.subset(train), config, lam=lam)
            fold_scores.append(mean_squared_hellinger(data.subset(held), fitted.beta_hat))
        scores[lam] = float(np.mean(fold_scores))
    best = min(scores.values())
    lam_best = max(lam for lam, s in scores.items() if s <= best + 1e-12)
    return lam_best, scores


def fit_cv(data: RegressionData, config: FitConfig | None = None) -> WarpFit:
    """Cross-validate the penalty, then refit on all pairs."""
    config = config or FitConfig()
    lam, scores = cross_validate(data, config)
    result = fit(data, config, lam=lam)
    result.cv_scores = scores
    return result


def predict(f: GridDensity, fit: WarpFit) -> GridDensity:
    """Predicted outcome density ``f . beta_hat``."""
    return act(f, fit.beta_hat)
