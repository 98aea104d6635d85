"""Boundary-preserving warping functions of [0, 1].

Warps are generated from a weight function ``w`` through the smooth monotone
representation

    beta'(s) = C exp(W(s)),   W(s) = int_0^s w,   beta(s) = int_0^s beta',

with ``C`` chosen so that ``beta(1) = 1``. Any finite ``w`` yields a strictly
increasing warp, which is what makes unconstrained optimization over the
basis coefficients of ``w`` possible.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.interpolate import BSpline

from .errors import ConfigurationError, DomainError, StructuralError
from .grid_density import Grid, GridDensity, cumulative_integral, integrate, interp_density, normalize


# smallest slope relative to the largest; below this, beta's increments
# vanish in double precision on fine grids
SLOPE_RATIO_FLOOR = 1e-10
LOG_SLOPE_FLOOR = float(np.log(SLOPE_RATIO_FLOOR))


@dataclass(frozen=True, eq=False)
class WarpingFunction:
    """A strictly increasing map of [0, 1] onto itself, with its derivative."""

    grid: Grid
    beta_values: np.ndarray
    deriv_values: np.ndarray
    check: bool = field(default=True, repr=False)

    def __post_init__(self):
        beta = np.array(self.beta_values, dtype=float)
        deriv = np.array(self.deriv_values, dtype=float)
        if beta.shape != (self.grid.n_points,) or deriv.shape != beta.shape:
            raise StructuralError("warp arrays do not match the grid")
        if self.check:
            if abs(beta[0]) > 1e-10 or abs(beta[-1] - 1) > 1e-10:
                raise DomainError("warp must fix the endpoints 0 and 1")
            if np.any(np.diff(beta) <= 0):
                raise DomainError("warp must be strictly increasing")
            if np.any(deriv <= 0):
                raise DomainError("warp derivative must be positive")
            total = integrate(deriv, self.grid)
            if abs(total - 1) > 1e-8:
                raise DomainError(f"warp derivative integrates to {total:.10g}, expected 1")
        beta.flags.writeable = False
        deriv.flags.writeable = False
        object.__setattr__(self, "beta_values", beta)
        object.__setattr__(self, "deriv_values", deriv)

    @classmethod
    def from_derivative(cls, grid: Grid, deriv) -> WarpingFunction:
        """Build a warp from a positive slope, rescaled to integrate to one."""
        deriv = np.asarray(deriv, dtype=float)
        deriv = deriv / integrate(deriv, grid)
        beta = cumulative_integral(deriv, grid)
        beta[-1] = 1.0
        return cls(grid, beta, deriv)

    @classmethod
    def identity(cls, grid: Grid) -> WarpingFunction:
        return cls(grid, grid.points.copy(), np.ones(grid.n_points))

    def __call__(self, x):
        return np.interp(x, self.grid.points, self.beta_values)


@lru_cache(maxsize=32)
def _bspline_matrix(n_points: int, n_basis: int, order: int) -> np.ndarray:
    degree = order - 1
    n_interior = n_basis - order
    interior = np.linspace(0.0, 1.0, n_interior + 2)[1:-1]
    knots = np.r_[np.zeros(order), interior, np.ones(order)]
    x = np.linspace(0.0, 1.0, n_points)
    mat = BSpline.design_matrix(x, knots, degree).toarray()
    mat.flags.writeable = False
    return mat


@dataclass(frozen=True)
class BasisExpansion:
    """Coefficients of a weight function in a B-spline basis.

    With ``include_constant`` the first coefficient multiplies the constant
    function 1 and the remaining ``n_basis`` multiply open-uniform B-splines,
    so there are ``n_basis + 1`` coefficients in total.
    """

    coefficients: np.ndarray
    n_basis: int = 4
    order: int = 4
    include_constant: bool = True
    basis_kind: str = "bspline"

    def __post_init__(self):
        if self.basis_kind != "bspline":
            raise ConfigurationError(f"unsupported basis kind {self.basis_kind!r}")
        if self.n_basis < 1 or self.n_basis < self.order - 1:
            raise ConfigurationError(
                f"need at least order-1 = {self.order - 1} basis functions; got {self.n_basis}"
            )
        coef = np.array(self.coefficients, dtype=float).ravel()
        if coef.size != self.size:
            raise StructuralError(f"expected {self.size} coefficients, got {coef.size}")
        if not np.all(np.isfinite(coef)):
            raise DomainError("basis coefficients must be finite")
        coef.flags.writeable = False
        object.__setattr__(self, "coefficients", coef)

    @property
    def size(self) -> int:
        return self.n_basis + int(self.include_constant)

    @property
    def spline_order(self) -> int:
        # K = order - 1 drops to the highest order the basis size allows
        return min(self.order, self.n_basis)

    def design_matrix(self, grid: Grid) -> np.ndarray:
        """Basis functions evaluated on the grid, shape (n_points, size)."""
        return basis_matrix(grid, self.n_basis, self.order, self.include_constant)

    def with_coefficients(self, coefficients) -> BasisExpansion:
        return BasisExpansion(coefficients, self.n_basis, self.order, self.include_constant, self.basis_kind)

    @classmethod
    def zeros(cls, n_basis: int = 4, order: int = 4, include_constant: bool = True) -> BasisExpansion:
        return cls(np.zeros(n_basis + int(include_constant)), n_basis, order, include_constant)


def basis_matrix(grid: Grid, n_basis: int, order: int = 4, include_constant: bool = True) -> np.ndarray:
    if n_basis < 1 or n_basis < order - 1:
        raise ConfigurationError(f"need at least order-1 = {order - 1} basis functions; got {n_basis}")
    mat = _bspline_matrix(grid.n_points, n_basis, min(order, n_basis))
    if include_constant:
        mat = np.column_stack([np.ones(grid.n_points), mat])
    return mat


def bspline_eval(e: BasisExpansion, grid: Grid) -> np.ndarray:
    """Evaluate ``sum_k alpha_k phi_k`` on the grid."""
    return e.design_matrix(grid) @ e.coefficients


def warp_arrays(w: np.ndarray, grid: Grid) -> tuple[np.ndarray, np.ndarray]:
    """Warp values and slopes for one or a batch of weight functions.

    ``w`` has shape (..., n_points). The exponent is shifted by its maximum
    before ``exp`` and the normalizing constant absorbs the shift. The slope
    ratio max/min is capped at ``1 / SLOPE_RATIO_FLOOR`` so that ``beta``
    stays strictly increasing in floating point for any finite ``w``.
    """
    big_w = cumulative_integral(w, grid)
    e = np.exp(np.maximum(big_w - big_w.max(axis=-1, keepdims=True), LOG_SLOPE_FLOOR))
    beta = cumulative_integral(e, grid)
    total = beta[..., -1:]
    deriv = e / total
    beta = beta / total
    beta[..., 0] = 0.0
    beta[..., -1] = 1.0
    return beta, deriv


def weight_to_warp(w, grid: Grid) -> WarpingFunction:
    """Solve ``beta'' = w beta'`` with ``beta(0) = 0, beta(1) = 1``."""
    if isinstance(w, BasisExpansion):
        w = bspline_eval(w, grid)
    w = np.asarray(w, dtype=float)
    if w.shape != (grid.n_points,):
        raise StructuralError("weight function does not match the grid")
    if not np.all(np.isfinite(w)):
        raise DomainError("weight function must be finite")
    beta, deriv = warp_arrays(w, grid)
    return WarpingFunction(grid, beta, deriv)


def warp_to_weight(b: WarpingFunction) -> np.ndarray:
    """Recover ``w = (log beta')'`` by finite differences."""
    return np.gradient(np.log(b.deriv_values), b.grid.points)


def _check_pair(f, b):
    if f.grid != b.grid:
        raise StructuralError(f"grid mismatch: {f.grid.n_points} vs {b.grid.n_points} points")


def act(f: GridDensity, b: WarpingFunction) -> GridDensity:
    """Warp a density: ``(f o beta) * beta'``."""
    _check_pair(f, b)
    return normalize(interp_density(f, b.beta_values) * b.deriv_values, f.grid)


def invert(b: WarpingFunction) -> WarpingFunction:
    grid = b.grid
    inv = np.interp(grid.points, b.beta_values, grid.points)
    inv[0], inv[-1] = 0.0, 1.0
    deriv = 1.0 / np.interp(inv, grid.points, b.deriv_values)
    deriv = deriv / integrate(deriv, grid)
    return WarpingFunction(grid, inv, deriv)


def compose(b1: WarpingFunction, b2: WarpingFunction) -> WarpingFunction:
    """``b1 o b2``, so that ``act(act(f, b1), b2) == act(f, compose(b1, b2))``."""
    _check_pair(b1, b2)
    grid = b1.grid
    beta = np.interp(b2.beta_values, grid.points, b1.beta_values)
    beta[0], beta[-1] = 0.0, 1.0
    deriv = np.interp(b2.beta_values, grid.points, b1.deriv_values) * b2.deriv_values
    deriv = deriv / integrate(deriv, grid)
    return WarpingFunction(grid, beta, deriv)


def srsf(b: WarpingFunction) -> np.ndarray:
    """Square-root slope function ``sqrt(beta')``."""
    return np.sqrt(b.deriv_values)


def warp_distance(b1: WarpingFunction, b2: WarpingFunction) -> float:
    """Arc length between the square-root slope functions of two warps.

    Computed from the chord, ``2 asin(|psi1 - psi2| / 2)``, which equals
    ``acos <psi1, psi2>`` for unit-norm SRSFs but keeps full precision when
    the warps are close.
    """
    _check_pair(b1, b2)
    diff = srsf(b1) - srsf(b2)
    chord = np.sqrt(max(integrate(diff * diff, b1.grid), 0.0))
    return float(2.0 * np.arcsin(min(chord / 2.0, 1.0)))
