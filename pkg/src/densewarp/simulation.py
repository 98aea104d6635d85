"""Synthetic density pairs and the Monte Carlo replication harness.

Outcomes are generated on the sphere of half densities: the warped predictor
``p = sqrt(f . beta*)`` is moved along a random tangent direction by a
uniform random amount, ``q = Exp_p(c u)``, and ``g = q^2``.
"""
from __future__ import annotations

import logging
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy import stats

from .errors import ConfigurationError, DegenerateInputError, DomainError
from .estimator import FitConfig, RegressionData, fit, fit_cv
from .grid_density import Grid, GridDensity, SampleSet, kde, normalize
from .sphere import HalfDensity, TangentVector, exp_map, hellinger, inner, quantile_function, srf, srf_inverse
from .warping import WarpingFunction, act, warp_distance, weight_to_warp

logger = logging.getLogger(__name__)

DEFAULT_TRUE_WEIGHT = 1.5
N_FOURIER_TERMS = 3


def default_true_beta(grid: Grid) -> WarpingFunction:
    """Convex warp generated by the constant weight ``w = 1.5``."""
    return weight_to_warp(np.full(grid.n_points, DEFAULT_TRUE_WEIGHT), grid)


def beta_density(grid: Grid, a: float = 2.0, b: float = 5.0) -> GridDensity:
    return normalize(stats.beta(a, b).pdf(grid.points), grid)


def tangent_direction(p: HalfDensity, rng: np.random.Generator, max_attempts: int = 10) -> TangentVector:
    """Random smooth unit tangent vector at ``p``.

    A sine series with standard normal weights is modulated by ``p`` (so the
    direction vanishes wherever the half density does), projected onto the
    tangent space and normalized.
    """
    grid = p.grid
    x = grid.points
    harmonics = np.sqrt(2.0) * np.sin(np.pi * np.outer(np.arange(1, N_FOURIER_TERMS + 1), x))
    for _ in range(max_attempts):
        v = (rng.standard_normal(N_FOURIER_TERMS) @ harmonics) * p.values
        v = v - inner(v, p.values, grid) * p.values
        norm = np.sqrt(max(inner(v, v, grid), 0.0))
        if norm >= 1e-8:
            v = v / norm
            # a second projection removes rounding left by the first
            v = v - inner(v, p.values, grid) * p.values
            return TangentVector(p, v / np.sqrt(inner(v, v, grid)))
    raise DegenerateInputError(f"no usable tangent direction after {max_attempts} draws")


def generate_pair(
    f: GridDensity,
    true_beta: WarpingFunction,
    noise_halfwidth: float,
    rng: np.random.Generator,
    max_attempts: int = 10,
) -> tuple[GridDensity, GridDensity]:
    """Draw an outcome ``g = Exp_p(c u)^2`` around ``p = sqrt(f . beta*)``.

    Returns ``(f, g)``. Draws whose end point would leave the non-negative
    orthant are redrawn, so that the geodesic distance from ``f . beta*`` to
    ``g`` is exactly ``|c|``.
    """
    if noise_halfwidth < 0:
        raise ConfigurationError("noise_halfwidth must be non-negative")
    if noise_halfwidth >= np.pi:
        raise DomainError("noise_halfwidth must be below pi")
    warped = act(f, true_beta)
    p = srf(warped)
    if noise_halfwidth == 0:
        return f, warped
    for _ in range(max_attempts):
        u = tangent_direction(p, rng)
        c = rng.uniform(-noise_halfwidth, noise_halfwidth)
        q = exp_map(p, TangentVector(p, c * u.values, check=False))
        if q.values.min() >= 0:
            return f, srf_inverse(q)
    raise DegenerateInputError("tangent errors kept leaving the positive orthant; lower the noise")


def sample_from_density(f: GridDensity, m: int, rng: np.random.Generator, unit_id: str = "0",
                        variable_tag: str = "predictor") -> SampleSet:
    """Inverse-CDF sampling of ``m`` observations."""
    if m < 1:
        raise ConfigurationError("m must be at least 1")
    return SampleSet(unit_id, variable_tag, quantile_function(f, rng.uniform(size=m)))


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    m1: int = 0
    m2: int = 0
    noise_halfwidth: float = 0.1
    true_weight: float = DEFAULT_TRUE_WEIGHT
    predictor_a: float = 2.0
    predictor_b: float = 5.0
    predictor_jitter: float = 0.0
    seed: int = 0
    replications: int = 50
    grid_points: int = 1001
    lam: float | str = 1e-4
    fit: FitConfig = field(default_factory=FitConfig)

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("n must be at least 1")
        if self.noise_halfwidth < 0:
            raise ConfigurationError("noise_halfwidth must be non-negative")
        if self.m1 < 0 or self.m2 < 0 or self.replications < 1:
            raise ConfigurationError("m1, m2 must be >= 0 and replications >= 1")
        if self.predictor_jitter >= min(self.predictor_a, self.predictor_b):
            raise ConfigurationError("predictor_jitter must keep Beta parameters positive")
        if isinstance(self.lam, str) and self.lam != "auto":
            raise ConfigurationError(f"lam must be a number or 'auto'; got {self.lam!r}")

    @property
    def grid(self) -> Grid:
        return Grid(self.grid_points)

    @property
    def true_beta(self) -> WarpingFunction:
        return weight_to_warp(np.full(self.grid_points, float(self.true_weight)), self.grid)

    @property
    def estimated(self) -> bool:
        return self.m1 > 0 and self.m2 > 0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["fit"]["lambda_grid"] = list(d["fit"]["lambda_grid"])
        return d


@dataclass
class SimResult:
    """Aggregates over replications.

    ``se_*`` fields are the standard deviations of the per-replication
    metrics, i.e. the Monte Carlo standard error of a single replication.
    """

    mean_warp_distance: float
    se_warp_distance: float
    mean_hellinger: float
    se_hellinger: float
    mean_baseline_hellinger: float
    per_replication: list[dict]
    failures: int = 0

    def to_dict(self) -> dict:
        return asdict(self)


def replication_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng([seed, index])


def simulate_dataset(config: SimConfig, rng: np.random.Generator) -> tuple[RegressionData, RegressionData]:
    """One replication's data: ``(true_pairs, observed_pairs)``.

    Observed pairs are KDE estimates from ``m1``/``m2`` draws when both are
    positive, otherwise the true densities themselves.
    """
    grid = config.grid
    true_beta = config.true_beta
    base = beta_density(grid, config.predictor_a, config.predictor_b)
    fs, gs = [], []
    for _ in range(config.n):
        if config.predictor_jitter > 0:
            a = config.predictor_a + rng.uniform(-config.predictor_jitter, config.predictor_jitter)
            b = config.predictor_b + rng.uniform(-config.predictor_jitter, config.predictor_jitter)
            f = beta_density(grid, a, b)
        else:
            f = base
        f, g = generate_pair(f, true_beta, config.noise_halfwidth, rng)
        fs.append(f)
        gs.append(g)
    true_data = RegressionData.from_lists(fs, gs)
    if not config.estimated:
        return true_data, true_data
    fs_hat, gs_hat = [], []
    for i, (f, g) in enumerate(true_data.pairs):
        fs_hat.append(kde(sample_from_density(f, config.m1, rng, str(i), "predictor"), grid))
        gs_hat.append(kde(sample_from_density(g, config.m2, rng, str(i), "outcome"), grid))
    return true_data, RegressionData.from_lists(fs_hat, gs_hat)


def fit_dataset(data: RegressionData, config: SimConfig, seed: int):
    fit_config = FitConfig(**{**asdict(config.fit), "seed": seed})
    if config.lam == "auto":
        return fit_cv(data, fit_config)
    return fit(data, fit_config, lam=float(config.lam))


def replication_data(config: SimConfig, index: int) -> tuple[RegressionData, int]:
    """Observed pairs of replication ``index`` and the seed its fit uses."""
    rng = replication_rng(config.seed, index)
    _, data = simulate_dataset(config, rng)
    return data, int(rng.integers(2**31))


def run_one(config: SimConfig, index: int) -> dict:
    data, fit_seed = replication_data(config, index)
    result = fit_dataset(data, config, seed=fit_seed)
    return {
        "replication": index,
        "warp_distance": warp_distance(result.beta_hat, config.true_beta),
        "mean_hellinger": float(np.mean(result.per_unit_hellinger)),
        "baseline_hellinger": float(np.mean([hellinger(g, f) for f, g in data.pairs])),
        "lambda": result.lambda_used,
        "converged": result.converged,
        "n_iter": result.n_iter,
        "fit_seed": fit_seed,
    }


def _safe_run_one(args) -> dict:
    config, index = args
    try:
        return run_one(config, index)
    except Exception as exc:  # recorded, never fatal
        logger.warning("replication %d failed: %s", index, exc)
        return {"replication": index, "failed": True, "error": repr(exc)}


def default_workers() -> int:
    env = os.environ.get("DENSEWARP_THREADS")
    if env:
        return max(1, int(env))
    return 1


def run_replications(config: SimConfig, workers: int | None = None) -> SimResult:
    """Run ``config.replications`` independent simulate-and-fit rounds.

    Replication ``r`` draws from a generator seeded with ``(seed, r)``, so
    results do not depend on ``workers`` or on execution order.
    """
    workers = default_workers() if workers is None else workers
    jobs = [(config, r) for r in range(config.replications)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_safe_run_one, jobs))
    else:
        rows = [_safe_run_one(job) for job in jobs]
    ok = [r for r in rows if not r.get("failed")]
    if not ok:
        raise DegenerateInputError("every replication failed")

    def mean_sd(key):
        vals = np.array([r[key] for r in ok])
        sd = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
        return float(vals.mean()), sd

    d_mean, d_sd = mean_sd("warp_distance")
    h_mean, h_sd = mean_sd("mean_hellinger")
    base_mean, _ = mean_sd("baseline_hellinger")
    return SimResult(d_mean, d_sd, h_mean, h_sd, base_mean, rows, failures=len(rows) - len(ok))
