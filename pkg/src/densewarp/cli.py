"""``densewarp`` command line: fit, predict, infer, simulate, distance.

Exit codes: 0 ok, 2 bad input, 3 numerical failure or non-convergence,
4 bad configuration.
"""
from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import asdict, dataclass, field
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from . import __version__, io
from .errors import ConfigurationError, DensewarpError, InputError
from .estimator import FitConfig, RegressionData, WarpFit, fit, fit_cv, predict
from .grid_density import Grid
from .inference import PointwiseCI, ci_for_beta, ci_for_w
from .simulation import SimConfig, SimResult, replication_data, run_replications
from .sphere import fisher_rao_distance, hellinger, kl_divergence, l2_distance, wasserstein_1d
from .warping import warp_distance, weight_to_warp

logger = logging.getLogger("densewarp")

EXIT_OK, EXIT_INPUT, EXIT_NUMERICAL, EXIT_CONFIG = 0, 2, 3, 4

METRICS = {
    "hellinger": hellinger,
    "fisher-rao": fisher_rao_distance,
    "wasserstein": wasserstein_1d,
    "l2": l2_distance,
    "kl": kl_divergence,
}


@dataclass
class RunManifest:
    command: str
    config_echo: dict
    seed: int | None
    tool_version: str = __version__
    started_at: str = field(default_factory=lambda: _now())
    finished_at: str | None = None

    def finish(self) -> dict:
        self.finished_at = _now()
        return asdict(self)


def _echo(args) -> dict:
    return {k: v for k, v in vars(args).items() if k != "func"}


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def _write_sidecar(path: Path, manifest: dict):
    io.write_json(path.with_name(path.name + ".manifest.json"), manifest)


def _parse_lambda(text: str) -> float | str:
    if text == "auto":
        return text
    try:
        value = float(text)
    except ValueError:
        raise ConfigurationError(f"--lambda must be a number or 'auto'; got {text!r}") from None
    if not np.isfinite(value) or value < 0:
        raise ConfigurationError(f"--lambda must be finite and non-negative; got {text!r}")
    return value


def _fit_config(args) -> FitConfig:
    return FitConfig(K=args.k, cv_folds=args.folds, seed=args.seed, max_iter=args.max_iter)


def _run_fit(data: RegressionData, args) -> WarpFit:
    lam = _parse_lambda(args.lam)
    config = _fit_config(args)
    if lam == "auto":
        return fit_cv(data, config)
    return fit(data, config, lam=lam)


def _ci_table(w_band: PointwiseCI, b_band: PointwiseCI) -> dict[str, np.ndarray]:
    return {
        "w_hat": w_band.estimate, "w_lo": w_band.lower, "w_hi": w_band.upper,
        "beta_hat": b_band.estimate, "beta_lo": b_band.lower, "beta_hi": b_band.upper,
    }


def _write_ci_csv(path: Path, grid: Grid, w_band: PointwiseCI, b_band: PointwiseCI):
    io.write_density_csv(path, grid, _ci_table(w_band, b_band))


def _bands(result: WarpFit, data: RegressionData, level: float):
    w_band = ci_for_w(result, data, level)
    return w_band, ci_for_beta(result, data, level, w_band=w_band)


def emit_plot_data(obj, out_dir, data: RegressionData | None = None, units: list[str] | None = None,
                   bands: tuple[PointwiseCI, PointwiseCI] | None = None) -> list[Path]:
    """Write tidy CSVs for plotting a fit or a simulation result.

    For a :class:`WarpFit`: ``beta_curve.csv`` (estimate beside the
    diagonal), ``density_overlay.csv`` (f, g and predicted g per unit) when
    ``data`` is given, and ``ci_band.csv`` when ``bands`` is given. For a
    :class:`SimResult` (or its dict): ``replications.csv``.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if isinstance(obj, WarpFit):
        grid = obj.grid
        curve = {
            "beta_hat": obj.beta_hat.beta_values,
            "beta_prime_hat": obj.beta_hat.deriv_values,
            "identity": grid.points,
            "w_hat": obj.w_hat,
        }
        io.write_density_csv(out / "beta_curve.csv", grid, curve)
        written.append(out / "beta_curve.csv")
        if data is not None:
            units = units or [str(i) for i in range(data.n)]
            overlay = {}
            for u, (f, g) in zip(units, data.pairs):
                overlay[f"f_{u}"] = f
                overlay[f"g_{u}"] = g
                overlay[f"ghat_{u}"] = predict(f, obj)
            io.write_density_csv(out / "density_overlay.csv", grid, overlay)
            written.append(out / "density_overlay.csv")
        if bands is not None:
            _write_ci_csv(out / "ci_band.csv", grid, *bands)
            written.append(out / "ci_band.csv")
        return written
    rows = obj.per_replication if isinstance(obj, SimResult) else obj["per_replication"]
    keys = ["replication", "warp_distance", "mean_hellinger", "baseline_hellinger", "lambda", "converged"]
    path = out / "replications.csv"
    with path.open("w", encoding="utf-8") as fh:
        fh.write(",".join(keys) + "\n")
        for row in rows:
            if row.get("failed"):
                continue
            fh.write(",".join(io.FLOAT_FMT.format(row[k]) if isinstance(row[k], float) else str(row[k])
                              for k in keys) + "\n")
    written.append(path)
    return written


def cmd_fit(args) -> int:
    units, data = io.read_regression_input(args.input, args.grid_points)
    _parse_lambda(args.lam)
    if args.level is not None and not 0 < args.level < 1:
        raise ConfigurationError("--level must lie in (0, 1)")
    manifest = RunManifest("fit", _echo(args), args.seed)
    result = _run_fit(data, args)
    payload = {"fit": io.fit_to_dict(result, units)}
    if args.reference_weight is not None:
        ref = weight_to_warp(np.full(data.grid.n_points, args.reference_weight), data.grid)
        payload["warp_distance_to_reference"] = warp_distance(result.beta_hat, ref)
    bands = None
    if args.ci is not None:
        bands = _bands(result, data, args.level or 0.95)
    out = Path(args.out)
    payload["manifest"] = manifest.finish()
    io.write_json(out, payload)
    if bands is not None:
        _write_ci_csv(Path(args.ci), data.grid, *bands)
        _write_sidecar(Path(args.ci), payload["manifest"])
    if args.plot_dir:
        emit_plot_data(result, args.plot_dir, data, units, bands)
    if not result.converged:
        logger.error("optimizer did not converge after %d iterations (gradient norm %.3g); %s written",
                     result.n_iter, result.grad_norm, out)
        return EXIT_NUMERICAL
    return EXIT_OK


def cmd_predict(args) -> int:
    result, _ = io.read_fit_json(args.fit)
    grid, dens = io.read_density_csv(args.density)
    if grid != result.grid:
        raise InputError(f"{args.density}: grid has {grid.n_points} points, fit uses {result.grid.n_points}")
    manifest = RunManifest("predict", _echo(args), args.seed)
    preds = {name: predict(f, result) for name, f in dens.items()}
    out = Path(args.out)
    io.write_density_csv(out, grid, preds)
    _write_sidecar(out, manifest.finish())
    return EXIT_OK


def cmd_infer(args) -> int:
    result, _ = io.read_fit_json(args.fit)
    _, data = io.read_regression_input(args.input, args.grid_points or result.grid.n_points)
    if data.grid != result.grid:
        raise InputError(f"{args.input}: grid does not match the fit")
    level = 0.95 if args.level is None else args.level
    if not 0 < level < 1:
        raise ConfigurationError("--level must lie in (0, 1)")
    manifest = RunManifest("infer", _echo(args), args.seed)
    bands = _bands(result, data, level)
    out = Path(args.out)
    _write_ci_csv(out, data.grid, *bands)
    _write_sidecar(out, manifest.finish())
    return EXIT_OK


def _density_ref(ref: str):
    path, _, column = ref.partition(":") if not Path(ref).exists() else (ref, "", "")
    _, dens = io.read_density_csv(path)
    if not column:
        return next(iter(dens.values()))
    if column not in dens:
        raise InputError(f"{path}: no column {column!r}")
    return dens[column]


def cmd_distance(args) -> int:
    if args.digits < 0:
        raise ConfigurationError("--digits must be non-negative")
    a, b = _density_ref(args.a), _density_ref(args.b)
    if a.grid != b.grid:
        raise InputError("the two densities use different grids")
    value = METRICS[args.metric](a, b)
    print(f"{value:.{args.digits}f}")
    return EXIT_OK


def _sim_config(args) -> SimConfig:
    lam = _parse_lambda(args.lam)
    return SimConfig(
        n=args.n, m1=args.m, m2=args.m, noise_halfwidth=args.noise, seed=args.seed,
        replications=args.reps, grid_points=args.grid_points or 1001, lam=lam,
        predictor_jitter=args.jitter, fit=_fit_config(args),
    )


def cmd_simulate(args) -> int:
    config = _sim_config(args)
    manifest = RunManifest("simulate", {**_echo(args), "resolved": config.to_dict()}, args.seed)
    if args.emit_pairs:
        emit = Path(args.emit_pairs)
        emit.mkdir(parents=True, exist_ok=True)
        for r in range(config.replications):
            data, _ = replication_data(config, r)
            io.write_pairs_csv(emit / f"rep{r:03d}.csv", [str(i) for i in range(data.n)], data)
    result = run_replications(config)
    payload = {**result.to_dict(), "config": config.to_dict(), "manifest": manifest.finish()}
    io.write_json(Path(args.out), payload)
    if args.plot_dir:
        emit_plot_data(result, args.plot_dir)
    return EXIT_OK


def _common(p: argparse.ArgumentParser, out_required=True):
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--grid-points", type=int, default=None, help="grid size (default 1001)")
    if out_required:
        p.add_argument("--out", required=True)


def _fit_flags(p: argparse.ArgumentParser):
    p.add_argument("--k", type=int, default=4, help="number of B-spline basis functions")
    p.add_argument("--lambda", dest="lam", default="1e-4", help="penalty weight or 'auto'")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--max-iter", type=int, default=500)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="densewarp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("fit", help="estimate the warping function")
    p.add_argument("--input", required=True, help="samples CSV (unit_id,variable,value) or pairs CSV")
    _common(p)
    _fit_flags(p)
    p.add_argument("--level", type=float, default=None)
    p.add_argument("--ci", default=None, help="also write pointwise intervals to this CSV")
    p.add_argument("--plot-dir", default=None)
    p.add_argument("--reference-weight", type=float, default=None,
                   help="report the warp distance to the warp generated by this constant weight")
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("predict", help="apply a fitted warp to densities")
    p.add_argument("--fit", required=True)
    p.add_argument("--density", required=True)
    _common(p)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("infer", help="pointwise confidence intervals")
    p.add_argument("--fit", required=True)
    p.add_argument("--input", required=True)
    p.add_argument("--level", type=float, default=0.95)
    _common(p)
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("distance", help="distance between two density columns")
    p.add_argument("a", help="CSV path, optionally path:column")
    p.add_argument("b", help="CSV path, optionally path:column")
    p.add_argument("--metric", choices=sorted(METRICS), default="hellinger")
    p.add_argument("--digits", type=int, default=6, help="decimal places printed")
    _common(p, out_required=False)
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("simulate", help="Monte Carlo replications")
    p.add_argument("--n", type=int, default=100)
    p.add_argument("--m", type=int, default=0, help="samples per density (0 uses true densities)")
    p.add_argument("--reps", type=int, default=50)
    p.add_argument("--noise", type=float, default=0.1)
    p.add_argument("--jitter", type=float, default=0.0, help="uniform jitter of the Beta parameters")
    p.add_argument("--emit-pairs", default=None, help="directory for per-replication pairs CSVs")
    p.add_argument("--plot-dir", default=None)
    _common(p)
    _fit_flags(p)
    p.set_defaults(func=cmd_simulate)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, OSError) as exc:
        logger.error("%s", exc)
        return EXIT_INPUT
    except ConfigurationError as exc:
        logger.error("%s", exc)
        return EXIT_CONFIG
    except (DensewarpError, ArithmeticError, np.linalg.LinAlgError) as exc:
        logger.error("numerical failure: %s", exc)
        return EXIT_NUMERICAL


if __name__ == "__main__":
    sys.exit(main())
