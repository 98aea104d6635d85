"""CSV and JSON formats.

* samples CSV (long): ``unit_id,variable,value`` with ``variable`` in {f, g}
* density CSV (wide): ``omega`` then one column per unit
* pairs CSV (wide): ``omega`` then ``f_<unit>`` / ``g_<unit>`` column pairs
* warp CSV: ``omega,beta,beta_prime``
* fit JSON: coefficients, penalty, grid, warp curves and diagnostics
"""
from __future__ import annotations

import csv
import json
import math
from pathlib import Path

import numpy as np

from .errors import DensewarpError, InputError
from .estimator import RegressionData, WarpFit
from .grid_density import DEFAULT_GRID_POINTS, Grid, GridDensity, SampleSet, kde, rescale_to_unit
from .warping import BasisExpansion, WarpingFunction

FLOAT_FMT = "{:.17g}"
SAMPLE_COLUMNS = ("unit_id", "variable", "value")


def _fmt(x: float) -> str:
    return FLOAT_FMT.format(float(x))


def read_samples_csv(path) -> dict[str, dict[str, np.ndarray]]:
    """Read long-format samples into ``{unit_id: {"f": array, "g": array}}``."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = [h.strip() for h in next(reader)]
        except StopIteration:
            raise InputError(f"{path}: empty file, expected header {','.join(SAMPLE_COLUMNS)}") from None
        missing = [c for c in SAMPLE_COLUMNS if c not in header]
        if missing:
            raise InputError(f"{path}: missing column(s) {', '.join(missing)}")
        pos = {c: header.index(c) for c in SAMPLE_COLUMNS}
        raw: dict[str, dict[str, list[float]]] = {}
        for line_no, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) < len(header):
                raise InputError(f"{path}: row {line_no} has {len(row)} fields, expected {len(header)}")
            unit = row[pos["unit_id"]].strip()
            var = row[pos["variable"]].strip()
            if var not in ("f", "g"):
                raise InputError(f"{path}: row {line_no}, column 'variable': expected f or g, got {var!r}")
            try:
                value = float(row[pos["value"]])
            except ValueError:
                raise InputError(
                    f"{path}: row {line_no}, column 'value': not a number ({row[pos['value']]!r})"
                ) from None
            if not math.isfinite(value):
                raise InputError(f"{path}: row {line_no}, column 'value': non-finite value")
            raw.setdefault(unit, {"f": [], "g": []})[var].append(value)
    if not raw:
        raise InputError(f"{path}: no data rows")
    out = {}
    for unit, parts in raw.items():
        if not parts["f"] or not parts["g"]:
            raise InputError(f"{path}: unit {unit!r} needs both f and g rows")
        for var in ("f", "g"):
            if len(set(parts[var])) < 2:
                raise InputError(f"{path}: unit {unit!r} needs at least two distinct {var} values")
        out[unit] = {var: np.asarray(vals) for var, vals in parts.items()}
    return out


def samples_to_data(samples: dict[str, dict[str, np.ndarray]], grid: Grid,
                    bandwidth: float | None = None) -> tuple[list[str], RegressionData]:
    """Rescale each variable (pooled over units) to [0, 1], then estimate densities."""
    units = list(samples)
    pooled = {}
    for var in ("f", "g"):
        allvals = np.concatenate([samples[u][var] for u in units])
        _, (shift, scale) = rescale_to_unit(allvals)
        pooled[var] = (shift, scale)
    fs, gs = [], []
    for u in units:
        dens = {}
        for var, tag in (("f", "predictor"), ("g", "outcome")):
            shift, scale = pooled[var]
            x = np.clip((samples[u][var] - shift) / scale, 0.0, 1.0)
            dens[var] = kde(SampleSet(u, tag, x), grid, bandwidth)
        fs.append(dens["f"])
        gs.append(dens["g"])
    return units, RegressionData.from_lists(fs, gs)


def write_samples_csv(path, samples: dict[str, dict[str, np.ndarray]]):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(SAMPLE_COLUMNS)
        for unit, parts in samples.items():
            for var in ("f", "g"):
                for v in parts[var]:
                    w.writerow([unit, var, _fmt(v)])


def grid_from_omega(omega: np.ndarray, source="input") -> Grid:
    if omega.size < 2:
        raise InputError(f"{source}: need at least two grid points")
    grid = Grid(omega.size)
    if np.max(np.abs(omega - grid.points)) > 1e-9:
        raise InputError(f"{source}: omega column must be a uniform grid from 0 to 1")
    return grid


def read_density_csv(path) -> tuple[Grid, dict[str, GridDensity]]:
    """Read a wide density table; every column is validated as a density."""
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InputError(f"{path}: empty file")
    header = [h.strip() for h in rows[0]]
    if not header or header[0] != "omega":
        raise InputError(f"{path}: first column must be 'omega'")
    if len(header) < 2:
        raise InputError(f"{path}: no density columns")
    body = [r for r in rows[1:] if r and any(c.strip() for c in r)]
    try:
        table = np.array([[float(c) for c in r] for r in body])
    except ValueError as exc:
        raise InputError(f"{path}: non-numeric entry ({exc})") from None
    if table.ndim != 2 or table.shape[1] != len(header):
        raise InputError(f"{path}: ragged rows, expected {len(header)} fields per row")
    grid = grid_from_omega(table[:, 0], str(path))
    out = {}
    for j, name in enumerate(header[1:], start=1):
        try:
            out[name] = GridDensity(grid, table[:, j])
        except DensewarpError as exc:
            raise InputError(f"{path}: column {name!r}: {exc}") from None
    return grid, out


def write_density_csv(path, grid: Grid, densities: dict[str, np.ndarray | GridDensity]):
    names = list(densities)
    cols = [np.asarray(getattr(d, "values", d)) for d in densities.values()]
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", *names])
        for j, x in enumerate(grid.points):
            w.writerow([_fmt(x), *(_fmt(c[j]) for c in cols)])


def read_density_pairs(f_path, g_path) -> tuple[list[str], RegressionData]:
    grid_f, fs = read_density_csv(f_path)
    grid_g, gs = read_density_csv(g_path)
    if grid_f != grid_g:
        raise InputError(f"{f_path} and {g_path} use different grids")
    if list(fs) != list(gs):
        raise InputError(f"{f_path} and {g_path} have different unit columns")
    units = list(fs)
    return units, RegressionData.from_lists([fs[u] for u in units], [gs[u] for u in units])


def write_pairs_csv(path, units: list[str], data: RegressionData):
    cols = {}
    for u, (f, g) in zip(units, data.pairs):
        cols[f"f_{u}"] = f
        cols[f"g_{u}"] = g
    write_density_csv(path, data.grid, cols)


def read_pairs_csv(path) -> tuple[list[str], RegressionData]:
    _, cols = read_density_csv(path)
    f_units = [name[2:] for name in cols if name.startswith("f_")]
    g_units = [name[2:] for name in cols if name.startswith("g_")]
    stray = [name for name in cols if name[:2] not in ("f_", "g_")]
    if stray:
        raise InputError(f"{path}: column {stray[0]!r} is neither f_<unit> nor g_<unit>")
    if sorted(f_units) != sorted(g_units) or len(set(f_units)) != len(f_units):
        raise InputError(f"{path}: every unit needs exactly one f_ and one g_ column")
    if not f_units:
        raise InputError(f"{path}: no density pairs")
    return f_units, RegressionData.from_lists([cols[f"f_{u}"] for u in f_units],
                                              [cols[f"g_{u}"] for u in f_units])


def sniff_header(path) -> list[str]:
    with Path(path).open(newline="", encoding="utf-8") as fh:
        try:
            return [h.strip() for h in next(csv.reader(fh))]
        except StopIteration:
            raise InputError(f"{path}: empty file") from None


def read_regression_input(path, grid_points: int | None = None,
                          bandwidth: float | None = None) -> tuple[list[str], RegressionData]:
    """Load either a long samples CSV (densities estimated by KDE) or a wide pairs CSV."""
    header = sniff_header(path)
    if header and header[0] == "omega":
        units, data = read_pairs_csv(path)
        if grid_points is not None and grid_points != data.grid.n_points:
            raise InputError(f"{path}: file grid has {data.grid.n_points} points, --grid-points says {grid_points}")
        return units, data
    samples = read_samples_csv(path)
    try:
        return samples_to_data(samples, Grid(grid_points or DEFAULT_GRID_POINTS), bandwidth)
    except DensewarpError as exc:
        if isinstance(exc, InputError):
            raise
        raise InputError(f"{path}: {exc}") from None


def write_warp_csv(path, warp: WarpingFunction):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["omega", "beta", "beta_prime"])
        for x, b, d in zip(warp.grid.points, warp.beta_values, warp.deriv_values):
            w.writerow([_fmt(x), _fmt(b), _fmt(d)])


def read_warp_csv(path) -> WarpingFunction:
    table = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    grid = grid_from_omega(table[:, 0], str(path))
    return WarpingFunction(grid, table[:, 1], table[:, 2])


def fit_to_dict(fit: WarpFit, units: list[str] | None = None) -> dict:
    coef = fit.coefficients
    return {
        "coefficients": coef.coefficients.tolist(),
        "n_basis": coef.n_basis,
        "order": coef.order,
        "include_constant": coef.include_constant,
        "basis_kind": coef.basis_kind,
        "lambda": fit.lambda_used,
        "grid_points": fit.grid.n_points,
        "omega": fit.grid.points.tolist(),
        "beta_hat": fit.beta_hat.beta_values.tolist(),
        "beta_prime_hat": fit.beta_hat.deriv_values.tolist(),
        "w_hat": fit.w_hat.tolist(),
        "units": units,
        "per_unit_hellinger": fit.per_unit_hellinger.tolist(),
        "objective_trace": list(fit.objective_trace),
        "converged": fit.converged,
        "n_iter": fit.n_iter,
        "grad_norm": fit.grad_norm,
        "seed": fit.seed,
        "cv_scores": None if fit.cv_scores is None else {repr(k): v for k, v in fit.cv_scores.items()},
    }


def fit_from_dict(d: dict) -> WarpFit:
    try:
        grid = Grid(int(d["grid_points"]))
        coef = BasisExpansion(
            np.asarray(d["coefficients"]), int(d["n_basis"]), int(d["order"]),
            bool(d["include_constant"]), d.get("basis_kind", "bspline"),
        )
        warp = WarpingFunction(grid, np.asarray(d["beta_hat"]), np.asarray(d["beta_prime_hat"]))
        cv = d.get("cv_scores")
        return WarpFit(
            coefficients=coef,
            beta_hat=warp,
            lambda_used=float(d["lambda"]),
            objective_trace=list(d["objective_trace"]),
            converged=bool(d["converged"]),
            per_unit_hellinger=np.asarray(d["per_unit_hellinger"]),
            n_iter=int(d.get("n_iter", 0)),
            grad_norm=float(d.get("grad_norm", float("nan"))),
            seed=d.get("seed"),
            cv_scores=None if cv is None else {float(k): v for k, v in cv.items()},
        )
    except (KeyError, TypeError, DensewarpError) as exc:
        raise InputError(f"invalid fit document: {exc}") from None


def write_json(path, payload: dict):
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def read_fit_json(path) -> tuple[WarpFit, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"{path}: cannot read fit JSON ({exc})") from None
    return fit_from_dict(doc.get("fit", doc)), doc
