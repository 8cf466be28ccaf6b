"""Command-line front end.

Every subcommand takes a JSON config (validated up front; unknown keys are
rejected) and writes its outputs into --out.  Exit codes: 0 success (a fit
that hit max iterations still exits 0, with converged=false in its JSON),
1 usage or config error, 2 numerical hard error.
"""
from __future__ import annotations

import argparse
import json
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import io as slemio
from .covariates import MinuteStack, block_summaries, select_summary, standardize, summarize_blocks, SUMMARY_FNS
from .em import FitConfig, fit
from .errors import ConfigError, NumericalError
from .grid import CountGrid, GridSpec, bin_points, domain_mask, flatten, split_train_test, unflatten
from .posterior import estimate_intensity
from .scoring import DEFAULT_SCALE, ScoreReport, log_score, rmse_log_intensity
from .simulation import SimScenario, scatter_points, scenario_design, simulate_dataset
from .spectral import (CovParams, amplitude_for_variance,
                       calibrate_range_to_matern, quasi_matern_spectrum)


# ---------------------------------------------------------------------------
# config plumbing
# ---------------------------------------------------------------------------


def _load_config(path) -> dict:
    try:
        with open(path) as fh:
            doc = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"config {path} must be a JSON object")
    return doc


def _check_keys(doc: dict, allowed, required, where):
    unknown = set(doc) - set(allowed)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    missing = set(required) - set(doc)
    if missing:
        raise ConfigError(f"{where}: missing required keys {sorted(missing)}")


def _grid_from_doc(doc, where="grid") -> GridSpec:
    if not isinstance(doc, dict):
        raise ConfigError(f"{where} must be an object")
    _check_keys(doc, ("n1", "n2", "x_min", "x_max", "y_min", "y_max"),
                ("n1", "n2", "x_min", "x_max", "y_min", "y_max"), where)
    return GridSpec(int(doc["n1"]), int(doc["n2"]), float(doc["x_min"]),
                    float(doc["x_max"]), float(doc["y_min"]), float(doc["y_max"]))


def _grid_to_doc(grid: GridSpec) -> dict:
    return {"n1": grid.n1, "n2": grid.n2, "x_min": grid.x_min, "x_max": grid.x_max,
            "y_min": grid.y_min, "y_max": grid.y_max}


def _fit_config_from_doc(doc, seed_override=None) -> FitConfig:
    doc = dict(doc or {})
    if seed_override is not None:
        doc["seed"] = seed_override
    return FitConfig.from_dict(doc)


def _write_json(path, obj) -> None:
    with open(path, "w") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _read_counts(path, grid: GridSpec) -> CountGrid:
    vals = slemio.read_raster_csv(path)
    if np.any(~np.isfinite(vals)):
        raise ConfigError(f"{path}: counts raster contains missing values")
    return CountGrid(vals.astype(np.int64), grid)


def _read_design(path, grid: GridSpec):
    X, names = slemio.read_matrix_csv(path)
    if X.shape[0] != grid.n:
        raise ConfigError(f"{path}: design has {X.shape[0]} rows, grid needs {grid.n}")
    if np.any(~np.isfinite(X)):
        raise ConfigError(f"{path}: design matrix contains missing values")
    return X, names


def _raster_from_vector(vec, grid: GridSpec) -> np.ndarray:
    return unflatten(np.asarray(vec, dtype=float), grid.n1, grid.n2)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_grid(args) -> int:
    doc = _load_config(args.config)
    _check_keys(doc, ("points_csv", "grid"), ("points_csv", "grid"), "grid config")
    grid = _grid_from_doc(doc["grid"])
    pattern = slemio.read_points_csv(doc["points_csv"])
    inside = int(domain_mask(pattern, grid).sum())
    counts = bin_points(pattern, grid)
    out = os.path.join(args.out, "counts.csv")
    slemio.write_raster_csv(out, counts.values)
    print(f"binned {inside} of {len(pattern)} points "
          f"({len(pattern) - inside} outside the domain) -> {out}")
    return 0


def cmd_simulate(args) -> int:
    t0 = time.perf_counter()
    doc = _load_config(args.config)
    _check_keys(doc, ("grid", "sigma2", "alpha", "matern_range", "beta", "replicates", "seed"),
                ("grid", "sigma2", "beta"), "simulate config")
    grid = _grid_from_doc(doc["grid"])
    if ("alpha" in doc) == ("matern_range" in doc):
        raise ConfigError("simulate config needs exactly one of 'alpha' or 'matern_range'")
    sigma2 = float(doc["sigma2"])
    if "alpha" in doc:
        # direct spectral parameterization: sigma2 is the amplitude f(0)
        alpha = float(doc["alpha"])
    else:
        # Matern-calibrated scenario: sigma2 is the pixel variance of Z, so the
        # amplitude is rescaled by the shape mean after calibrating the range
        alpha = calibrate_range_to_matern(grid, float(doc["matern_range"]))
        sigma2 = amplitude_for_variance(sigma2, alpha, grid)
        print(f"calibrated quasi-Matern alpha = {alpha:.6g} "
              f"for Matern range {doc['matern_range']} "
              f"(spectral amplitude {sigma2:.6g})")
    seed = args.seed if args.seed is not None else int(doc.get("seed", 0))
    scenario = SimScenario(grid, CovParams(sigma2, alpha),
                           np.asarray(doc["beta"], dtype=float),
                           replicates=int(doc.get("replicates", 1)), seed=seed)

    X, Z, log_lam = scenario_design(scenario)
    slemio.write_raster_csv(os.path.join(args.out, "Z_true.csv"), _raster_from_vector(Z, grid))
    slemio.write_raster_csv(os.path.join(args.out, "log_lambda_true.csv"),
                            _raster_from_vector(log_lam, grid))
    files = {"Z_true": "Z_true.csv", "log_lambda_true": "log_lambda_true.csv"}
    if X is not None:
        names = ["intercept"] + [f"x{j}" for j in range(1, X.shape[1])]
        slemio.write_matrix_csv(os.path.join(args.out, "X.csv"), X, names)
        files["X"] = "X.csv"

    def one(rep):
        data = simulate_dataset(scenario, rep)
        y_name = f"Y_{rep:03d}.csv"
        p_name = f"points_{rep:03d}.csv"
        slemio.write_raster_csv(os.path.join(args.out, y_name), data.Y.values)
        pts = scatter_points(data.Y, seed=[seed, 3, rep])
        slemio.write_points_csv(os.path.join(args.out, p_name), pts)
        return rep, y_name, p_name, data.Y.total()

    jobs = max(1, args.jobs)
    if jobs > 1 and scenario.replicates > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(one, range(scenario.replicates)))
    else:
        results = [one(rep) for rep in range(scenario.replicates)]
    files["replicates"] = {str(rep): {"counts": y, "points": p, "total": tot}
                           for rep, y, p, tot in results}
    manifest = {"grid": _grid_to_doc(grid), "sigma2": scenario.eta_true.sigma2,
                "alpha": scenario.eta_true.alpha, "beta": list(map(float, scenario.beta_true)),
                "replicates": scenario.replicates, "seed": seed, "files": files,
                "runtime_seconds": time.perf_counter() - t0}
    _write_json(os.path.join(args.out, "manifest.json"), manifest)
    print(f"wrote {scenario.replicates} replicate(s) to {args.out}")
    return 0


def _run_fit(doc, grid, args):
    Y = _read_counts(doc["counts_csv"], grid)
    X = None
    if doc.get("covariates_csv"):
        X, _ = _read_design(doc["covariates_csv"], grid)
    config = _fit_config_from_doc(doc.get("fit"), seed_override=args.seed)
    return Y, X, config, fit(Y, X, grid, config)


def cmd_fit(args) -> int:
    doc = _load_config(args.config)
    _check_keys(doc, ("grid", "counts_csv", "covariates_csv", "fit"),
                ("grid", "counts_csv"), "fit config")
    grid = _grid_from_doc(doc["grid"])
    _, _, config, result = _run_fit(doc, grid, args)

    theta = {"beta": [float(b) for b in result.theta_star.beta],
             "sigma2": result.theta_star.eta.sigma2,
             "alpha": result.theta_star.eta.alpha,
             "converged": result.converged,
             "em_iterations": result.em_iterations}
    _write_json(os.path.join(args.out, "theta.json"), theta)
    slemio.write_raster_csv(os.path.join(args.out, "W_star.csv"),
                            _raster_from_vector(result.W_star, grid))
    slemio.write_raster_csv(os.path.join(args.out, "Z_star.csv"),
                            _raster_from_vector(result.Z_star, grid))
    with open(os.path.join(args.out, "objective_trace.csv"), "w") as fh:
        fh.write("iteration,q_incumbent,q_updated\n")
        for i, (qi, qu) in enumerate(result.objective_trace):
            fh.write(f"{i},{qi!r},{qu!r}\n")
    _write_json(os.path.join(args.out, "diagnostics.json"),
                _jsonable(result.diagnostics))
    runtime = result.diagnostics.get("runtime_seconds", float("nan"))
    print(f"fit finished in {result.em_iterations} EM iteration(s), "
          f"converged={str(result.converged).lower()}, {runtime:.2f}s -> {args.out}")
    return 0


def cmd_predict(args) -> int:
    t0 = time.perf_counter()
    doc = _load_config(args.config)
    _check_keys(doc, ("grid", "theta_json", "w_star_csv", "covariates_csv", "k"),
                ("grid", "theta_json", "w_star_csv"), "predict config")
    grid = _grid_from_doc(doc["grid"])
    with open(doc["theta_json"]) as fh:
        theta = json.load(fh)
    beta = np.asarray(theta.get("beta", []), dtype=float)
    eta = CovParams(float(theta["sigma2"]), float(theta["alpha"]))
    W_star = flatten(slemio.read_raster_csv(doc["w_star_csv"]))
    X = None
    if doc.get("covariates_csv"):
        X, _ = _read_design(doc["covariates_csv"], grid)
    if (X is None) != (beta.size == 0):
        raise ConfigError("covariates_csv and theta beta must be present together")

    est = estimate_intensity(W_star, X, beta, quasi_matern_spectrum(eta, grid),
                             grid.delta(), k=int(doc.get("k", 5)))
    slemio.write_raster_csv(os.path.join(args.out, "local_var.csv"),
                            _raster_from_vector(est.local_var, grid))
    slemio.write_raster_csv(os.path.join(args.out, "latent_mean.csv"),
                            _raster_from_vector(est.latent_mean, grid))
    slemio.write_raster_csv(os.path.join(args.out, "intensity.csv"),
                            _raster_from_vector(est.intensity, grid))
    files = ["local_var.csv", "latent_mean.csv", "intensity.csv"]
    if args.sqrt_display:
        slemio.write_raster_csv(os.path.join(args.out, "intensity_sqrt.csv"),
                                _raster_from_vector(np.sqrt(est.intensity), grid))
        files.append("intensity_sqrt.csv")
    _write_json(os.path.join(args.out, "predict.json"),
                {"k": int(doc.get("k", 5)), "files": files,
                 "runtime_seconds": time.perf_counter() - t0})
    print(f"posterior intensity -> {args.out}")
    return 0


def cmd_score(args) -> int:
    doc = _load_config(args.config)
    _check_keys(doc, ("grid", "points_csv", "covariates_csv", "fit", "train_fraction",
                      "scale", "k", "split_seed", "plugin_intensity", "log_lambda_true_csv"),
                ("grid", "points_csv"), "score config")
    grid = _grid_from_doc(doc["grid"])
    t0 = time.perf_counter()
    pattern = slemio.read_points_csv(doc["points_csv"])
    split_seed = args.seed if args.seed is not None else int(doc.get("split_seed", 0))
    train_pts, test_pts = split_train_test(pattern, float(doc.get("train_fraction", 0.9)),
                                           seed=split_seed)
    Y_train = bin_points(train_pts, grid)
    Y_test = bin_points(test_pts, grid)

    X = None
    if doc.get("covariates_csv"):
        X, _ = _read_design(doc["covariates_csv"], grid)
    config = _fit_config_from_doc(doc.get("fit"), seed_override=args.seed)
    result = fit(Y_train, X, grid, config)

    f_star = quasi_matern_spectrum(result.theta_star.eta, grid)
    if doc.get("plugin_intensity", False):
        lam = np.exp(result.W_star)
    else:
        est = estimate_intensity(result.W_star, X, result.theta_star.beta, f_star,
                                 grid.delta(), k=int(doc.get("k", 5)))
        lam = est.intensity
    scale = float(doc.get("scale", DEFAULT_SCALE))
    ls = log_score(Y_test, lam, grid.delta(), scale=scale)

    rmse_full = rmse_interior = None
    if doc.get("log_lambda_true_csv"):
        truth = flatten(slemio.read_raster_csv(doc["log_lambda_true_csv"]))
        rmse_full, rmse_interior = rmse_log_intensity(result.W_star, truth, grid)
    report = ScoreReport(ls, rmse_full, rmse_interior, time.perf_counter() - t0)
    _write_json(os.path.join(args.out, "score.json"), report.to_dict())
    print(f"log score {ls:.4f} on {Y_test.total()} held-out points -> {args.out}")
    return 0


def cmd_covariates(args) -> int:
    t0 = time.perf_counter()
    doc = _load_config(args.config)
    _check_keys(doc, ("grid", "stack", "counts_csv", "extra_rasters"),
                ("grid", "stack", "counts_csv"), "covariates config")
    grid = _grid_from_doc(doc["grid"])
    stack = MinuteStack(slemio.read_minute_stack(doc["stack"], grid), grid)
    Y = _read_counts(doc["counts_csv"], grid)
    delta = grid.delta()

    diffs, means = block_summaries(stack)
    report = {}
    chosen = {}
    for family, blocks in (("x1", diffs), ("x2", means)):
        cands = [summarize_blocks(blocks, fn) for fn in SUMMARY_FNS]
        idx, lls = select_summary(Y, delta, cands)
        chosen[family] = (SUMMARY_FNS[idx], cands[idx])
        report[family] = {"chosen": SUMMARY_FNS[idx],
                          "log_likelihood": dict(zip(SUMMARY_FNS, map(float, lls)))}

    columns = [chosen["x1"][1], chosen["x2"][1]]
    names = [f"x1_{chosen['x1'][0]}", f"x2_{chosen['x2'][0]}"]
    for name, path in sorted((doc.get("extra_rasters") or {}).items()):
        columns.append(slemio.read_raster_csv(path))
        names.append(name)
    design = standardize(columns, grid, names=names)
    report["n_imputed"] = design.n_imputed
    report["runtime_seconds"] = time.perf_counter() - t0

    for name, col in zip(names, columns):
        slemio.write_raster_csv(os.path.join(args.out, f"{name}.csv"), np.asarray(col, float))
    slemio.write_matrix_csv(os.path.join(args.out, "X.csv"), design.X, list(design.names))
    _write_json(os.path.join(args.out, "selection.json"), report)
    print(f"selected {names[0]} and {names[1]}; design with "
          f"{design.X.shape[1]} columns -> {args.out}")
    return 0


def _jsonable(obj):
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


# ---------------------------------------------------------------------------
# parser and entry point
# ---------------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse would sys.exit(2); we map usage to 1
        raise ConfigError(message)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="slem",
                     description="Gridded Cox process fitting via spectral EM")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, func, desc in (
        ("grid", cmd_grid, "bin a point CSV onto a grid"),
        ("simulate", cmd_simulate, "draw synthetic counts from a scenario"),
        ("fit", cmd_fit, "fit the model to a counts raster"),
        ("predict", cmd_predict, "posterior intensity from a fitted model"),
        ("score", cmd_score, "train/test split, refit, out-of-sample log score"),
        ("covariates", cmd_covariates, "minute stack -> selected, standardized design"),
    ):
        p = sub.add_parser(name, help=desc, description=desc)
        p.add_argument("--config", required=True, help="JSON config path")
        p.add_argument("--out", default=".", help="output directory (created if missing)")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--jobs", type=int, default=1, help="parallel workers across replicates")
        p.add_argument("--sqrt-display", action="store_true",
                       help="also export square-root transformed intensity")
        p.set_defaults(func=func)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.jobs < 1:
            raise ConfigError(f"--jobs must be >= 1, got {args.jobs}")
        os.makedirs(args.out, exist_ok=True)
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
