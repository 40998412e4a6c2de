"""Command-line front end: estimate, cv, simulate, evaluate.

Configuration comes from an optional key=value file plus flags, flags
winning. Every run writes a manifest (resolved configuration, seed, package
version, wall time) next to its artifacts so any output can be reproduced
byte-for-byte. All randomness flows from the one top-level seed through
named substreams.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""

import argparse
import csv
import json
import math
import os
import sys
import time

from . import __version__, evaluate, extract, panel_io, simulate, solver, tuning
from .errors import (ConfigError, DegenerateInput, FormatError, InvalidInput,
                     NumericalFailure, TuningFailure)
from .problems import FamilyKind, ModelFamily
from .seeding import child_seed

_FLOAT_FMT = "%.17e"

_DEFAULTS = {
    "family": None,  # resolved per command: simulate keys off the DGP
    "zero_alpha": False,
    "lambda_c": None,
    "delta": None,
    "cv": False,
    "folds": 5,
    "grid": "simulation",
    "dgp": 3,
    "n": 50,
    "t": 50,
    "reps": 20,
    "sweep_reps": 0,
    "burn_in": None,
    "k_max": 5,
    "seed": 0,
    "out": "nnfactor_out",
    "tol": 1e-5,
    "max_iter": 5000,
    "data": None,
    "asset_col": "asset_id",
    "period_col": "period",
    "return_col": "return",
    "chars": None,
    "spline_chars": None,
    "rank_transform": False,
    "no_intercept": False,
}

_BOOL_KEYS = {"zero_alpha", "cv", "rank_transform", "no_intercept"}
_INT_KEYS = {"folds", "dgp", "n", "t", "reps", "sweep_reps", "burn_in",
             "k_max", "seed", "max_iter"}
_FLOAT_KEYS = {"lambda_c", "delta", "tol"}


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="nnfactor",
        description="Nuclear-norm regularized conditional factor models")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name, desc in (("estimate", "fit one panel and archive the factors"),
                       ("cv", "cross-validate the tuning constant"),
                       ("simulate", "Monte Carlo study tables and curves"),
                       ("evaluate", "in- and out-of-sample R-squared scores")):
        p = sub.add_parser(name, help=desc)
        p.add_argument("--config", help="key=value file; flags override it")
        p.add_argument("--family", choices=[k.value for k in FamilyKind])
        p.add_argument("--zero-alpha", dest="zero_alpha", action="store_const", const=True)
        p.add_argument("--lambda-c", dest="lambda_c", type=float)
        p.add_argument("--delta", type=float)
        p.add_argument("--cv", action="store_const", const=True)
        p.add_argument("--folds", type=int)
        p.add_argument("--grid", help="grid preset name or comma list of c values")
        p.add_argument("--seed", type=int)
        p.add_argument("--out", help="output directory")
        p.add_argument("--tol", type=float)
        p.add_argument("--max-iter", dest="max_iter", type=int)
        if name == "simulate":
            p.add_argument("--dgp", type=int, choices=(1, 2, 3))
            p.add_argument("--n", type=int)
            p.add_argument("--t", type=int)
            p.add_argument("--reps", type=int)
            p.add_argument("--sweep-reps", dest="sweep_reps", type=int,
                           help="also emit the fixed-c curve with this many replications")
        else:
            p.add_argument("--data", help="long CSV panel path")
            p.add_argument("--asset-col", dest="asset_col")
            p.add_argument("--period-col", dest="period_col")
            p.add_argument("--return-col", dest="return_col")
            p.add_argument("--chars", help="comma list of characteristic columns")
            p.add_argument("--spline-chars", dest="spline_chars",
                           help="comma list of spline-expanded columns")
            p.add_argument("--rank-transform", dest="rank_transform",
                           action="store_const", const=True)
            p.add_argument("--no-intercept", dest="no_intercept",
                           action="store_const", const=True)
        if name == "evaluate":
            p.add_argument("--burn-in", dest="burn_in", type=int)
            p.add_argument("--k-max", dest="k_max", type=int)
    return parser


def _read_config_file(path) -> dict:
    if not os.path.exists(path):
        raise ConfigError(f"config file not found: {path}")
    out = {}
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value")
            key, value = line.split("=", 1)
            key = key.strip().lstrip("-").replace("-", "_")
            if key not in _DEFAULTS:
                raise ConfigError(f"{path}:{lineno}: unknown key {key!r}")
            out[key] = value.strip()
    return out


def _coerce(key, value):
    if value is None or not isinstance(value, str):
        return value
    if key in _BOOL_KEYS:
        lowered = value.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean {key}={value!r}")
    try:
        if key in _INT_KEYS:
            return int(value)
        if key in _FLOAT_KEYS:
            return float(value)
    except ValueError:
        raise ConfigError(f"cannot parse {key}={value!r}") from None
    return value


def resolve_config(args: argparse.Namespace) -> dict:
    """Merge defaults, config file, and flags (flags win)."""
    cfg = dict(_DEFAULTS)
    if getattr(args, "config", None):
        for k, v in _read_config_file(args.config).items():
            cfg[k] = _coerce(k, v)
    for k, v in vars(args).items():
        if k in ("command", "config") or v is None:
            continue
        cfg[k] = v
    cfg["command"] = args.command
    if cfg["lambda_c"] is not None and cfg["cv"]:
        raise ConfigError("choose either --lambda-c or --cv, not both")
    return cfg


def _parse_grid(text) -> tuple:
    if text in tuning.GRID_PRESETS:
        return tuning.GRID_PRESETS[text]
    try:
        return tuple(float(v) for v in str(text).split(","))
    except ValueError:
        raise ConfigError(f"grid must be a preset name or comma list, got {text!r}") from None


def _family(cfg) -> ModelFamily:
    kind = cfg["family"] if cfg["family"] is not None else "unconstrained"
    return ModelFamily(FamilyKind(kind), zero_alpha=cfg["zero_alpha"])


def _solver_opts(cfg) -> dict:
    return {"tolerance": cfg["tol"], "max_iterations": cfg["max_iter"]}


def _load_design(cfg):
    if not cfg["data"]:
        raise ConfigError("this command needs --data")
    schema = panel_io.PanelSchema(asset_col=cfg["asset_col"],
                                  period_col=cfg["period_col"],
                                  return_col=cfg["return_col"])
    table = panel_io.load_panel(cfg["data"], schema)
    chars = (tuple(cfg["chars"].split(",")) if cfg["chars"]
             else tuple(table.characteristics))
    splines = tuple(cfg["spline_chars"].split(",")) if cfg["spline_chars"] else ()
    chars = tuple(c for c in chars if c not in splines)
    spec = panel_io.DesignSpec(intercept=not cfg["no_intercept"],
                               raw_columns=chars,
                               rank_transform=cfg["rank_transform"],
                               spline_columns=splines)
    return table, panel_io.build_design(table, spec)


def _write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _fmt(v) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return ""
    if isinstance(v, float):
        return _FLOAT_FMT % v
    return str(v)


def _write_manifest(cfg, out_dir, artifacts, started):
    manifest = {
        "config": {k: cfg[k] for k in sorted(cfg)},
        "package_version": __version__,
        "artifacts": sorted(artifacts),
        "wall_time_s": round(time.time() - started, 3),
    }
    with open(os.path.join(out_dir, "manifest.json"), "w", encoding="utf-8") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _choose_c(panel, family, cfg):
    """Resolved tuning constant plus the CV table (None without --cv)."""
    if cfg["cv"]:
        plan = tuning.CvPlan(n_folds=cfg["folds"], grid=_parse_grid(cfg["grid"]),
                             seed=child_seed(cfg["seed"], "folds"))
        result = tuning.cross_validate(panel, family, plan, _solver_opts(cfg))
        return result.chosen_c, result
    if cfg["lambda_c"] is not None:
        return cfg["lambda_c"], None
    return 0.0, None


def _cmd_estimate(cfg, out_dir):
    _, panel = _load_design(cfg)
    family = _family(cfg)
    c, cv_result = _choose_c(panel, family, cfg)
    lam = solver.default_lambda(panel, family, c)
    fit = extract.fit_panel(panel, family,
                            solver.SolverConfig(lam=lam, **_solver_opts(cfg)))
    delta = cfg["delta"] if cfg["delta"] is not None else extract.default_delta(panel, family)
    est = extract.extract_factors(fit, delta=delta)
    archive = os.path.join(out_dir, "estimate")
    panel_io.save_estimate(est, archive, lambda_used=lam, solver_report=fit.report)
    artifacts = ["estimate"]
    if cv_result is not None:
        _write_cv_csv(os.path.join(out_dir, "cv_results.csv"), cv_result)
        artifacts.append("cv_results.csv")
    print(f"family={family.kind.value} K_hat={est.k_hat} lambda={lam:.6g} "
          f"delta={delta:.6g} iterations={fit.report.iterations} "
          f"converged={fit.report.converged}")
    return artifacts


def _write_cv_csv(path, result):
    rows = [[_fmt(c), _fmt(result.per_c_mse[c])] for c in sorted(result.per_c_mse)]
    _write_csv(path, ["c", "mse"], rows)


def _cmd_cv(cfg, out_dir):
    _, panel = _load_design(cfg)
    family = _family(cfg)
    plan = tuning.CvPlan(n_folds=cfg["folds"], grid=_parse_grid(cfg["grid"]),
                         seed=child_seed(cfg["seed"], "folds"))
    result = tuning.cross_validate(panel, family, plan, _solver_opts(cfg))
    _write_cv_csv(os.path.join(out_dir, "cv_results.csv"), result)
    print(f"chosen_c={result.chosen_c} fold_sizes={result.fold_sizes}")
    return ["cv_results.csv"]


def _cmd_simulate(cfg, out_dir):
    spec = simulate.DgpSpec(cfg["dgp"], cfg["n"], cfg["t"],
                            seed=child_seed(cfg["seed"], "dgp"))
    if cfg["family"] is None and not cfg["zero_alpha"]:
        family = simulate.DEFAULT_FAMILY[cfg["dgp"]]
    else:
        family = _family(cfg)
    grid = _parse_grid(cfg["grid"])
    if cfg["cv"] or cfg["lambda_c"] is None:
        cfg["cv"] = True  # CV is the study default; keep the manifest honest
        plan = tuning.CvPlan(n_folds=cfg["folds"], grid=grid,
                             seed=child_seed(cfg["seed"], "folds"))
    else:
        plan = cfg["lambda_c"]
    report = simulate.run_study(spec, family, plan, reps=cfg["reps"],
                                solver_opts=_solver_opts(cfg))
    columns = simulate.TABLE_COLUMNS[family.kind]
    header = (["dgp", "n", "t", "reps"] + [f"mse_{m}" for m in columns]
              + ["k_correct_rate", "n_failures"])
    row = ([cfg["dgp"], cfg["n"], cfg["t"], cfg["reps"]]
           + [_fmt(report.mse(m)) for m in columns]
           + [_fmt(report.k_correct_rate), report.n_failures])
    _write_csv(os.path.join(out_dir, "table.csv"), header, [row])
    artifacts = ["table.csv"]
    if cfg["sweep_reps"] > 0:
        curve = simulate.fixed_c_sweep(spec, family, grid=grid,
                                       reps=cfg["sweep_reps"],
                                       cv_plan=tuning.CvPlan(
                                           n_folds=cfg["folds"], grid=grid,
                                           seed=child_seed(cfg["seed"], "folds")),
                                       solver_opts=_solver_opts(cfg))
        rows = [[_fmt(c), _fmt(m), ""] for c, m in sorted(curve["fixed"].items())]
        rows.append(["cv", "", _fmt(curve["cv"])])
        _write_csv(os.path.join(out_dir, "curve.csv"),
                   ["c", "mse_fixed", "mse_cv"], rows)
        artifacts.append("curve.csv")
    print(f"dgp={cfg['dgp']} reps={cfg['reps']} "
          f"mse({columns[0]})={report.mse(columns[0]):.6g} "
          f"k_correct_rate={report.k_correct_rate:.3f}")
    return artifacts


def _cmd_evaluate(cfg, out_dir):
    _, panel = _load_design(cfg)
    family = _family(cfg)
    burn_in = cfg["burn_in"]
    if burn_in is None:
        burn_in = max(2, panel.n_periods // 2 + 1)
    c, _ = _choose_c(panel, family, cfg)
    lam = solver.default_lambda(panel, family, c)
    fit = extract.fit_panel(panel, family,
                            solver.SolverConfig(lam=lam, **_solver_opts(cfg)))
    if cfg["cv"]:
        # Recursive scheme reselects c once on the burn-in window.
        plan = tuning.CvPlan(n_folds=cfg["folds"], grid=_parse_grid(cfg["grid"]),
                             seed=child_seed(cfg["seed"], "folds"))
        oos = evaluate.out_of_sample_r2(panel, family, burn_in, cv_plan=plan,
                                        solver_opts=_solver_opts(cfg))
    else:
        oos = evaluate.out_of_sample_r2(panel, family, burn_in, c=c,
                                        solver_opts=_solver_opts(cfg))
    rows = []
    for k in range(1, cfg["k_max"] + 1):
        est = extract.extract_factors(fit, k=k)
        r2, r2_ts, r2_cs = evaluate.in_sample_r2(panel, est)
        rows.append([family.kind.value, k, _fmt(r2), _fmt(r2_ts), _fmt(r2_cs),
                     _fmt(oos[0]), _fmt(oos[1]), _fmt(oos[2])])
    _write_csv(os.path.join(out_dir, "scores.csv"),
               ["model", "k", "r2_total", "r2_ts_avg", "r2_cs_avg",
                "r2o_total", "r2o_ts_avg", "r2o_cs_avg"], rows)
    print(f"burn_in={burn_in} c={c} r2o_total={oos[0]:.6g}")
    return ["scores.csv"]


_COMMANDS = {"estimate": _cmd_estimate, "cv": _cmd_cv,
             "simulate": _cmd_simulate, "evaluate": _cmd_evaluate}


def run(cfg: dict) -> int:
    """Execute a resolved configuration; returns the process exit status."""
    started = time.time()
    out_dir = cfg["out"]
    try:
        os.makedirs(out_dir, exist_ok=True)
    except OSError as exc:
        _emit_error(None, 2, f"cannot create output directory: {exc}")
        return 2
    try:
        artifacts = _COMMANDS[cfg["command"]](cfg, out_dir)
    except (ConfigError, InvalidInput, DegenerateInput) as exc:
        _emit_error(out_dir, 2, str(exc))
        return 2
    except (FormatError, FileNotFoundError) as exc:
        _emit_error(out_dir, 3, str(exc))
        return 3
    except (NumericalFailure, TuningFailure) as exc:
        _emit_error(out_dir, 4, str(exc))
        return 4
    _write_manifest(cfg, out_dir, artifacts, started)
    return 0


def _emit_error(out_dir, code, message):
    record = {"error": message, "exit_code": code}
    sys.stderr.write(json.dumps(record) + "\n")
    if out_dir and os.path.isdir(out_dir):
        with open(os.path.join(out_dir, "error.json"), "w", encoding="utf-8") as fh:
            json.dump(record, fh, indent=2)
            fh.write("\n")


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        cfg = resolve_config(args)
    except ConfigError as exc:
        _emit_error(None, 2, str(exc))
        return 2
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
