"""Command-line front end: forecast, optimize, sweep, evaluate.

Every subcommand reads one JSON run configuration (``--config``) naming
the network file, the supply history CSV and an output directory, plus
per-stage settings.  Outputs are plain CSV/JSON files written
atomically; given the same config, seed and input files the value files
are byte identical across runs (wall-clock timings appear only in the
per-run report and in the solver trace).

Exit codes: 0 success, 2 invalid input or configuration, 3 solver or
resource limit, 4 file I/O failure.  ``GASFLOW_LOG`` selects the log
level (``--verbose`` forces DEBUG).
"""

import argparse
import dataclasses
import hashlib
import json
import logging
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

from gasflow.errors import (GasflowError, NumericalFailure, ResourceLimit,
                            ValidationError)
from gasflow.forecast import (IntervalForecaster, levels_for_alpha,
                              make_supervised, mape, model_to_dict, picp)
from gasflow.network import (build_deterministic, extract_schedule,
                             load_network, network_from_dict,
                             network_to_dict)
from gasflow.tsro import ccg_solve, evaluate_policy, stage
from gasflow.uncertainty import from_forecast

log = logging.getLogger("gasflow.cli")

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_SOLVER = 3
EXIT_IO = 4


# ---------------------------------------------------------------- config

def _grid(start, stop, step):
    """Inclusive float grid without accumulation drift."""
    n = int(round((stop - start) / step)) + 1
    return [round(start + i * step, 10) for i in range(n)]


@dataclass
class ForecastSettings:
    n_lags: int = 20
    n_ahead: int = 8
    alpha: float = 0.05
    n_rounds: int = 200
    max_depth: int = 2
    learning_rate: float = 0.05
    min_leaf: int = 50


@dataclass
class CcgSettings:
    # convergence is relative: stop at UB - LB <= delta * (1 + |UB|)
    delta: float = 1e-4
    max_iter: int = 50
    separation: str = "auto"
    enum_limit: int = 200_000


@dataclass
class SweepSettings:
    alphas: list = field(default_factory=lambda: [0.01, 0.05, 0.1])
    gammas: list = field(default_factory=lambda: [0.0, 1.0, 2.0, 3.0])
    delta_scales: list = field(default_factory=lambda: _grid(0.5, 2.0, 0.1))
    eta_minus: list = field(default_factory=lambda: _grid(0.0, 0.3, 0.05))
    gamma_fixed: float = 1.0


@dataclass
class EvaluateSettings:
    n_samples: int = 200


@dataclass
class RunConfig:
    network: str
    history: str
    out_dir: str
    budget: object = 1.0
    seed: int = 0
    forecaster: ForecastSettings = field(default_factory=ForecastSettings)
    ccg: CcgSettings = field(default_factory=CcgSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    evaluate: EvaluateSettings = field(default_factory=EvaluateSettings)


def _fill_section(cls, doc, where):
    if not isinstance(doc, dict):
        raise ValidationError(f"config section '{where}' must be an object")
    known = {f.name for f in dataclasses.fields(cls)}
    extra = sorted(set(doc) - known)
    if extra:
        raise ValidationError(
            f"unknown keys in config section '{where}'",
            [f"{where}.{k}" for k in extra])
    return cls(**doc)


def load_config(path):
    """Parse and validate a run configuration file.

    Relative ``network``/``history``/``out_dir`` paths resolve against
    the config file's own directory, so a config travels with its data.
    """
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError:
        raise
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"config is not valid JSON: {path}",
                              [f"line {exc.lineno}: {exc.msg}"])
    if not isinstance(doc, dict):
        raise ValidationError("config root must be a JSON object")

    known = {f.name for f in dataclasses.fields(RunConfig)}
    extra = sorted(set(doc) - known)
    if extra:
        raise ValidationError("unknown keys in config", extra)
    missing = [k for k in ("network", "history", "out_dir") if k not in doc]
    if missing:
        raise ValidationError("config missing required keys", missing)

    sections = {}
    for name, cls in (("forecaster", ForecastSettings), ("ccg", CcgSettings),
                      ("sweep", SweepSettings),
                      ("evaluate", EvaluateSettings)):
        sections[name] = _fill_section(cls, doc.get(name, {}), name)

    cfg = RunConfig(network=doc["network"], history=doc["history"],
                    out_dir=doc["out_dir"], budget=doc.get("budget", 1.0),
                    seed=int(doc.get("seed", 0)), **sections)

    problems = []
    fs = cfg.forecaster
    if not 0.0 < fs.alpha <= 0.5:
        problems.append(f"forecaster.alpha {fs.alpha} outside (0, 0.5]")
    for a in cfg.sweep.alphas:
        if not 0.0 < a <= 0.5:
            problems.append(f"sweep alpha {a} outside (0, 0.5]")
    if fs.n_lags < 1 or fs.n_ahead < 1:
        problems.append("forecaster lags and horizon must be positive")
    if cfg.ccg.delta < 0:
        problems.append("ccg.delta must be nonnegative")
    if cfg.ccg.max_iter < 1:
        problems.append("ccg.max_iter must be at least 1")
    if cfg.ccg.separation not in ("auto", "enumerate", "dual"):
        problems.append(
            f"ccg.separation '{cfg.ccg.separation}' not one of "
            "auto/enumerate/dual")
    if isinstance(cfg.budget, dict):
        for arc, g in cfg.budget.items():
            if not isinstance(g, (int, float)) or g < 0:
                problems.append(f"budget for arc '{arc}' must be >= 0")
    elif not isinstance(cfg.budget, (int, float)) or cfg.budget < 0:
        problems.append("budget must be a nonnegative number or a map")
    if cfg.evaluate.n_samples < 1:
        problems.append("evaluate.n_samples must be at least 1")
    if problems:
        raise ValidationError("invalid run configuration", problems)

    base = os.path.dirname(os.path.abspath(path))

    def resolve(p):
        return p if os.path.isabs(p) else os.path.join(base, p)

    cfg.network = resolve(cfg.network)
    cfg.history = resolve(cfg.history)
    cfg.out_dir = resolve(cfg.out_dir)
    return cfg


# ------------------------------------------------------------- file I/O

def _read_history(path):
    """Supply history CSV: header row of arc names, float columns."""
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise ValidationError(f"history file is empty: {path}")
    names = [c.strip() for c in lines[0].split(",")]
    if any(not n for n in names):
        raise ValidationError(f"{path} line 1: blank column name in header")
    if len(set(names)) != len(names):
        dupes = sorted({n for n in names if names.count(n) > 1})
        raise ValidationError(f"{path} line 1: duplicate columns", dupes)
    columns = [[] for _ in names]
    for ln, line in enumerate(lines[1:], start=2):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != len(names):
            raise ValidationError(
                f"{path} line {ln}: expected {len(names)} fields, "
                f"got {len(parts)}")
        for j, cell in enumerate(parts):
            try:
                columns[j].append(float(cell))
            except ValueError:
                raise ValidationError(
                    f"{path} line {ln}: could not parse '{cell.strip()}' "
                    f"in column '{names[j]}'")
    if not columns[0]:
        raise ValidationError(f"history file has no data rows: {path}")
    return {n: np.asarray(col) for n, col in zip(names, columns)}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(65536), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_atomic(path, text):
    tmp = path + ".tmp"
    with open(tmp, "w") as fh:
        fh.write(text)
    os.replace(tmp, path)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    if isinstance(v, (float, np.floating)):
        return f"{float(v):.12g}"
    return str(v)


def _write_csv(path, header, rows):
    out = [",".join(header)]
    out.extend(",".join(_fmt(v) for v in row) for row in rows)
    _write_atomic(path, "\n".join(out) + "\n")


def _write_json(path, doc):
    _write_atomic(path, json.dumps(doc, indent=2, sort_keys=True) + "\n")


def _report_header(cfg, command, config_path):
    return {
        "command": command,
        "generated_at": datetime.now(timezone.utc).isoformat(),
        "config_path": os.path.abspath(config_path),
        "config": dataclasses.asdict(cfg),
        "inputs": {"network": _sha256(cfg.network),
                   "history": _sha256(cfg.history)},
    }


# ----------------------------------------------------------- forecasting

def _require_columns(history, arcs, path):
    missing = [a for a in arcs if a not in history]
    if missing:
        raise ValidationError(
            f"history {path} lacks columns for supply arcs",
            [f"missing column '{a}'" for a in missing])


def _fit_forecasters(history, arcs, fs, n_ahead, alpha):
    """One fitted interval forecaster per arc, at the given coverage."""
    need = fs.n_lags + n_ahead + 1
    out = {}
    for arc in arcs:
        series = history[arc]
        if series.size < need:
            raise ValidationError(
                f"history for '{arc}' has {series.size} rows; need at "
                f"least {need} for {fs.n_lags} lags and {n_ahead} steps")
        f = IntervalForecaster(
            levels=levels_for_alpha(alpha), n_lags=fs.n_lags,
            n_ahead=n_ahead, n_rounds=fs.n_rounds, max_depth=fs.max_depth,
            learning_rate=fs.learning_rate, min_leaf=fs.min_leaf)
        f.fit(series)
        out[arc] = f
    return out


def _forecast_bands(forecasters, history):
    return {arc: f.forecast(history[arc]) for arc, f in forecasters.items()}


def cmd_forecast(cfg, args):
    t0 = time.perf_counter()
    network, _ = load_network(cfg.network)
    history = _read_history(cfg.history)
    arcs = [a.name for a in network.supply_arcs]
    _require_columns(history, arcs, cfg.history)
    fs = cfg.forecaster
    t_load = time.perf_counter() - t0

    t0 = time.perf_counter()
    forecasters = _fit_forecasters(history, arcs, fs, fs.n_ahead, fs.alpha)
    bands = _forecast_bands(forecasters, history)
    t_fit = time.perf_counter() - t0

    rows = []
    for arc in arcs:
        for step in range(fs.n_ahead):
            lo, med, hi = bands[arc][step]
            rows.append((arc, step, lo, med, hi))
    _write_csv(os.path.join(cfg.out_dir, "intervals.csv"),
               ("arc", "step", "lower", "median", "upper"), rows)

    t0 = time.perf_counter()
    metric_rows = []
    for arc in arcs:
        metric_rows.append((arc,) + _holdout_metrics(history[arc], fs))
    _write_csv(os.path.join(cfg.out_dir, "metrics.csv"),
               ("arc", "n_eval", "mape", "picp", "coverage_target",
                "crossings"), metric_rows)
    t_eval = time.perf_counter() - t0

    _write_json(os.path.join(cfg.out_dir, "model.json"), {
        "alpha": fs.alpha,
        "n_lags": fs.n_lags,
        "n_ahead": fs.n_ahead,
        "arcs": {arc: model_to_dict(f) for arc, f in forecasters.items()},
    })

    report = _report_header(cfg, "forecast", args.config)
    report["phases"] = {"load": t_load, "fit": t_fit, "holdout": t_eval}
    report["metrics"] = {
        r[0]: {"n_eval": r[1], "mape": r[2], "picp": r[3],
               "coverage_target": r[4], "crossings": r[5]}
        for r in metric_rows}
    _write_json(os.path.join(cfg.out_dir, "forecast_report.json"), report)
    log.info("forecast written for %d arcs", len(arcs))
    return EXIT_OK


def _holdout_metrics(series, fs):
    """Refit on the first 80% and score the tail (median MAPE, PICP)."""
    cut = int(0.8 * series.size)
    need = fs.n_lags + fs.n_ahead + 1
    if cut < need:
        raise ValidationError(
            f"series too short to hold out 20%: train part has {cut} "
            f"rows, needs {need}")
    f = IntervalForecaster(
        levels=levels_for_alpha(fs.alpha), n_lags=fs.n_lags,
        n_ahead=fs.n_ahead, n_rounds=fs.n_rounds, max_depth=fs.max_depth,
        learning_rate=fs.learning_rate, min_leaf=fs.min_leaf)
    f.fit(series[:cut])
    X, Y = make_supervised(series, fs.n_lags, fs.n_ahead)
    # row i's first target index is n_lags + i; keep rows fully after cut
    test = np.flatnonzero(np.arange(X.shape[0]) + fs.n_lags >= cut)
    iv = f.predict_intervals(X[test])
    actual = Y[test].ravel()
    m = mape(actual, iv[:, :, 1].ravel())
    cov = picp(actual, iv[:, :, 0].ravel(), iv[:, :, 2].ravel())
    return (test.size, m, cov, 1.0 - fs.alpha, f.crossings_fixed)


# ----------------------------------------------------------- optimizing

def _build_robust(network, horizon, bands, budget):
    """Compile the staged model with forecast medians as nominal supply."""
    medians = {arc: np.asarray(q)[:, 1].copy() for arc, q in bands.items()}
    horizon = dataclasses.replace(horizon, supply_nominal=medians)
    problem, vmap = build_deterministic(network, horizon)
    uset = from_forecast(vmap.cells, bands, budget=budget)
    staged = stage(problem, vmap, uset)
    return horizon, problem, vmap, uset, staged


def _full_vector(staged, vmap, x, y):
    """Place first-stage and recourse values back on the compiled layout."""
    full = np.zeros(len(vmap.names))
    col = {name: j for j, name in enumerate(vmap.names)}
    for name, v in zip(staged.x_names, x):
        full[col[name]] = v
    for name, v in zip(staged.y_names, y):
        j = col.get(name)
        if j is not None:  # elastic slack columns exist only in the split
            full[j] = v
    return full


def _solve_robust(staged, uset, ccg):
    try:
        return ccg_solve(staged, uset, delta=0.0, delta_rel=ccg.delta,
                         max_iter=ccg.max_iter, separation=ccg.separation,
                         enum_limit=ccg.enum_limit)
    except ValidationError as exc:
        if "master infeasible" not in str(exc):
            raise
        raise ValidationError(
            "first stage infeasible; the commitment rows cannot all hold",
            [f"{tag}" for tag in staged.a_tags])


def cmd_optimize(cfg, args):
    t0 = time.perf_counter()
    network, horizon = load_network(cfg.network)
    if horizon is None:
        raise ValidationError(
            f"network file {cfg.network} carries no horizon block; "
            "optimization needs demand and nominal supply series")
    history = _read_history(cfg.history)
    arcs = [a.name for a in network.supply_arcs]
    _require_columns(history, arcs, cfg.history)
    t_load = time.perf_counter() - t0

    t0 = time.perf_counter()
    fs = cfg.forecaster
    forecasters = _fit_forecasters(history, arcs, fs, horizon.n_periods,
                                   fs.alpha)
    bands = _forecast_bands(forecasters, history)
    t_fit = time.perf_counter() - t0

    t0 = time.perf_counter()
    horizon, _, vmap, uset, staged = _build_robust(
        network, horizon, bands, cfg.budget)
    res = _solve_robust(staged, uset, cfg.ccg)
    t_solve = time.perf_counter() - t0
    log.info("robust objective %.6g after %d iterations (converged=%s)",
             res.objective, res.iterations, res.converged)

    _, nominal_out = staged.recourse_value(res.x, uset.nominal)
    full = _full_vector(staged, vmap, res.x, nominal_out.x)
    sched = extract_schedule(network, horizon, vmap, full)
    _write_csv(os.path.join(cfg.out_dir, "schedule.csv"),
               ("series", "entity", "period", "value"), sched.to_rows())

    _write_csv(os.path.join(cfg.out_dir, "trace.csv"),
               ("iteration", "lower_bound", "upper_bound",
                "master_objective", "subproblem_objective",
                "master_seconds", "subproblem_seconds"),
               [(it.index, it.lower_bound, it.upper_bound,
                 it.master_objective, it.subproblem_objective,
                 it.master_seconds, it.subproblem_seconds)
                for it in res.trace])

    _write_json(os.path.join(cfg.out_dir, "scenarios.json"), {
        "cells": [[arc, int(t)] for arc, t in staged.cells],
        "nominal": [float(v) for v in uset.nominal],
        "scenarios": [[float(v) for v in z] for z in res.scenarios],
    })

    solution = {
        "objective": res.objective,
        "lower_bound": res.lower_bound,
        "upper_bound": res.upper_bound,
        "converged": res.converged,
        "iterations": res.iterations,
        "alpha": fs.alpha,
        "budget": cfg.budget,
        "n_periods": horizon.n_periods,
        "x": {name: int(round(v))
              for name, v in zip(res.x_names, res.x)},
        "x_names": list(res.x_names),
        "inputs": {"network": _sha256(cfg.network),
                   "history": _sha256(cfg.history)},
    }
    _write_json(os.path.join(cfg.out_dir, "solution.json"), solution)

    worst = res.trace[-1].scenario if res.trace else uset.nominal
    worst_value, _ = staged.recourse_value(res.x, worst)
    report = _report_header(cfg, "optimize", args.config)
    report["phases"] = {"load": t_load, "forecast": t_fit, "solve": t_solve}
    report["solution"] = {k: solution[k] for k in
                          ("objective", "lower_bound", "upper_bound",
                           "converged", "iterations")}
    report["breakdown_nominal"] = dict(sched.parts)
    report["first_stage_cost"] = float(staged.c @ res.x)
    report["worst_case_recourse"] = float(worst_value)
    report["uncertainty"] = {"clipped_cells": uset.clipped,
                             "n_vertices": float(uset.n_vertices())}
    _write_json(os.path.join(cfg.out_dir, "optimize_report.json"), report)
    return EXIT_OK


# -------------------------------------------------------------- sweeping

def _vary_doc(doc, ramp_scale=None, eta_minus=None):
    """Clone a network document with scaled ramps or output floors."""
    out = json.loads(json.dumps(doc))
    for unit in out["units"]:
        if ramp_scale is not None and unit["type"] == "storage":
            unit["ramp"] = unit["ramp"] * ramp_scale
        if eta_minus is not None and unit["type"] == "converter":
            unit["output_min"] = eta_minus * unit["output_max"]
    return out


def _sweep_cell(spec):
    """Solve one sweep cell; never raises so the sweep can continue."""
    try:
        network, horizon = network_from_dict(spec["doc"])
        bands = {arc: np.asarray(q) for arc, q in spec["bands"].items()}
        _, _, _, uset, staged = _build_robust(
            network, horizon, bands, spec["budget"])
        ccg = CcgSettings(**spec["ccg"])
        res = _solve_robust(staged, uset, ccg)
        return spec["index"], {
            "objective": res.objective, "converged": res.converged,
            "iterations": res.iterations, "status": "ok"}
    except Exception as exc:  # noqa: BLE001 - cell isolation by design
        log.warning("sweep cell %s failed: %s", spec["index"], exc)
        return spec["index"], {
            "objective": None, "converged": None, "iterations": None,
            "status": f"error:{type(exc).__name__}"}


def _run_cells(specs, jobs):
    """Run sweep cells, optionally across processes; yields as done."""
    if jobs <= 1 or len(specs) <= 1:
        for spec in specs:
            yield _sweep_cell(spec)
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_sweep_cell, spec) for spec in specs]
        for fut in as_completed(futures):
            yield fut.result()


def cmd_sweep(cfg, args):
    t0 = time.perf_counter()
    network, horizon = load_network(cfg.network)
    if horizon is None:
        raise ValidationError(
            f"network file {cfg.network} carries no horizon block")
    history = _read_history(cfg.history)
    arcs = [a.name for a in network.supply_arcs]
    _require_columns(history, arcs, cfg.history)
    sw = cfg.sweep
    fs = cfg.forecaster
    t_load = time.perf_counter() - t0

    t0 = time.perf_counter()
    alphas_needed = sorted(set(sw.alphas) | {fs.alpha})
    bands_by_alpha = {}
    for alpha in alphas_needed:
        fc = _fit_forecasters(history, arcs, fs, horizon.n_periods, alpha)
        bands = _forecast_bands(fc, history)
        bands_by_alpha[alpha] = {
            arc: [[float(v) for v in row] for row in q]
            for arc, q in bands.items()}
    t_fit = time.perf_counter() - t0

    doc = network_to_dict(network, horizon)
    ccg_doc = dataclasses.asdict(cfg.ccg)
    specs, keys = [], []
    for alpha in sw.alphas:
        for gamma in sw.gammas:
            keys.append(("gamma", (alpha, gamma)))
            specs.append({"index": len(specs), "doc": doc,
                          "bands": bands_by_alpha[alpha], "budget": gamma,
                          "ccg": ccg_doc})
    for scale in sw.delta_scales:
        keys.append(("delta", (scale,)))
        specs.append({"index": len(specs),
                      "doc": _vary_doc(doc, ramp_scale=scale),
                      "bands": bands_by_alpha[fs.alpha],
                      "budget": sw.gamma_fixed, "ccg": ccg_doc})
    for eta in sw.eta_minus:
        keys.append(("eta", (eta,)))
        specs.append({"index": len(specs),
                      "doc": _vary_doc(doc, eta_minus=eta),
                      "bands": bands_by_alpha[fs.alpha],
                      "budget": sw.gamma_fixed, "ccg": ccg_doc})

    paths = {
        "gamma": os.path.join(cfg.out_dir, "gamma_sweep.csv"),
        "delta": os.path.join(cfg.out_dir, "delta_sweep.csv"),
        "eta": os.path.join(cfg.out_dir, "eta_sweep.csv"),
    }
    headers = {
        "gamma": ("alpha", "gamma", "objective", "converged", "iterations",
                  "status"),
        "delta": ("delta_scale", "objective", "converged", "iterations",
                  "status"),
        "eta": ("eta_minus", "objective", "converged", "iterations",
                "status"),
    }

    t0 = time.perf_counter()
    results = {}
    n_failed = 0

    def flush():
        # rewrite each table from the cells finished so far; atomic
        # replace keeps every on-disk snapshot internally consistent
        for kind in paths:
            rows = []
            for i, (k, key) in enumerate(keys):
                if k != kind or i not in results:
                    continue
                r = results[i]
                rows.append(key + (r["objective"], r["converged"],
                                   r["iterations"], r["status"]))
            _write_csv(paths[kind], headers[kind], rows)

    for index, row in _run_cells(specs, args.jobs):
        results[index] = row
        if row["status"] != "ok":
            n_failed += 1
        log.info("cell %d/%d %s", len(results), len(specs), row["status"])
        flush()
    t_solve = time.perf_counter() - t0

    report = _report_header(cfg, "sweep", args.config)
    report["phases"] = {"load": t_load, "forecast": t_fit, "cells": t_solve}
    report["cells"] = {"total": len(specs), "failed": n_failed,
                       "jobs": args.jobs}
    _write_json(os.path.join(cfg.out_dir, "sweep_report.json"), report)
    log.info("sweep done: %d cells, %d failed", len(specs), n_failed)
    return EXIT_OK


# ------------------------------------------------------------ evaluating

def cmd_evaluate(cfg, args):
    t0 = time.perf_counter()
    sol_path = args.schedule or os.path.join(cfg.out_dir, "solution.json")
    with open(sol_path) as fh:
        try:
            sol = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"not valid JSON: {sol_path}", [str(exc)])
    for key in ("x", "x_names", "alpha", "budget", "upper_bound"):
        if key not in sol:
            raise ValidationError(f"solution file lacks '{key}': {sol_path}")

    network, horizon = load_network(cfg.network)
    if horizon is None:
        raise ValidationError(
            f"network file {cfg.network} carries no horizon block")
    history = _read_history(cfg.history)
    arcs = [a.name for a in network.supply_arcs]
    _require_columns(history, arcs, cfg.history)
    t_load = time.perf_counter() - t0

    t0 = time.perf_counter()
    fs = cfg.forecaster
    budget = sol["budget"]
    if isinstance(budget, dict):
        budget = {k: float(v) for k, v in budget.items()}
    forecasters = _fit_forecasters(history, arcs, fs, horizon.n_periods,
                                   float(sol["alpha"]))
    bands = _forecast_bands(forecasters, history)
    _, _, _, uset, staged = _build_robust(network, horizon, bands, budget)
    t_build = time.perf_counter() - t0

    if sorted(sol["x_names"]) != sorted(staged.x_names):
        raise ValidationError(
            "schedule does not match this network: mismatched unit ids",
            sorted(set(sol["x_names"]) ^ set(staged.x_names)))
    x = np.array([float(sol["x"][name]) for name in staged.x_names])

    n = args.n_samples if args.n_samples else cfg.evaluate.n_samples
    if n < 1:
        raise ValidationError("need at least one evaluation sample")
    rng = np.random.default_rng(cfg.seed)
    trajectories = [np.asarray(uset.nominal, dtype=float)]
    if n > 1:
        trajectories.extend(uset.sample(n - 1, rng))
    t0 = time.perf_counter()
    pe = evaluate_policy(staged, x, np.vstack(trajectories))
    t_solve = time.perf_counter() - t0

    rows = []
    for i in range(n):
        kind = "nominal" if i == 0 else "sampled"
        rows.append((i, kind, pe.costs[i], pe.total_costs[i],
                     int(pe.slack_activations[i])))
    _write_csv(os.path.join(cfg.out_dir, "distribution.csv"),
               ("sample", "kind", "recourse_cost", "total_cost",
                "slacks_fired"), rows)

    ub = float(sol["upper_bound"])
    summary = {
        "n_samples": n,
        "first_stage_cost": pe.first_stage_cost,
        "nominal_total": float(pe.total_costs[0]),
        "mean_total": pe.mean_cost + pe.first_stage_cost,
        "max_total": pe.max_cost + pe.first_stage_cost,
        "worst_sample": int(pe.worst_index),
        "upper_bound": ub,
        "max_within_bound": bool(pe.max_cost + pe.first_stage_cost
                                 <= ub + 1e-6 * (1.0 + abs(ub))),
        "samples_with_slack": int(np.count_nonzero(pe.slack_activations)),
    }
    report = _report_header(cfg, "evaluate", args.config)
    report["phases"] = {"load": t_load, "build": t_build, "solve": t_solve}
    report["schedule_file"] = os.path.abspath(sol_path)
    report["summary"] = summary
    _write_json(os.path.join(cfg.out_dir, "evaluate_report.json"), report)
    log.info("evaluated %d scenarios: max within bound = %s", n,
             summary["max_within_bound"])
    return EXIT_OK


# ------------------------------------------------------------------ main

def build_parser():
    parser = argparse.ArgumentParser(
        prog="gasflow",
        description="Robust byproduct-gas scheduling under supply "
                    "uncertainty.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, fn, blurb in (
            ("forecast", cmd_forecast,
             "fit interval forecasters and write supply bands"),
            ("optimize", cmd_optimize,
             "solve the robust schedule for one budget"),
            ("sweep", cmd_sweep,
             "solve grids over budget, flexibility and output floors"),
            ("evaluate", cmd_evaluate,
             "price a saved schedule against sampled scenarios")):
        p = sub.add_parser(name, help=blurb)
        p.add_argument("--config", required=True,
                       help="run configuration JSON")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config seed")
        p.add_argument("--jobs", type=int, default=1,
                       help="parallel worker processes (sweep only)")
        p.add_argument("--verbose", action="store_true",
                       help="debug logging to stderr")
        p.set_defaults(fn=fn)
        if name == "evaluate":
            p.add_argument("--schedule", default=None,
                           help="solution JSON (default out_dir/"
                                "solution.json)")
            p.add_argument("--n-samples", type=int, default=None,
                           help="override evaluate.n_samples")
    return parser


def _setup_logging(verbose):
    level = logging.DEBUG if verbose else os.environ.get(
        "GASFLOW_LOG", "WARNING").upper()
    logging.basicConfig(stream=sys.stderr, level=level,
                        format="%(levelname)s %(name)s: %(message)s")


def main(argv=None):
    args = build_parser().parse_args(argv)
    _setup_logging(args.verbose)
    try:
        cfg = load_config(args.config)
        if args.seed is not None:
            cfg.seed = args.seed
        os.makedirs(cfg.out_dir, exist_ok=True)
        return args.fn(cfg, args)
    except ValidationError as exc:
        log.error("%s", exc)
        print(f"gasflow: {exc}", file=sys.stderr)
        for item in getattr(exc, "details", None) or []:
            print(f"  - {item}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalFailure, ResourceLimit) as exc:
        print(f"gasflow: solver failed: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    except OSError as exc:
        print(f"gasflow: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
