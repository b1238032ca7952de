"""Command-line driver.

    gsmlab <command> --config path.json [--seed N] [--trials N] [--workers N] [--out dir]

Writes ``results.csv`` (one row per measurement), ``summary.json`` and PNG
figures into the output directory.  ``GSMLAB_SEED`` overrides the config
seed; ``--seed`` overrides both.  The worker count never changes results.

Exit codes: 0 success, 2 config error, 3 unresolved search, 4 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import csv
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import plotting
from .bodies import LpBody, dim_profile
from .estimators import (
    EmpiricalMean,
    Projection,
    SoftThreshold,
    counter_est_lambda,
    counter_est_n,
    counter_est_truncation,
    lambda_schedule,
    risk_candidates,
    worst_case_risk_search,
)
from .experiments import (
    GofProblem,
    LfhtProblem,
    estimate_error_rates,
    estimation_sample_complexity,
    gof_sample_complexity,
    lfht_min_m_curve,
    lfht_pairs,
    lfht_region_map,
    rate_exponent_fit,
    worst_case_alternative,
)
from .montecarlo import RngStream
from .tests import DEFAULT_DELTA, RegionKind, lfht_region_predicate, two_part_params

COMMANDS = ("dims", "est-risk", "gof", "lfht", "region", "rate-fit")
EXIT_OK, EXIT_CONFIG, EXIT_UNRESOLVED, EXIT_NUMERIC = 0, 2, 3, 4

log = logging.getLogger("gsmlab")


class ConfigError(ValueError):
    pass


class Unresolved(Exception):
    pass


# ------------------------------------------------------------------ config


def build_body(spec: dict) -> LpBody:
    if not isinstance(spec, dict):
        raise ConfigError("body must be an object")
    p = float(spec.get("p", 1.0))
    radii = spec.get("radii", "one_over_t")
    if isinstance(radii, list):
        return LpBody(p, radii)
    D = spec.get("D_max")
    if not isinstance(D, int) or D < 1:
        raise ConfigError("body.D_max must be a positive integer for rule-based radii")
    if radii == "one_over_t":
        return LpBody.one_over_t(D, p)
    if radii == "constant":
        return LpBody.constant(D, float(spec.get("value", 1.0)), p)
    raise ConfigError(f"unknown radii rule {radii!r}")


def _positive(cfg: dict, key: str, required: bool = True):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing field {key!r}")
        return None
    v = cfg[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not v > 0:
        raise ConfigError(f"{key} must be a positive number")
    return v


def _grid(cfg: dict, key: str, required: bool = True, integer: bool = False):
    if key not in cfg:
        if required:
            raise ConfigError(f"missing field {key!r}")
        return None
    g = cfg[key]
    if not isinstance(g, list) or not g:
        raise ConfigError(f"{key} must be a non-empty list")
    if any(isinstance(x, bool) or not isinstance(x, (int, float)) or not x > 0 for x in g):
        raise ConfigError(f"{key} entries must be positive numbers")
    if integer and any(not isinstance(x, int) for x in g):
        raise ConfigError(f"{key} entries must be integers")
    if list(g) != sorted(g) and key != "eps_grid":
        raise ConfigError(f"{key} must be sorted ascending")
    return list(g)


def resolve_config(raw: dict, command: str, seed=None, trials=None) -> dict:
    """Merge CLI overrides into the config and validate the shared fields."""
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    cfg = copy.deepcopy(raw.get("config", raw))  # accept a previous summary.json too
    if cfg.get("command", command) != command:
        raise ConfigError(f"config is for {cfg['command']!r}, not {command!r}")
    cfg["command"] = command
    env_seed = os.environ.get("GSMLAB_SEED")
    if seed is not None:
        cfg["seed"] = int(seed)
    elif env_seed is not None:
        try:
            cfg["seed"] = int(env_seed)
        except ValueError as exc:
            raise ConfigError("GSMLAB_SEED must be an integer") from exc
    cfg.setdefault("seed", 0)
    if not isinstance(cfg["seed"], int) or not 0 <= cfg["seed"] < 2**64:
        raise ConfigError("seed must be a 64-bit non-negative integer")
    if trials is not None:
        cfg["trials"] = int(trials)
    cfg.setdefault("trials", 2000)
    if not isinstance(cfg["trials"], int) or cfg["trials"] < 100:
        raise ConfigError("trials must be an integer >= 100")
    cfg.setdefault("delta", DEFAULT_DELTA)
    if not 0 < float(cfg["delta"]) < 1:
        raise ConfigError("delta must lie in (0, 1)")
    cfg.setdefault("body", {"p": 1.0, "radii": "one_over_t", "D_max": 64})
    build_body(cfg["body"])
    return cfg


# --------------------------------------------------------------- commands


def _eps_list(cfg: dict) -> list[float]:
    if "eps_grid" in cfg:
        return [float(e) for e in _grid(cfg, "eps_grid")]
    return [float(_positive(cfg, "eps"))]


def run_dims(cfg, stream, workers, out):
    body = build_body(cfg["body"])
    ns = _grid(cfg, "n_grid", required=False, integer=True) or [int(cfg.get("n", 1000))]
    rows = []
    for eps in _eps_list(cfg):
        for n in ns:
            prof = dim_profile(body, n, eps, float(cfg["delta"]))
            rows.append({"eps": eps, "n": n,
                         "d_coordinate_kolmogorov": prof.d_coordinate_kolmogorov,
                         "d_truncation": prof.d_truncation, "d_u": prof.d_u, "d_l": prof.d_l})
    plotting.plot_dims(rows, out)
    return rows, {"profiles": rows}


def _estimator(cfg: dict, eps: float, n: int):
    est = cfg.get("estimator", {"kind": "soft_threshold"})
    kind = est.get("kind", "soft_threshold")
    if kind == "empirical_mean":
        return EmpiricalMean()
    if kind == "projection":
        return Projection(int(est.get("d", counter_est_truncation(eps))))
    if kind == "soft_threshold":
        d_trunc = int(est.get("d_trunc", counter_est_truncation(eps)))
        lam = est.get("lambda", "fixed")
        if lam == "fixed":
            lam = counter_est_lambda(eps)
        elif lam == "schedule":
            lam = lambda_schedule(n, d_trunc, eps)
        elif not isinstance(lam, (int, float)) or lam < 0:
            raise ConfigError("estimator.lambda must be 'fixed', 'schedule' or a number >= 0")
        return SoftThreshold(float(lam), d_trunc)
    raise ConfigError(f"unknown estimator kind {kind!r}")


def run_est_risk(cfg, stream, workers, out):
    body = build_body(cfg["body"])
    eps = float(_positive(cfg, "eps"))
    n = int(cfg.get("n", counter_est_n(eps)))
    spec = _estimator(cfg, eps, n)
    cands = risk_candidates(body)
    wc = worst_case_risk_search(body, spec, n, cfg["trials"], stream, workers, cands)
    rows = [{"candidate": label, "risk": r.mean, "ci_radius": r.ci_radius, "trials": r.trials}
            for label, r in wc.all_risks]
    plotting.plot_bars([r["candidate"] for r in rows], [r["risk"] for r in rows],
                       [r["ci_radius"] for r in rows], eps * eps, "risk", out / "est_risk.png")
    return rows, {"n": n, "estimator": repr(spec), "worst_candidate": wc.label,
                  "worst_risk": wc.risk.mean, "worst_ci_radius": wc.risk.ci_radius,
                  "eps_squared": eps * eps, "within_target": wc.risk.mean <= eps * eps}


def run_gof(cfg, stream, workers, out):
    body = build_body(cfg["body"])
    eps = float(_positive(cfg, "eps"))
    n = int(cfg.get("n", math.ceil(eps ** (-12 / 5) * math.log(16 / eps))))
    kinds = cfg.get("alternatives", ["GofEnergy", "GofSpike"])
    alts = tuple(worst_case_alternative(body, eps, k) for k in kinds)
    dim = max(body.ambient_dim, two_part_params(eps).D)
    est = estimate_error_rates(GofProblem(alts, dim, "two_part", eps=eps), n, None,
                               cfg["trials"], stream, workers)
    rows = [{"hypothesis": "null", "error": est.type1, "trials": est.trials}]
    rows += [{"hypothesis": k, "error": e, "trials": est.trials}
             for k, e in zip(kinds, est.per_alternative)]
    plotting.plot_bars([r["hypothesis"] for r in rows], [r["error"] for r in rows],
                       [est.ci_radius] * len(rows), 0.25, "error rate", out / "gof.png")
    return rows, _error_summary(est, n=n)


def _error_summary(est, **extra) -> dict:
    return {**extra, "type1": est.type1, "type2": est.type2, "max_error": est.max_error,
            "ci_radius": est.ci_radius, "trials": est.trials}


def run_lfht(cfg, stream, workers, out):
    body = build_body(cfg["body"])
    eps = float(_positive(cfg, "eps"))
    n, m = int(_positive(cfg, "n")), int(_positive(cfg, "m"))
    test = cfg.get("test", "full")
    pairs = lfht_pairs(body, eps)
    if test == "projection":
        problem = LfhtProblem(pairs, test="projection", d=int(cfg.get("d", body.ambient_dim)))
    else:
        problem = LfhtProblem(pairs, body=body, eps=eps, delta=float(cfg["delta"]),
                              truncate=bool(cfg.get("truncate", True)))
    est = estimate_error_rates(problem, n, m, cfg["trials"], stream, workers)
    rows = [{"pair": k, "type2": e, "trials": est.trials} for k, e in enumerate(est.per_alternative)]
    plotting.plot_bars([f"pair {r['pair']}" for r in rows], [r["type2"] for r in rows],
                       [est.ci_radius] * len(rows), 0.25, "type-II error", out / "lfht.png")
    preds = {k.value: lfht_region_predicate(k, body, m, n, eps, float(cfg["delta"])) for k in RegionKind}
    return rows, _error_summary(est, n=n, m=m, test=test, predicates=preds)


def run_region(cfg, stream, workers, out):
    body = build_body(cfg["body"])
    eps = float(_positive(cfg, "eps"))
    n_grid = _grid(cfg, "n_grid", integer=True)
    if cfg.get("mode", "map") == "min_m":
        curve = lfht_min_m_curve(body, eps, n_grid, cfg["trials"], stream,
                                 int(cfg.get("m_max", 1 << 20)), float(cfg["delta"]), workers)
        rows = [{"n": n, "m_min": r.n if r.resolved else "", "resolved": r.resolved,
                 "m_n_three_halves": r.n * n**1.5 if r.resolved else ""} for n, r in curve]
        plotting.plot_min_m(rows, out / "region_min_m.png")
        vals = [r["m_n_three_halves"] for r in rows if r["resolved"]]
        summary = {"mode": "min_m",
                   "spread_m_n_three_halves": max(vals) / min(vals) if vals else None}
        if not all(r["resolved"] for r in rows):
            raise Unresolved((rows, summary))
        return rows, summary
    m_grid = _grid(cfg, "m_grid", integer=True)
    rm = lfht_region_map(body, eps, m_grid, n_grid, cfg["trials"], stream, float(cfg["delta"]), workers)
    rows = [{"m": c.m, "n": c.n, "feasible": c.feasible, "error_hat": c.error_hat,
             "type1": c.type1, "type2": c.type2, "ci_radius": c.ci_radius,
             "sufficient_quad": c.sufficient_quad, "sufficient_lp": c.sufficient_lp,
             "necessary_lp": c.necessary_lp} for c in rm.grid]
    plotting.plot_region(rows, out / "region.png")
    return rows, {"mode": "map", "feasible_cells": sum(r["feasible"] for r in rows), "cells": len(rows)}


def run_rate_fit(cfg, stream, workers, out):
    problem = cfg.get("problem", "gof")
    eps_grid = _eps_list(cfg)
    if len(eps_grid) < 3:
        raise ConfigError("rate-fit needs an eps_grid with at least 3 values")
    body_cfg = cfg["body"]
    rows, points = [], []
    for k, eps in enumerate(eps_grid):
        spec = dict(body_cfg)
        if spec.get("radii") in ("one_over_t", "constant") and cfg.get("auto_dim", True):
            spec["D_max"] = max(int(spec["D_max"]), 2 * math.ceil(2 / eps))
        body = build_body(spec)
        if problem == "gof":
            res = gof_sample_complexity(body, eps, cfg["trials"], stream.child(k),
                                        int(cfg.get("n_max", 1 << 22)), workers)
        elif problem == "estimation":
            res = estimation_sample_complexity(body, eps, _estimator(cfg, eps, 1), cfg["trials"],
                                               stream.child(k), int(cfg.get("n_max", 1 << 24)), workers)
        else:
            raise ConfigError(f"unknown rate-fit problem {problem!r}")
        rows.append({"eps": eps, "n_star": res.n if res.resolved else "", "resolved": res.resolved,
                     "validated": res.validated, "probes": len(res.probes)})
        if res.resolved:
            points.append((eps, res.n))
    if len(points) < 3:
        raise Unresolved((rows, {"problem": problem}))
    fit = rate_exponent_fit(points)
    plotting.plot_rate_fit(list(fit.points), fit.slope, fit.intercept, out / "rate_fit.png")
    summary = {"problem": problem, "slope": fit.slope, "intercept": fit.intercept, "stderr": fit.stderr}
    if len(points) < len(eps_grid):
        raise Unresolved((rows, summary))
    return rows, summary


RUNNERS = {"dims": run_dims, "est-risk": run_est_risk, "gof": run_gof,
           "lfht": run_lfht, "region": run_region, "rate-fit": run_rate_fit}


# ------------------------------------------------------------------ output


def _fmt(v) -> str:
    if isinstance(v, bool) or v is None:
        return "" if v is None else str(v).lower()
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    return str(v)


def write_csv(rows: list[dict], path: Path) -> None:
    header = list(rows[0]) if rows else []
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(r.get(h)) for h in header])


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not serializable: {type(o)}")


def run(command: str, cfg: dict, out: Path, workers: int = 1) -> int:
    """Execute a resolved config, write results, and return the exit code."""
    out.mkdir(parents=True, exist_ok=True)
    cfg = dict(cfg, output_path=str(out))
    stream = RngStream(cfg["seed"])
    t0 = time.perf_counter()
    code = EXIT_OK
    try:
        rows, results = RUNNERS[command](cfg, stream, workers, out)
    except Unresolved as exc:
        rows, results = exc.args[0]
        results = dict(results, unresolved=True)
        code = EXIT_UNRESOLVED
    write_csv(rows, out / "results.csv")
    summary = {"command": command, "seed": cfg["seed"], "trials": cfg["trials"],
               "wall_time": time.perf_counter() - t0, "results": results, "config": cfg}
    with open(out / "summary.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True, default=_json_default)
        fh.write("\n")
    return code


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="gsmlab", description=__doc__.splitlines()[0])
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", required=True, type=Path)
    parser.add_argument("--seed", type=int)
    parser.add_argument("--trials", type=int)
    parser.add_argument("--workers", type=int, default=1)
    parser.add_argument("--out", type=Path)
    parser.add_argument("-v", "--verbose", action="store_true")
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        raw = json.loads(args.config.read_text())
        cfg = resolve_config(raw, args.command, args.seed, args.trials)
        out = args.out or Path(cfg.get("output_path", "gsmlab_out"))
        return run(args.command, cfg, out, max(1, args.workers))
    except (OSError, json.JSONDecodeError, ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"gsmlab: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ArithmeticError as exc:
        print(f"gsmlab: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
