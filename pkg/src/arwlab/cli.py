"""Command-line experiment runner.

Subcommands: stabilize, verify, sweep, returns, bounds, rhoc. Every output
file embeds the run configuration (including the master seed) and the code
version; rerunning a recorded configuration reproduces its numbers exactly.

Options may also come from ``--config FILE.json`` (keys are option names
with underscores); flags on the command line win. The default output
directory is taken from $ARW_OUTPUT_DIR, falling back to ./results.

Exit codes: 0 success, 1 a check failed, 2 usage error, 3 I/O or
infrastructure error.
"""
from __future__ import annotations

import argparse
import csv
import itertools
import json
import math
import os
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from arwlab import __version__, engine, estimators as est, walks
from arwlab._hashing import parse_seed
from arwlab.parallel import default_workers
from arwlab.stacks import Params

EXIT_OK, EXIT_CHECK, EXIT_USAGE, EXIT_IO = 0, 1, 2, 3
OUTPUT_ENV = "ARW_OUTPUT_DIR"
SUITES = ("abelian", "least-action", "coupling", "identity", "ach-bound", "five-step", "conservation")


class UsageError(Exception):
    pass


# ---------------------------------------------------------------- parsing helpers

def _float_list(text):
    """Comma list or START:STOP:STEP (inclusive stop)."""
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    text = str(text)
    if text.count(":") == 2:
        a, b, step = (float(v) for v in text.split(":"))
        if step <= 0 or b < a:
            raise argparse.ArgumentTypeError(f"bad range {text!r}")
        count = int(math.floor((b - a) / step + 1e-9)) + 1
        return [round(a + i * step, 12) for i in range(count)]
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected numbers, got {text!r}") from None


def _int_list(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    text = str(text)
    if text.count(":") == 1:
        a, b = (int(v) for v in text.split(":"))
        return list(range(a, b + 1))
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected integers, got {text!r}") from None


def _seed(text):
    try:
        return parse_seed(text)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _params(d, lam) -> Params:
    try:
        return Params(int(d), float(lam))
    except ValueError as exc:
        raise UsageError(f"invalid lambda/d: {exc}") from None


def _law(text, d):
    try:
        return est.parse_law(text, d)
    except ValueError as exc:
        raise UsageError(f"invalid law: {exc}") from None


def _positive(name, value):
    if value is None or value < 1:
        raise UsageError(f"{name} must be a positive integer, got {value}")


# ---------------------------------------------------------------- output helpers

def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    return obj


def _dumps(obj) -> str:
    return json.dumps(_jsonable(obj), sort_keys=True, indent=1)


def run_config(args) -> dict:
    """Serializable configuration of this invocation (no output paths)."""
    skip = {"func", "config", "out_dir", "output", "name", "quiet"}
    cfg = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    return _jsonable(cfg)


def _out_dir(args) -> Path:
    return Path(args.out_dir or os.environ.get(OUTPUT_ENV) or "results")


def _write(path: Path, text: str):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text)


def _emit(args, default_name: str, payload: dict) -> dict:
    payload = {"config": run_config(args), "version": __version__, **payload}
    text = _dumps(payload) + "\n"
    path = Path(args.output) if args.output else _out_dir(args) / default_name
    _write(path, text)
    if not args.quiet:
        sys.stdout.write(text)
    return payload


# ---------------------------------------------------------------- subcommands

def cmd_stabilize(args) -> int:
    params = _params(args.d, args.lam)
    _positive("n + 1", args.n + 1)
    law = _law(args.law, params.d)
    cfg, src = est.trial_instance(params, args.n, law, args.seed, args.trial)
    box = cfg.box
    if args.mode == "true":
        mode = engine.TRUE_STAB
    else:
        mode = (engine.Weak if args.mode == "weak" else engine.Strong)([box.origin])
    out = engine.stabilize(cfg, src, mode, order=args.order, order_seed=args.order_seed)
    snap = out.to_snapshot(src.seed)
    snap.update(killed=out.killed, initial=cfg.to_snapshot(src.seed)["states"], mode=args.mode,
                origin=engine.describe(out[box.origin]))
    _emit(args, f"stabilize_d{params.d}_n{args.n}_seed{args.seed}.json", {"snapshot": snap})
    return EXIT_OK


def _suite(name, args, params_for):
    """Run one verification suite; returns (passed, report dict)."""
    workers = args.workers
    if name == "abelian":
        rep = est.abelian_check(args.instances or 200, args.orders or 50, args.seed)
        return rep.passed, rep.to_dict()
    if name == "least-action":
        rep = est.least_action_check(args.instances or 100, args.orders or 20, args.seed)
        return rep.passed, rep.to_dict()
    if name == "coupling":
        cells = []
        total = args.trials or 10_000
        shapes = [(1, 1), (1, 2), (2, 1), (2, 2)]
        for i, (d, n) in enumerate(shapes):
            p = _params(d, args.lam)
            law = _law(args.law or "poisson:0.6", d)
            rep = est.coupling_check(p, n, law, total // len(shapes), args.seed + i, workers)
            cells.append(dict(d=d, n=n, trials=rep.trials, violations=rep.violations,
                              mismatches=rep.mismatches, occupied=rep.occupied, passed=rep.passed))
        return all(c["passed"] for c in cells), {"cells": cells}
    if name == "identity":
        p = params_for(1)
        rep = est.verify_identity(p, args.n if args.n is not None else 1, _law(args.law or "delta", p.d),
                                  args.trials or 100_000, args.seed, workers)
        return rep.passed, rep.to_dict()
    if name == "ach-bound":
        p = params_for(3)
        if p.d < 3:
            raise UsageError("ach-bound needs d >= 3 (E[R] is infinite for d <= 2)")
        r = walks.expected_returns(p.d, args.returns_trials, args.escape_radius or 200,
                                   args.max_steps, args.seed, workers)
        rep = est.verify_ach_bound(p, args.n if args.n is not None else 3,
                                   _law(args.law or "poisson:0.4", p.d), args.trials or 20_000,
                                   args.seed, r, workers)
        return rep.passed, dict(rep.to_dict(), returns=r.to_dict())
    if name == "five-step":
        p = params_for(1)
        law = _law(args.law or "filled:poisson:0.5", p.d)
        rep = est.five_step_summary(p, args.n if args.n is not None else 3, law,
                                    args.trials or 100_000, args.seed, workers)
        ok = (rep.invariant_failures == 0 and rep.procedure_mismatches == 0
              and abs(rep.p_jump2 - rep.target_jump2) <= 3 * rep.p_jump2_se
              and rep.p_tau1_sleeping >= rep.p_s - 3 * rep.p_tau1_se
              and rep.p_ch_ge_2 >= rep.target_ch_ge_2 - 3 * rep.p_ch_ge_2_se)
        return ok, rep.to_dict()
    if name == "conservation":
        p = params_for(3)
        rho = args.rho if args.rho is not None else 0.3
        n_list = args.n_list or [3, 5, 7]
        rows = est.mass_conservation_probe(p, n_list, rho, args.trials or 1000, args.seed,
                                           args.margin, workers)
        devs = [r.deviation for r in rows]
        ok = all(a > b for a, b in zip(devs, devs[1:])) and devs[-1] < 0.02
        return ok, {"rows": [dict(asdict(r), deviation=r.deviation) for r in rows]}
    raise UsageError(f"unknown suite {name!r}")


def cmd_verify(args) -> int:
    names = SUITES if args.suite == "all" else (args.suite,)

    def params_for(default_d):
        return _params(args.d if args.d is not None else default_d, args.lam)

    reports = {}
    status = EXIT_OK
    for name in names:
        start = time.perf_counter()
        try:
            ok, report = _suite(name, args, params_for)
        except (engine.EngineError, walks.CensoringError) as exc:
            ok, report = False, {"error": str(exc)}
            status = EXIT_IO
        reports[name] = {"passed": ok, "seconds": round(time.perf_counter() - start, 3), **report}
        if not ok and status == EXIT_OK:
            status = EXIT_CHECK
        print(f"[{'PASS' if ok else 'FAIL'}] {name}", file=sys.stderr)
    _emit(args, f"verify_{args.suite}.json",
          {"suite": args.suite, "passed": all(r["passed"] for r in reports.values()),
           "checks": reports})
    return status


# -- sweep

SWEEP_COLUMNS = {
    "occupation": ["d", "lambda", "n", "rho", "law", "trials", "value", "std_error"],
    "chances": ["d", "lambda", "n", "rho", "law", "trials", "p_ch_ge_1", "p_ch_ge_2",
                "p_ch_ge_3", "mean_ach", "mean_ach_se"],
    "identity": ["d", "lambda", "n", "law", "trials", "direct", "series", "generating",
                 "max_abs_z", "passed"],
    "bounds": ["d", "lambda", "lower", "upper", "e_r", "e_r_se", "e_r_source"],
    "returns": ["d", "trials", "mean", "std_error", "two_d_mean", "censoring_rate", "divergent"],
}


def _sweep_cells(args):
    d_list = args.d_list or [args.d or 1]
    lam_list = args.lambda_list or [args.lam]
    n_list = args.n_list or [args.n if args.n is not None else 2]
    rho_list = args.rho_list or [args.rho if args.rho is not None else 0.5]
    if args.kind in ("bounds",):
        grid = itertools.product(d_list, lam_list)
        return [{"d": d, "lambda": lam} for d, lam in grid]
    if args.kind == "returns":
        return [{"d": d} for d in d_list]
    if args.kind == "identity":
        return [{"d": d, "lambda": lam, "n": n} for d, lam, n in itertools.product(d_list, lam_list, n_list)]
    return [{"d": d, "lambda": lam, "n": n, "rho": rho}
            for d, lam, n, rho in itertools.product(d_list, lam_list, n_list, rho_list)]


def _cell_law(args, cell):
    if args.law:
        return _law(args.law, cell["d"])
    if "rho" in cell:
        return est.IIDPoisson(cell["rho"])
    return est.DeltaOrigin(cell["d"])


def _run_cell(args, cell, seed):
    kind, workers, trials = args.kind, args.workers, args.trials or 1000
    if kind == "returns":
        r = walks.expected_returns(cell["d"], trials, args.escape_radius or walks.DEFAULT_ESCAPE_RADIUS,
                                   args.max_steps, seed, workers)
        return dict(trials=trials, mean=r.mean, std_error=r.std_error, two_d_mean=2 * cell["d"] * r.mean,
                    censoring_rate=r.censoring_rate, divergent=r.divergent)
    p = _params(cell["d"], cell["lambda"])
    if kind == "bounds":
        r = None
        if p.d >= 3 and args.returns_trials:
            r = walks.expected_returns(p.d, args.returns_trials,
                                       args.escape_radius or walks.DEFAULT_ESCAPE_RADIUS,
                                       args.max_steps, seed, workers)
        return est.bounds_report(p, r).to_dict()
    law = _cell_law(args, cell)
    if kind == "occupation":
        rep = est.estimate_occupation(p, cell["n"], law, trials, seed, workers)
        return dict(law=law.label(), trials=trials, value=rep.value, std_error=rep.std_error)
    if kind == "chances":
        dist = est.chance_distribution(p, cell["n"], law, trials, seed, max(args.k_max, 3), workers)
        return dict(law=law.label(), trials=trials, p_ch_ge_1=dist.tail[0], p_ch_ge_2=dist.tail[1],
                    p_ch_ge_3=dist.tail[2], mean_ach=dist.mean_ach, mean_ach_se=dist.mean_ach_se)
    if kind == "identity":
        rep = est.verify_identity(p, cell["n"], law, trials, seed, workers)
        return dict(law=law.label(), trials=trials, direct=rep.direct.value, series=rep.series.value,
                    generating=rep.generating.value,
                    max_abs_z=max(abs(rep.z_direct_series), abs(rep.z_direct_generating),
                                  abs(rep.z_series_generating)),
                    passed=rep.passed)
    raise UsageError(f"unknown sweep kind {kind!r}")


_NOT_IN_CELL_KEY = {"workers", "d", "lam", "n", "rho", "d_list", "lambda_list", "n_list", "rho_list"}


def _cell_key(config: dict, cell: dict) -> str:
    return json.dumps({"config": config, "cell": cell}, sort_keys=True, separators=(",", ":"))


def _read_jsonl(path: Path) -> list[dict]:
    if not path.exists():
        return []
    records = []
    for line in path.read_text().splitlines():
        line = line.strip()
        if not line:
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            continue  # a torn final line from an interrupted run
    return records


def write_sweep_csv(jsonl: Path, csv_path: Path, kind: str):
    """Regenerate the CSV summary from the JSONL cell records (latest record per cell wins)."""
    latest = {}
    for rec in _read_jsonl(jsonl):
        if rec.get("type") == "cell" and rec.get("kind") == kind:
            latest[rec["key"]] = rec
    cols = SWEEP_COLUMNS[kind]
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with csv_path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols + ["status"])
        for rec in latest.values():
            row = {**rec["cell"], **(rec.get("result") or {})}
            w.writerow([_csv_value(row.get(c)) for c in cols] + [rec["status"]])


def _csv_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v) if math.isfinite(v) else ("inf" if v > 0 else "nan")
    return v


def cmd_sweep(args) -> int:
    cells = _sweep_cells(args)
    if not cells:
        raise UsageError("the sweep grid is empty")
    config = run_config(args)
    # a cell carries its own grid coordinates; grid edits must not invalidate finished cells
    key_config = {k: v for k, v in config.items() if k not in _NOT_IN_CELL_KEY}
    name = args.name or f"sweep_{args.kind}"
    out = _out_dir(args)
    jsonl, csv_path = out / f"{name}.jsonl", out / f"{name}.csv"
    done = {rec["key"]: rec for rec in _read_jsonl(jsonl)
            if rec.get("type") == "cell" and rec.get("status") == "ok"}
    out.mkdir(parents=True, exist_ok=True)
    started = time.perf_counter()
    results, failed, skipped = [], 0, 0
    if jsonl.exists() and jsonl.stat().st_size and not jsonl.read_bytes().endswith(b"\n"):
        with jsonl.open("a") as fh:
            fh.write("\n")  # seal a torn line from an interrupted run
    with jsonl.open("a") as fh:
        for i, cell in enumerate(cells):
            key = _cell_key(key_config, cell)
            if key in done:
                skipped += 1
                results.append(done[key])
                continue
            seed = est._stream_seed(args.seed, i)
            t0 = time.perf_counter()
            try:
                result, status, error = _run_cell(args, cell, seed), "ok", None
            except (engine.EngineError, walks.CensoringError, ValueError) as exc:
                result, status, error = None, "failed", str(exc)
                failed += 1
            rec = _jsonable({"type": "cell", "kind": args.kind, "key": key, "cell": cell,
                             "seed": seed, "result": result, "status": status, "error": error,
                             "seconds": round(time.perf_counter() - t0, 3), "version": __version__})
            fh.write(json.dumps(rec, sort_keys=True) + "\n")
            fh.flush()
            results.append(rec)
            if not args.quiet:
                print(f"[{status}] {cell}", file=sys.stderr)
        run = {"type": "run", "kind": args.kind, "config": config, "version": __version__,
               "wall_time": round(time.perf_counter() - started, 3), "skipped": skipped,
               "failed": failed, "cells": [{"cell": r["cell"], "status": r["status"],
                                             "result": r["result"]} for r in results]}
        fh.write(json.dumps(_jsonable(run), sort_keys=True) + "\n")
    write_sweep_csv(jsonl, csv_path, args.kind)
    if not args.quiet:
        print(csv_path.read_text(), end="")
    return EXIT_CHECK if failed else EXIT_OK


def cmd_returns(args) -> int:
    _positive("trials", args.trials)
    try:
        r = walks.expected_returns(args.d, args.trials, args.escape_radius or walks.DEFAULT_ESCAPE_RADIUS,
                                   args.max_steps, args.seed, args.workers, args.allow_censored)
    except walks.CensoringError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CHECK
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    payload = r.to_dict()
    payload["two_d_mean"] = None if r.divergent else 2 * args.d * r.mean
    payload["asymptotic"] = walks.returns_asymptotic(args.d)
    _emit(args, f"returns_d{args.d}.json", {"estimate": payload})
    return EXIT_OK


def _maybe_returns(args, d):
    if d < 3 or not args.returns_trials:
        return None
    return walks.expected_returns(d, args.returns_trials,
                                  args.escape_radius or walks.DEFAULT_ESCAPE_RADIUS,
                                  args.max_steps, args.seed, args.workers)


def cmd_bounds(args) -> int:
    p = _params(args.d, args.lam)
    rep = est.bounds_report(p, _maybe_returns(args, p.d))
    _emit(args, f"bounds_d{p.d}_lambda{p.lam:g}.json", {"bounds": rep.to_dict()})
    return EXIT_OK


def cmd_rhoc(args) -> int:
    p = _params(args.d, args.lam)
    _positive("trials", args.trials)
    grid = args.rho_grid or _float_list("0.40:0.70:0.02")
    rep = est.rhoc_bracket(p, args.n, args.trials, args.seed, grid, args.z_threshold, args.workers)
    bounds = est.bounds_report(p, _maybe_returns(args, p.d)).to_dict()
    overlap = None
    if rep.bracket is not None and bounds["upper"] is not None:
        lo, hi = rep.bracket
        step = min(b - a for a, b in zip(grid, grid[1:])) if len(grid) > 1 else 0.0
        overlap = lo <= bounds["upper"] + step and hi >= bounds["lower"] - step
    _emit(args, f"rhoc_d{p.d}_n{args.n}.json",
          {"bracket": rep.to_dict(), "bounds": bounds, "overlaps_bounds": overlap})
    return EXIT_OK


# ---------------------------------------------------------------- parser

def _common(p, d=None, n=None, trials=None, lam=1.0, seed=0):
    p.add_argument("--config", help="JSON file of option values; command-line flags win")
    p.add_argument("--d", type=int, default=d, help="lattice dimension")
    p.add_argument("--n", type=int, default=n, help="box half-width (V_n = {-n..n}^d)")
    p.add_argument("--lambda", dest="lam", type=float, default=lam, help="sleep rate, > 0")
    p.add_argument("--trials", type=int, default=trials)
    p.add_argument("--seed", type=_seed, default=seed, help="master seed, decimal or 0x-hex")
    p.add_argument("--workers", type=int, default=1,
                   help=f"worker processes (0 = all {default_workers()} available)")
    p.add_argument("--out-dir", help=f"output directory (default ${OUTPUT_ENV} or ./results)")
    p.add_argument("--output", "-o", help="explicit output file")
    p.add_argument("--quiet", "-q", action="store_true", help="do not echo results to stdout")


def _walk_opts(p, radius=None):
    p.add_argument("--escape-radius", type=int, default=radius)
    p.add_argument("--max-steps", type=int, default=walks.DEFAULT_MAX_STEPS)
    p.add_argument("--returns-trials", type=int, default=0,
                   help="walks for the Monte Carlo E[R]; 0 uses 1/(2d)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="arwlab", description=__doc__.split("\n\n")[0])
    parser.add_argument("--version", action="version", version=f"arwlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("stabilize", help="stabilize one sampled configuration and write a snapshot")
    _common(p, d=1, n=1)
    p.add_argument("--law", default="delta", help="delta, empty, poisson:R, bernoulli:R, filled:LAW")
    p.add_argument("--trial", type=int, default=0, help="trial index within the master seed")
    p.add_argument("--mode", choices=("true", "weak", "strong"), default="true",
                   help="weak/strong are taken with respect to the origin")
    p.add_argument("--order", choices=("fifo", "random"), default="fifo")
    p.add_argument("--order-seed", type=int, default=0)
    p.set_defaults(func=cmd_stabilize)

    p = sub.add_parser("verify", help="run verification suites; nonzero exit on failure")
    p.add_argument("suite", choices=SUITES + ("all",))
    _common(p)
    _walk_opts(p)
    p.set_defaults(returns_trials=50_000)
    p.add_argument("--law", default=None)
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--n-list", type=_int_list, default=None)
    p.add_argument("--margin", type=int, default=None, help="conservation margin (default n // 2)")
    p.add_argument("--instances", type=int, default=None)
    p.add_argument("--orders", type=int, default=None)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("sweep", help="estimate over a parameter grid (resumable)")
    _common(p)
    _walk_opts(p)
    p.add_argument("--kind", choices=tuple(SWEEP_COLUMNS), default="occupation")
    p.add_argument("--law", default=None, help="default: poisson at each grid rho")
    p.add_argument("--rho", type=float, default=None)
    p.add_argument("--d-list", type=_int_list, default=None)
    p.add_argument("--lambda-list", type=_float_list, default=None)
    p.add_argument("--n-list", type=_int_list, default=None)
    p.add_argument("--rho-list", type=_float_list, default=None)
    p.add_argument("--k-max", type=int, default=5)
    p.add_argument("--name", help="output stem (default sweep_<kind>)")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("returns", help="Monte Carlo E[R(Z^d)]")
    _common(p, d=3, trials=100_000)
    _walk_opts(p, radius=walks.DEFAULT_ESCAPE_RADIUS)
    p.add_argument("--allow-censored", action="store_true")
    p.set_defaults(func=cmd_returns)

    p = sub.add_parser("bounds", help="lower and upper critical-density bounds")
    _common(p, d=3)
    _walk_opts(p)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("rhoc", help="finite-volume critical-density bracket")
    _common(p, d=3, n=6, trials=4000)
    _walk_opts(p)
    p.add_argument("--rho-grid", type=_float_list, default=None,
                   help="comma list or START:STOP:STEP (default 0.40:0.70:0.02)")
    p.add_argument("--z-threshold", type=float, default=est.Z_PASS)
    p.set_defaults(func=cmd_rhoc)
    return parser


def _apply_config(parser, argv):
    """Re-parse with the --config file as defaults, so explicit flags still win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    try:
        values = json.loads(Path(args.config).read_text())
    except OSError as exc:
        raise OSError(f"cannot read config {args.config}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise UsageError(f"config {args.config} is not valid JSON: {exc}") from None
    if not isinstance(values, dict):
        raise UsageError(f"config {args.config} must hold a JSON object")
    values = {k.replace("-", "_"): v for k, v in values.items()}
    if "lambda" in values:
        values["lam"] = values.pop("lambda")
    unknown = sorted(set(values) - set(vars(args)))
    if unknown:
        raise UsageError(f"unknown config keys: {', '.join(unknown)}")
    converters = {"seed": parse_seed, "rho_grid": _float_list, "rho_list": _float_list,
                  "lambda_list": _float_list, "n_list": _int_list, "d_list": _int_list}
    for k, conv in converters.items():
        if values.get(k) is not None:
            values[k] = conv(values[k])
    subparser = parser._subparsers._group_actions[0].choices[args.command]
    subparser.set_defaults(**values)
    return parser.parse_args(argv)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.workers == 0:
            args.workers = default_workers()
        if args.workers < 0:
            raise UsageError("--workers must be >= 0")
        return args.func(args)
    except SystemExit as exc:
        return int(exc.code) if isinstance(exc.code, int) else EXIT_USAGE
    except (UsageError, argparse.ArgumentTypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except engine.EngineError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
