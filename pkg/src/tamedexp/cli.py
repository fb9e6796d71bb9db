"""Command line front end.

``tamedexp converge|compare|moments --config FILE`` runs a benchmark
experiment and writes plot-ready CSV files plus ``run_meta.json``;
``tamedexp selftest`` runs the fast invariant checks.

Exit codes: 0 success, 1 usage or config error, 2 finished but at least one
estimate lost more than 1% of its paths to overflow (or failed outright).
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import hashlib
import json
import math
import os
import platform
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .config import effective_levels, load_config, parse_config
from .exceptions import ConfigError, EstimationFailedError
from .mlmc import ESTIMATORS, UNRELIABLE_DISCARD_FRACTION, level_tag, sample_single_level
from .problems import make_cubic_problem, phi_sq_norm
from .schemes import SchemeKind
from .selftest import FAULTS, run_checks

EXIT_OK, EXIT_USAGE, EXIT_UNRELIABLE = 0, 1, 2
CURVE_HEADER = ["level", "n_steps", "dt", "error", "std_error", "n_discarded"]
MOMENTS_HEADER = ["scheme", "dt", "p2_moment", "p4_moment", "discard_fraction"]
_MOMENTS_PURPOSE = 7


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "true" if x else "false"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return f"{float(x):.17g}"
    return str(x)


def _write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])


def _jsonable(obj):
    if dataclasses.is_dataclass(obj):
        return {k: _jsonable(v) for k, v in dataclasses.asdict(obj).items()}
    if isinstance(obj, dict):
        return {k: _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if hasattr(obj, "value") and not isinstance(obj, (int, float)):
        return obj.value
    return obj


def _write_meta(out, command, cfg, levels, config_text):
    digest = hashlib.sha256((config_text if config_text is not None else repr(cfg)).encode()).hexdigest()
    meta = {
        "command": command,
        "config_sha256": digest,
        "master_seed": cfg.master_seed,
        "problem": _jsonable(cfg.problem),
        "schemes": [s.value for s in cfg.schemes],
        "estimators": list(cfg.estimators),
        "reference": cfg.reference.value,
        "taming": cfg.taming.value,
        "dt_max": cfg.dt_max,
        "levels": _jsonable(levels),
        "versions": {
            "tamedexp": __version__,
            "numpy": np.__version__,
            "python": platform.python_version(),
        },
    }
    with open(out / "run_meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _curve_rows(curve):
    return zip(curve.levels, curve.n_steps, curve.dt, curve.error, curve.std_error, curve.n_discarded)


def _run_curve(name, problem, kind, cfg, levels, workers, cache=None):
    ref = kind if name == "MLMCSR" else cfg.reference
    return ESTIMATORS[name](problem, kind, ref, levels, cfg.master_seed,
                            taming=cfg.taming, workers=workers, cache=cache)


def _prepare(cfg, out_dir):
    if not cfg.schemes:
        raise ConfigError("[run] schemes must not be empty")
    out = Path(out_dir if out_dir is not None else cfg.output_dir)
    levels = effective_levels(cfg)
    return out, levels, make_cubic_problem(cfg.problem)


def run_converge(cfg, out_dir=None, workers=1, config_text=None):
    """Weak error curves for every (scheme, estimator) pair.

    Returns ``(exit_code, curves)`` where ``curves`` maps ``(scheme, estimator)``
    to a :class:`~tamedexp.mlmc.WeakErrorCurve` (``None`` if estimation failed).
    """
    if not cfg.estimators:
        raise ConfigError("[run] estimators must not be empty")
    out, levels, problem = _prepare(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    curves, summary, code = {}, [], EXIT_OK
    cache = {}
    for kind in cfg.schemes:
        for name in cfg.estimators:
            try:
                curve = _run_curve(name, problem, kind, cfg, levels, workers, cache)
            except EstimationFailedError as exc:
                curves[(kind.value, name)] = None
                summary.append([kind.value, name, "", "undefined", "undefined", 0, 0, True, f"failed: {exc}"])
                code = EXIT_UNRELIABLE
                continue
            curves[(kind.value, name)] = curve
            _write_csv(out / f"converge_{kind.value}_{name}.csv", CURVE_HEADER, _curve_rows(curve))
            fitted = not math.isnan(curve.fitted_slope)
            summary.append([
                kind.value, name, curve.reference,
                curve.fitted_slope if fitted else "undefined",
                curve.fitted_intercept if fitted else "undefined",
                int(curve.fit_mask.sum()), curve.path_steps, curve.unreliable,
                "unreliable" if curve.unreliable else "ok",
            ])
            if curve.unreliable:
                code = EXIT_UNRELIABLE
    _write_csv(out / "converge_summary.csv",
               ["scheme", "estimator", "reference", "slope", "intercept", "n_fit_points",
                "path_steps", "unreliable", "status"], summary)
    _write_meta(out, "converge", cfg, levels, config_text)
    return code, curves


def run_compare(cfg, out_dir=None, workers=1, repeats=None, config_text=None):
    """Run each estimator standalone on identical seeds and report cost and curves.

    Returns ``(exit_code, results)``; ``results[(scheme, estimator)]`` holds the
    curve and the wall times of every repeat.
    """
    if not cfg.estimators:
        raise ConfigError("[run] estimators must not be empty")
    out, levels, problem = _prepare(cfg, out_dir)
    repeats = repeats or cfg.repeats
    out.mkdir(parents=True, exist_ok=True)
    results, summary, code = {}, [], EXIT_OK
    for kind in cfg.schemes:
        for name in cfg.estimators:
            times, curve = [], None
            try:
                for _ in range(repeats):
                    t0 = time.perf_counter()
                    curve = _run_curve(name, problem, kind, cfg, levels, workers)
                    times.append(time.perf_counter() - t0)
            except EstimationFailedError:
                results[(kind.value, name)] = {"curve": None, "times": times}
                code = EXIT_UNRELIABLE
                continue
            results[(kind.value, name)] = {"curve": curve, "times": times}
            _write_csv(out / f"compare_{kind.value}_{name}.csv", CURVE_HEADER, _curve_rows(curve))
            _write_csv(out / f"ladder_{kind.value}_{name}.csv",
                       ["piece", "level", "n_steps", "mean", "variance", "n_samples", "n_discarded"],
                       ([label, lvl, levels.n_steps(lvl), s.mean, s.variance, s.n_samples, s.n_discarded]
                        for label, lvl, s in curve.pieces))
            summary.append([kind.value, name, curve.reference, curve.path_steps,
                            curve.fitted_slope if not math.isnan(curve.fitted_slope) else "undefined",
                            curve.unreliable])
            if curve.unreliable:
                code = EXIT_UNRELIABLE
    _write_csv(out / "compare_summary.csv",
               ["scheme", "estimator", "reference", "path_steps", "slope", "unreliable"], summary)
    with open(out / "compare_report.txt", "w", encoding="utf-8") as fh:
        fh.write(f"{'scheme':<14}{'estimator':<10}{'path_steps':>14}{'mean s':>10}{'std s':>10}\n")
        for (scheme, name), res in results.items():
            t = np.array(res["times"]) if res["times"] else np.array([np.nan])
            steps = res["curve"].path_steps if res["curve"] is not None else 0
            fh.write(f"{scheme:<14}{name:<10}{steps:>14d}{t.mean():>10.3f}{t.std():>10.3f}\n")
    _write_meta(out, "compare", cfg, levels, config_text)
    return code, results


def run_moments(cfg, out_dir=None, workers=1, config_text=None):
    """``E|Y_N|^2``, ``E|Y_N|^4`` and the overflow fraction for each scheme and level.

    Returns ``(exit_code, rows)`` with rows laid out as ``MOMENTS_HEADER``.
    """
    out, levels, problem = _prepare(cfg, out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rows, code = [], EXIT_OK
    for kind in cfg.schemes:
        for lvl in range(levels.finest_level + 1):
            n = levels.n_steps(lvl)
            tag = level_tag(_MOMENTS_PURPOSE, kind, None, lvl)
            v = sample_single_level(problem, kind, n, levels.samples(lvl), cfg.master_seed, tag,
                                    taming=cfg.taming, observable=phi_sq_norm, workers=workers)
            ok = np.isfinite(v)
            frac = 1.0 - ok.mean()
            with np.errstate(over="ignore"):
                p2 = float(v[ok].mean()) if ok.any() else float("nan")
                p4 = float((v[ok] ** 2).mean()) if ok.any() else float("nan")
            rows.append([kind.value, problem.horizon / n, p2, p4, frac])
            if frac > UNRELIABLE_DISCARD_FRACTION:
                code = EXIT_UNRELIABLE
    _write_csv(out / "moments.csv", MOMENTS_HEADER, rows)
    _write_meta(out, "moments", cfg, levels, config_text)
    return code, rows


def run_selftest(fault=None, stream=None):
    """Print one PASS/FAIL line per invariant check; exit 0 iff all pass."""
    stream = stream or sys.stdout
    results = run_checks(fault)
    for name, ok, detail in results:
        stream.write(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}\n")
    passed = all(ok for _, ok, _ in results)
    stream.write(f"selftest {'passed' if passed else 'FAILED'} ({sum(ok for _, ok, _ in results)}"
                 f"/{len(results)})\n")
    return EXIT_OK if passed else EXIT_USAGE


def _build_parser():
    parser = argparse.ArgumentParser(prog="tamedexp", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, helptext in [
        ("converge", "weak error curves and fitted rates"),
        ("compare", "estimator cost and error comparison"),
        ("moments", "moment and overflow diagnostics"),
    ]:
        p = sub.add_parser(name, help=helptext)
        p.add_argument("--config", required=True, help="INI experiment file")
        p.add_argument("--seed", type=int, help="override [run] master_seed")
        p.add_argument("--out", help="override [run] output_dir")
        p.add_argument("--threads", type=int, default=1, help="worker threads (0 = auto)")
        if name == "compare":
            p.add_argument("--repeats", type=int, help="timing repeats (default [run] repeats)")
    st = sub.add_parser("selftest", help="fast invariant checks")
    st.add_argument("--fault", choices=FAULTS, help=argparse.SUPPRESS)
    return parser


def main(argv=None):
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK

    if args.command == "selftest":
        return run_selftest(args.fault)

    try:
        text = Path(args.config).read_text(encoding="utf-8")
    except OSError as exc:
        print(f"error: cannot read config: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        cfg = parse_config(text)
        if args.seed is not None:
            if not 0 <= args.seed < 2**64:
                raise ConfigError("--seed must be an unsigned 64-bit integer")
            cfg = cfg.with_seed(args.seed)
        workers = args.threads if args.threads > 0 else (os.cpu_count() or 1)
        kw = dict(out_dir=args.out, workers=workers, config_text=text)
        if args.command == "converge":
            code, _ = run_converge(cfg, **kw)
        elif args.command == "compare":
            if args.repeats is not None and args.repeats < 1:
                raise ConfigError("--repeats must be >= 1")
            code, _ = run_compare(cfg, repeats=args.repeats, **kw)
        else:
            code, _ = run_moments(cfg, **kw)
    except ConfigError as exc:
        print(f"error: {args.config}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return code


__all__ = ["main", "run_converge", "run_compare", "run_moments", "run_selftest", "load_config"]
