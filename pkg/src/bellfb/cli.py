"""Command-line interface.

    bellfb simulate --protocol p_f --measurement full --n 100 --out pf.csv
    bellfb verify hjb-max
    bellfb reproduce-fig1 --out fig1.csv

Exit codes: 0 success, 1 verification failure, 2 configuration error,
3 numerical error.
"""
from __future__ import annotations

import argparse
import dataclasses
import io
import json
import os
import sys
import tempfile

import numpy as np

from . import __version__
from .ensemble import (EnsembleError, analytic_curve, check_fig1, fig1_series,
                       run_ensemble)
from .optimality import (verify_bound_saturation, verify_hill_ralph,
                         verify_hjb_max_concurrence, verify_hjb_min_time, verify_mapping)
from .protocols import ConfigError, SimConfig
from .qcore import DomainError, NumericalError
from .sde import StepSizeError

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

# flag name -> (SimConfig field, type)
SIM_FIELDS = {
    "measurement": ("measurement", str),
    "protocol": ("protocol", str),
    "mode": ("mode", str),
    "dt": ("dt", float),
    "t-max": ("t_max", float),
    "c0": ("c0", float),
    "eta": ("eta", float),
    "n": ("n", int),
    "seed": ("seed", int),
    "grid-points": ("grid_points", int),
}


def read_config_file(path):
    """Parse a flat ``key=value`` file.  Keys use flag spelling (``t-max``)
    or field spelling (``t_max``); ``#`` starts a comment."""
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key=value, got {line!r}")
            key, value = (s.strip() for s in line.split("=", 1))
            out[key.replace("_", "-")] = value
    return out


def build_config(args) -> SimConfig:
    values = {}
    if getattr(args, "config", None):
        for key, raw in read_config_file(args.config).items():
            if key not in SIM_FIELDS:
                if key in ("threads", "format", "out"):
                    continue
                raise ConfigError(f"unknown config key {key!r}")
            name, typ = SIM_FIELDS[key]
            try:
                values[name] = typ(raw)
            except ValueError as exc:
                raise ConfigError(f"bad value for {key}: {raw!r}") from exc
    for flag, (name, _) in SIM_FIELDS.items():
        v = getattr(args, flag.replace("-", "_"), None)
        if v is not None:
            values[name] = v
    if "measurement" not in values and values.get("protocol") == "p_h":
        values["measurement"] = "half"
    return SimConfig(**values).resolved()


def _atomic_write(path, text):
    """Write ``text`` to ``path`` via a temporary file and rename, so a failed
    run never leaves a partial file.  ``path=None`` writes to stdout."""
    if path is None:
        sys.stdout.write(text)
        return
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".bellfb-", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _jsonable(x):
    if isinstance(x, dict):
        return {str(k): _jsonable(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_jsonable(v) for v in x]
    if isinstance(x, np.ndarray):
        return _jsonable(x.tolist())
    if isinstance(x, (np.floating, float)):
        return float(x) if np.isfinite(x) else None
    if isinstance(x, (np.integer,)):
        return int(x)
    if isinstance(x, (np.bool_,)):
        return bool(x)
    if dataclasses.is_dataclass(x) and not isinstance(x, type):
        return _jsonable(dataclasses.asdict(x))
    return x


def _header(meta):
    return "".join(f"# {k}={v}\n" for k, v in meta.items())


def _fmt(v):
    return "" if v is None or (isinstance(v, float) and np.isnan(v)) else repr(float(v))


def format_simulation(stats, cfg, fmt):
    analytic = analytic_curve(cfg.protocol, cfg.measurement, stats.t, cfg.c0)
    meta = {**cfg.as_dict(), "observable": stats.observable, "version": __version__}
    if fmt == "json":
        return json.dumps(_jsonable({
            "config": meta, "t": stats.t, "mean": stats.mean, "stddev": stats.std,
            "stderr": stats.stderr, "analytic": analytic}), indent=1) + "\n"
    buf = io.StringIO()
    buf.write(_header(meta))
    buf.write("t,mean,stddev,stderr,analytic\n")
    for i, t in enumerate(stats.t):
        a = None if analytic is None else analytic[i]
        buf.write(",".join([_fmt(t), _fmt(stats.mean[i]), _fmt(stats.std[i]),
                            _fmt(stats.stderr[i]), _fmt(a)]) + "\n")
    return buf.getvalue()


def format_fig1(series, checks, meta, fmt):
    if fmt == "json":
        return json.dumps(_jsonable({
            "config": meta, "checks": checks,
            "series": {k: {"t": s.t, "mean": s.mean, "stddev": s.std, "stderr": s.stderr,
                           "N": s.N, "analytic": analytic_curve(
                               s.config.protocol, s.config.measurement, s.t)}
                       for k, s in series.items()}}), indent=1) + "\n"
    buf = io.StringIO()
    buf.write(_header({**meta, **{f"check.{k}": v for k, v in checks.items()}}))
    buf.write("series,t,mean,stddev,stderr,analytic\n")
    for name, s in series.items():
        ref = analytic_curve(s.config.protocol, s.config.measurement, s.t)
        for i, t in enumerate(s.t):
            buf.write(",".join([name, _fmt(t), _fmt(s.mean[i]), _fmt(s.std[i]),
                                _fmt(s.stderr[i]), _fmt(None if ref is None else ref[i])])
                      + "\n")
    return buf.getvalue()


def format_report(report, fmt):
    if fmt == "json":
        return json.dumps(_jsonable(report), indent=1) + "\n"
    flat = {k: v for k, v in _jsonable(report).items() if not isinstance(v, (list, dict))}
    return _header(flat)


# ---------------------------------------------------------------------------
# commands


def cmd_simulate(args):
    cfg = build_config(args)
    stats = run_ensemble(cfg, threads=args.threads)
    _atomic_write(args.out, format_simulation(stats, cfg, args.format))
    return EXIT_OK


def _verify_report(args):
    which = args.which
    if which == "hjb-max":
        rep = verify_hjb_max_concurrence()
        return rep.passed, {**rep.summary(), "argmax_C0": rep.argmax[0],
                            "argmax_C1": rep.argmax[-1]}
    if which == "hjb-min-time":
        rep = verify_hjb_min_time(C_threshold=args.threshold if args.threshold else 0.5)
        return rep.passed, rep.summary()
    if which == "bound":
        protocol = args.protocol or "p_f"
        if protocol == "none":
            protocol = f"none-{args.measurement or 'full'}"
        kw = {} if args.n is None else {"n": args.n}
        rep = verify_bound_saturation(protocol, dt=args.dt or 1e-4, seed=args.seed or 0, **kw)
        return rep["passed"], rep
    if which == "mapping":
        rep = verify_mapping(N=args.n or 50, seed=args.seed or 0, dt=args.dt or 1e-4)
        return rep["passed"], rep
    if which == "hill-ralph":
        rep = verify_hill_ralph(dt=args.dt or 1e-4, seed=args.seed or 0)
        return rep["passed"], rep
    raise ConfigError(f"unknown verification {which!r}")


def cmd_verify(args):
    passed, report = _verify_report(args)
    report = {"check": args.which, **report, "passed": bool(passed)}
    _atomic_write(args.out, format_report(report, args.format))
    if not passed:
        print(f"verification {args.which} failed: "
              f"{json.dumps(_jsonable(report.get('worst', {})))}", file=sys.stderr)
    return EXIT_OK if passed else EXIT_FAIL


def cmd_reproduce_fig1(args):
    kw = dict(dt=args.dt or 1e-4, T=args.t_max or 5.0, N=args.n or 10000,
              seed=args.seed or 0, grid_points=args.grid_points or 201,
              threads=args.threads)
    series = fig1_series(**kw)
    checks = check_fig1(series)
    meta = {**kw, "version": __version__}
    _atomic_write(args.out, format_fig1(series, checks, meta, args.format))
    return EXIT_OK if checks["passed"] else EXIT_FAIL


def _add_sim_flags(p):
    p.add_argument("--measurement", choices=("half", "full"))
    p.add_argument("--protocol", choices=("p_h", "p_f", "none", "hill_ralph"))
    p.add_argument("--mode", choices=("lu_reset", "hamiltonian"))
    p.add_argument("--dt", type=float)
    p.add_argument("--t-max", type=float)
    p.add_argument("--c0", type=float)
    p.add_argument("--eta", type=float)
    p.add_argument("--n", type=int)
    p.add_argument("--seed", type=int)
    p.add_argument("--grid-points", type=int)
    p.add_argument("--threads", type=int, default=1, help="worker cap (0 = auto)")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--out", help="output path (default: stdout)")
    p.add_argument("--config", help="key=value file; flags override it")


def build_parser():
    parser = argparse.ArgumentParser(prog="bellfb", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", help="run an ensemble and write mean concurrence")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("verify", help="run a named verification")
    p.add_argument("which", choices=("hjb-max", "hjb-min-time", "bound", "mapping",
                                     "hill-ralph"))
    p.add_argument("--threshold", type=float)
    _add_sim_flags(p)
    p.set_defaults(func=cmd_verify)

    p = sub.add_parser("reproduce-fig1", help="four mean-concurrence series")
    _add_sim_flags(p)
    p.set_defaults(func=cmd_reproduce_fig1)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        return args.func(args)
    except (ConfigError, DomainError, OSError) as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (EnsembleError, StepSizeError, NumericalError, FloatingPointError) as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
