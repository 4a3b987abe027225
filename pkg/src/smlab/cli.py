"""Command-line entry point: ``smlab <subcommand> [flags]``.

Exit codes: 0 success (all enforced margins hold), 2 configuration error (no
files written), 3 numerical failure or a violated inequality.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import os
import platform
import sys
from datetime import datetime, timezone
from typing import Sequence

import numpy as np
import scipy

from . import __version__
from .errors import ConfigError, SmlabError
from .harness import SUITES, PointFailure, RunConfig, Table, execute

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3


def _numbers(values: list[str] | None) -> list[float] | None:
    """Flatten repeated and comma-separated numeric flags."""
    if values is None:
        return None
    out = []
    for chunk in values:
        for tok in chunk.split(","):
            tok = tok.strip()
            if not tok:
                continue
            try:
                out.append(int(tok) if tok.lstrip("+-").isdigit() else float(tok))
            except ValueError:
                raise ConfigError(f"not a number: {tok!r}") from None
    return out


def _json_arg(text: str | None):
    if text is None:
        return None
    try:
        return json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"bad JSON argument: {exc}") from None


def load_config_file(path: str) -> dict:
    try:
        with open(path) as fh:
            data = json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON in {path}: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return data


def format_value(v) -> str:
    """Deterministic text for a CSV cell: repr for floats, str otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def render_csv(table: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(table.columns)
    for row in table.rows:
        w.writerow([format_value(v) for v in row])
    return buf.getvalue()


def sidecar(cfg: RunConfig, table: Table, exit_code: int) -> dict:
    return {
        "config": cfg.echo(),
        "seed": cfg.seed,
        "rows": len(table.rows),
        "exit_code": exit_code,
        "versions": {"smlab": __version__, "numpy": np.__version__,
                     "scipy": scipy.__version__, "python": platform.python_version()},
        "timestamp": datetime.now(timezone.utc).isoformat(),
    }


def sidecar_path(out: str) -> str:
    root, _ = os.path.splitext(out)
    return root + ".json"


def run(cfg: RunConfig, stdout=None, stderr=None) -> int:
    """Execute one configuration and emit its outputs; returns the exit code."""
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        table = execute(cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=stderr)
        return EXIT_CONFIG
    except PointFailure as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except SmlabError as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=stderr)
        return EXIT_NUMERIC

    failing = [r for r in table.records if r.enforced and not r.holds(cfg.tol)]
    code = EXIT_NUMERIC if failing else EXIT_OK
    for r in failing:
        print(f"violated: {r.id} {r.params} lhs={r.lhs!r} rhs={r.rhs!r} "
              f"margin={r.margin!r} stderr={r.stderr!r}", file=stderr)

    text = render_csv(table)
    if cfg.out:
        with open(cfg.out, "w", newline="") as fh:
            fh.write(text)
        with open(sidecar_path(cfg.out), "w") as fh:
            json.dump(sidecar(cfg, table, code), fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        stdout.write(text)
    return code


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="smlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"smlab {__version__}")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    def add(name, help_text):
        p = sub.add_parser(name, help=help_text)
        p.add_argument("--config", help="JSON file with parameters; flags override it")
        p.add_argument("--out", help="CSV destination (stdout if omitted)")
        p.add_argument("--seed", type=int, help="unsigned 64-bit seed")
        p.add_argument("--trials", type=int)
        p.add_argument("--tol", type=float, help="verification tolerance")
        return p

    def grid_flag(p, name, dest=None):
        p.add_argument(f"--{name}", dest=dest or name.replace("-", "_"), action="append",
                       help="comma-separated values, flag may repeat")

    p = add("params", "approximation parameters (tau, kappa, theta, tau0, theta0)")
    grid_flag(p, "tau")
    grid_flag(p, "theta")

    p = add("ot", "max E<Y,Z> under a mutual-information budget")
    p.add_argument("--py")
    p.add_argument("--pz")
    grid_flag(p, "R")

    p = add("minmi", "min I(Z;Zbar) under a cost constraint")
    p.add_argument("--pz")
    grid_flag(p, "budget")
    p.add_argument("--cost", choices=["sqdist", "inner"])
    p.add_argument("--direction", choices=["<=", ">="])
    p.add_argument("--constraint", choices=["mean", "sure"])

    p = add("ieps", "I_eps for a one-dimensional law")
    p.add_argument("--px")
    grid_flag(p, "d")
    grid_flag(p, "eps")

    p = add("rem", "random energy model free energy by Monte Carlo")
    grid_flag(p, "M")
    grid_flag(p, "beta")
    p.add_argument("--method", choices=["auto", "exact", "stratified"])

    for name, text in (("tensor-fe", "spiked tensor free energy and its bounds"),
                       ("detect", "spiked tensor detection experiment")):
        p = add(name, text)
        grid_flag(p, "n")
        grid_flag(p, "d")
        grid_flag(p, "lambda", dest="lam")
        p.add_argument("--px")
        if name == "tensor-fe":
            p.add_argument("--inner", help="exact or mc:<k>")
        else:
            p.add_argument("--h0-trials", type=int, dest="h0_trials")
            p.add_argument("--typicality-tol", type=float, dest="typicality_tol")

    p = add("tensorize", "soft-max of product type classes against its single-letter limit")
    p.add_argument("--py")
    p.add_argument("--pz")
    grid_flag(p, "N")

    p = add("verify", "inequality verification suite")
    p.add_argument("suite", choices=sorted(SUITES))
    return parser


_GRID_KEYS = {"tau", "theta", "R", "budget", "d", "eps", "M", "beta", "n", "lam", "N"}
_JSON_KEYS = {"py", "pz", "px"}
_PLAIN_KEYS = {"cost", "direction", "constraint", "method", "inner", "h0_trials",
               "typicality_tol"}


def config_from_args(args: argparse.Namespace) -> RunConfig:
    base = load_config_file(args.config) if args.config else {}
    params = dict(base)
    seed = params.pop("seed", None)
    trials = params.pop("trials", None)
    tol = params.pop("tol", None)
    out = params.pop("out", None)
    ns = vars(args)
    for key in _GRID_KEYS | _JSON_KEYS | _PLAIN_KEYS:
        if ns.get(key) is None:
            continue
        name = "lambda" if key == "lam" else key
        if key in _GRID_KEYS:
            params[name] = _numbers(ns[key])
        elif key in _JSON_KEYS:
            params[name] = _json_arg(ns[key])
        else:
            params[name] = ns[key]
    sub = args.subcommand
    if sub == "verify":
        sub = f"verify-{args.suite}"
    cfg = RunConfig(sub, params,
                    seed=args.seed if args.seed is not None else seed,
                    trials=args.trials if args.trials is not None else trials,
                    out=args.out if args.out is not None else out)
    if args.tol is not None:
        cfg.tol = args.tol
    elif tol is not None:
        cfg.tol = tol
    return cfg


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    try:
        cfg = config_from_args(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return run(cfg)


if __name__ == "__main__":
    sys.exit(main())
