"""Command line front end.

Every command except ``verify`` writes one row per parameter point as CSV
(17 significant digits) or JSON.  Exit status: 0 success, 1 usage error,
2 verification failure, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys

import numpy as np

from . import closed_form as cf
from . import sampler
from .errors import ConditioningError, NumericalError
from .params import ModelParams

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_NUMERIC = 0, 1, 2, 3

COLUMNS = {
    "mean": ("lambda", "c", "t", "value"),
    "conditional": ("c", "t", "n", "value"),
    "moment2": ("lambda", "c", "t", "value"),
    "jumpback": ("lambda", "c", "t", "k", "value"),
    "jumpback_nu": ("lambda", "c", "t", "nu", "value"),
    "spherical": ("lambda", "c", "t", "value"),
    "simulate": ("lambda", "c", "t", "kind", "condition", "reps", "mean", "stderr",
                 "analytic", "zscore", "seed"),
}
SWEEP_VARS = ("lambda", "c", "t", "nu")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_sweep(text: str):
    """``var:start:stop:steps[:log]`` -> ``(var, values)``."""
    parts = text.split(":")
    if len(parts) not in (4, 5) or (len(parts) == 5 and parts[4] not in ("lin", "log")):
        raise UsageError(f"--sweep expects var:start:stop:steps[:log], got {text!r}")
    var = parts[0]
    if var not in SWEEP_VARS:
        raise UsageError(f"--sweep variable must be one of {SWEEP_VARS}, got {var!r}")
    try:
        start, stop, steps = float(parts[1]), float(parts[2]), int(parts[3])
    except ValueError:
        raise UsageError(f"--sweep bounds must be numbers and steps an integer: {text!r}") from None
    if steps < 1:
        raise UsageError("--sweep steps must be >= 1")
    if len(parts) == 5 and parts[4] == "log":
        if start <= 0 or stop <= 0:
            raise UsageError("log sweeps need positive bounds")
        values = np.geomspace(start, stop, steps) if steps > 1 else np.array([start])
    else:
        values = np.linspace(start, stop, steps)
    return var, [float(v) for v in values]


def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, str)):
        return str(v)
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return format(float(v), ".17g")


def _json_value(v):
    if isinstance(v, (np.integer,)):
        return int(v)
    if isinstance(v, (np.floating,)):
        return float(v)
    return v


def render(rows, columns, fmt):
    if fmt == "json":
        data = [{k: _json_value(r[k]) for k in columns} for r in rows]
        return json.dumps(data, indent=2) + "\n"
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for r in rows:
        w.writerow([_fmt(r[k]) for k in columns])
    return buf.getvalue()


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--lambda", dest="lam", type=float, default=1.0, help="Poisson rate (default 1)")
    common.add_argument("--c", type=float, default=1.0, help="speed (default 1)")
    common.add_argument("--t", type=float, default=1.0, help="time horizon (default 1)")
    common.add_argument("--sweep", help="var:start:stop:steps[:log], var in lambda, c, t, nu")
    common.add_argument("--format", choices=("csv", "json"), default="csv")
    common.add_argument("--out", help="output path (default: standard output)")
    common.add_argument("--workers", type=int, help="worker threads (default $GEODESIC_COMPASS_WORKERS or 1)")

    parser = _Parser(prog="geodesic-compass",
                     description="Moments of a Poisson-paced motion on hyperbolic geodesics and on the sphere.")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("mean", parents=[common], help="E cosh eta(t)")
    p = sub.add_parser("conditional", parents=[common], help="E{cosh eta(t) | N(t)=n}")
    p.add_argument("--n", type=int, required=True)
    sub.add_parser("moment2", parents=[common], help="E cosh^2 eta(t)")
    p = sub.add_parser("jumpback", parents=[common],
                       help="mean after restarting at event k, or at a Gamma(nu) time with --nu")
    p.add_argument("--k", type=int, default=1)
    p.add_argument("--nu", type=float)
    sub.add_parser("spherical", parents=[common], help="E cos d(P0, Pt) on the unit sphere")
    p = sub.add_parser("simulate", parents=[common], help="Monte Carlo estimate with the analytic value")
    p.add_argument("--kind", default="cosh",
                   choices=sorted(set(sampler.KINDS) | set(sampler.KIND_ALIASES)))
    p.add_argument("--n", type=int, help="condition on N(t) = n")
    p.add_argument("--k", type=int,
                   help="jump-back event for --kind jumpback, otherwise condition on N(t) >= k")
    p.add_argument("--reps", type=int, default=100_000)
    p.add_argument("--seed", type=int, default=0)
    p = sub.add_parser("verify", help="run the verification suite")
    p.add_argument("--only", type=int, action="append", metavar="N", help="run check N only (repeatable)")
    p.add_argument("--quick", action="store_true", help="smaller Monte Carlo battery")
    p.add_argument("--format", choices=("text", "json"), default="text")
    p.add_argument("--out")
    p.add_argument("--workers", type=int)
    return parser


def _points(args):
    base = {"lambda": args.lam, "c": args.c, "t": args.t, "nu": getattr(args, "nu", None)}
    if not args.sweep:
        return [base]
    var, values = parse_sweep(args.sweep)
    if var == "nu" and base["nu"] is None and args.command != "jumpback":
        raise UsageError("--sweep nu only applies to jumpback")
    return [dict(base, **{var: v}) for v in values]


def _params(pt):
    return ModelParams(pt["lambda"], pt["c"], pt["t"])


def _rows(args, workers):
    cmd = args.command
    rows = []
    for i, pt in enumerate(_points(args)):
        p = _params(pt)
        row = {"lambda": p.lam, "c": p.c, "t": p.t}
        if cmd == "mean":
            row["value"] = cf.mean_cosh(p)
        elif cmd == "conditional":
            if args.n < 0:
                raise UsageError("--n must be >= 0")
            row.update(n=args.n, value=cf.conditional_mean_cosh(args.n, p.c, p.t))
        elif cmd == "moment2":
            row["value"] = cf.second_moment(p)
        elif cmd == "spherical":
            row["value"] = cf.spherical_mean(p)
        elif cmd == "jumpback":
            if pt["nu"] is not None:
                if pt["nu"] <= 0:
                    raise UsageError("--nu must be > 0")
                row.update(nu=pt["nu"], value=cf.gamma_mixture_mean(p, pt["nu"]))
            else:
                if args.k < 1:
                    raise UsageError("--k must be >= 1")
                row.update(k=args.k, value=cf.jumpback_mean(p, args.k))
        elif cmd == "simulate":
            rows.append(_simulate_row(args, p, i, workers))
            continue
        rows.append(row)
    return rows


def _simulate_row(args, p, index, workers):
    kind = sampler.KIND_ALIASES.get(args.kind, args.kind)
    if args.reps < 1:
        raise UsageError("--reps must be >= 1")
    if not 0 <= args.seed < 2**64:
        raise UsageError("--seed must fit in 64 unsigned bits")
    k = 1
    if kind == "jumpback":
        k = 1 if args.k is None else args.k
        if k < 1:
            raise UsageError("--k must be >= 1")
        cond = sampler.Condition.exactly(args.n) if args.n is not None else sampler.Condition.at_least(k)
    elif args.n is not None and args.k is not None:
        raise UsageError("give at most one of --n and --k")
    elif args.n is not None:
        cond = sampler.Condition.exactly(args.n)
    elif args.k is not None:
        cond = sampler.Condition.at_least(args.k)
    else:
        cond = sampler.Condition.none()
    if cond.n < 0:
        raise UsageError("--n and --k must be >= 0")
    # each sweep point draws from its own stream of the master seed
    seed = sampler.SeedSpec(args.seed, index)
    try:
        rep = sampler.estimate(kind, p, cond, args.reps, seed, workers, k)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    label = kind if kind != "jumpback" else f"jumpback{k}"
    return {"lambda": p.lam, "c": p.c, "t": p.t, "kind": label, "condition": str(cond),
            "reps": rep.replications, "mean": rep.mean, "stderr": rep.stderr,
            "analytic": rep.analytic, "zscore": rep.zscore, "seed": args.seed}


def _workers(args):
    if args.workers is not None:
        if args.workers < 1:
            raise UsageError("--workers must be >= 1")
        return args.workers
    try:
        return sampler.default_workers()
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _verify(args, workers):
    from .verify import CHECKS, run_checks

    only = args.only or None
    if only and any(n not in CHECKS for n in only):
        raise UsageError(f"--only accepts check numbers {sorted(CHECKS)}")
    overrides = {"check_8": {"workers": workers}}
    if args.quick:
        overrides["check_8"].update(seeds=10, replications=20_000)
    results = run_checks(only, **overrides)
    passed = sum(r.passed for r in results)
    if args.format == "json":
        text = json.dumps([r.__dict__ for r in results], indent=2) + "\n"
    else:
        text = "".join(r.line() + "\n" for r in results)
        text += f"{passed}/{len(results)} checks passed\n"
    return text, EXIT_OK if passed == len(results) else EXIT_VERIFY


def _write(text, path, stdout):
    if path is None:
        stdout.write(text)
        stdout.flush()
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise UsageError(f"cannot write {path}: {exc.strerror or exc}") from None


def main(argv=None, stdout=None, stderr=None) -> int:
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    try:
        args = build_parser().parse_args(argv)
        workers = _workers(args)
        if args.command == "verify":
            text, code = _verify(args, workers)
        else:
            rows = _rows(args, workers)
            cols = COLUMNS[args.command]
            if args.command == "jumpback" and rows and "nu" in rows[0]:
                cols = COLUMNS["jumpback_nu"]
            text, code = render(rows, cols, args.format), EXIT_OK
        _write(text, args.out, stdout)
        return code
    except UsageError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except ConditioningError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except ValueError as exc:
        print(f"error: {exc}", file=stderr)
        return EXIT_USAGE
    except (NumericalError, OverflowError) as exc:
        print(f"numerical failure: {exc}", file=stderr)
        return EXIT_NUMERIC
    except SystemExit as exc:   # --help
        return int(exc.code or 0)


if __name__ == "__main__":
    sys.exit(main())
