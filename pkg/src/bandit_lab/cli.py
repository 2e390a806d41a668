"""``bandit-lab`` command line.

Exit codes: 0 success, 2 configuration error, 3 numeric failure (including a
failed bound check), 4 I/O error.
"""
from __future__ import annotations

import argparse
import json
import sys
from typing import Optional, Sequence

import numpy as np

from . import bounds, gittins
from .config import apply_overrides, parse_config, read_document
from .exp_family import BanditInstance, DomainError, ExpFamilyModel, Family
from .harness import ConfigError, emit, run_experiment

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_NUMERIC = 3
EXIT_IO = 4


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a comma-separated list of numbers, got {text!r}")


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="bandit-lab", description="Bayesian and frequentist bandit experiments.")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run a Monte Carlo experiment")
    run.add_argument("--config", help="TOML experiment file")
    run.add_argument("--horizon", type=int)
    run.add_argument("--reps", type=int, dest="replications")
    run.add_argument("--seed", type=int)
    run.add_argument("--policy", action="append", help="policy name; repeat to select several")
    run.add_argument("--arms", type=_float_list, help="comma-separated arm means")
    run.add_argument("--family", choices=[f.value for f in Family])
    run.add_argument("--workers", type=int)
    run.add_argument("--out", help="output file (default stdout)")
    run.add_argument("--format", choices=["csv", "json"])

    gt = sub.add_parser("gittins-table", help="tabulate finite-horizon Gittins indices for Beta posteriors")
    gt.add_argument("--horizon", type=int, required=True)
    gt.add_argument("--alpha", type=float, default=1.0)
    gt.add_argument("--beta", type=float, default=1.0)
    gt.add_argument("--out", required=True)

    cb = sub.add_parser("check-bounds", help="validate the deviation inequalities numerically")
    cb.add_argument("--suite", default="all", choices=sorted(bounds.SUITES) + ["all"])
    cb.add_argument("--seed", type=int, default=0)
    cb.add_argument("--runs", type=int, default=bounds.MC_RUNS, help="Monte Carlo runs per check")
    cb.add_argument("--out", help="JSON report file (default stdout)")

    lb = sub.add_parser("lower-bound", help="Lai-Robbins constant of an instance")
    lb.add_argument("--family", required=True, choices=[f.value for f in Family])
    lb.add_argument("--arms", type=_float_list, required=True)
    lb.add_argument("--sigma2", type=float, default=1.0)
    lb.add_argument("--horizon", type=int, help="also evaluate constant * log T")
    return p


def _write(text: str, path: Optional[str]) -> None:
    if path is None:
        sys.stdout.write(text)
        return
    try:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    except OSError as exc:
        raise OSError(f"cannot write {path!r}: {exc.strerror}") from exc


def _cmd_run(args) -> int:
    raw = read_document(args.config) if args.config else {}
    raw = apply_overrides(
        raw,
        horizon=args.horizon,
        replications=args.replications,
        seed=args.seed,
        policy=args.policy,
        arms=args.arms,
        family=args.family,
        workers=args.workers,
        out=args.out,
        format=args.format,
    )
    cfg = parse_config(raw)
    result = run_experiment(cfg)
    text = emit(result, cfg.format, cfg.output)
    if cfg.output is None:
        sys.stdout.write(text)
    return EXIT_OK


def _cmd_gittins(args) -> int:
    if not 1 <= args.horizon <= gittins.MAX_TABLE_HORIZON:
        raise ConfigError(f"horizon must be in [1, {gittins.MAX_TABLE_HORIZON}]")
    try:
        prior = gittins.BetaState(args.alpha, args.beta)
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    gittins.build_gittins_table(prior, args.horizon).save(args.out)
    return EXIT_OK


def _cmd_check(args) -> int:
    reports = bounds.run_suite(args.suite, args.seed, args.runs)
    _write(bounds.reports_to_json(reports) + "\n", args.out)
    failed = [r for r in reports if not r.passed]
    for r in failed:
        print(f"FAILED {r.name} {r.params}", file=sys.stderr)
    return EXIT_NUMERIC if failed else EXIT_OK


def _cmd_lower_bound(args) -> int:
    try:
        instance = BanditInstance(ExpFamilyModel(Family(args.family), args.sigma2), tuple(args.arms))
    except ValueError as exc:
        raise ConfigError(str(exc)) from exc
    curve = bounds.lai_robbins_curve(instance)
    out = {"family": args.family, "arms": list(instance.means), "constant": curve.constant}
    if args.horizon is not None:
        if args.horizon < 1:
            raise ConfigError("horizon must be positive")
        out["horizon"] = args.horizon
        out["value"] = float(curve(args.horizon))
    print(json.dumps(out))
    return EXIT_OK


_COMMANDS = {
    "run": _cmd_run,
    "gittins-table": _cmd_gittins,
    "check-bounds": _cmd_check,
    "lower-bound": _cmd_lower_bound,
}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_CONFIG
    try:
        return _COMMANDS[args.command](args)
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DomainError, FloatingPointError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print(f"numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ValueError as exc:
        # unsupported combinations surface while building policies
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
