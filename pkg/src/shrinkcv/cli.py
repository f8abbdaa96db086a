"""Command-line entry point: ``sweep``, ``tune`` and ``selftest``."""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys
from pathlib import Path

from .beamforming import sdr_loss, to_db
from .errors import ConfigError, InvalidInputError, NumericalFailureError
from .harness import (TUNED_METHODS, build_scenario, emit_csv, emit_curves, format_value,
                      load_config, run_method, run_sweep, trial_target)

EXIT_OK = 0
EXIT_FAILED = 1
EXIT_CONFIG = 2
EXIT_IO = 3


def _parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="shrinkcv",
        description="Cross-validated shrinkage covariance estimation for MVDR beamforming.")
    p.add_argument("-v", "--verbose", action="store_true", help="log every failed trial")
    sub = p.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="Monte-Carlo sweep over methods and sample counts")
    sw.add_argument("config", help="TOML experiment file")
    sw.add_argument("--out", required=True, help="output directory for sweep.csv and curves.csv")
    sw.add_argument("--seed", type=int, help="override the master seed")
    sw.add_argument("--trials", type=int, help="override the number of trials")
    sw.add_argument("--threads", type=int, help="worker threads (default from config)")

    tu = sub.add_parser("tune", help="tune one snapshot set and print the cost curve")
    tu.add_argument("--scenario", required=True, help="TOML file with a [scenario] table")
    tu.add_argument("--method", required=True, choices=TUNED_METHODS)
    tu.add_argument("--l", dest="l_count", type=int, required=True, help="number of snapshots")
    tu.add_argument("--seed", type=int, default=0)
    tu.add_argument("--trial", type=int, default=0, help="trial index within the seed")

    sub.add_parser("selftest", help="check fast paths against brute-force evaluation")
    return p


def _sweep(args) -> int:
    cfg = load_config(args.config)
    overrides = {}
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if args.trials is not None:
        overrides["trials"] = args.trials
    if args.threads is not None:
        overrides["threads"] = args.threads
    cfg = dataclasses.replace(cfg, **overrides)
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(exc.errno, f"cannot create {out}: {exc.strerror}", str(out)) from exc
    report = run_sweep(cfg)
    emit_csv(report, out / "sweep.csv")
    emit_curves(report.curves, out / "curves.csv")
    total = cfg.trials * len(cfg.l_grid) * len(cfg.methods)
    print(f"wrote {out / 'sweep.csv'} and {out / 'curves.csv'} "
          f"({len(report.failures)} of {total} method-trials failed)")
    return EXIT_OK


def _tune(args) -> int:
    cfg = load_config(args.scenario, require_experiment=False)
    if args.l_count < 2:
        raise ConfigError("--l must be >= 2")
    cfg = dataclasses.replace(cfg, master_seed=args.seed)
    real = build_scenario(cfg.scenario)
    samples = real.snapshots(args.seed, args.trial, args.l_count)
    target = trial_target(cfg, real, args.trial)
    try:
        est, rho, iters, res = run_method(args.method, samples, real, target, cfg)
        status = "converged"
    except NumericalFailureError as exc:
        print(f"tuning failed: {exc}", file=sys.stderr)
        return EXIT_FAILED
    print(f"method     {args.method}")
    print(f"L          {args.l_count}")
    print(f"rho*       {format_value(float(rho))}")
    print(f"alpha*     {format_value(float(res.alpha_star))}")
    print(f"sdr_loss   {format_value(float(to_db(sdr_loss(est, real.r_true, real.s))))} dB")
    if args.method.startswith(("ste", "oracle_ste")):
        print(f"iterations {iters} ({status})")
    print("rho,cost")
    for r, c in res.curve:
        print(f"{format_value(r)},{format_value(c)}")
    return EXIT_OK


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "sweep":
            return _sweep(args)
        if args.command == "tune":
            return _tune(args)
        from . import selftest
        return EXIT_OK if selftest.run() else EXIT_FAILED
    except (ConfigError, InvalidInputError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileNotFoundError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
