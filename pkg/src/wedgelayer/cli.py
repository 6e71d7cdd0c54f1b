"""Command-line entry point: ``wedgelayer <subcommand> --config scenario.toml --out DIR``."""
from __future__ import annotations

import argparse
import csv
import logging
import sys
from pathlib import Path

from .errors import ValidationError, WedgeLayerError
from .pipeline import (
    EXIT_OK,
    EXIT_SOLVER,
    EXIT_VALIDATION,
    EXIT_VERIFY,
    STAGES,
    run_pipeline,
    sweep,
    verify,
)
from .scenario import Scenario, parse_scenario

SUBCOMMAND_STAGES = {
    "similarity": ["similarity"],
    "profile": ["profile"],
    "march": ["march"],
    "reconstruct": ["reconstruct"],
}


def _float_list(text: str) -> list:
    return [float(t) for t in text.split(",") if t.strip()]


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="scenario TOML file (defaults apply if omitted)")
    common.add_argument("--out", type=Path, default=Path("runs/latest"), help="output directory")
    common.add_argument("--stages", type=lambda s: [t.strip() for t in s.split(",") if t.strip()],
                        help=f"comma-separated subset of {','.join(STAGES)}")
    common.add_argument("--strict", action="store_true", help="treat warnings as failures")
    common.add_argument("-v", "--verbose", action="store_true")

    p = argparse.ArgumentParser(prog="wedgelayer", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)
    for name in SUBCOMMAND_STAGES:
        sub.add_parser(name, parents=[common], help=f"run the pipeline through the {name} stage")
    v = sub.add_parser("verify", parents=[common], help="run everything and check every invariant")
    v.add_argument("--artifacts", type=Path, help="verify an existing run directory instead of solving")
    s = sub.add_parser("sweep", parents=[common], help="verify over a grid of m values and perturbation scales")
    s.add_argument("--m", type=_float_list, required=True, help="comma-separated m values")
    s.add_argument("--scales", type=_float_list, default=[0.0], help="perturbation scale factors")
    s.add_argument("--workers", type=int, default=None)
    return p


def _load(args) -> Scenario:
    if args.config is None:
        return Scenario()
    return parse_scenario(args.config.read_text(encoding="utf-8"))


def _sweep(args, scenario) -> int:
    if not args.m:
        raise ValidationError("sweep needs at least one m value")
    rows = sweep(scenario, args.m, args.scales, args.workers)
    args.out.mkdir(parents=True, exist_ok=True)
    worst = EXIT_OK
    with open(args.out / "sweep.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("m", "scale", "status", "n_failed", "failed_checks"))
        for m, scale, rep, err in rows:
            if rep is None:
                status, failed, names = "error", -1, err
                worst = max(worst, EXIT_SOLVER)
            else:
                bad = rep.failures(args.strict)
                status = "pass" if not bad else "fail"
                failed, names = len(bad), ";".join(c.name for c in bad)
                if bad:
                    worst = max(worst, EXIT_VERIFY)
            w.writerow((m, scale, status, failed, names))
            print(f"m={m:g} scale={scale:g}: {status}" + (f" [{names}]" if names else ""))
    return worst


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    try:
        scenario = _load(args) if not (args.command == "verify" and args.artifacts) else None
        if args.command == "sweep":
            return _sweep(args, scenario)
        if args.command == "verify" and args.artifacts:
            rep = verify(args.artifacts, strict=args.strict)
            print(rep.summary(args.strict))
            return EXIT_OK if rep.passed(args.strict) else EXIT_VERIFY
        stages = args.stages or SUBCOMMAND_STAGES.get(args.command, list(STAGES))
        result = run_pipeline(scenario, args.out, stages, strict=args.strict)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (WedgeLayerError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SOLVER
    if result.report is not None:
        print(result.report.summary(args.strict))
    if result.failure:
        print(result.failure, file=sys.stderr)
    print(f"outputs in {result.out_dir} (exit {result.exit_code})")
    return result.exit_code


if __name__ == "__main__":
    sys.exit(main())
