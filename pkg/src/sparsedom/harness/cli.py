"""Command-line entry point: ``sparsedom <experiment> [options]``."""
from __future__ import annotations

import argparse
import json
import logging
import sys

from .._accel import backend, set_workers
from ..errors import CalibrationFailure, DegenerateFit, InsufficientRange, InvalidConfig, IoFailure
from .config import DEFAULTS, EXPERIMENTS, FORMATS, load
from .experiments import run
from .report import write_report

EXIT_OK, EXIT_CONFIG, EXIT_CALIBRATION, EXIT_VIOLATION = 0, 1, 2, 3

log = logging.getLogger("sparsedom")

DESCRIPTIONS = {
    "decay": "level-set decay of T^F_* f against t M_r f, with an exponential fit",
    "dominate": "sparse domination with AUTO calibration across resolutions",
    "sharp-check": "pointwise bound of the grand sharp maximal function by kappa * M_r'",
    "kappa": "empirical L^r-Hormander constants, nesting in r, and K_max stability",
    "lerner": "local mean oscillation decomposition and its pointwise bound",
    "selftest": "bundled invariant suites at fixed seeds",
}


def _u64(text: str) -> int:
    v = int(text, 0)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must fit in an unsigned 64-bit integer")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sparsedom",
        description="Experiments on sparse bounds for maximally modulated singular integrals.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in EXPERIMENTS:
        epilog = "defaults:\n" + json.dumps(DEFAULTS[name], indent=2, sort_keys=True)
        p = sub.add_parser(name, help=DESCRIPTIONS[name], description=DESCRIPTIONS[name],
                           epilog=epilog, formatter_class=argparse.RawDescriptionHelpFormatter)
        p.add_argument("--config", help="JSON config merged over the defaults below")
        p.add_argument("--out", help="output directory (default: out)")
        p.add_argument("--format", choices=FORMATS, help="report format (default: both)")
        p.add_argument("--seed", type=_u64, help="master seed (default: 0)")
        p.add_argument("--workers", type=int, default=0,
                       help="threads for the compiled kernels (default: all cores)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if args.workers:
        set_workers(args.workers)
    try:
        cfg = load(args.experiment, args.config, seed=args.seed, out=args.out, fmt=args.format)
    except InvalidConfig as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    log.info("running %s with the %s backend", cfg.experiment, backend())
    try:
        result = run(cfg)
    except InsufficientRange as exc:
        if exc.report is not None:
            write_report(exc.report, cfg.output_path, cfg.output_format, cfg)
        print(f"calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    except (CalibrationFailure, DegenerateFit) as exc:
        print(f"calibration failure: {exc}", file=sys.stderr)
        return EXIT_CALIBRATION
    try:
        paths = write_report(result, cfg.output_path, cfg.output_format, cfg)
    except IoFailure as exc:
        print(f"io failure: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for p in paths:
        print(p)
    if result.violations:
        for v in result.violations:
            print(f"violation: {v}", file=sys.stderr)
        return EXIT_VIOLATION
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
