"""Command-line entry point: ``vardiff-lab run`` and ``vardiff-lab presets``."""

from __future__ import annotations

import argparse
import json
import logging
import sys

from .errors import ConfigError, VardiffError
from .presets import format_presets
from .runner import ExperimentConfig, run


def build_parser():
    parser = argparse.ArgumentParser(prog="vardiff-lab", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    p_run = sub.add_parser("run", help="run an experiment config")
    p_run.add_argument("--config", required=True, help="JSON experiment config")
    p_run.add_argument("--out", default=None, help="output directory (overrides config 'output')")
    p_run.add_argument("--jobs", type=int, default=1, help="worker processes for independent cases")
    p_run.add_argument("--verbose", action="store_true")
    p_pre = sub.add_parser("presets", help="list analytic presets")
    p_pre.add_argument("--json", action="store_true", help="print the catalog as JSON")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "presets":
        from .presets import list_presets

        print(json.dumps(list_presets(), indent=2) if args.json else format_presets())
        return 0

    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    if args.jobs < 1:
        print("error: --jobs must be >= 1", file=sys.stderr)
        return 2
    try:
        config = ExperimentConfig.load(args.config)
        report = run(config, out=args.out, jobs=args.jobs)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except (VardiffError, OSError) as exc:
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    for case in report["cases"]:
        status = "PASS" if case["passed"] else "FAIL"
        print(f"{status} {case['name']} resolution={case['resolution']} residuals={case['residuals']}")
    for c in report["convergence"]:
        print(f"{'PASS' if c['passed'] else 'FAIL'} convergence {c}")
    return 0 if report["passed"] else 1


if __name__ == "__main__":
    sys.exit(main())
