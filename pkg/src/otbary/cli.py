"""Command line front end.

Three subcommands: ``run`` executes an experiment config and writes the
artifact directory, ``report`` tabulates stored runs, and ``verify``
re-checks a stored run against its manifest.  Exit codes: 0 success,
2 validation (bad config or arguments), 3 numerical failure, 4 I/O.
"""

import argparse
import sys
from dataclasses import replace

from .config import parse_config
from .errors import NumericalError, ValidationError
from .experiments import report, run_experiment, verify

__all__ = ["main", "build_parser"]

EXIT_OK = 0
EXIT_VALIDATION = 2
EXIT_NUMERICAL = 3
EXIT_IO = 4


def build_parser():
    """Argument parser for the ``otbary`` command."""
    parser = argparse.ArgumentParser(
        prog="otbary",
        description="Wasserstein-2 barycenter experiments: train generative "
                    "barycenters, tabulate runs, and re-verify stored artifacts.")
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="execute an experiment config")
    run_p.add_argument("config", help="path to an INI experiment config")
    run_p.add_argument("--seed", type=int, default=None,
                       help="override experiment.seed")
    run_p.add_argument("--out", default=None,
                       help="override experiment.output_dir")
    run_p.add_argument("--threads", type=int, default=None,
                       help="solver updates run on this many threads; more "
                            "than one relinquishes bitwise determinism")

    report_p = sub.add_parser("report", help="tabulate stored runs")
    report_p.add_argument("directory", help="run directory or a directory of runs")

    verify_p = sub.add_parser("verify", help="re-check a stored run")
    verify_p.add_argument("directory", help="run directory with manifest.json")
    return parser


def _cmd_run(args):
    cfg = parse_config(args.config)
    if args.seed is not None:
        if args.seed < 0:
            raise ValidationError(f"--seed must be >= 0, got {args.seed}")
        cfg = replace(cfg, seed=args.seed)
    if args.out is not None:
        cfg = replace(cfg, output_dir=args.out)
    if args.threads is not None:
        if args.threads > 1:
            print("warning: --threads > 1 relinquishes bitwise determinism",
                  file=sys.stderr)
        cfg = replace(cfg, train=replace(cfg.train, n_threads=args.threads))
    manifest = run_experiment(cfg)
    print(f"run complete: {cfg.output_dir} "
          f"(kind={cfg.kind}, seed={cfg.seed}, wall={manifest['wall_time_s']:.1f}s)")
    return EXIT_OK


def _cmd_report(args):
    report(args.directory)
    return EXIT_OK


def _cmd_verify(args):
    verify(args.directory)
    return EXIT_OK


def main(argv=None):
    """Entry point: dispatch a subcommand and map failures to exit codes."""
    parser = build_parser()
    args = parser.parse_args(argv)
    handlers = {"run": _cmd_run, "report": _cmd_report, "verify": _cmd_verify}
    try:
        return handlers[args.command](args)
    except ValidationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO


if __name__ == "__main__":
    sys.exit(main())
