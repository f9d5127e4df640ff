"""Command-line entry point.

    stratsweep SUBCOMMAND [--config PATH] [--out DIR] [--key=value ...]

Subcommands: disk-mpml, sh-mpml, sh-tensor, perturbation-study,
modal-sensitivity, riccati-1d, one-sweep. Config files are flat
'key = value' text; command-line --key=value overrides win. Exit codes:
0 success, 1 configuration error, 2 non-convergence of a single solve.
"""

import argparse
import sys

from .experiments import (ConfigError, DRIVERS, make_config,
                          parse_config_file, run_experiment)


def _split_overrides(tokens):
    overrides = {}
    for tok in tokens:
        if not tok.startswith("--") or "=" not in tok:
            raise ConfigError(f"config key 'overrides': expected --key=value, "
                              f"got {tok!r}")
        key, value = tok[2:].split("=", 1)
        overrides[key] = value
    return overrides


def build_parser():
    parser = argparse.ArgumentParser(
        prog="stratsweep",
        description="Sweeping-preconditioner experiments for stratified media")
    sub = parser.add_subparsers(dest="experiment", required=True)
    for name in DRIVERS:
        p = sub.add_parser(name, help=f"run the {name} experiment")
        p.add_argument("--config", default=None, help="flat key=value config file")
        p.add_argument("--out", default=None, help="output directory")
    return parser


def main(argv=None):
    argv = sys.argv[1:] if argv is None else list(argv)
    parser = build_parser()
    args, extra = parser.parse_known_args(argv)
    try:
        values = parse_config_file(args.config) if args.config else {}
        overrides = _split_overrides(extra)
        if args.out is not None:
            overrides["out"] = args.out
        cfg = make_config(args.experiment, values, overrides)
        _, code = run_experiment(cfg)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return code


if __name__ == "__main__":
    sys.exit(main())
