"""Command-line front end.

Every subcommand reads a JSON scenario config and writes its artifact tree to
the output directory.  Exit codes: 0 success, 1 inequality suite reported
violations, 2 invalid config, 3 blow-up detected, 4 resolution failure
(spectral-tail monitor), 5 I/O error.
"""

import argparse
import json
import sys

from .fields import set_fft_workers
from .harness import EXIT_CONFIG, EXIT_IO, ScenarioSpec, run_scenario
from .integrator import ConfigError

_SUBCOMMANDS = {
    "simulate": "simulate",
    "certify": "certify",
    "perturb-sweep": "perturb_sweep",
    "inequality-suite": "inequality_suite",
    "exponent-sweep": "exponent_sweep",
    "twin-run": "twin_run",
    "resume": "resume",
}


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="cbf",
        description="Convective Brinkman-Forchheimer pseudospectral solver "
        "and regularity-certificate engine",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run a {name} scenario")
        p.add_argument("--config", required=True, help="scenario JSON path")
        p.add_argument("--out", required=True, help="output directory")
        p.add_argument(
            "--deterministic",
            action="store_true",
            help="pin the deterministic reference mode (single FFT worker "
            "unless --threads is given)",
        )
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="FFT worker count (results are bit-identical per fixed count)",
        )
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.threads is not None:
        if args.threads < 1:
            print("--threads must be >= 1")
            return EXIT_CONFIG
        set_fft_workers(args.threads)
    elif args.deterministic:
        set_fft_workers(1)

    try:
        with open(args.config) as fh:
            raw = json.load(fh)
    except OSError as exc:
        print(f"cannot read config: {exc}")
        return EXIT_IO
    except json.JSONDecodeError as exc:
        print(f"config is not valid JSON: {exc}")
        return EXIT_CONFIG

    kind = _SUBCOMMANDS[args.command]
    declared = raw.get("kind")
    if declared is not None and declared != kind:
        print(f"config declares kind {declared!r} but subcommand is {kind!r}")
        return EXIT_CONFIG
    raw["kind"] = kind

    try:
        spec = ScenarioSpec.from_dict(raw, args.out)
    except (ConfigError, KeyError, TypeError, ValueError) as exc:
        print(f"config error: {exc}")
        return EXIT_CONFIG
    return run_scenario(spec)


if __name__ == "__main__":
    sys.exit(main())
