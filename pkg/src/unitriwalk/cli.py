"""Command line entry point: ``unitriwalk <subcommand> [flags]``."""

import argparse
import json
import sys

from .exact import CapExceeded
from .harness import ConfigError, ExperimentConfig, run

SUBCOMMANDS = {
    "simulate": "simulate",
    "exact": "exact",
    "certify": "certify",
    "east-gap": "east-gap",
    "tmix-scan": "scaling",
    "lower-bound": "lower-bound",
    "fit": "fit",
}


def build_parser():
    parser = argparse.ArgumentParser(prog="unitriwalk", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="JSON config file; explicit flags override it")
        p.add_argument("--n", type=int, nargs="+")
        p.add_argument("--q", type=int, nargs="+")
        p.add_argument("--p", type=float, nargs="+")
        p.add_argument("--T", type=float, nargs="+")
        p.add_argument("--samples", type=int)
        p.add_argument("--delta", type=float)
        p.add_argument("--seed", type=int)
        p.add_argument("--cap", type=int)
        p.add_argument("--n0", type=int)
        p.add_argument("--eps", type=float)
        p.add_argument("--t-cap", dest="t_cap", type=float)
        p.add_argument("--out")
        p.add_argument("--format", choices=["csv", "json"])
        p.add_argument("--input", help="tmix-scan CSV to fit (fit only)")
        p.add_argument("--log-out", dest="log_out", help="write the first event log (simulate only)")
    return parser


def config_from_args(args):
    data = {}
    if args.config:
        with open(args.config) as fh:
            data = json.load(fh)
    for key in ("n", "q", "p", "T", "samples", "delta", "seed", "cap", "n0", "eps", "t_cap",
                "out", "format", "input", "log_out"):
        v = getattr(args, key)
        if v is not None:
            data[key] = v
    data["kind"] = SUBCOMMANDS[args.command]
    if args.command == "east-gap" and args.p is not None and args.q is None:
        data["q"] = []
    return ExperimentConfig.from_dict(data)


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = config_from_args(args)
        text = run(cfg)
    except ConfigError as exc:
        print(f"invalid config: {exc}", file=sys.stderr)
        return 2
    except CapExceeded as exc:
        print(f"state space too large: {exc}", file=sys.stderr)
        return 3
    if not cfg.out:
        sys.stdout.write(text)
    return 0


if __name__ == "__main__":
    sys.exit(main())
