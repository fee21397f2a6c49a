"""``ce <subcommand> --config <path> [--out <dir>] [--seed <u64>]``.

Exit codes: 0 success, 1 a check failed (or a numerical error stopped the
run), 2 usage or configuration error. ``CE_THREADS`` caps the native
thread pools (BLAS, OpenMP).
"""

import argparse
import os
import sys

from . import config as _config
from .errors import ConfensError, ConfigError, MisuseError, PreconditionError
from .runner import COMMANDS, run_command

EXIT_OK, EXIT_CHECK, EXIT_USAGE = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def build_parser():
    p = _Parser(prog="ce", description="Configuration-ensemble hybrid dynamics laboratory.")
    sub = p.add_subparsers(dest="command", required=True, metavar="subcommand")
    for name in COMMANDS:
        s = sub.add_parser(name, help=_HELP[name])
        s.add_argument("--config", required=True, help="scenario TOML file")
        s.add_argument("--out", help="artifact directory (default: scenario.output_dir)")
        s.add_argument("--seed", type=_u64, help="seed for randomized corpora (overrides scenario.seed)")
        s.add_argument("-q", "--quiet", action="store_true")
        if name == "qubit-protocol":
            s.add_argument("--communicate", action="store_true", default=None,
                           help="send the classical bit to party A")
    return p


_HELP = {
    "evolve": "evolve the initial ensemble and write snapshots",
    "condition": "condition on a classical outcome and report entanglement",
    "sweep": "entanglement entropy over times and outcomes (CSV)",
    "brackets": "bracket isomorphism corpus on the evolved ensemble",
    "locality": "remote invariance and strong separability reports (JSON)",
    "qubit-protocol": "Bell pairs entangled through a classical bit",
    "gravity-demo": "local observables under a direct qubit coupling",
    "selftest": "run the acceptance criteria and print a pass/fail table",
}


def _u64(s):
    v = int(s)
    if not 0 <= v < 2 ** 64:
        raise argparse.ArgumentTypeError("seed must be an unsigned 64-bit integer")
    return v


def _thread_limit():
    v = os.environ.get("CE_THREADS")
    if not v:
        return None
    try:
        n = int(v)
    except ValueError:
        raise ConfigError(f"CE_THREADS must be a positive integer, got {v!r}", key="CE_THREADS") from None
    if n < 1:
        raise ConfigError(f"CE_THREADS must be a positive integer, got {v!r}", key="CE_THREADS")
    return n


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = _config.load(args.config)
        if args.seed is not None:
            cfg = cfg.replace("scenario", seed=args.seed)
        out = args.out or cfg["scenario"]["output_dir"]
        limit = _thread_limit()
    except (ConfigError, OSError) as exc:
        print(f"ce {args.command}: config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    try:
        if limit:
            from threadpoolctl import threadpool_limits
            with threadpool_limits(limits=limit):
                return run_command(args.command, cfg, out, args.quiet, getattr(args, "communicate", None))
        return run_command(args.command, cfg, out, args.quiet, getattr(args, "communicate", None))
    except (ConfigError, PreconditionError, MisuseError) as exc:
        print(f"ce {args.command}: scenario {cfg.name!r}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ConfensError as exc:
        print(f"ce {args.command}: scenario {cfg.name!r}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_CHECK


if __name__ == "__main__":
    sys.exit(main())
