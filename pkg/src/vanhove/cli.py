"""Command-line interface.

Subcommands mirror the experiment kinds: evolve, weak-limit, wigner,
cosmo, validate, oracle.  Exit status: 0 all checks pass, 1 a declared
validation or tolerance check failed, 2 configuration or setup error.
Time units assume hbar = 1 throughout.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from .config import load_config
from .errors import ConfigError, VanHoveError
from .harness import run_experiment

_KINDS = ("evolve", "weak-limit", "wigner", "cosmo", "validate", "oracle")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vanhove",
        description="declarative experiment runner for spectral-kernel decoherence",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for kind in _KINDS:
        p = sub.add_parser(kind, help=f"run a '{kind}' experiment config")
        p.add_argument("--config", required=True, type=Path, help="JSON config file")
        p.add_argument("--out", required=True, type=Path, help="output directory")
        p.add_argument(
            "--threads",
            type=int,
            default=None,
            help="worker threads (default: VANHOVE_THREADS or 1)",
        )
        p.add_argument(
            "--seed", type=int, default=None, help="overrides the config seed"
        )
    return parser


def _resolve_threads(flag: int | None) -> int:
    if flag is None:
        env = os.environ.get("VANHOVE_THREADS")
        if env is None:
            return 1
        try:
            flag = int(env)
        except ValueError:
            raise ConfigError(f"VANHOVE_THREADS must be an integer, got {env!r}")
    if flag < 1:
        raise ConfigError(f"thread count must be >= 1, got {flag}")
    return flag


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        threads = _resolve_threads(args.threads)
        config = load_config(args.config)
        if config["kind"] != args.command:
            raise ConfigError(
                f"config kind {config['kind']!r} does not match "
                f"subcommand {args.command!r}"
            )
        result = run_experiment(config, args.out, threads=threads, seed=args.seed)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except VanHoveError as exc:
        print(f"setup error: {exc}", file=sys.stderr)
        return 2

    for failure in result.failures:
        print(f"FAIL: {failure}", file=sys.stderr)
    artifacts = ", ".join(a["path"] for a in result.manifest["artifacts"])
    print(f"wrote {artifacts} + manifest.json to {args.out}")
    return 0 if result.ok else 1


if __name__ == "__main__":
    sys.exit(main())
