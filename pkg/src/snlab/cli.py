"""Command-line entry point: ``snlab <subcommand> --config <file> [key=value ...]``.

Subcommand flags override config-file values; bare ``key=value`` arguments
override both.  Exit code 0 on a complete sweep (even with per-task
failures recorded in the output), 2 on configuration errors.
"""

from __future__ import annotations

import argparse
import sys

from .errors import ConfigError
from .sweep import KINDS, config_from_mapping, emit, parse_config, run_sweep

_FLAG_KEYS = {
    "bifurcation": ["mu-min", "mu-max", "columns", "keep", "burn"],
    "chi": ["gamma-min", "gamma-max", "points", "n", "seeds", "window-n"],
    "gammas": ["lmin", "lmax"],
    "mather": ["grid", "jmax", "orbit-cap"],
    "misiurewicz": ["period", "lmin", "lmax"],
    "br-scan": ["l", "eps", "grid", "alpha", "delta", "iota", "horizon"],
    "measure": ["gamma", "mode", "n", "bins", "l", "theta"],
    "windows": ["gamma-min", "gamma-max", "points", "n"],
    "scaling": ["gamma-min", "gamma-max", "points", "n", "window-n"],
}

_COMMON_FLAGS = ["seed", "workers", "format", "output"]


def _build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="snlab",
        description="saddle-node laboratory: parameter sweeps for unimodal fold unfoldings")
    sub = ap.add_subparsers(dest="kind", required=True)
    for kind in KINDS:
        sp = sub.add_parser(kind)
        sp.add_argument("--config", default=None, help="key = value config file")
        for flag in _FLAG_KEYS[kind] + _COMMON_FLAGS:
            sp.add_argument(f"--{flag}", default=None)
        sp.add_argument("overrides", nargs="*", metavar="key=value",
                        help="additional config overrides")
    return ap


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    mapping = {}
    if args.config:
        try:
            with open(args.config) as fh:
                text = fh.read()
        except OSError as exc:
            print(f"config error: {exc}", file=sys.stderr)
            return 2
        for line in text.splitlines():
            stripped = line.split("#", 1)[0].strip()
            if stripped and "=" in stripped:
                k, v = stripped.split("=", 1)
                mapping[k.strip()] = v.strip()
    mapping["experiment"] = args.kind
    for flag in _FLAG_KEYS[args.kind] + _COMMON_FLAGS:
        val = getattr(args, flag.replace("-", "_"))
        if val is not None:
            mapping[flag.replace("-", "_")] = val
    for ov in args.overrides:
        if "=" not in ov:
            print(f"config error: override {ov!r} is not key=value", file=sys.stderr)
            return 2
        k, v = ov.split("=", 1)
        mapping[k.strip()] = v.strip()
    try:
        config = config_from_mapping(mapping)
    except ConfigError as exc:
        for p in exc.problems:
            print(f"config error: {p}", file=sys.stderr)
        return 2
    result = run_sweep(config)
    payload = emit(result)
    if config.output == "-":
        sys.stdout.buffer.write(payload)
    else:
        with open(config.output, "wb") as fh:
            fh.write(payload)
    return 0


if __name__ == "__main__":
    sys.exit(main())
