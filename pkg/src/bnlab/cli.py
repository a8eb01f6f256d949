"""Command line entry point: ``bnlab <subcommand> [options]``.

Exit codes: 0 success, 2 configuration error, 3 precondition violated,
4 resource budget exceeded, 5 theorem check failed under ``--strict``.
"""
from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import __version__
from .errors import BnlabError, ConfigError
from .harness import FORMATS, PRESETS, SUBCOMMANDS, load_manifest, parse_config_text, parse_set_items, resolve_config, run

OUT_ENV = "BNLAB_OUT_DIR"


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", help=f"output directory (default: ${OUT_ENV} or ./out/<subcommand>)")
    p.add_argument("--format", default="csv,json", help="comma list drawn from csv,json")
    p.add_argument("--strict", action="store_true", help="exit 5 when a theorem check fails")
    p.add_argument("--workers", type=int, default=1, help="threads for independent trials; results do not depend on it")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bnlab", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"bnlab {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", help="flat 'key = value' file, '#' comments")
        p.add_argument("--set", action="append", default=[], metavar="KEY=VALUE", help="override one setting")
        p.add_argument("--seed", type=int, help="master seed (same as --set seed=N)")
        _common(p)
    p = sub.add_parser("rerun", help="repeat a run from its manifest.json")
    p.add_argument("manifest")
    _common(p)
    sub.add_parser("presets", help="list the named presets")
    return parser


def _formats(text: str) -> list[str]:
    fmts = [f.strip() for f in text.split(",") if f.strip()]
    bad = [f for f in fmts if f not in FORMATS]
    if bad or not fmts:
        raise ConfigError(f"--format takes a comma list from {','.join(FORMATS)}, got {text!r}")
    return fmts


def _out_dir(args, subcommand: str) -> Path:
    if args.out:
        return Path(args.out)
    env = os.environ.get(OUT_ENV)
    if env:
        return Path(env)
    return Path("out") / subcommand


def _execute(args) -> int:
    if args.command == "presets":
        for name, (owner, values) in PRESETS.items():
            settings = " ".join(f"{k}={v}" for k, v in values.items())
            print(f"{name:16s} {owner:10s} {settings}")
        return 0
    if args.workers < 1:
        raise ConfigError("--workers must be >= 1")
    if args.command == "rerun":
        sub, cfg, formats = load_manifest(args.manifest)
        if args.format != "csv,json":
            formats = _formats(args.format)
    else:
        sub = args.command
        file_cfg = {}
        if args.config:
            try:
                file_cfg = parse_config_text(Path(args.config).read_text(encoding="utf-8"))
            except OSError as exc:
                raise ConfigError(f"cannot read config {args.config}: {exc.strerror}") from None
        overrides = parse_set_items(args.set)
        if args.seed is not None:
            overrides["seed"] = str(args.seed)
        cfg = resolve_config(sub, file_cfg, overrides)
        formats = _formats(args.format)
    result = run(sub, cfg, _out_dir(args, sub), formats, args.workers)
    print(f"wrote {len(result.files)} files to {result.out_dir}")
    failed = result.failed_checks
    if failed:
        print(f"checks failed: {', '.join(failed)}", file=sys.stderr)
        if args.strict:
            return 5
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _execute(args)
    except BnlabError as exc:
        print(f"bnlab: error: {exc}", file=sys.stderr)
        return exc.exit_code


if __name__ == "__main__":
    sys.exit(main())
