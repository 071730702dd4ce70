"""Command-line entry point.

    seqtherm run --config FILE [--out DIR] [--threads K]
    seqtherm preset FIGURE_ID [--seed S] [--out DIR] [--threads K]
    seqtherm preset --list

Exit codes: 0 success, 1 configuration error, 2 runtime error.  The
SEQTHERM_THREADS environment variable overrides the worker count unless
``--threads`` is given.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .errors import ValidationError
from .experiments import ExperimentConfig, run
from .presets import PRESET_IDS, preset

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="seqtherm",
        description="Sequential-measurement thermometry experiments on a Heisenberg chain",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a scenario from a JSON config file")
    p_run.add_argument("--config", required=True, help="path to a JSON config")
    p_run.add_argument("--out", default=None, help="output directory (default: config 'out')")
    p_run.add_argument("--threads", type=int, default=None, help="worker count override")

    p_preset = sub.add_parser("preset", help="run a stored figure preset")
    p_preset.add_argument("figure_id", nargs="?", help=f"one of: {', '.join(PRESET_IDS)}")
    p_preset.add_argument("--list", action="store_true", help="list preset ids and exit")
    p_preset.add_argument("--seed", type=int, default=None, help="master seed override")
    p_preset.add_argument("--out", default=None, help="output directory")
    p_preset.add_argument("--threads", type=int, default=None, help="worker count override")
    return parser


def _cmd_run(args: argparse.Namespace) -> int:
    path = Path(args.config)
    if not path.exists():
        print(f"config file not found: {path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        cfg = ExperimentConfig.from_json(path.read_text(encoding="utf-8"))
        cfg.validate()
    except ValidationError as exc:
        print(f"config error in {path}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(cfg, args.out, args.threads)


def _cmd_preset(args: argparse.Namespace) -> int:
    if args.list or args.figure_id is None:
        for fid in PRESET_IDS:
            print(fid)
        return EXIT_OK if args.list else EXIT_CONFIG
    try:
        cfg = preset(args.figure_id)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    if args.seed is not None:
        cfg.master_seed = args.seed
    return _execute(cfg, args.out, args.threads)


def _execute(cfg: ExperimentConfig, out: str | None, threads: int | None) -> int:
    try:
        paths = run(cfg, out_dir=out, n_workers=threads)
    except ValidationError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as exc:  # noqa: BLE001 - surfaced as exit code 2
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    for p in paths:
        print(p)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "run":
        return _cmd_run(args)
    return _cmd_preset(args)


if __name__ == "__main__":
    sys.exit(main())
