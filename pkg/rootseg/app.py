"""
Command-line entry point for rootseg.

Exit status: 0 success, 1 user error (bad arguments, bad config, missing or
unreadable inputs), 2 internal error (including training divergence).
"""

from __future__ import annotations

import argparse
import sys
import traceback
from pathlib import Path
from typing import Optional, Sequence

from . import commands
from .config import EXIT_INTERNAL_ERROR, EXIT_USER_ERROR, __version__
from .log import get_log_path, log_error, log_info, log_startup
from .runconfig import RunConfig, load_run_config
from .train import TrainingDiverged

DEFAULT_OUT = {
    "synth": "data",
    "split": None,
    "train": "runs/train",
    "segment": "runs/segment",
    "tune-frangi": "runs/frangi",
    "evaluate": "runs/evaluate",
}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        self.exit(EXIT_USER_ERROR, f"[rootseg] {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="run configuration file (key=value lines)")
    common.add_argument("--seed", type=int, help="global seed (overrides the config file)")
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override one config key; repeatable",
    )

    parser = _Parser(prog="rootseg", description="Root segmentation: U-Net and tuned Frangi baseline.")
    parser.add_argument("--version", action="version", version=f"rootseg {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("synth", parents=[common], help="generate a synthetic dataset")
    p.add_argument("-n", type=int, default=10, help="number of scenes (default 10)")
    p.add_argument("--test", dest="test_n", type=int, default=0, help="extra held-out scenes under test/")

    p = sub.add_parser("split", parents=[common], help="write split.csv from a manifest")
    p.add_argument("manifest", type=Path, nargs="?")

    p = sub.add_parser("train", parents=[common], help="train the U-Net")
    p.add_argument("manifest", type=Path, nargs="?")
    p.add_argument("--resume", action="store_true", help="continue from last.ckpt in the output directory")

    p = sub.add_parser("segment", parents=[common], help="write <stem>_mask.png for each image")
    p.add_argument("images", type=Path, nargs="?", help="image file or directory")
    p.add_argument("--checkpoint", type=Path, help="U-Net checkpoint")
    p.add_argument("--frangi-params", type=Path, help="Frangi parameter JSON")
    p.add_argument("--save-prob", action="store_true", help="also write 16-bit <stem>_prob.png")

    p = sub.add_parser("tune-frangi", parents=[common], help="tune Frangi parameters with CMA-ES")
    p.add_argument("manifest", type=Path, nargs="?")

    p = sub.add_parser("evaluate", parents=[common], help="score predicted masks against annotations")
    p.add_argument("predictions", type=Path, nargs="?")
    p.add_argument("truth", type=Path, nargs="?")
    return parser


def _pick(flag: Optional[Path], run: RunConfig, key: str, what: str) -> Path:
    value = flag or run.path(key)
    if value is None:
        raise ValueError(f"missing {what}: pass it on the command line or set paths.{key}")
    return value


def _output_dir(args: argparse.Namespace, run: RunConfig) -> Optional[Path]:
    if run.path("out") is not None:
        return run.path("out")
    default = DEFAULT_OUT[args.command]
    return Path(default) if default else None


def _dispatch(args: argparse.Namespace, run: RunConfig) -> int:
    out = _output_dir(args, run)
    cmd = args.command
    if cmd == "synth":
        return commands.cmd_synth(run, args.n, out, test_n=args.test_n)
    if cmd == "split":
        manifest = _pick(args.manifest, run, "manifest", "manifest")
        return commands.cmd_split(run, manifest, out / "split.csv" if out else None)
    if cmd == "train":
        return commands.cmd_train(run, _pick(args.manifest, run, "manifest", "manifest"), out, resume=args.resume)
    if cmd == "segment":
        return commands.cmd_segment(
            run,
            _pick(args.images, run, "images", "input images"),
            out,
            checkpoint=args.checkpoint or (None if args.frangi_params else run.path("checkpoint")),
            frangi_params=args.frangi_params or (None if args.checkpoint else run.path("frangi_params")),
            save_prob=args.save_prob,
        )
    if cmd == "tune-frangi":
        return commands.cmd_tune_frangi(run, _pick(args.manifest, run, "manifest", "manifest"), out)
    if cmd == "evaluate":
        return commands.cmd_evaluate(
            run,
            _pick(args.predictions, run, "predictions", "prediction directory"),
            _pick(args.truth, run, "truth", "annotation directory"),
            out,
        )
    raise ValueError(f"unknown command {cmd!r}")


def _fail(msg: str, status: int) -> int:
    print(f"[rootseg] {msg}", file=sys.stderr)
    print(f"[rootseg] See log: {get_log_path()}", file=sys.stderr)
    return status


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    log_startup(args.command)
    try:
        run = load_run_config(args.config, args.overrides, seed=args.seed, out=args.out)
        status = _dispatch(args, run)
    except TrainingDiverged as exc:
        log_error("app", f"{exc} (last good state from epoch {exc.epoch})")
        return _fail(str(exc), EXIT_INTERNAL_ERROR)
    except (ValueError, OSError) as exc:
        log_error("app", f"{args.command}: {exc}")
        return _fail(str(exc), EXIT_USER_ERROR)
    except Exception as exc:
        log_error("app", f"{args.command}: unexpected error\n{traceback.format_exc()}")
        return _fail(f"internal error: {exc}", EXIT_INTERNAL_ERROR)
    log_info("app", f"{args.command} finished with status {status}")
    return status
