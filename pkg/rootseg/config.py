"""
Shared constants and environment helpers for rootseg.
"""

from __future__ import annotations

import os
from pathlib import Path


# ----------------------------
# Environment knobs
# ----------------------------
LOG_ENV_PATH = "ROOTSEG_LOG_PATH"
LOG_ENV_LEVEL = "ROOTSEG_LOG_LEVEL"  # debug, info, warning, error
WORKERS_ENV = "ROOTSEG_WORKERS"

# ----------------------------
# Tiling (network input / output windows)
# ----------------------------
DEFAULT_TILE_IN = 572
DEFAULT_TILE_OUT = 388
DEFAULT_SEG_THRESHOLD = 0.5

# ----------------------------
# File naming
# ----------------------------
MANIFEST_NAME = "manifest.csv"
SPLIT_NAME = "split.csv"
EFFECTIVE_CONFIG_NAME = "effective_config.txt"
MASK_SUFFIX = "_mask"
PROB_SUFFIX = "_prob"
BEST_CHECKPOINT_NAME = "best.ckpt"
LAST_CHECKPOINT_NAME = "last.ckpt"
TRAIN_LOG_NAME = "train_log.csv"
CMA_LOG_NAME = "cma_log.csv"
FRANGI_PARAMS_NAME = "frangi_params.json"
EVAL_CSV_NAME = "evaluation.csv"
EVAL_SUMMARY_NAME = "summary.json"
TRAIN_SUMMARY_NAME = "train_summary.json"
TEST_SET_DIR = "test"

# CSV headers are part of the on-disk contract.
MANIFEST_COLUMNS = ("image", "mask", "root_pixels")
TRAIN_LOG_COLUMNS = ("epoch", "lr", "train_f1", "val_f1", "train_loss")
CMA_LOG_COLUMNS = ("generation", "best_fitness", "mean_fitness", "sigma")
EVAL_COLUMNS = (
    "image",
    "f1",
    "precision",
    "recall",
    "accuracy",
    "root_length_px",
    "intersections",
    "root_intensity",
    "true_root_length_px",
)

# Exit statuses
EXIT_OK = 0
EXIT_USER_ERROR = 1
EXIT_INTERNAL_ERROR = 2


def _get_version() -> str:
    """Return version string from the VERSION file or fallback."""
    here = Path(__file__).parent.parent / "VERSION"
    if here.exists():
        return here.read_text().strip()
    return "dev"


__version__ = _get_version()


def env_int(name: str, default: int, *, minimum: int = 0) -> int:
    """Read an integer env var; fall back to `default` on junk."""
    raw = os.environ.get(name, "").strip()
    if not raw:
        return default
    try:
        value = int(raw)
    except ValueError:
        return default
    return value if value >= minimum else default


def worker_count() -> int:
    """Thread count for per-image parallel work (default 1)."""
    return env_int(WORKERS_ENV, 1, minimum=1)
