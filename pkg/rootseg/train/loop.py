"""
Training loop with validation-based model selection.

Purpose:
  Each epoch re-selects training instances, runs augmented mini-batches
  through SGD with Nesterov momentum, then scores every grid tile of the
  validation images (normalization only, no augmentation). The epoch with
  the highest validation F1 is kept as the best checkpoint.

Notes:
  - Epoch randomness comes from `default_rng([seed, epoch])`, so a run
    resumed from `last.ckpt` replays exactly what an uninterrupted run does.
  - Epochs are numbered from 0.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from ..augment import normalize
from ..analysis import ConfusionCounts, confusion, f1_precision_recall_accuracy
from ..config import BEST_CHECKPOINT_NAME, LAST_CHECKPOINT_NAME, TRAIN_LOG_COLUMNS, TRAIN_LOG_NAME
from ..imagecore import RasterImage, binarize, center_crop, extract_tile, plan_tile_grid, tile_batches
from ..log import log_error, log_info
from ..net import (
    ArchSpec,
    NetworkParams,
    backward,
    forward,
    he_init,
    load_checkpoint,
    output_geometry,
    predict_image,
    save_checkpoint,
    valid_input_size,
)
from ..storage import append_csv, parse_optional_float, read_csv, write_csv
from .config import TrainConfig
from .instances import PreparedImage, build_batch, prepare_images, select_instances
from .losses import combined_loss_and_grad
from .optim import OptimizerState, lr_at, sgd_nesterov_step

ImagePairs = Sequence[tuple[RasterImage, RasterImage]]


class TrainingDiverged(RuntimeError):
    """Loss went non-finite; `last_good` holds the parameters at the start of the epoch."""

    def __init__(self, message: str, epoch: int, last_good: NetworkParams):
        super().__init__(message)
        self.epoch = epoch
        self.last_good = last_good


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    lr: float
    train_f1: Optional[float]
    val_f1: Optional[float]
    train_loss: float

    def row(self) -> list[object]:
        return [self.epoch, self.lr, self.train_f1, self.val_f1, self.train_loss]


@dataclass
class TrainResult:
    params: NetworkParams  # best-validation parameters
    best_epoch: Optional[int]
    best_val_f1: Optional[float]
    history: list[EpochRecord] = field(default_factory=list)
    image_val_f1: Optional[float] = None


def _pooled(counts: ConfusionCounts, pred: np.ndarray, truth: np.ndarray) -> ConfusionCounts:
    return counts + confusion(pred, truth)


def _zero() -> ConfusionCounts:
    return ConfusionCounts(0, 0, 0, 0)


def validation_f1(
    params: NetworkParams,
    prepared: Sequence[PreparedImage],
    in_size: int,
    out_size: int,
    batch_size: int,
) -> Optional[float]:
    """Pooled F1 over every grid tile of every validation image."""
    counts = _zero()
    for item in prepared:
        specs = plan_tile_grid(item.height, item.width, in_size, out_size)
        for chunk in tile_batches(specs, batch_size):
            x = np.stack([normalize(extract_tile(item.image, s)).transpose(2, 0, 1) for s in chunk])
            prob, _ = forward(params, x)
            for spec, p in zip(chunk, prob):
                truth = center_crop(extract_tile(item.mask, spec), out_size)
                counts = _pooled(counts, binarize(p), truth)
    return f1_precision_recall_accuracy(counts).f1


def image_level_f1(params: NetworkParams, images: ImagePairs, in_size: int, batch_size: int) -> Optional[float]:
    """Pooled F1 of assembled whole-image predictions."""
    counts = _zero()
    for image, mask in images:
        prob = predict_image(params, image, in_size=in_size, batch_size=batch_size)
        counts = _pooled(counts, binarize(prob), mask)
    return f1_precision_recall_accuracy(counts).f1


def _better(candidate: Optional[float], best: Optional[float]) -> bool:
    if candidate is None:
        return False
    return best is None or candidate > best


def _metadata(epoch: Optional[int], best_epoch: Optional[int], best_val_f1: Optional[float], cfg: TrainConfig) -> dict:
    return {
        "epoch": epoch,
        "best_epoch": best_epoch,
        "best_val_f1": best_val_f1,
        "seed": cfg.seed,
        "tile_in": cfg.tile_in,
    }


def _next_epoch(metadata: dict) -> int:
    last = metadata.get("epoch")
    return 0 if last is None else int(last) + 1


def _load_history(log_path: Path, upto: int) -> list[EpochRecord]:
    rows = read_csv(log_path, required=TRAIN_LOG_COLUMNS) if log_path.exists() else []
    return [
        EpochRecord(
            epoch=int(r["epoch"]),
            lr=float(r["lr"]),
            train_f1=parse_optional_float(r["train_f1"]),
            val_f1=parse_optional_float(r["val_f1"]),
            train_loss=float(r["train_loss"]),
        )
        for r in rows
        if int(r["epoch"]) <= upto
    ]


def train_loop(
    train_images: ImagePairs,
    val_images: ImagePairs,
    arch: ArchSpec,
    cfg: TrainConfig,
    *,
    out_dir: Optional[Path] = None,
    resume: bool = False,
    on_epoch: Optional[Callable[[EpochRecord], None]] = None,
) -> TrainResult:
    """
    Train and return the best-validation parameters.

    With `out_dir` set, writes `best.ckpt`, `last.ckpt` (with optimizer
    velocities) and `train_log.csv` there.
    """
    cfg.validate()
    arch.validate()
    if not train_images or not val_images:
        raise ValueError("training and validation sets must both be non-empty")
    in_size = cfg.tile_in
    try:
        out_size = output_geometry(arch, in_size)
    except ValueError as exc:
        raise ValueError(
            f"train.tile_in={in_size} does not fit the network ({exc}); "
            f"nearest valid size is {valid_input_size(arch, in_size)}"
        ) from None
    train_prepared = prepare_images(train_images, in_size, out_size)
    val_prepared = prepare_images(val_images, in_size, out_size)

    params = he_init(arch, cfg.seed)
    state = OptimizerState.zeros_like(params.tensors)
    best_params = params.copy()
    best_epoch: Optional[int] = None
    best_val: Optional[float] = None
    history: list[EpochRecord] = []
    start_epoch = 0

    log_path = out_dir / TRAIN_LOG_NAME if out_dir is not None else None
    if resume:
        if out_dir is None:
            raise ValueError("resume needs an output directory")
        last = load_checkpoint(out_dir / LAST_CHECKPOINT_NAME)
        if last.params.arch != arch:
            raise ValueError(f"checkpoint architecture {last.params.arch} does not match {arch}")
        params = last.params
        state = OptimizerState(dict(last.velocities or {}), _next_epoch(last.metadata))
        start_epoch = state.epoch
        best_epoch = last.metadata.get("best_epoch")
        best_val = last.metadata.get("best_val_f1")
        best_path = out_dir / BEST_CHECKPOINT_NAME
        best_params = load_checkpoint(best_path).params if best_path.exists() else params.copy()
        history = _load_history(log_path, start_epoch - 1)
        # Rows past the checkpointed epoch came from an epoch that never reached last.ckpt.
        write_csv(log_path, TRAIN_LOG_COLUMNS, [record.row() for record in history])
        log_info("train", f"resuming at epoch {start_epoch} (best epoch {best_epoch}, val F1 {best_val})")
    elif out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
        if log_path.exists():
            log_path.unlink()
        save_checkpoint(out_dir / BEST_CHECKPOINT_NAME, params, _metadata(None, None, None, cfg))

    for epoch in range(start_epoch, cfg.max_epochs):
        rng = np.random.default_rng([cfg.seed, epoch])
        lr = lr_at(epoch, cfg)
        epoch_start = params.copy()
        placements = select_instances(
            train_images,
            rng,
            out_size,
            sampled=cfg.tiles_sampled_per_image,
            kept=cfg.tiles_kept_per_image,
        )
        order = rng.permutation(len(placements))
        counts = _zero()
        losses: list[float] = []
        for chunk in tile_batches([placements[i] for i in order], cfg.batch_size):
            x, y = build_batch(train_prepared, chunk, in_size, out_size, rng)
            prob, cache = forward(params, x, training=True)
            loss, grad = combined_loss_and_grad(prob, y, cfg.ce_weight)
            if not math.isfinite(loss):
                log_error("train", f"epoch {epoch}: loss is {loss}; stopping")
                raise TrainingDiverged(f"training diverged at epoch {epoch} (loss {loss})", epoch, epoch_start)
            grads = backward(params, cache, grad)
            try:
                sgd_nesterov_step(params.tensors, grads, state, lr, cfg.momentum, cfg.weight_decay)
            except FloatingPointError as exc:
                log_error("train", f"epoch {epoch}: {exc}")
                raise TrainingDiverged(f"training diverged at epoch {epoch}: {exc}", epoch, epoch_start) from exc
            losses.append(loss)
            counts = _pooled(counts, binarize(prob), y)
        state.epoch = epoch + 1

        val_f1 = validation_f1(params, val_prepared, in_size, out_size, cfg.batch_size)
        record = EpochRecord(
            epoch=epoch,
            lr=lr,
            train_f1=f1_precision_recall_accuracy(counts).f1 if losses else None,
            val_f1=val_f1,
            train_loss=float(np.mean(losses)) if losses else 0.0,
        )
        history.append(record)
        if _better(val_f1, best_val):
            best_val, best_epoch = val_f1, epoch
            best_params = params.copy()
            if out_dir is not None:
                save_checkpoint(out_dir / BEST_CHECKPOINT_NAME, best_params, _metadata(epoch, best_epoch, best_val, cfg))
        if out_dir is not None:
            append_csv(log_path, TRAIN_LOG_COLUMNS, record.row())
            save_checkpoint(
                out_dir / LAST_CHECKPOINT_NAME,
                params,
                _metadata(epoch, best_epoch, best_val, cfg),
                velocities=state.velocities,
            )
        log_info(
            "train",
            "epoch done",
            epoch=epoch,
            lr=lr,
            loss=record.train_loss,
            train_f1=record.train_f1,
            val_f1=val_f1,
        )
        if on_epoch is not None:
            on_epoch(record)

    image_f1 = image_level_f1(best_params, val_images, in_size, cfg.batch_size)
    log_info("train", f"best epoch {best_epoch}: tile val F1 {best_val}, image val F1 {image_f1}")
    return TrainResult(
        params=best_params,
        best_epoch=best_epoch,
        best_val_f1=best_val,
        history=history,
        image_val_f1=image_f1,
    )
