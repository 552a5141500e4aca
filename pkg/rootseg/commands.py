"""
The six CLI verbs: synth, split, train, segment, tune-frangi, evaluate.

Purpose:
  Glue between the run configuration, the files on disk and the library
  modules. Each command validates everything it needs (config, inputs,
  model files) before writing, and dumps the effective configuration next
  to its outputs.

Notes:
  - Commands return an exit status; exceptions are mapped in `app.main`.
  - Console lines use the `[rootseg]` prefix; details go to the log file.
"""

from __future__ import annotations

import os
import shutil
import sys
import tempfile
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, replace
from pathlib import Path
from typing import Callable, Optional, Sequence, TypeVar

from . import analysis
from .config import (
    CMA_LOG_NAME,
    EFFECTIVE_CONFIG_NAME,
    EVAL_COLUMNS,
    EVAL_CSV_NAME,
    EVAL_SUMMARY_NAME,
    EXIT_OK,
    EXIT_USER_ERROR,
    FRANGI_PARAMS_NAME,
    MASK_SUFFIX,
    PROB_SUFFIX,
    SPLIT_NAME,
    TEST_SET_DIR,
    TRAIN_SUMMARY_NAME,
    worker_count,
)
from .dataio import (
    DatasetManifest,
    ManifestRow,
    list_images,
    load_dataset,
    load_manifest,
    mask_stem,
    read_image,
    read_mask,
    write_manifest,
    write_mask,
    write_probability,
)
from .frangi import FrangiParams, frangi_segment
from .imagecore import RasterImage, binarize
from .log import log_error, log_info, log_warning
from .net import load_checkpoint, predict_image
from .runconfig import RunConfig, dump_effective_config
from .storage import load_json, save_json, write_csv
from .synthdata import generate_dataset
from .train import split_dataset, train_loop
from .tuning import tune_frangi

TEST_SEED_OFFSET = 100_003

T = TypeVar("T")
R = TypeVar("R")


def say(msg: str) -> None:
    print(f"[rootseg] {msg}", flush=True)


def warn(msg: str) -> None:
    print(f"[rootseg] warning: {msg}", file=sys.stderr, flush=True)


def _map(fn: Callable[[T], R], items: Sequence[T]) -> list[R]:
    """Ordered map, threaded when ROOTSEG_WORKERS > 1."""
    workers = worker_count()
    if workers <= 1 or len(items) <= 1:
        return [fn(item) for item in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


# ---------------------------------------------------------------------------
# synth
# ---------------------------------------------------------------------------
def cmd_synth(run: RunConfig, n: int, out_dir: Path, *, test_n: int = 0) -> int:
    """
    Generate `n` scenes (plus `test_n` held-out scenes under `test/`).

    Everything is written to a staging directory next to `out_dir` and moved
    into place at the end, so a failure leaves no partial dataset behind.
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    if test_n < 0:
        raise ValueError(f"test count must be >= 0, got {test_n}")
    out_dir.parent.mkdir(parents=True, exist_ok=True)
    staging = Path(tempfile.mkdtemp(prefix=f".{out_dir.name}.", dir=out_dir.parent))
    try:
        rows = generate_dataset(run.scene, n, staging)
        if test_n:
            test_cfg = replace(run.scene, seed=run.scene.seed + TEST_SEED_OFFSET)
            generate_dataset(test_cfg, test_n, staging / TEST_SET_DIR, prefix="test")
        dump_effective_config(run, staging / EFFECTIVE_CONFIG_NAME)
        out_dir.mkdir(parents=True, exist_ok=True)
        for child in sorted(staging.iterdir()):
            target = out_dir / child.name
            if target.is_dir():
                shutil.rmtree(target)
            os.replace(child, target)
    except BaseException:
        log_error("synth", f"generation into {out_dir} failed; removing staged files")
        raise
    finally:
        shutil.rmtree(staging, ignore_errors=True)

    total_root = sum(row.root_pixels for row in rows)
    total_px = n * run.scene.height * run.scene.width
    say(f"Wrote {n} scene(s) to {out_dir} ({total_root} root pixels, {100.0 * total_root / total_px:.2f}% positive)")
    if test_n:
        say(f"Wrote {test_n} test scene(s) to {out_dir / TEST_SET_DIR}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# split
# ---------------------------------------------------------------------------
def resolve_split(manifest: DatasetManifest, validation_size: int) -> tuple[list[ManifestRow], list[ManifestRow]]:
    """Training and validation rows: the manifest's split column if present, else computed."""
    if manifest.has_split:
        train = manifest.by_split("train")
        val = manifest.by_split("validation")
        if not train or not val:
            raise ValueError(f"{manifest.path}: split column needs both 'train' and 'validation' rows")
        return train, val
    result = split_dataset(manifest.ids_with_root_counts(), validation_size=validation_size)
    by_stem = {row.stem: row for row in manifest.rows}
    return [by_stem[i] for i in result.train_ids], [by_stem[i] for i in result.validation_ids]


def cmd_split(run: RunConfig, manifest_path: Path, out_path: Optional[Path] = None) -> int:
    manifest = load_manifest(manifest_path)
    out_path = out_path or manifest_path.parent / SPLIT_NAME
    test_ids = [row.stem for row in manifest.by_split("test")]
    result = split_dataset(
        manifest.ids_with_root_counts(),
        validation_size=run.train.validation_size,
        test_ids=test_ids,
    )
    tags = {i: "train" for i in result.train_ids}
    tags.update({i: "validation" for i in result.validation_ids})
    tags.update({i: "test" for i in test_ids})
    write_manifest(out_path, [replace(row, split=tags[row.stem]) for row in manifest.rows])
    dump_effective_config(run, out_path.parent / EFFECTIVE_CONFIG_NAME)
    say(f"Split {len(manifest.rows)} image(s): {len(result.train_ids)} train, {len(result.validation_ids)} validation -> {out_path}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# train
# ---------------------------------------------------------------------------
def cmd_train(run: RunConfig, manifest_path: Path, out_dir: Path, *, resume: bool = False) -> int:
    manifest = load_manifest(manifest_path)
    train_rows, val_rows = resolve_split(manifest, run.train.validation_size)
    train_images = load_dataset(train_rows)
    val_images = load_dataset(val_rows)
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_effective_config(run, out_dir / EFFECTIVE_CONFIG_NAME)
    say(f"Training on {len(train_rows)} image(s), validating on {len(val_rows)}")

    def progress(record) -> None:
        say(f"epoch {record.epoch}: loss {record.train_loss:.4f}, val F1 {_fmt(record.val_f1)}")

    result = train_loop(train_images, val_images, run.arch, run.train, out_dir=out_dir, resume=resume, on_epoch=progress)
    save_json(
        out_dir / TRAIN_SUMMARY_NAME,
        {
            "best_epoch": result.best_epoch,
            "best_val_f1": result.best_val_f1,
            "image_val_f1": result.image_val_f1,
            "epochs": len(result.history),
            "train_ids": [row.stem for row in train_rows],
            "validation_ids": [row.stem for row in val_rows],
        },
    )
    say(f"Best epoch {result.best_epoch} (tile val F1 {_fmt(result.best_val_f1)}, image val F1 {_fmt(result.image_val_f1)})")
    return EXIT_OK


def _fmt(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value:.4f}"


# ---------------------------------------------------------------------------
# segment
# ---------------------------------------------------------------------------
def load_frangi_params(path: Path) -> FrangiParams:
    try:
        return FrangiParams.from_dict(load_json(path))
    except (KeyError, TypeError) as exc:
        raise ValueError(f"{path}: not a Frangi parameter file ({exc})") from None


def cmd_segment(
    run: RunConfig,
    inputs: Path,
    out_dir: Path,
    *,
    checkpoint: Optional[Path] = None,
    frangi_params: Optional[Path] = None,
    save_prob: bool = False,
) -> int:
    """Write `<stem>_mask.png` for every input photo with the U-Net or the Frangi baseline."""
    if (checkpoint is None) == (frangi_params is None):
        raise ValueError("segment needs exactly one of --checkpoint or --frangi-params")
    if save_prob and checkpoint is None:
        raise ValueError("--save-prob needs a network checkpoint")

    predict: Callable[[RasterImage], tuple[RasterImage, Optional[RasterImage]]]
    if checkpoint is not None:
        ckpt = load_checkpoint(checkpoint)
        tile_in = int(ckpt.metadata.get("tile_in") or run.train.tile_in)

        def predict(image: RasterImage) -> tuple[RasterImage, Optional[RasterImage]]:
            prob = predict_image(ckpt.params, image, in_size=tile_in, batch_size=run.train.batch_size)
            return binarize(prob), prob

    else:
        params = load_frangi_params(frangi_params)

        def predict(image: RasterImage) -> tuple[RasterImage, Optional[RasterImage]]:
            return frangi_segment(image, params), None

    paths = list_images(inputs)
    if not paths:
        raise ValueError(f"no images found in {inputs}")
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_effective_config(run, out_dir / EFFECTIVE_CONFIG_NAME)

    def one(path: Path) -> bool:
        try:
            image = read_image(path)
        except (OSError, ValueError) as exc:
            log_warning("segment", f"skipping unreadable image {path}: {exc}")
            warn(f"skipping unreadable image {path.name}")
            return False
        mask, prob = predict(image)
        write_mask(out_dir / f"{path.stem}{MASK_SUFFIX}.png", mask)
        if save_prob and prob is not None:
            write_probability(out_dir / f"{path.stem}{PROB_SUFFIX}.png", prob)
        return True

    done = sum(_map(one, paths))
    log_info("segment", f"segmented {done}/{len(paths)} image(s) into {out_dir}")
    if done == 0:
        warn("no image could be read")
        return EXIT_USER_ERROR
    say(f"Wrote {done} mask(s) to {out_dir}" + (f" ({len(paths) - done} skipped)" if done < len(paths) else ""))
    return EXIT_OK


# ---------------------------------------------------------------------------
# tune-frangi
# ---------------------------------------------------------------------------
def cmd_tune_frangi(run: RunConfig, manifest_path: Path, out_dir: Path) -> int:
    """Tune Frangi parameters on the training rows of a manifest."""
    manifest = load_manifest(manifest_path)
    train_rows, _ = resolve_split(manifest, run.train.validation_size)
    dataset = load_dataset(train_rows)
    if not any(count for count in (row.root_pixels for row in train_rows)):
        raise ValueError("every mask in the tuning set is empty; nothing to tune against")
    run.cma.validate()
    out_dir.mkdir(parents=True, exist_ok=True)
    dump_effective_config(run, out_dir / EFFECTIVE_CONFIG_NAME)
    log_path = out_dir / CMA_LOG_NAME
    if log_path.exists():
        log_path.unlink()

    say(f"Tuning Frangi parameters on {len(dataset)} image(s), budget {run.cma.max_evaluations} evaluation(s)")
    outcome = tune_frangi(
        dataset,
        run.frangi,
        run.cma,
        seed=run.seed,
        log_path=log_path,
        workers=worker_count(),
    )
    save_json(out_dir / FRANGI_PARAMS_NAME, outcome.params.to_dict())
    say(
        f"Mean F1 {1.0 - outcome.initial_objective:.4f} -> {1.0 - min(outcome.best_objective, outcome.initial_objective):.4f} "
        f"({outcome.result.stop_reason}); parameters in {out_dir / FRANGI_PARAMS_NAME}"
    )
    return EXIT_OK


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------
def _masks_by_stem(root: Path) -> dict[str, Path]:
    return {mask_stem(p): p for p in list_images(root) if not p.stem.endswith(PROB_SUFFIX)}


def _correlation(fn: Callable[[Sequence[float], Sequence[float]], Optional[float]], xs, ys, name: str) -> Optional[float]:
    try:
        return fn(xs, ys)
    except ValueError as exc:
        log_warning("evaluate", f"{name} undefined: {exc}")
        return None


def cmd_evaluate(run: RunConfig, pred_dir: Path, truth_dir: Path, out_dir: Path) -> int:
    """
    Per-image metrics CSV plus a summary with pooled metrics and the
    correlation between predicted root length and annotated root intensity.
    """
    run.grid.validate()
    preds = _masks_by_stem(pred_dir)
    truths = _masks_by_stem(truth_dir)
    unmatched = sorted(set(preds) ^ set(truths))
    for stem in unmatched:
        side = "prediction" if stem in preds else "annotation"
        log_warning("evaluate", f"{stem}: {side} has no counterpart; skipped")
        warn(f"{stem}: only a {side} found, skipped")
    stems = sorted(set(preds) & set(truths))
    if not stems:
        raise ValueError(f"no matching stems between {pred_dir} and {truth_dir}")

    def load(stem: str) -> tuple[RasterImage, RasterImage]:
        pred, truth = read_mask(preds[stem]), read_mask(truths[stem])
        if pred.shape != truth.shape:
            raise ValueError(f"{stem}: prediction is {pred.shape}, annotation is {truth.shape}")
        return pred, truth

    pairs = _map(load, stems)

    def measure(pair: tuple[RasterImage, RasterImage]) -> tuple[int, int, analysis.LineIntersect]:
        pred, truth = pair
        return analysis.root_length_px(pred), analysis.root_length_px(truth), analysis.line_intersect(truth, run.grid)

    measures = _map(measure, pairs)
    rep = analysis.report(pairs)

    rows = []
    for stem, metrics, (length, true_length, li) in zip(stems, rep.per_image, measures):
        rows.append(
            [
                stem,
                metrics.f1,
                metrics.precision,
                metrics.recall,
                metrics.accuracy,
                length,
                li.intersections,
                li.root_intensity,
                true_length,
            ]
        )
    out_dir.mkdir(parents=True, exist_ok=True)
    write_csv(out_dir / EVAL_CSV_NAME, EVAL_COLUMNS, rows)

    lengths = [float(m[0]) for m in measures]
    true_lengths = [float(m[1]) for m in measures]
    intensities = [m[2].root_intensity for m in measures]
    summary = {
        "images": len(stems),
        "skipped": unmatched,
        "pooled": asdict(rep.pooled),
        "mean": rep.mean,
        "stdev": rep.stdev,
        "rooted_images": rep.rooted_images,
        "prediction_root_fraction": rep.prediction_mean,
        "true_root_fraction": rep.true_mean,
        "false_positive_pixels_rootless": rep.false_positive_pixels_rootless,
        "square_size_mm": run.grid.square_size_mm,
        "spearman_length_intensity": _correlation(analysis.spearman, lengths, intensities, "spearman"),
        "r2_length_intensity": _correlation(analysis.r_squared, lengths, intensities, "r2"),
        "spearman_length_true_length": _correlation(analysis.spearman, lengths, true_lengths, "spearman"),
        "r2_length_true_length": _correlation(analysis.r_squared, lengths, true_lengths, "r2"),
    }
    save_json(out_dir / EVAL_SUMMARY_NAME, summary)
    dump_effective_config(run, out_dir / EFFECTIVE_CONFIG_NAME)
    say(f"Evaluated {len(stems)} image(s): pooled F1 {_fmt(rep.pooled.f1)} -> {out_dir / EVAL_CSV_NAME}")
    return EXIT_OK
