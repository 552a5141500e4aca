"""
Per-epoch instance selection and batch assembly.

Purpose:
  Counter the heavy class imbalance: from each training image sample random
  tile placements, keep only those whose output window holds a root pixel,
  and cap the count per image.

Notes:
  - Tiles are stored as placements (image index + output origin) and cut
    from the mirror-padded image only when a batch is built.
  - Augmentation runs on the full input window of both image and mask; the
    mask is center-cropped to the output window afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..augment import JitterParams, augment_pair, normalize
from ..imagecore import RasterImage, center_crop, extend_to_min_size, mirror_pad


@dataclass(frozen=True)
class TilePlacement:
    image_index: int
    row: int  # output-window origin in image coordinates
    col: int


@dataclass
class PreparedImage:
    """Image and mask extended to the output window and mirror-padded by the margin."""

    image: RasterImage
    mask: RasterImage
    height: int  # extended extent (output-window coordinates)
    width: int


def prepare_images(
    images: Sequence[tuple[RasterImage, RasterImage]],
    in_size: int,
    out_size: int,
) -> list[PreparedImage]:
    margin = (in_size - out_size) // 2
    prepared = []
    for image, mask in images:
        if image.ndim == 2:
            image = np.repeat(image[:, :, None], 3, axis=2)
        image = extend_to_min_size(image, out_size)
        mask = extend_to_min_size(mask, out_size)
        prepared.append(
            PreparedImage(
                image=mirror_pad(np.asarray(image, dtype=np.float64), margin),
                mask=mirror_pad(np.asarray(mask, dtype=np.uint8), margin),
                height=image.shape[0],
                width=image.shape[1],
            )
        )
    return prepared


def select_instances(
    train_images: Sequence[tuple[RasterImage, RasterImage]],
    rng: np.random.Generator,
    out_size: int,
    *,
    sampled: int = 90,
    kept: int = 40,
) -> list[TilePlacement]:
    """
    For each image draw `sampled` uniformly random output-window positions,
    keep those containing at least one root pixel, truncate to `kept`.
    """
    chosen: list[TilePlacement] = []
    for index, (_, mask) in enumerate(train_images):
        mask = extend_to_min_size(mask, out_size)
        height, width = mask.shape[:2]
        rows = rng.integers(0, height - out_size + 1, size=sampled)
        cols = rng.integers(0, width - out_size + 1, size=sampled)
        if not np.any(mask):
            continue
        # Summed-area table: root count of any window in O(1).
        sat = np.pad(np.asarray(mask > 0, dtype=np.int64).cumsum(0).cumsum(1), ((1, 0), (1, 0)))
        per_image = 0
        for r, c in zip(rows, cols):
            r, c = int(r), int(c)
            count = sat[r + out_size, c + out_size] - sat[r, c + out_size] - sat[r + out_size, c] + sat[r, c]
            if count > 0:
                chosen.append(TilePlacement(index, r, c))
                per_image += 1
                if per_image >= kept:
                    break
    return chosen


def extract_training_pair(
    prepared: PreparedImage,
    placement: TilePlacement,
    in_size: int,
) -> tuple[RasterImage, RasterImage]:
    # Padding by the margin makes the padded input origin equal the output origin.
    r, c = placement.row, placement.col
    image = prepared.image[r : r + in_size, c : c + in_size]
    mask = prepared.mask[r : r + in_size, c : c + in_size]
    return image, mask


def build_batch(
    prepared: Sequence[PreparedImage],
    placements: Sequence[TilePlacement],
    in_size: int,
    out_size: int,
    rng: Optional[np.random.Generator],
    jitter: JitterParams = JitterParams(),
) -> tuple[np.ndarray, np.ndarray]:
    """
    Return (x, y): x is (N, C, in, in) normalized input, y is (N, out, out)
    binary targets. `rng=None` disables augmentation.
    """
    xs, ys = [], []
    for placement in placements:
        image, mask = extract_training_pair(prepared[placement.image_index], placement, in_size)
        if rng is not None:
            image, mask = augment_pair(image, mask, rng, jitter)
        xs.append(normalize(image).transpose(2, 0, 1))
        ys.append(center_crop(mask, out_size))
    return np.stack(xs), np.stack(ys).astype(np.float64)
