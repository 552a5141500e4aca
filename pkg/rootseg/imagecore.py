"""
Pixel containers, mirror padding, tile planning, tile extraction/assembly,
and binarization.

Purpose:
  Everything downstream (training, inference, evaluation) moves pixels
  through these helpers, so the tiling contract lives in one place.

Raster convention:
  A raster is a numpy array. Single-channel rasters (grayscale, masks,
  probability maps) are 2-D `(H, W)`; color photos are `(H, W, 3)` with
  values in [0, 255]. Masks hold {0, 1}; probability maps hold [0, 1].
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from .config import DEFAULT_SEG_THRESHOLD, DEFAULT_TILE_IN, DEFAULT_TILE_OUT

RasterImage = np.ndarray


@dataclass(frozen=True)
class TileSpec:
    """
    One network input window and the output window it predicts.

    `in_origin` is in padded-image coordinates (image padded by
    `margin` on every side); `out_origin` is in original-image coordinates.
    """

    in_origin: tuple[int, int]
    out_origin: tuple[int, int]
    in_size: int = DEFAULT_TILE_IN
    out_size: int = DEFAULT_TILE_OUT

    @property
    def margin(self) -> int:
        return (self.in_size - self.out_size) // 2


def channels(img: RasterImage) -> int:
    return 1 if img.ndim == 2 else int(img.shape[2])


def require_single_channel(img: RasterImage, what: str = "image") -> None:
    if img.ndim != 2:
        raise ValueError(f"{what} must be single-channel (H, W); got shape {img.shape}")


def to_gray(img: RasterImage) -> RasterImage:
    """Average color channels; single-channel input is returned as float."""
    if img.ndim == 2:
        return img.astype(np.float64)
    if img.ndim == 3:
        return img.astype(np.float64).mean(axis=2)
    raise ValueError(f"Unsupported raster shape {img.shape}")


def mirror_pad(img: RasterImage, margin: int) -> RasterImage:
    """
    Pad by reflecting about the edge pixel without repeating it.

    Padded row -1 equals original row 1.
    """
    if margin < 0:
        raise ValueError(f"margin must be >= 0, got {margin}")
    height, width = img.shape[:2]
    if margin and margin >= min(height, width):
        raise ValueError(
            f"margin {margin} too large to reflect a {height}x{width} image "
            f"(must be < {min(height, width)})"
        )
    if margin == 0:
        return img.copy()
    pad = [(margin, margin), (margin, margin)] + [(0, 0)] * (img.ndim - 2)
    return np.pad(img, pad, mode="reflect")


def _check_tile_sizes(in_size: int, out_size: int) -> None:
    if in_size <= 0 or out_size <= 0:
        raise ValueError(f"tile sizes must be positive (in={in_size}, out={out_size})")
    if in_size <= out_size:
        raise ValueError(f"in_size ({in_size}) must exceed out_size ({out_size})")
    if (in_size - out_size) % 2:
        raise ValueError(
            f"in_size - out_size must be even (in={in_size}, out={out_size})"
        )


def _axis_starts(extent: int, out_size: int) -> list[int]:
    # Regular stride, last window shifted inward to end flush with the image.
    starts = list(range(0, extent - out_size, out_size))
    starts.append(extent - out_size)
    return starts


def plan_tile_grid(
    height: int,
    width: int,
    in_size: int = DEFAULT_TILE_IN,
    out_size: int = DEFAULT_TILE_OUT,
) -> list[TileSpec]:
    """
    Plan a row-major grid of tiles whose output windows cover the image.

    Edge case:
      The last row/column of windows is shifted inward so every window stays
      inside the image. Images smaller than `out_size` must be extended by
      the caller first (see `extend_to_min_size`).
    """
    _check_tile_sizes(in_size, out_size)
    if height < out_size or width < out_size:
        raise ValueError(
            f"image {height}x{width} is smaller than the output window {out_size}; "
            "reflect-extend it with extend_to_min_size before planning"
        )
    specs = []
    for row in _axis_starts(height, out_size):
        for col in _axis_starts(width, out_size):
            # Padding by the margin makes the input origin numerically equal
            # to the output origin.
            specs.append(
                TileSpec(
                    in_origin=(row, col),
                    out_origin=(row, col),
                    in_size=in_size,
                    out_size=out_size,
                )
            )
    return specs


def extract_tile(padded: RasterImage, spec: TileSpec) -> RasterImage:
    """Return the `in_size` x `in_size` crop at `spec.in_origin`."""
    row, col = spec.in_origin
    size = spec.in_size
    height, width = padded.shape[:2]
    if row < 0 or col < 0 or row + size > height or col + size > width:
        raise ValueError(
            f"tile window at {spec.in_origin} size {size} outside padded image "
            f"{height}x{width}"
        )
    return padded[row : row + size, col : col + size].copy()


def center_crop(img: RasterImage, size: int) -> RasterImage:
    """Crop the centered `size` x `size` window (works on HW and HWC)."""
    height, width = img.shape[:2]
    top = (height - size) // 2
    left = (width - size) // 2
    if top < 0 or left < 0:
        raise ValueError(f"cannot crop {size} from {height}x{width}")
    return img[top : top + size, left : left + size]


def assemble(
    tiles: Iterable[tuple[TileSpec, RasterImage]],
    shape: Optional[tuple[int, int]] = None,
) -> RasterImage:
    """
    Write each output tile at its `out_origin`; later tiles win on overlap.

    When `shape` is omitted the extent is inferred from the tiles.
    Uncovered pixels are an error.
    """
    tiles = list(tiles)
    if not tiles:
        raise ValueError("no tiles to assemble")
    for spec, tile in tiles:
        if tile.shape[:2] != (spec.out_size, spec.out_size) or tile.ndim != 2:
            raise ValueError(
                f"tile at {spec.out_origin} has shape {tile.shape}, "
                f"expected ({spec.out_size}, {spec.out_size})"
            )
    if shape is None:
        height = max(s.out_origin[0] + s.out_size for s, _ in tiles)
        width = max(s.out_origin[1] + s.out_size for s, _ in tiles)
    else:
        height, width = shape

    out = np.zeros((height, width), dtype=np.result_type(*[t.dtype for _, t in tiles]))
    covered = np.zeros((height, width), dtype=bool)
    for spec, tile in tiles:
        row, col = spec.out_origin
        size = spec.out_size
        if row < 0 or col < 0 or row + size > height or col + size > width:
            raise ValueError(f"tile at {spec.out_origin} falls outside {height}x{width}")
        out[row : row + size, col : col + size] = tile
        covered[row : row + size, col : col + size] = True

    if not covered.all():
        missing = np.argwhere(~covered)
        preview = ", ".join(f"({r},{c})" for r, c in missing[:10])
        raise ValueError(
            f"{len(missing)} pixel(s) not covered by any tile, e.g. {preview}"
        )
    return out


def extend_to_min_size(img: RasterImage, size: int) -> RasterImage:
    """
    Reflect-extend the bottom/right edges so both sides are at least `size`.

    Crop the prediction back to the original shape afterwards.
    """
    height, width = img.shape[:2]
    extra_h = max(0, size - height)
    extra_w = max(0, size - width)
    if not extra_h and not extra_w:
        return img
    pad = [(0, extra_h), (0, extra_w)] + [(0, 0)] * (img.ndim - 2)
    mode = "reflect" if min(height, width) > 1 else "edge"
    return np.pad(img, pad, mode=mode)


def apply_tiled(
    image: RasterImage,
    fn: Callable[[RasterImage], RasterImage],
    in_size: int = DEFAULT_TILE_IN,
    out_size: int = DEFAULT_TILE_OUT,
) -> RasterImage:
    """
    Run `fn` over the image tile by tile and assemble the outputs.

    `fn` maps an `in_size` tile to an `out_size` single-channel map.
    """
    height, width = image.shape[:2]
    work = extend_to_min_size(image, out_size)
    specs = plan_tile_grid(work.shape[0], work.shape[1], in_size, out_size)
    padded = mirror_pad(work, specs[0].margin)
    outputs = [(spec, fn(extract_tile(padded, spec))) for spec in specs]
    full = assemble(outputs, shape=work.shape[:2])
    return full[:height, :width]


def binarize(prob: RasterImage, threshold: float = DEFAULT_SEG_THRESHOLD) -> RasterImage:
    """Mask with 1 where prob >= threshold (ties go to root)."""
    if not 0.0 <= threshold <= 1.0:
        raise ValueError(f"threshold must be in [0, 1], got {threshold}")
    require_single_channel(prob, "probability map")
    return (prob >= threshold).astype(np.uint8)


def tile_batches(items: Sequence, size: int) -> list[Sequence]:
    """Split a sequence into consecutive chunks of at most `size`."""
    if size <= 0:
        raise ValueError(f"batch size must be positive, got {size}")
    return [items[i : i + size] for i in range(0, len(items), size)]
