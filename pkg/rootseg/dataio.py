"""
Dataset loading, manifest parsing, image/mask pairing, root-pixel counting.

Purpose:
  Single entry point for reading what `synth` (or an annotator) wrote, so
  split, training, tuning, and evaluation agree on pixel values and counts.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np
from PIL import Image

from .config import MANIFEST_COLUMNS, MASK_SUFFIX
from .imagecore import RasterImage, require_single_channel
from .log import log_warning
from .storage import read_csv, write_csv

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".tif", ".tiff", ".bmp")


@dataclass(frozen=True)
class ManifestRow:
    image: Path
    mask: Path
    root_pixels: int
    split: Optional[str] = None

    @property
    def stem(self) -> str:
        return self.image.stem


@dataclass
class DatasetManifest:
    """Validated manifest, rows sorted by image path."""

    path: Path
    rows: list[ManifestRow]
    warnings: list[str] = field(default_factory=list)

    def ids_with_root_counts(self) -> list[tuple[str, int]]:
        return [(row.stem, row.root_pixels) for row in self.rows]

    def by_split(self, name: str) -> list[ManifestRow]:
        return [row for row in self.rows if row.split == name]

    @property
    def has_split(self) -> bool:
        return any(row.split for row in self.rows)


# ---------------------------------------------------------------------------
# Image files
# ---------------------------------------------------------------------------
def read_image(path: Path) -> RasterImage:
    """Read a photo as (H, W, 3) uint8."""
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8).copy()


def read_mask(path: Path) -> RasterImage:
    """Read a mask as (H, W) uint8 in {0, 1}; values > 127 are root."""
    with Image.open(path) as im:
        gray = np.asarray(im.convert("L"), dtype=np.uint8)
    return (gray > 127).astype(np.uint8)


def write_image(path: Path, img: RasterImage) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.rint(img), 0, 255).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def write_mask(path: Path, mask: RasterImage) -> None:
    require_single_channel(mask, "mask")
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.where(mask > 0, 255, 0).astype(np.uint8)
    Image.fromarray(data).save(path, format="PNG")


def write_probability(path: Path, prob: RasterImage) -> None:
    """Write a probability map as 16-bit grayscale scaled by 65535."""
    require_single_channel(prob, "probability map")
    path.parent.mkdir(parents=True, exist_ok=True)
    data = np.clip(np.rint(np.asarray(prob, dtype=np.float64) * 65535.0), 0, 65535)
    Image.fromarray(data.astype(np.uint16)).save(path, format="PNG")


def read_probability(path: Path) -> RasterImage:
    with Image.open(path) as im:
        data = np.asarray(im, dtype=np.float64)
    return data / 65535.0


def load_pair(image_path: Path, mask_path: Path) -> tuple[RasterImage, RasterImage]:
    """Load a photo and its annotation; both must have the same dimensions."""
    image = read_image(image_path)
    mask = read_mask(mask_path)
    if image.shape[:2] != mask.shape:
        raise ValueError(
            f"dimension mismatch: {image_path} is {image.shape[1]}x{image.shape[0]}, "
            f"{mask_path} is {mask.shape[1]}x{mask.shape[0]}"
        )
    return image, mask


def count_root_pixels(mask: RasterImage) -> int:
    return int(np.count_nonzero(mask))


def mask_stem(path: Path) -> str:
    """`scene_0001_mask.png` -> `scene_0001`."""
    stem = path.stem
    return stem[: -len(MASK_SUFFIX)] if stem.endswith(MASK_SUFFIX) else stem


def list_images(root: Path) -> list[Path]:
    """Image files directly under `root`, sorted by name."""
    if root.is_file():
        return [root]
    if not root.is_dir():
        raise FileNotFoundError(f"Missing directory: {root}")
    return sorted(p for p in root.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


# ---------------------------------------------------------------------------
# Manifest
# ---------------------------------------------------------------------------
def load_manifest(path: Path) -> DatasetManifest:
    """
    Load and validate a manifest CSV (`image,mask,root_pixels[,split]`).

    Paths are relative to the manifest's directory. Stored counts are
    checked against a recount of the decoded mask; the recount wins.
    """
    records = read_csv(path, required=MANIFEST_COLUMNS)
    if not records:
        raise ValueError(f"{path}: empty dataset")

    base = path.parent
    rows: list[ManifestRow] = []
    warnings: list[str] = []
    for record in records:
        image_path = base / record["image"]
        mask_path = base / record["mask"]
        for p in (image_path, mask_path):
            if not p.exists():
                raise FileNotFoundError(f"{path}: listed file does not exist: {p}")
        try:
            stored = int(record["root_pixels"])
        except ValueError:
            raise ValueError(
                f"{path}: root_pixels is not an integer for {record['image']!r}"
            ) from None
        recount = count_root_pixels(read_mask(mask_path))
        if recount != stored:
            msg = (
                f"{record['mask']}: manifest says {stored} root pixels, mask has "
                f"{recount}; using {recount}"
            )
            warnings.append(msg)
            log_warning("dataio", msg)
        split = (record.get("split") or "").strip() or None
        rows.append(ManifestRow(image_path, mask_path, recount, split))

    rows.sort(key=lambda r: str(r.image))
    return DatasetManifest(path=path, rows=rows, warnings=warnings)


def write_manifest(path: Path, rows: list[ManifestRow]) -> None:
    """Write rows with paths relative to the manifest directory."""
    base = path.parent.resolve()
    with_split = any(row.split for row in rows)
    columns = list(MANIFEST_COLUMNS) + (["split"] if with_split else [])
    out = []
    for row in sorted(rows, key=lambda r: str(r.image)):
        cells: list[object] = [
            _relative(row.image, base),
            _relative(row.mask, base),
            row.root_pixels,
        ]
        if with_split:
            cells.append(row.split or "")
        out.append(cells)
    write_csv(path, columns, out)


def _relative(p: Path, base: Path) -> str:
    try:
        return p.resolve().relative_to(base).as_posix()
    except ValueError:
        return str(p.resolve())


def load_dataset(rows: list[ManifestRow]) -> list[tuple[RasterImage, RasterImage]]:
    return [load_pair(row.image, row.mask) for row in rows]
