"""
Synthetic root scenes with exact ground truth.

Purpose:
  Stand in for annotated rhizotron photos: curved bright strokes (roots)
  over a noisy, blotchy soil background, plus the pixel-exact mask. Enough
  to train, tune, and acceptance-test the pipeline at desk scale.

Notes:
  - Strokes are quadratic Bezier curves with a jittered control point.
  - Background noise is a Gaussian truncated at NOISE_CLIP sigmas, so no
    soil pixel is ever brighter than its noise-free background by
    3 * background_noise_sigma or more.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .config import MANIFEST_NAME, MASK_SUFFIX
from .dataio import ManifestRow, count_root_pixels, write_image, write_manifest, write_mask
from .imagecore import RasterImage
from .log import log_info

MIN_SCENE_SIZE = 16
NOISE_CLIP = 2.5
SOIL_RGB = np.array([92.0, 72.0, 54.0])
ROOT_TINT = np.array([1.0, 0.96, 0.86])
BLOTCH_SIGMA_FRACTION = 0.08
BLOTCH_AMPLITUDE = 18.0


@dataclass(frozen=True)
class SceneConfig:
    """
    Scene generator settings. Ranges are inclusive (lo, hi) pairs.

    The defaults give roughly 0.5% root pixels, close to the class
    imbalance of real annotated rhizotron photos.
    """

    height: int = 384
    width: int = 384
    root_count_range: tuple[int, int] = (1, 2)
    root_width_range: tuple[float, float] = (2.0, 3.0)
    root_brightness_range: tuple[float, float] = (165.0, 225.0)
    background_noise_sigma: float = 8.0
    curvature: float = 0.25
    seed: int = 0

    def validate(self) -> None:
        if self.height < MIN_SCENE_SIZE or self.width < MIN_SCENE_SIZE:
            raise ValueError(
                f"scene must be at least {MIN_SCENE_SIZE}x{MIN_SCENE_SIZE}, "
                f"got {self.height}x{self.width}"
            )
        lo, hi = self.root_count_range
        if lo < 0 or hi < lo:
            raise ValueError(f"invalid root_count_range {self.root_count_range}")
        wlo, whi = self.root_width_range
        if wlo <= 0 or whi < wlo or whi > min(self.height, self.width) / 2:
            raise ValueError(f"invalid root_width_range {self.root_width_range}")
        blo, bhi = self.root_brightness_range
        if blo < 0 or bhi < blo or bhi > 255:
            raise ValueError(f"invalid root_brightness_range {self.root_brightness_range}")
        if self.background_noise_sigma < 0:
            raise ValueError("background_noise_sigma must be >= 0")
        if self.curvature < 0:
            raise ValueError("curvature must be >= 0")


@dataclass(frozen=True)
class Scene:
    image: RasterImage
    mask: RasterImage
    background: RasterImage  # noise-free soil (H, W, 3)


def _rng(seed: int) -> np.random.Generator:
    return np.random.default_rng(seed & 0xFFFFFFFFFFFFFFFF)


def _background(cfg: SceneConfig, rng: np.random.Generator) -> RasterImage:
    # Low-frequency blotches: smoothed noise rescaled to a fixed amplitude.
    raw = rng.standard_normal((cfg.height, cfg.width))
    sigma = BLOTCH_SIGMA_FRACTION * min(cfg.height, cfg.width)
    blotch = ndimage.gaussian_filter(raw, sigma, mode="reflect")
    peak = float(np.abs(blotch).max())
    if peak > 0:
        blotch = blotch / peak * BLOTCH_AMPLITUDE
    return SOIL_RGB[None, None, :] + blotch[:, :, None]


def _stroke_centerline(
    cfg: SceneConfig, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Sample a quadratic Bezier stroke; returns float row/col arrays."""
    h, w = cfg.height, cfg.width
    short = min(h, w)
    start = np.array([rng.uniform(0.1 * h, 0.9 * h), rng.uniform(0.1 * w, 0.9 * w)])
    angle = rng.uniform(0.0, 2.0 * math.pi)
    length = rng.uniform(0.3, 0.9) * short
    direction = np.array([math.sin(angle), math.cos(angle)])
    end = start + length * direction
    normal = np.array([-direction[1], direction[0]])
    bend = rng.normal(0.0, cfg.curvature) * length
    control = (start + end) / 2.0 + bend * normal

    steps = max(2, int(math.ceil(length * 2.0)))
    t = np.linspace(0.0, 1.0, steps)[:, None]
    pts = (1 - t) ** 2 * start + 2 * (1 - t) * t * control + t**2 * end
    return pts[:, 0], pts[:, 1]


def _stroke_mask(cfg: SceneConfig, rows: np.ndarray, cols: np.ndarray, width: float) -> RasterImage:
    centre = np.zeros((cfg.height, cfg.width), dtype=bool)
    r = np.rint(rows).astype(int)
    c = np.rint(cols).astype(int)
    inside = (r >= 0) & (r < cfg.height) & (c >= 0) & (c < cfg.width)
    centre[r[inside], c[inside]] = True
    if not centre.any():
        return centre
    dist = ndimage.distance_transform_edt(~centre)
    return dist <= width / 2.0


def render_scene(cfg: SceneConfig) -> Scene:
    """Render image, mask, and the noise-free background for one config."""
    cfg.validate()
    rng = _rng(cfg.seed)
    background = _background(cfg, rng)
    mask = np.zeros((cfg.height, cfg.width), dtype=bool)
    image = background.copy()

    n_roots = int(rng.integers(cfg.root_count_range[0], cfg.root_count_range[1] + 1))
    for _ in range(n_roots):
        rows, cols = _stroke_centerline(cfg, rng)
        width = rng.uniform(*cfg.root_width_range)
        brightness = rng.uniform(*cfg.root_brightness_range)
        stroke = _stroke_mask(cfg, rows, cols, width)
        image[stroke] = brightness * ROOT_TINT
        mask |= stroke

    if cfg.background_noise_sigma > 0:
        noise = rng.standard_normal(image.shape) * cfg.background_noise_sigma
        limit = NOISE_CLIP * cfg.background_noise_sigma
        image = image + np.clip(noise, -limit, limit)

    image = np.clip(image, 0.0, 255.0)
    return Scene(image=image, mask=mask.astype(np.uint8), background=background)


def generate_scene(cfg: SceneConfig) -> tuple[RasterImage, RasterImage]:
    """Return (3-channel image in [0, 255], binary mask) for `cfg`."""
    scene = render_scene(cfg)
    return scene.image, scene.mask


def scene_seed(seed: int, index: int) -> int:
    return seed ^ index


def generate_dataset(
    cfg: SceneConfig,
    n: int,
    out_dir: Path,
    *,
    prefix: str = "scene",
    manifest_name: str = MANIFEST_NAME,
) -> list[ManifestRow]:
    """
    Write `n` image/mask PNG pairs plus a manifest under `out_dir`.

    Layout:
      out_dir/images/<prefix>_NNNN.png
      out_dir/masks/<prefix>_NNNN_mask.png
      out_dir/manifest.csv
    """
    if n < 1:
        raise ValueError(f"n must be >= 1, got {n}")
    cfg.validate()
    images_dir = out_dir / "images"
    masks_dir = out_dir / "masks"
    rows: list[ManifestRow] = []
    for index in range(n):
        stem = f"{prefix}_{index:04d}"
        image, mask = generate_scene(replace(cfg, seed=scene_seed(cfg.seed, index)))
        image_path = images_dir / f"{stem}.png"
        mask_path = masks_dir / f"{stem}{MASK_SUFFIX}.png"
        try:
            write_image(image_path, image)
            write_mask(mask_path, mask)
        except OSError as exc:
            raise OSError(f"cannot write {image_path}: {exc}") from exc
        rows.append(ManifestRow(image_path, mask_path, count_root_pixels(mask)))
    write_manifest(out_dir / manifest_name, rows)
    log_info("synth", f"Wrote {n} scenes to {out_dir}")
    return rows
