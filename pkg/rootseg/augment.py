"""
Input normalization, color jitter, and elastic grid deformation for
training tiles.

Notes:
  - The displacement field is uniform [-1, 1] noise smoothed by a unit-sum
    Gaussian kernel and scaled by alpha, so no offset exceeds alpha.
  - Images are resampled bilinearly, masks by nearest neighbour at the same
    coordinates, both with mirrored boundaries. Masks stay in {0, 1}.
  - Every random draw comes from the caller's numpy Generator.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage
from skimage.color import hsv2rgb, rgb2hsv

from .imagecore import RasterImage

SIGMA_RANGE = (15.0, 60.0)
ALPHA_RANGE = (200.0, 2500.0)
ALPHA_SCALE_RANGE = (0.4, 1.0)
ELASTIC_PROBABILITY = 0.9


def normalize(tile: RasterImage) -> RasterImage:
    """[0, 255] -> [-0.5, 0.5]."""
    return np.asarray(tile, dtype=np.float64) / 255.0 - 0.5


def denormalize(tile: RasterImage) -> RasterImage:
    return (np.asarray(tile, dtype=np.float64) + 0.5) * 255.0


# ---------------------------------------------------------------------------
# Elastic deformation
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ElasticParams:
    gamma: float
    sigma: float
    alpha: float  # after alpha_scale
    alpha_scale: float = 1.0
    apply_probability: float = ELASTIC_PROBABILITY

    @classmethod
    def from_gamma(cls, gamma: float, alpha_scale: float = 1.0) -> "ElasticParams":
        """Sigma and alpha move together: both interpolate on the same gamma."""
        if not 0.0 <= gamma <= 1.0:
            raise ValueError(f"gamma must be in [0, 1], got {gamma}")
        sigma = SIGMA_RANGE[0] + gamma * (SIGMA_RANGE[1] - SIGMA_RANGE[0])
        alpha = ALPHA_RANGE[0] + gamma * (ALPHA_RANGE[1] - ALPHA_RANGE[0])
        return cls(gamma=gamma, sigma=sigma, alpha=alpha * alpha_scale, alpha_scale=alpha_scale)

    @property
    def unscaled_alpha(self) -> float:
        return self.alpha / self.alpha_scale if self.alpha_scale else 0.0


@dataclass(frozen=True)
class DisplacementField:
    dy: np.ndarray
    dx: np.ndarray

    @property
    def shape(self) -> tuple[int, int]:
        return self.dy.shape


def sample_elastic(rng: np.random.Generator) -> ElasticParams:
    gamma = float(rng.random())
    alpha_scale = float(rng.uniform(*ALPHA_SCALE_RANGE))
    return ElasticParams.from_gamma(gamma, alpha_scale)


def should_deform(rng: np.random.Generator, p: ElasticParams) -> bool:
    return bool(rng.random() < p.apply_probability)


def make_field(h: int, w: int, p: ElasticParams, rng: np.random.Generator) -> DisplacementField:
    if h <= 0 or w <= 0:
        raise ValueError(f"field size must be positive, got {h}x{w}")
    noise = rng.uniform(-1.0, 1.0, size=(2, h, w))
    if p.alpha == 0:
        return DisplacementField(np.zeros((h, w)), np.zeros((h, w)))
    dy = ndimage.gaussian_filter(noise[0], p.sigma, mode="reflect") * p.alpha
    dx = ndimage.gaussian_filter(noise[1], p.sigma, mode="reflect") * p.alpha
    return DisplacementField(dy=dy, dx=dx)


def _mirror_index(idx: np.ndarray, n: int) -> np.ndarray:
    # Reflect about the edge pixels: ... 2 1 0 1 2 ... n-2 n-1 n-2 ...
    if n == 1:
        return np.zeros_like(idx)
    period = 2 * (n - 1)
    idx = np.abs(idx) % period
    return np.where(idx >= n, period - idx, idx)


def warp(img: RasterImage, mask: RasterImage, f: DisplacementField) -> tuple[RasterImage, RasterImage]:
    """Resample image and mask at (y + dy, x + dx)."""
    h, w = img.shape[:2]
    if mask.shape != (h, w) or f.shape != (h, w):
        raise ValueError(
            f"dimension mismatch: image {img.shape[:2]}, mask {mask.shape}, field {f.shape}"
        )
    yy, xx = np.meshgrid(np.arange(h, dtype=np.float64), np.arange(w, dtype=np.float64), indexing="ij")
    sy = yy + f.dy
    sx = xx + f.dx

    src = np.asarray(img, dtype=np.float64)
    if src.ndim == 2:
        out = ndimage.map_coordinates(src, [sy, sx], order=1, mode="mirror")
    else:
        out = np.stack(
            [ndimage.map_coordinates(src[..., ch], [sy, sx], order=1, mode="mirror") for ch in range(src.shape[2])],
            axis=-1,
        )

    ny = _mirror_index(np.floor(sy + 0.5).astype(np.int64), h)
    nx = _mirror_index(np.floor(sx + 0.5).astype(np.int64), w)
    warped_mask = (np.asarray(mask) > 0)[ny, nx].astype(np.uint8)
    return out, warped_mask


# ---------------------------------------------------------------------------
# Color jitter
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class JitterParams:
    brightness: float = 0.3
    contrast: float = 0.3
    saturation: float = 0.2
    hue: float = 0.001

    def validate(self) -> None:
        for name in ("brightness", "contrast", "saturation", "hue"):
            if getattr(self, name) < 0:
                raise ValueError(f"jitter {name} must be >= 0")


def _factor(rng: np.random.Generator, magnitude: float) -> float:
    return float(rng.uniform(max(0.0, 1.0 - magnitude), 1.0 + magnitude))


def _adjust_brightness(img: np.ndarray, factor: float) -> np.ndarray:
    return np.clip(img * factor, 0.0, 255.0)


def _adjust_contrast(img: np.ndarray, factor: float) -> np.ndarray:
    mean = float(img.mean())
    return np.clip((img - mean) * factor + mean, 0.0, 255.0)


def _adjust_saturation(img: np.ndarray, factor: float) -> np.ndarray:
    hsv = rgb2hsv(img / 255.0)
    hsv[..., 1] = np.clip(hsv[..., 1] * factor, 0.0, 1.0)
    return np.clip(hsv2rgb(hsv) * 255.0, 0.0, 255.0)


def _adjust_hue(img: np.ndarray, turns: float) -> np.ndarray:
    hsv = rgb2hsv(img / 255.0)
    hsv[..., 0] = np.mod(hsv[..., 0] + turns, 1.0)
    return np.clip(hsv2rgb(hsv) * 255.0, 0.0, 255.0)


def color_jitter(img: RasterImage, p: JitterParams, rng: np.random.Generator) -> RasterImage:
    """
    Random brightness, contrast, saturation, and hue in random order.

    Factors are uniform in [1 - m, 1 + m]; hue rotates by up to m turns.
    Operations with magnitude 0 are skipped.
    """
    if img.ndim != 3 or img.shape[2] != 3:
        raise ValueError(f"color jitter needs an (H, W, 3) image, got shape {img.shape}")
    p.validate()
    out = np.clip(np.asarray(img, dtype=np.float64), 0.0, 255.0)
    for op in rng.permutation(4):
        if op == 0 and p.brightness > 0:
            out = _adjust_brightness(out, _factor(rng, p.brightness))
        elif op == 1 and p.contrast > 0:
            out = _adjust_contrast(out, _factor(rng, p.contrast))
        elif op == 2 and p.saturation > 0:
            out = _adjust_saturation(out, _factor(rng, p.saturation))
        elif op == 3 and p.hue > 0:
            out = _adjust_hue(out, float(rng.uniform(-p.hue, p.hue)))
    return out


def augment_pair(
    img: RasterImage,
    mask: RasterImage,
    rng: np.random.Generator,
    jitter: JitterParams = JitterParams(),
) -> tuple[RasterImage, RasterImage]:
    """Elastic deformation (with its apply probability) then color jitter."""
    params = sample_elastic(rng)
    if should_deform(rng, params):
        img, mask = warp(img, mask, make_field(img.shape[0], img.shape[1], params, rng))
    if img.ndim == 3:
        img = color_jitter(img, jitter, rng)
    return img, mask
