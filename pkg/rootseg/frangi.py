"""
Frangi vesselness baseline segmenter.

Purpose:
  Multiscale Hessian ridge filter -> threshold -> connected-component
  cleanup. Roots are brighter than soil, so only bright ridges respond
  (pixels whose dominant eigenvalue is >= 0 score 0).

Notes:
  - Gaussian derivatives use separable kernels of radius ceil(4 * sigma)
    with mirrored boundaries, scaled by sigma**2.
  - Grayscale input is scaled to [0, 1] before filtering, so `c` is in
    normalized intensity units.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import ClassVar, Sequence

import numpy as np
from scipy import ndimage

from .imagecore import RasterImage, require_single_channel, to_gray

EIGHT_CONNECTED = np.ones((3, 3), dtype=bool)


@dataclass(frozen=True)
class FrangiParams:
    sigmas: tuple[float, ...] = (1.0, 2.0, 3.0)
    beta: float = 0.5
    c: float = 0.08
    vesselness_threshold: float = 0.2
    min_component_size: int = 30

    def validate(self) -> None:
        if not self.sigmas:
            raise ValueError("sigmas must not be empty")
        if any(s <= 0 for s in self.sigmas):
            raise ValueError(f"sigmas must be > 0, got {self.sigmas}")
        if self.beta <= 0:
            raise ValueError(f"beta must be > 0, got {self.beta}")
        if self.c <= 0:
            raise ValueError(f"c must be > 0, got {self.c}")
        if not 0.0 <= self.vesselness_threshold <= 1.0:
            raise ValueError(
                f"vesselness_threshold must be in [0, 1], got {self.vesselness_threshold}"
            )
        if self.min_component_size < 0:
            raise ValueError(f"min_component_size must be >= 0, got {self.min_component_size}")

    def to_dict(self) -> dict[str, object]:
        return {
            "sigmas": list(self.sigmas),
            "beta": self.beta,
            "c": self.c,
            "vesselness_threshold": self.vesselness_threshold,
            "min_component_size": self.min_component_size,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "FrangiParams":
        params = cls(
            sigmas=tuple(float(s) for s in data["sigmas"]),
            beta=float(data["beta"]),
            c=float(data["c"]),
            vesselness_threshold=float(data["vesselness_threshold"]),
            min_component_size=int(data["min_component_size"]),
        )
        params.validate()
        return params


@dataclass(frozen=True)
class HessianField:
    """Scale-normalized second derivatives at one Gaussian scale."""

    hxx: np.ndarray
    hxy: np.ndarray
    hyy: np.ndarray
    sigma: float = field(default=1.0)


def gaussian_hessian(gray: RasterImage, sigma: float) -> HessianField:
    """Second derivatives of the Gaussian-smoothed image, times sigma**2."""
    require_single_channel(gray, "gray")
    if sigma <= 0:
        raise ValueError(f"sigma must be > 0, got {sigma}")
    img = np.asarray(gray, dtype=np.float64)
    # Truncated derivative kernels do not sum to exactly zero; centring keeps
    # a brightness offset out of the Hessian.
    img = img - img.mean()
    radius = int(math.ceil(4.0 * sigma))
    # axis 0 is rows (y), axis 1 is columns (x)
    opts = dict(sigma=sigma, mode="mirror", radius=radius)
    hyy = ndimage.gaussian_filter(img, order=(2, 0), **opts)
    hxy = ndimage.gaussian_filter(img, order=(1, 1), **opts)
    hxx = ndimage.gaussian_filter(img, order=(0, 2), **opts)
    scale = sigma * sigma
    return HessianField(hxx=hxx * scale, hxy=hxy * scale, hyy=hyy * scale, sigma=sigma)


def hessian_eigenvalues(h: HessianField) -> tuple[np.ndarray, np.ndarray]:
    """Closed-form eigenvalues ordered so that |l1| <= |l2|."""
    trace = h.hxx + h.hyy
    root = np.sqrt((h.hxx - h.hyy) ** 2 + 4.0 * h.hxy**2)
    mu1 = 0.5 * (trace + root)
    mu2 = 0.5 * (trace - root)
    swap = np.abs(mu1) > np.abs(mu2)
    l1 = np.where(swap, mu2, mu1)
    l2 = np.where(swap, mu1, mu2)
    return l1, l2


def vesselness(h: HessianField, beta: float, c: float) -> RasterImage:
    """
    Bright-ridge vesselness in [0, 1].

    v = exp(-Rb^2 / 2beta^2) * (1 - exp(-S^2 / 2c^2)) where l2 < 0, else 0.
    """
    l1, l2 = hessian_eigenvalues(h)
    out = np.zeros_like(l2, dtype=np.float64)
    ridge = l2 < 0
    if not ridge.any():
        return out
    a = l1[ridge]
    b = l2[ridge]
    rb2 = (a / b) ** 2
    s2 = a * a + b * b
    out[ridge] = np.exp(-rb2 / (2.0 * beta * beta)) * (1.0 - np.exp(-s2 / (2.0 * c * c)))
    return out


def multiscale_vesselness(gray: RasterImage, sigmas: Sequence[float], beta: float, c: float) -> RasterImage:
    """Pixel-wise maximum of vesselness over all scales."""
    best = None
    for sigma in sigmas:
        v = vesselness(gaussian_hessian(gray, sigma), beta, c)
        best = v if best is None else np.maximum(best, v)
    assert best is not None
    return best


def component_filter(mask: RasterImage, min_size: int) -> RasterImage:
    """Drop 8-connected components with fewer than `min_size` pixels."""
    require_single_channel(mask, "mask")
    binary = np.asarray(mask) > 0
    if min_size <= 0:
        return binary.astype(np.uint8)
    labels, count = ndimage.label(binary, structure=EIGHT_CONNECTED)
    if count == 0:
        return binary.astype(np.uint8)
    sizes = np.bincount(labels.ravel())
    keep = sizes >= min_size
    keep[0] = False
    return keep[labels].astype(np.uint8)


def frangi_segment(image: RasterImage, p: FrangiParams) -> RasterImage:
    """Binary root mask from a color or grayscale photo in [0, 255]."""
    p.validate()
    gray = to_gray(image) / 255.0
    response = multiscale_vesselness(gray, p.sigmas, p.beta, p.c)
    return component_filter((response >= p.vesselness_threshold).astype(np.uint8), p.min_component_size)


# ---------------------------------------------------------------------------
# Search space for tuning
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class FrangiSearchSpace:
    """
    Maps a 6-D unit-cube vector (s_min, s_max, beta, c, threshold, min_size)
    to FrangiParams. beta and c are searched on a log scale. Sigmas form the
    arithmetic set s_min, s_min + step, ... up to s_max.
    """

    sigma_range: tuple[float, float] = (0.5, 6.0)
    sigma_step: float = 1.0
    beta_range: tuple[float, float] = (0.05, 2.0)
    c_range: tuple[float, float] = (0.005, 1.0)
    threshold_range: tuple[float, float] = (0.0, 1.0)
    min_size_range: tuple[int, int] = (0, 500)

    dimension: ClassVar[int] = 6

    @staticmethod
    def _lin(u: float, lo: float, hi: float) -> float:
        return lo + u * (hi - lo)

    @staticmethod
    def _unlin(x: float, lo: float, hi: float) -> float:
        return (x - lo) / (hi - lo)

    def decode(self, vector: Sequence[float]) -> FrangiParams:
        if len(vector) != self.dimension:
            raise ValueError(f"expected {self.dimension} values, got {len(vector)}")
        u = [min(1.0, max(0.0, float(v))) for v in vector]
        s_lo = self._lin(u[0], *self.sigma_range)
        s_hi = max(s_lo, self._lin(u[1], *self.sigma_range))
        count = int(math.floor((s_hi - s_lo) / self.sigma_step + 1e-9)) + 1
        sigmas = tuple(round(s_lo + i * self.sigma_step, 6) for i in range(count))
        log_beta = self._lin(u[2], math.log(self.beta_range[0]), math.log(self.beta_range[1]))
        log_c = self._lin(u[3], math.log(self.c_range[0]), math.log(self.c_range[1]))
        params = FrangiParams(
            sigmas=sigmas,
            beta=math.exp(log_beta),
            c=math.exp(log_c),
            vesselness_threshold=self._lin(u[4], *self.threshold_range),
            min_component_size=int(round(self._lin(u[5], *self.min_size_range))),
        )
        params.validate()
        return params

    def encode(self, params: FrangiParams) -> list[float]:
        def clamp(x: float) -> float:
            return min(1.0, max(0.0, x))

        return [
            clamp(self._unlin(min(params.sigmas), *self.sigma_range)),
            clamp(self._unlin(max(params.sigmas), *self.sigma_range)),
            clamp(
                self._unlin(
                    math.log(params.beta), math.log(self.beta_range[0]), math.log(self.beta_range[1])
                )
            ),
            clamp(
                self._unlin(math.log(params.c), math.log(self.c_range[0]), math.log(self.c_range[1]))
            ),
            clamp(self._unlin(params.vesselness_threshold, *self.threshold_range)),
            clamp(self._unlin(float(params.min_component_size), *self.min_size_range)),
        ]
