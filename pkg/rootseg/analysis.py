"""
Segmentation metrics, skeleton root length, line-intersect counting, and
correlation statistics.

Purpose:
  Turn predicted and annotated masks into the numbers the evaluation report
  and the Frangi tuner consume.

Notes:
  - Undefined metrics (0/0) are None and are left out of every mean.
  - Per-image means and standard deviations cover rooted images only
    (non-empty annotation); standard deviation is the population value.
"""

from __future__ import annotations

import statistics
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np
from scipy import ndimage, stats
from skimage.morphology import skeletonize as _thin

from .imagecore import RasterImage, require_single_channel

ALLOWED_SQUARE_SIZES_MM = (10.0, 20.0, 40.0, 80.0)
_NEIGHBOURS = np.array([[1, 1, 1], [1, 0, 1], [1, 1, 1]], dtype=np.int32)


# ---------------------------------------------------------------------------
# Pixel metrics
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class ConfusionCounts:
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def total(self) -> int:
        return self.tp + self.fp + self.fn + self.tn

    def __add__(self, other: "ConfusionCounts") -> "ConfusionCounts":
        return ConfusionCounts(
            self.tp + other.tp, self.fp + other.fp, self.fn + other.fn, self.tn + other.tn
        )


@dataclass(frozen=True)
class PixelMetrics:
    f1: Optional[float]
    precision: Optional[float]
    recall: Optional[float]
    accuracy: Optional[float]


def confusion(pred: RasterImage, truth: RasterImage) -> ConfusionCounts:
    if pred.shape != truth.shape:
        raise ValueError(f"shape mismatch: prediction {pred.shape} vs truth {truth.shape}")
    p = np.asarray(pred) > 0
    t = np.asarray(truth) > 0
    tp = int(np.count_nonzero(p & t))
    fp = int(np.count_nonzero(p & ~t))
    fn = int(np.count_nonzero(~p & t))
    return ConfusionCounts(tp=tp, fp=fp, fn=fn, tn=int(p.size) - tp - fp - fn)


def _ratio(num: int, den: int) -> Optional[float]:
    return None if den == 0 else num / den


def f1_score(precision: float, recall: float) -> Optional[float]:
    """Harmonic mean of precision and recall."""
    if precision + recall == 0:
        return None
    return 2.0 * precision * recall / (precision + recall)


def f1_precision_recall_accuracy(c: ConfusionCounts) -> PixelMetrics:
    """
    F1 is 2tp / (2tp + fp + fn), the same value as the harmonic mean of
    precision and recall wherever both exist. An empty prediction on a
    rooted image therefore scores F1 = 0; only an empty prediction on an
    empty annotation leaves F1 undefined.
    """
    return PixelMetrics(
        f1=_ratio(2 * c.tp, 2 * c.tp + c.fp + c.fn),
        precision=_ratio(c.tp, c.tp + c.fp),
        recall=_ratio(c.tp, c.tp + c.fn),
        accuracy=_ratio(c.tp + c.tn, c.total),
    )


def f1(pred: RasterImage, truth: RasterImage) -> Optional[float]:
    return f1_precision_recall_accuracy(confusion(pred, truth)).f1


# ---------------------------------------------------------------------------
# Skeleton length
# ---------------------------------------------------------------------------
def _extend_endpoints(skel: np.ndarray, mask: np.ndarray) -> np.ndarray:
    # Thinning eats roughly half a width at each free end; walk each end
    # point outward along its last step while it stays on the mask.
    height, width = skel.shape
    counts = ndimage.convolve(skel.astype(np.int32), _NEIGHBOURS, mode="constant")
    ends = np.argwhere(skel & (counts == 1))
    for r, c in ends:
        nbrs = [
            (r + dr, c + dc)
            for dr in (-1, 0, 1)
            for dc in (-1, 0, 1)
            if (dr or dc) and 0 <= r + dr < height and 0 <= c + dc < width and skel[r + dr, c + dc]
        ]
        if len(nbrs) != 1:
            continue
        dr, dc = r - nbrs[0][0], c - nbrs[0][1]
        cur = (r, c)
        while True:
            nr, nc = cur[0] + dr, cur[1] + dc
            if not (0 <= nr < height and 0 <= nc < width) or not mask[nr, nc] or skel[nr, nc]:
                break
            window = skel[max(0, nr - 1) : nr + 2, max(0, nc - 1) : nc + 2]
            if int(window.sum()) != 1:  # only `cur` may touch the new pixel
                break
            skel[nr, nc] = True
            cur = (nr, nc)
    return skel


def skeletonize(mask: RasterImage) -> RasterImage:
    """One-pixel-wide, 8-connected centerline of each component."""
    require_single_channel(mask, "mask")
    binary = np.asarray(mask) > 0
    if not binary.any():
        return np.zeros(binary.shape, dtype=np.uint8)
    skel = _thin(binary)
    return _extend_endpoints(skel, binary).astype(np.uint8)


def root_length_px(mask: RasterImage) -> int:
    return int(np.count_nonzero(skeletonize(mask)))


# ---------------------------------------------------------------------------
# Line-intersect method
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class GridSpec:
    """
    Square counting grid laid over a panel. Panel size defaults to the
    mask extent when left unset.
    """

    square_size_mm: float = 10.0
    mm_per_pixel: float = 1.0
    panel_width_mm: Optional[float] = None
    panel_height_mm: Optional[float] = None

    def validate(self) -> None:
        if self.square_size_mm not in ALLOWED_SQUARE_SIZES_MM:
            raise ValueError(
                f"square_size_mm must be one of {ALLOWED_SQUARE_SIZES_MM}, got {self.square_size_mm}"
            )
        if self.mm_per_pixel <= 0:
            raise ValueError(f"mm_per_pixel must be > 0, got {self.mm_per_pixel}")
        for name in ("panel_width_mm", "panel_height_mm"):
            value = getattr(self, name)
            if value is not None and value <= 0:
                raise ValueError(f"{name} must be > 0, got {value}")

    def panel_mm(self, shape: tuple[int, int]) -> tuple[float, float]:
        """(height_mm, width_mm) of the panel covered by a mask of `shape`."""
        height = self.panel_height_mm if self.panel_height_mm is not None else shape[0] * self.mm_per_pixel
        width = self.panel_width_mm if self.panel_width_mm is not None else shape[1] * self.mm_per_pixel
        return height, width


@dataclass(frozen=True)
class LineIntersect:
    intersections: int
    root_intensity: float  # intersections per metre of grid line
    grid_length_m: float


def _line_positions(extent_mm: float, square_mm: float, mm_per_pixel: float, pixels: int) -> list[int]:
    # Interior lines only; panel borders are not grid lines.
    out = []
    k = 1
    while k * square_mm < extent_mm:
        index = int(k * square_mm / mm_per_pixel)
        if index < pixels:
            out.append(index)
        k += 1
    return out


def _runs(line: np.ndarray) -> int:
    padded = np.concatenate(([False], line, [False]))
    return int(np.count_nonzero(padded[1:] & ~padded[:-1]))


def line_intersect(mask: RasterImage, grid: GridSpec) -> LineIntersect:
    """Count root crossings of the interior grid lines and normalize per metre."""
    require_single_channel(mask, "mask")
    grid.validate()
    binary = np.asarray(mask) > 0
    height_mm, width_mm = grid.panel_mm(binary.shape)
    rows = _line_positions(height_mm, grid.square_size_mm, grid.mm_per_pixel, binary.shape[0])
    cols = _line_positions(width_mm, grid.square_size_mm, grid.mm_per_pixel, binary.shape[1])
    if not rows and not cols:
        raise ValueError(
            f"grid of {grid.square_size_mm} mm squares has no lines inside a "
            f"{width_mm:.1f}x{height_mm:.1f} mm panel"
        )
    count = sum(_runs(binary[r, :]) for r in rows) + sum(_runs(binary[:, c]) for c in cols)
    length_m = (len(rows) * width_mm + len(cols) * height_mm) / 1000.0
    return LineIntersect(intersections=count, root_intensity=count / length_m, grid_length_m=length_m)


# ---------------------------------------------------------------------------
# Correlation
# ---------------------------------------------------------------------------
def _paired(xs: Sequence[float], ys: Sequence[float]) -> tuple[np.ndarray, np.ndarray]:
    if len(xs) != len(ys):
        raise ValueError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 3:
        raise ValueError(f"need at least 3 pairs, got {len(xs)}")
    return np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)


def spearman(xs: Sequence[float], ys: Sequence[float]) -> Optional[float]:
    """Rank correlation with mean ranks for ties; None for constant input."""
    x, y = _paired(xs, ys)
    if np.ptp(x) == 0 or np.ptp(y) == 0:
        return None
    rho, _ = stats.spearmanr(x, y)
    return float(rho)


def r_squared(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Coefficient of determination of the least-squares line of ys on xs."""
    x, y = _paired(xs, ys)
    if np.ptp(x) == 0:
        raise ValueError("r_squared needs non-constant xs")
    if np.ptp(y) == 0:
        return 0.0
    fit = stats.linregress(x, y)
    return float(fit.rvalue**2)


# ---------------------------------------------------------------------------
# Aggregate report
# ---------------------------------------------------------------------------
@dataclass
class MetricsReport:
    pooled: PixelMetrics
    per_image: list[PixelMetrics]
    mean: dict[str, Optional[float]] = field(default_factory=dict)
    stdev: dict[str, Optional[float]] = field(default_factory=dict)
    prediction_mean: float = 0.0  # predicted root-pixel fraction, all pixels
    true_mean: float = 0.0
    rooted_images: int = 0
    false_positive_pixels_rootless: list[int] = field(default_factory=list)


_METRIC_NAMES = ("f1", "precision", "recall", "accuracy")


def _mean_std(values: Iterable[Optional[float]]) -> tuple[Optional[float], Optional[float]]:
    kept = [v for v in values if v is not None]
    if not kept:
        return None, None
    return statistics.fmean(kept), statistics.pstdev(kept)


def report(images: Sequence[tuple[RasterImage, RasterImage]]) -> MetricsReport:
    """Pooled-pixel metrics plus per-rooted-image mean and stdev."""
    if not images:
        raise ValueError("report needs at least one image")
    counts = [confusion(pred, truth) for pred, truth in images]
    pooled_counts = counts[0]
    for c in counts[1:]:
        pooled_counts = pooled_counts + c
    per_image = [f1_precision_recall_accuracy(c) for c in counts]

    rooted = [m for m, c in zip(per_image, counts) if c.tp + c.fn > 0]
    rootless_fp = [c.fp for c in counts if c.tp + c.fn == 0]
    out = MetricsReport(
        pooled=f1_precision_recall_accuracy(pooled_counts),
        per_image=per_image,
        rooted_images=len(rooted),
        false_positive_pixels_rootless=rootless_fp,
    )
    for name in _METRIC_NAMES:
        out.mean[name], out.stdev[name] = _mean_std(getattr(m, name) for m in rooted)
    total = pooled_counts.total
    out.prediction_mean = (pooled_counts.tp + pooled_counts.fp) / total
    out.true_mean = (pooled_counts.tp + pooled_counts.fn) / total
    return out
