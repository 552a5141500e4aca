"""
Unit tests for metrics, skeleton length, line-intersect counting and
correlations.

Goals:
- F1 / precision / recall follow the confusion counts, with None for 0/0.
- F1 of binary masks is one minus their Dice loss.
- Skeleton length of a bar is close to its length and is additive.
- Line-intersect counts scale with grid density.
- Spearman and r^2 match hand-computed values; Spearman only sees ranks.
"""

from __future__ import annotations

import unittest

import numpy as np

from rootseg import analysis
from rootseg.analysis import ConfusionCounts, GridSpec
from rootseg.train.losses import dice_loss


class TestPixelMetrics(unittest.TestCase):
    def test_published_f1_arithmetic(self) -> None:
        self.assertAlmostEqual(analysis.f1_score(0.659, 0.748), 0.701, delta=0.001)
        self.assertAlmostEqual(analysis.f1_score(0.660, 0.355), 0.462, delta=0.001)
        self.assertIsNone(analysis.f1_score(0.0, 0.0))

    def test_confusion_matches_loop(self) -> None:
        rng = np.random.default_rng(0)
        pred = (rng.random((9, 11)) > 0.5).astype(np.uint8)
        truth = (rng.random((9, 11)) > 0.7).astype(np.uint8)
        tp = fp = fn = tn = 0
        for p, t in zip(pred.ravel(), truth.ravel()):
            if p and t:
                tp += 1
            elif p:
                fp += 1
            elif t:
                fn += 1
            else:
                tn += 1
        self.assertEqual(analysis.confusion(pred, truth), ConfusionCounts(tp, fp, fn, tn))

    def test_metrics_from_counts(self) -> None:
        m = analysis.f1_precision_recall_accuracy(ConfusionCounts(tp=6, fp=2, fn=4, tn=88))
        self.assertAlmostEqual(m.precision, 0.75)
        self.assertAlmostEqual(m.recall, 0.6)
        self.assertAlmostEqual(m.f1, 12 / 18)
        self.assertAlmostEqual(m.accuracy, 0.94)

    def test_empty_cases(self) -> None:
        empty = np.zeros((4, 4), dtype=np.uint8)
        rooted = empty.copy()
        rooted[1, 1] = 1
        self.assertIsNone(analysis.f1(empty, empty))
        self.assertEqual(analysis.f1(empty, rooted), 0.0)
        m = analysis.f1_precision_recall_accuracy(analysis.confusion(empty, rooted))
        self.assertIsNone(m.precision)
        self.assertEqual(m.recall, 0.0)

    def test_shape_mismatch(self) -> None:
        with self.assertRaises(ValueError):
            analysis.confusion(np.zeros((3, 3)), np.zeros((3, 4)))

    def test_f1_equals_one_minus_hard_dice(self) -> None:
        rng = np.random.default_rng(11)
        for density in (0.01, 0.2, 0.6):
            pred = (rng.random((30, 40)) < density).astype(np.uint8)
            truth = (rng.random((30, 40)) < density).astype(np.uint8)
            self.assertAlmostEqual(analysis.f1(pred, truth), 1.0 - dice_loss(pred, truth), delta=1e-6)


class TestReport(unittest.TestCase):
    def _pair(self, tp: int, fp: int, fn: int) -> tuple[np.ndarray, np.ndarray]:
        pred = np.zeros(40, dtype=np.uint8)
        truth = np.zeros(40, dtype=np.uint8)
        truth[: tp + fn] = 1
        pred[:tp] = 1
        pred[tp + fn : tp + fn + fp] = 1
        return pred.reshape(5, 8), truth.reshape(5, 8)

    def test_means_cover_rooted_images_only(self) -> None:
        rootless_pred = np.zeros((5, 8), dtype=np.uint8)
        rootless_pred[0, :4] = 1
        images = [self._pair(7, 3, 3), self._pair(8, 2, 2), (rootless_pred, np.zeros((5, 8), dtype=np.uint8))]
        rep = analysis.report(images)
        self.assertEqual(rep.rooted_images, 2)
        self.assertAlmostEqual(rep.mean["f1"], 0.75)
        self.assertAlmostEqual(rep.stdev["f1"], 0.05)
        self.assertEqual(rep.false_positive_pixels_rootless, [4])
        self.assertAlmostEqual(rep.pooled.f1, 30 / 44)
        self.assertAlmostEqual(rep.true_mean, 20 / 120)

    def test_empty_input_rejected(self) -> None:
        with self.assertRaises(ValueError):
            analysis.report([])


class TestSkeleton(unittest.TestCase):
    def test_bar_length(self) -> None:
        mask = np.zeros((30, 130), dtype=np.uint8)
        mask[10:15, 10:110] = 1
        length = analysis.root_length_px(mask)
        self.assertGreaterEqual(length, 98)
        self.assertLessEqual(length, 102)

    def test_additive_over_separate_components(self) -> None:
        a = np.zeros((60, 130), dtype=np.uint8)
        a[10:15, 10:110] = 1
        b = np.zeros((60, 130), dtype=np.uint8)
        b[40:44, 20:80] = 1
        self.assertEqual(analysis.root_length_px(a | b), analysis.root_length_px(a) + analysis.root_length_px(b))

    def test_one_pixel_wide(self) -> None:
        rng = np.random.default_rng(1)
        mask = np.zeros((80, 80), dtype=np.uint8)
        for _ in range(6):
            r, c = rng.integers(5, 70, size=2)
            mask[r : r + 8, c : c + 3] = 1
            mask[r + 3 : r + 6, c : c + 10] = 1
        skel = analysis.skeletonize(mask)
        blocks = skel[:-1, :-1] & skel[1:, :-1] & skel[:-1, 1:] & skel[1:, 1:]
        self.assertFalse(blocks.any())
        self.assertFalse((skel & ~(mask > 0)).any())

    def test_empty_mask(self) -> None:
        self.assertEqual(analysis.root_length_px(np.zeros((10, 10))), 0)


class TestLineIntersect(unittest.TestCase):
    def _vertical_root(self) -> np.ndarray:
        mask = np.zeros((400, 100), dtype=np.uint8)
        mask[50:350, 55:57] = 1  # 300 mm at 1 mm per pixel
        return mask

    def test_ten_mm_grid(self) -> None:
        result = analysis.line_intersect(self._vertical_root(), GridSpec(square_size_mm=10.0))
        self.assertIn(result.intersections, (29, 30))
        # 39 horizontal lines of 100 mm, 9 vertical lines of 400 mm
        self.assertAlmostEqual(result.grid_length_m, (39 * 100 + 9 * 400) / 1000.0)
        self.assertAlmostEqual(result.root_intensity, result.intersections / result.grid_length_m)

    def test_count_scales_with_grid_density(self) -> None:
        fine = analysis.line_intersect(self._vertical_root(), GridSpec(square_size_mm=10.0)).intersections
        coarse = analysis.line_intersect(self._vertical_root(), GridSpec(square_size_mm=80.0)).intersections
        self.assertLessEqual(abs(coarse - fine / 8.0), 1.0)

    def test_empty_mask_counts_zero(self) -> None:
        result = analysis.line_intersect(np.zeros((100, 100)), GridSpec(square_size_mm=20.0))
        self.assertEqual(result.intersections, 0)
        self.assertEqual(result.root_intensity, 0.0)

    def test_unsupported_square_size(self) -> None:
        with self.assertRaises(ValueError):
            analysis.line_intersect(np.zeros((100, 100)), GridSpec(square_size_mm=15.0))

    def test_panel_without_interior_lines(self) -> None:
        with self.assertRaises(ValueError):
            analysis.line_intersect(np.zeros((50, 50)), GridSpec(square_size_mm=80.0))


class TestCorrelation(unittest.TestCase):
    def test_spearman(self) -> None:
        self.assertAlmostEqual(analysis.spearman([1, 2, 3], [1, 3, 2]), 0.5)
        self.assertAlmostEqual(analysis.spearman([1, 2, 3, 4], [10, 20, 30, 40]), 1.0)
        self.assertIsNone(analysis.spearman([1, 2, 3], [5, 5, 5]))

    def test_r_squared(self) -> None:
        self.assertAlmostEqual(analysis.r_squared([0, 1, 2], [0, 1, 1]), 0.75)
        self.assertEqual(analysis.r_squared([0, 1, 2], [4, 4, 4]), 0.0)
        with self.assertRaises(ValueError):
            analysis.r_squared([1, 1, 1], [0, 1, 2])

    def test_too_few_pairs(self) -> None:
        with self.assertRaises(ValueError):
            analysis.spearman([1, 2], [2, 1])
        with self.assertRaises(ValueError):
            analysis.r_squared([1, 2, 3], [1, 2])

    def test_spearman_ignores_increasing_transforms(self) -> None:
        rng = np.random.default_rng(12)
        xs = rng.normal(size=25)
        ys = xs + rng.normal(scale=0.8, size=25)
        base = analysis.spearman(xs, ys)
        self.assertAlmostEqual(analysis.spearman(xs**3, ys), base, places=12)
        self.assertAlmostEqual(analysis.spearman(xs, np.exp(ys)), base, places=12)

    def test_spearman_of_reversed_ranks(self) -> None:
        xs = list(range(10))
        self.assertAlmostEqual(analysis.spearman(xs, xs[::-1]), -1.0)


if __name__ == "__main__":
    unittest.main()
