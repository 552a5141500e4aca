"""
Unit tests for normalization, elastic deformation and color jitter.

Goals:
- Normalization maps [0, 255] onto [-0.5, 0.5].
- Displacement fields are bounded by alpha and smoother for larger sigma.
- Warping keeps masks binary and samples them by nearest neighbour;
  dense 3+ px strokes keep their pixel count within 5%.
- Jitter with zero magnitudes is the identity and stays in range.
"""

from __future__ import annotations

import unittest
from dataclasses import replace

import numpy as np

from rootseg import augment
from rootseg.augment import DisplacementField, ElasticParams, JitterParams
from rootseg.synthdata import SceneConfig, generate_scene


def _roughness(field: np.ndarray) -> float:
    return float(np.abs(np.diff(field, axis=0)).mean() + np.abs(np.diff(field, axis=1)).mean())


class TestNormalize(unittest.TestCase):
    def test_fixed_points(self) -> None:
        out = augment.normalize(np.array([0.0, 127.5, 255.0]))
        np.testing.assert_allclose(out, [-0.5, 0.0, 0.5])

    def test_denormalize_inverts(self) -> None:
        x = np.random.default_rng(0).uniform(0, 255, size=20)
        np.testing.assert_allclose(augment.denormalize(augment.normalize(x)), x)


class TestElasticParams(unittest.TestCase):
    def test_gamma_endpoints(self) -> None:
        low = ElasticParams.from_gamma(0.0)
        self.assertEqual((low.sigma, low.alpha), (15.0, 200.0))
        high = ElasticParams.from_gamma(1.0)
        self.assertEqual((high.sigma, high.alpha), (60.0, 2500.0))

    def test_alpha_scale_applies_to_alpha_only(self) -> None:
        p = ElasticParams.from_gamma(1.0, alpha_scale=0.5)
        self.assertEqual(p.sigma, 60.0)
        self.assertEqual(p.alpha, 1250.0)
        self.assertEqual(p.unscaled_alpha, 2500.0)

    def test_gamma_out_of_range(self) -> None:
        with self.assertRaises(ValueError):
            ElasticParams.from_gamma(1.2)

    def test_sampled_gamma_is_uniform(self) -> None:
        rng = np.random.default_rng(5)
        samples = [augment.sample_elastic(rng) for _ in range(10000)]
        self.assertAlmostEqual(float(np.mean([s.gamma for s in samples])), 0.5, delta=0.02)
        scales = [s.alpha_scale for s in samples]
        self.assertGreaterEqual(min(scales), 0.4)
        self.assertLessEqual(max(scales), 1.0)


class TestField(unittest.TestCase):
    def test_zero_alpha_gives_zero_field(self) -> None:
        p = ElasticParams(gamma=0.0, sigma=15.0, alpha=0.0)
        f = augment.make_field(20, 30, p, np.random.default_rng(0))
        self.assertFalse(f.dy.any() or f.dx.any())

    def test_offsets_bounded_by_alpha(self) -> None:
        for gamma in (0.0, 0.5, 1.0):
            p = ElasticParams.from_gamma(gamma)
            f = augment.make_field(64, 64, p, np.random.default_rng(1))
            self.assertLessEqual(float(np.abs(f.dy).max()), p.alpha)
            self.assertLessEqual(float(np.abs(f.dx).max()), p.alpha)

    def test_larger_sigma_is_smoother(self) -> None:
        rough = augment.make_field(100, 100, ElasticParams(0.0, 15.0, 1.0), np.random.default_rng(2))
        smooth = augment.make_field(100, 100, ElasticParams(1.0, 60.0, 1.0), np.random.default_rng(2))
        self.assertLess(_roughness(smooth.dy), _roughness(rough.dy))

    def test_invalid_size(self) -> None:
        with self.assertRaises(ValueError):
            augment.make_field(0, 5, ElasticParams.from_gamma(0.5), np.random.default_rng(0))


class TestWarp(unittest.TestCase):
    def setUp(self) -> None:
        rng = np.random.default_rng(9)
        self.img = rng.uniform(0, 255, size=(24, 30, 3))
        self.mask = (rng.random((24, 30)) > 0.6).astype(np.uint8)

    def test_zero_field_is_identity(self) -> None:
        f = DisplacementField(np.zeros((24, 30)), np.zeros((24, 30)))
        img, mask = augment.warp(self.img, self.mask, f)
        np.testing.assert_allclose(img, self.img, atol=1e-9)
        np.testing.assert_array_equal(mask, self.mask)

    def test_mask_stays_binary_and_matches_nearest_neighbour(self) -> None:
        rng = np.random.default_rng(3)
        f = DisplacementField(rng.uniform(-40, 40, size=(24, 30)), rng.uniform(-40, 40, size=(24, 30)))
        _, mask = augment.warp(self.img, self.mask, f)
        self.assertTrue(set(np.unique(mask).tolist()) <= {0, 1})

        def reflect(i: int, n: int) -> int:
            while i < 0 or i >= n:
                i = -i if i < 0 else 2 * (n - 1) - i
            return i

        for y in range(24):
            for x in range(30):
                sy = int(np.floor(y + f.dy[y, x] + 0.5))
                sx = int(np.floor(x + f.dx[y, x] + 0.5))
                self.assertEqual(mask[y, x], self.mask[reflect(sy, 24), reflect(sx, 30)])

    def test_integer_shift_moves_image(self) -> None:
        f = DisplacementField(np.zeros((24, 30)), np.full((24, 30), 2.0))
        img, mask = augment.warp(self.img, self.mask, f)
        np.testing.assert_allclose(img[:, :-2], self.img[:, 2:], atol=1e-9)
        np.testing.assert_array_equal(mask[:, :-2], self.mask[:, 2:])

    def test_dimension_mismatch(self) -> None:
        f = DisplacementField(np.zeros((10, 10)), np.zeros((10, 10)))
        with self.assertRaises(ValueError):
            augment.warp(self.img, self.mask, f)

    def test_dense_strokes_keep_their_pixel_count(self) -> None:
        cfg = SceneConfig(height=256, width=256, root_count_range=(60, 60), root_width_range=(3.0, 4.0))
        rng = np.random.default_rng(21)
        for seed in range(10):
            _, mask = generate_scene(replace(cfg, seed=seed))
            f = augment.make_field(256, 256, augment.sample_elastic(rng), rng)
            _, warped = augment.warp(np.zeros((256, 256, 3)), mask, f)
            before = int(mask.sum())
            self.assertLess(abs(int(warped.sum()) - before) / before, 0.05, seed)


class TestColorJitter(unittest.TestCase):
    def test_zero_magnitudes_are_identity(self) -> None:
        img = np.random.default_rng(0).uniform(0, 255, size=(8, 8, 3))
        out = augment.color_jitter(img, JitterParams(0.0, 0.0, 0.0, 0.0), np.random.default_rng(1))
        np.testing.assert_array_equal(out, img)

    def test_brightness_on_constant_image(self) -> None:
        img = np.full((6, 6, 3), 100.0)
        out = augment.color_jitter(img, JitterParams(0.3, 0.0, 0.0, 0.0), np.random.default_rng(2))
        self.assertAlmostEqual(float(out.std()), 0.0)
        self.assertGreaterEqual(float(out[0, 0, 0]), 70.0)
        self.assertLessEqual(float(out[0, 0, 0]), 130.0)

    def test_output_stays_in_range(self) -> None:
        rng = np.random.default_rng(4)
        img = rng.uniform(0, 255, size=(16, 16, 3))
        for _ in range(20):
            out = augment.color_jitter(img, JitterParams(0.9, 0.9, 0.9, 0.5), rng)
            self.assertGreaterEqual(float(out.min()), 0.0)
            self.assertLessEqual(float(out.max()), 255.0)

    def test_gray_input_rejected(self) -> None:
        with self.assertRaises(ValueError):
            augment.color_jitter(np.zeros((4, 4)), JitterParams(), np.random.default_rng(0))

    def test_negative_magnitude_rejected(self) -> None:
        with self.assertRaises(ValueError):
            augment.color_jitter(np.zeros((4, 4, 3)), JitterParams(brightness=-0.1), np.random.default_rng(0))


class TestAugmentPair(unittest.TestCase):
    def test_deterministic_and_shape_preserving(self) -> None:
        rng = np.random.default_rng(6)
        img = rng.uniform(0, 255, size=(20, 20, 3))
        mask = (rng.random((20, 20)) > 0.5).astype(np.uint8)
        a_img, a_mask = augment.augment_pair(img, mask, np.random.default_rng(12))
        b_img, b_mask = augment.augment_pair(img, mask, np.random.default_rng(12))
        np.testing.assert_array_equal(a_img, b_img)
        np.testing.assert_array_equal(a_mask, b_mask)
        self.assertEqual(a_img.shape, img.shape)
        self.assertEqual(a_mask.shape, mask.shape)


if __name__ == "__main__":
    unittest.main()
