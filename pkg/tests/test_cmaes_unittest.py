"""
Unit tests for the CMA-ES optimizer.

Goals:
- Converges on the sphere and a shifted 1-D quadratic.
- Stops on budget, target, or collapse; never exceeds the budget.
- Depends on fitness only through its ranking, and is deterministic per seed.
"""

from __future__ import annotations

import math
import unittest

import numpy as np

from rootseg.cmaes import CmaConfig, cmaes_minimize, default_population_size


def sphere(x: np.ndarray) -> float:
    return float(np.sum(x * x))


class TestConvergence(unittest.TestCase):
    def test_sphere_5d(self) -> None:
        cfg = CmaConfig(dimension=5, initial_mean=(3.0,) * 5, initial_sigma=1.0, max_evaluations=5000, seed=1)
        result = cmaes_minimize(sphere, cfg)
        self.assertLess(result.best_fitness, 1e-12)
        self.assertLessEqual(result.evaluations_used, 5000)

    def test_shifted_quadratic_1d(self) -> None:
        cfg = CmaConfig(dimension=1, initial_mean=(0.0,), initial_sigma=1.0, max_evaluations=1000, seed=3)
        result = cmaes_minimize(lambda x: float((x[0] - 2.0) ** 2), cfg)
        self.assertAlmostEqual(float(result.best_point[0]), 2.0, places=5)

    def test_default_population_size(self) -> None:
        self.assertEqual(default_population_size(1), 4)
        self.assertEqual(default_population_size(5), 8)
        self.assertEqual(default_population_size(6), 9)


class TestStopping(unittest.TestCase):
    def test_constant_objective_runs_to_budget(self) -> None:
        cfg = CmaConfig(dimension=2, initial_mean=(0.0, 0.0), initial_sigma=0.5, max_evaluations=200, seed=0)
        result = cmaes_minimize(lambda x: 7.0, cfg)
        self.assertEqual(result.stop_reason, "max_evaluations")
        self.assertEqual(result.best_fitness, 7.0)
        self.assertLessEqual(result.evaluations_used, 200)
        self.assertGreater(result.evaluations_used, 200 - cfg.lam)

    def test_budget_of_one_evaluates_only_the_start(self) -> None:
        cfg = CmaConfig(dimension=2, initial_mean=(1.0, 2.0), initial_sigma=0.5, max_evaluations=1)
        result = cmaes_minimize(sphere, cfg)
        self.assertEqual(result.evaluations_used, 1)
        self.assertEqual(result.best_fitness, 5.0)
        self.assertEqual(result.generations, [])
        self.assertEqual(result.history, [5.0])

    def test_target_fitness_stops_early(self) -> None:
        cfg = CmaConfig(
            dimension=3,
            initial_mean=(2.0, 2.0, 2.0),
            initial_sigma=1.0,
            max_evaluations=5000,
            target_fitness=1e-3,
        )
        result = cmaes_minimize(sphere, cfg)
        self.assertEqual(result.stop_reason, "target_fitness")
        self.assertLessEqual(result.best_fitness, 1e-3)
        self.assertLess(result.evaluations_used, 5000)

    def test_invalid_config_rejected(self) -> None:
        with self.assertRaises(ValueError):
            cmaes_minimize(sphere, CmaConfig(dimension=2, initial_mean=(0.0,), initial_sigma=1.0, max_evaluations=10))
        with self.assertRaises(ValueError):
            cmaes_minimize(sphere, CmaConfig(dimension=1, initial_mean=(0.0,), initial_sigma=0.0, max_evaluations=10))
        with self.assertRaises(ValueError):
            cmaes_minimize(
                sphere,
                CmaConfig(dimension=1, initial_mean=(0.0,), initial_sigma=1.0, max_evaluations=10, population_size=1),
            )


class TestBehaviour(unittest.TestCase):
    def _cfg(self, **kw) -> CmaConfig:
        base = dict(dimension=4, initial_mean=(1.0, -1.0, 2.0, 0.5), initial_sigma=0.8, max_evaluations=600, seed=11)
        base.update(kw)
        return CmaConfig(**base)

    def test_deterministic(self) -> None:
        a = cmaes_minimize(sphere, self._cfg())
        b = cmaes_minimize(sphere, self._cfg())
        np.testing.assert_array_equal(a.best_point, b.best_point)
        self.assertEqual(a.history, b.history)

    def test_parallel_evaluation_matches_serial(self) -> None:
        a = cmaes_minimize(sphere, self._cfg())
        b = cmaes_minimize(sphere, self._cfg(), workers=3)
        np.testing.assert_array_equal(a.best_point, b.best_point)

    def test_best_so_far_history_is_monotone(self) -> None:
        result = cmaes_minimize(sphere, self._cfg())
        history = result.history
        self.assertTrue(all(b <= a for a, b in zip(history, history[1:])))
        self.assertLessEqual(history[-1], result.initial_fitness)
        self.assertEqual(history[0], result.initial_fitness)
        self.assertEqual(history[-1], result.best_fitness)
        self.assertEqual(min(history), result.best_fitness)
        self.assertEqual(len(history), len(result.generations) + 1)

    def test_monotone_transform_keeps_rankings(self) -> None:
        plain = cmaes_minimize(sphere, self._cfg())
        cubed = cmaes_minimize(lambda x: sphere(x) ** 3, self._cfg())
        self.assertEqual([g.ranking for g in plain.generations], [g.ranking for g in cubed.generations])
        np.testing.assert_array_equal(plain.best_point, cubed.best_point)

    def test_non_finite_values_ranked_worst(self) -> None:
        def objective(x: np.ndarray) -> float:
            return sphere(x) if x[0] < 1.5 else math.nan

        result = cmaes_minimize(objective, self._cfg())
        self.assertTrue(math.isfinite(result.best_fitness))
        self.assertLess(result.best_fitness, result.initial_fitness)

    def test_candidates_clipped_to_bounds(self) -> None:
        seen: list[np.ndarray] = []

        def objective(x: np.ndarray) -> float:
            seen.append(x)
            return float(np.sum((x - 5.0) ** 2))

        cfg = self._cfg(initial_mean=(0.5,) * 4, bounds=((0.0, 1.0),) * 4, max_evaluations=200)
        result = cmaes_minimize(objective, cfg)
        pts = np.array(seen)
        self.assertTrue(((pts >= 0.0) & (pts <= 1.0)).all())
        self.assertTrue((result.best_point <= 1.0).all())

    def test_generation_callback_receives_every_record(self) -> None:
        records = []
        result = cmaes_minimize(sphere, self._cfg(), on_generation=records.append)
        self.assertEqual(records, result.generations)
        self.assertEqual([r.generation for r in records], list(range(1, len(records) + 1)))


if __name__ == "__main__":
    unittest.main()
