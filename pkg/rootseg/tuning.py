"""
Frangi parameter tuning with CMA-ES.

Purpose:
  Search the Frangi parameter space for the setting that maximizes the mean
  per-image F1 on a labelled set (objective: 1 - mean F1).
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional, Sequence

import numpy as np

from .analysis import f1
from .cmaes import CmaConfig, CmaResult, GenerationRecord, cmaes_minimize
from .config import CMA_LOG_COLUMNS
from .frangi import FrangiParams, FrangiSearchSpace, frangi_segment
from .imagecore import RasterImage
from .log import log_info
from .storage import append_csv

Dataset = Sequence[tuple[RasterImage, RasterImage]]


@dataclass(frozen=True)
class TuneBudget:
    """CMA-ES budget for `tune-frangi` (the `cma.*` config section)."""

    max_evaluations: int = 400
    initial_sigma: float = 0.2
    population_size: Optional[int] = None
    target_fitness: float = 0.0

    def validate(self) -> None:
        if self.max_evaluations < 1:
            raise ValueError(f"max_evaluations must be >= 1, got {self.max_evaluations}")
        if not self.initial_sigma > 0:
            raise ValueError(f"initial_sigma must be > 0, got {self.initial_sigma}")
        if self.population_size is not None and self.population_size < 2:
            raise ValueError(f"population_size must be >= 2, got {self.population_size}")


@dataclass
class TuneOutcome:
    params: FrangiParams
    initial_objective: float
    best_objective: float
    result: CmaResult


def _rooted(dataset: Dataset) -> list[tuple[RasterImage, RasterImage]]:
    if not dataset:
        raise ValueError("frangi objective needs a non-empty dataset")
    rooted = [(img, mask) for img, mask in dataset if np.any(mask)]
    if not rooted:
        raise ValueError("every mask in the tuning set is empty; F1 is undefined on all images")
    return rooted


def mean_f1(dataset: Dataset, params: FrangiParams) -> float:
    """Mean F1 of the Frangi segmenter over images with a non-empty annotation."""
    scores = [f1(frangi_segment(img, params), mask) for img, mask in _rooted(dataset)]
    return float(np.mean([s for s in scores if s is not None]))


def frangi_objective(
    dataset: Dataset,
    params_vector: Sequence[float],
    space: FrangiSearchSpace = FrangiSearchSpace(),
) -> float:
    """1 - mean F1 for the decoded parameter vector."""
    return 1.0 - mean_f1(dataset, space.decode(params_vector))


def make_objective(dataset: Dataset, space: FrangiSearchSpace) -> Callable[[np.ndarray], float]:
    rooted = _rooted(dataset)
    return lambda vector: frangi_objective(rooted, vector, space)


def tune_frangi(
    dataset: Dataset,
    initial: FrangiParams,
    budget: TuneBudget,
    *,
    seed: int = 0,
    space: FrangiSearchSpace = FrangiSearchSpace(),
    log_path: Optional[Path] = None,
    workers: int = 1,
) -> TuneOutcome:
    """
    Run CMA-ES from `initial` and return the best parameters found.

    With a budget of a single evaluation no generation runs and the
    initial parameters come back unchanged.
    """
    budget.validate()
    initial.validate()
    objective = make_objective(dataset, space)
    start = space.encode(initial)
    cfg = CmaConfig(
        dimension=space.dimension,
        initial_mean=tuple(start),
        initial_sigma=budget.initial_sigma,
        max_evaluations=budget.max_evaluations,
        population_size=budget.population_size,
        target_fitness=budget.target_fitness,
        seed=seed,
        bounds=tuple((0.0, 1.0) for _ in range(space.dimension)),
    )

    def record(gen: GenerationRecord) -> None:
        if log_path is not None:
            append_csv(log_path, CMA_LOG_COLUMNS, [gen.generation, gen.best_fitness, gen.mean_fitness, gen.sigma])
        log_info("tune", "generation", gen=gen.generation, best=gen.best_fitness, sigma=gen.sigma)

    result = cmaes_minimize(objective, cfg, workers=workers, on_generation=record)
    initial_objective = result.initial_fitness
    if result.best_fitness < initial_objective:
        params = space.decode(result.best_point)
    else:
        params = initial
    log_info(
        "tune",
        f"done after {result.evaluations_used} evaluations ({result.stop_reason}); "
        f"objective {initial_objective:.4f} -> {result.best_fitness:.4f}",
    )
    return TuneOutcome(
        params=params,
        initial_objective=initial_objective,
        best_objective=result.best_fitness,
        result=result,
    )
