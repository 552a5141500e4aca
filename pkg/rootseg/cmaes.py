"""
Covariance Matrix Adaptation Evolution Strategy (CMA-ES).

Purpose:
  Derivative-free minimization of a noise-free black-box objective over a
  small real vector (the Frangi tuning problem has six coordinates).

Notes:
  - Standard (mu/mu_w, lambda) defaults: log-rank positive weights,
    cumulative step-size adaptation, rank-one + rank-mu covariance update.
  - Bounds are handled by clipping sampled candidates coordinate-wise; the
    clipped point is both evaluated and used in the update.
  - The initial mean is evaluated once before the first generation.
  - Stops when the next generation would exceed `max_evaluations`, when the
    best fitness reaches `target_fitness`, or when the step size collapses.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .log import log_debug, log_warning

Objective = Callable[[np.ndarray], float]

SIGMA_COLLAPSE = 1e-14


def default_population_size(dimension: int) -> int:
    return 4 + int(math.floor(3.0 * math.log(dimension)))


@dataclass(frozen=True)
class CmaConfig:
    dimension: int
    initial_mean: tuple[float, ...]
    initial_sigma: float
    max_evaluations: int
    population_size: Optional[int] = None
    target_fitness: float = -math.inf
    seed: int = 0
    bounds: Optional[tuple[tuple[float, float], ...]] = None

    @property
    def lam(self) -> int:
        if self.population_size is None:
            return default_population_size(self.dimension)
        return self.population_size

    def validate(self) -> None:
        if self.dimension < 1:
            raise ValueError(f"dimension must be >= 1, got {self.dimension}")
        if len(self.initial_mean) != self.dimension:
            raise ValueError(
                f"initial_mean has {len(self.initial_mean)} values, dimension is {self.dimension}"
            )
        if not self.initial_sigma > 0:
            raise ValueError(f"initial_sigma must be > 0, got {self.initial_sigma}")
        if self.lam < 2:
            raise ValueError(f"population_size must be >= 2, got {self.lam}")
        if self.max_evaluations < 1:
            raise ValueError(f"max_evaluations must be >= 1, got {self.max_evaluations}")
        if self.bounds is not None:
            if len(self.bounds) != self.dimension:
                raise ValueError(f"bounds must have {self.dimension} entries, got {len(self.bounds)}")
            for i, (lo, hi) in enumerate(self.bounds):
                if not lo < hi:
                    raise ValueError(f"bounds[{i}]: lo must be < hi, got [{lo}, {hi}]")


@dataclass(frozen=True)
class GenerationRecord:
    generation: int
    best_fitness: float  # best so far, including this generation
    mean_fitness: float  # over finite values of this generation
    sigma: float
    ranking: tuple[int, ...]  # candidate indices sorted by fitness


@dataclass
class CmaResult:
    best_point: np.ndarray
    best_fitness: float
    evaluations_used: int
    initial_fitness: float = math.inf
    generations: list[GenerationRecord] = field(default_factory=list)
    stop_reason: str = ""

    @property
    def history(self) -> list[float]:
        """Best-so-far fitness: the initial mean first, then one entry per generation."""
        return [self.initial_fitness] + [g.best_fitness for g in self.generations]


# ---------------------------------------------------------------------------
# Strategy parameters
# ---------------------------------------------------------------------------
@dataclass(frozen=True)
class _StrategyParams:
    lam: int
    mu: int
    weights: np.ndarray
    mueff: float
    cc: float
    cs: float
    c1: float
    cmu: float
    damps: float
    chi_n: float

    @classmethod
    def for_dimension(cls, n: int, lam: int) -> "_StrategyParams":
        mu = lam // 2
        raw = np.log(lam / 2.0 + 0.5) - np.log(np.arange(1, mu + 1))
        weights = raw / raw.sum()
        mueff = float(weights.sum() ** 2 / (weights**2).sum())
        cc = (4 + mueff / n) / (n + 4 + 2 * mueff / n)
        cs = (mueff + 2) / (n + mueff + 5)
        c1 = 2 / ((n + 1.3) ** 2 + mueff)
        cmu = min(1 - c1, 2 * (mueff - 2 + 1 / mueff) / ((n + 2) ** 2 + mueff))
        damps = 1 + 2 * max(0.0, math.sqrt((mueff - 1) / (n + 1)) - 1) + cs
        chi_n = math.sqrt(n) * (1 - 1 / (4 * n) + 1 / (21 * n * n))
        return cls(lam, mu, weights, mueff, cc, cs, c1, cmu, damps, chi_n)


class CmaEvolutionStrategy:
    """Ask/tell CMA-ES state. `ask` samples a generation, `tell` ranks it."""

    def __init__(self, cfg: CmaConfig):
        cfg.validate()
        self.cfg = cfg
        n = cfg.dimension
        self.params = _StrategyParams.for_dimension(n, cfg.lam)
        self.rng = np.random.default_rng(cfg.seed)
        self.mean = np.asarray(cfg.initial_mean, dtype=np.float64).copy()
        self.sigma = float(cfg.initial_sigma)
        self.pc = np.zeros(n)
        self.ps = np.zeros(n)
        self.C = np.eye(n)
        self.B = np.eye(n)
        self.D = np.ones(n)
        self.generation = 0
        if cfg.bounds is not None:
            self._lo = np.array([b[0] for b in cfg.bounds], dtype=np.float64)
            self._hi = np.array([b[1] for b in cfg.bounds], dtype=np.float64)
        else:
            self._lo = self._hi = None

    def clip(self, x: np.ndarray) -> np.ndarray:
        if self._lo is None:
            return x
        return np.clip(x, self._lo, self._hi)

    def ask(self) -> np.ndarray:
        """Return a (lambda, n) array of clipped candidates."""
        n = self.cfg.dimension
        z = self.rng.standard_normal((self.params.lam, n))
        y = (z * self.D) @ self.B.T
        return self.clip(self.mean + self.sigma * y)

    def tell(self, candidates: np.ndarray, fitness: np.ndarray) -> np.ndarray:
        """Update the distribution; return the ranking (indices, best first)."""
        par = self.params
        n = self.cfg.dimension
        self.generation += 1
        order = np.argsort(fitness, kind="stable")
        selected = candidates[order[: par.mu]]
        old = self.mean
        self.mean = par.weights @ selected

        y_w = (self.mean - old) / self.sigma
        inv_sqrt = self.B @ np.diag(1.0 / self.D) @ self.B.T
        self.ps = (1 - par.cs) * self.ps + math.sqrt(par.cs * (2 - par.cs) * par.mueff) * (inv_sqrt @ y_w)
        ps_norm = float(np.linalg.norm(self.ps))
        hsig = ps_norm / math.sqrt(1 - (1 - par.cs) ** (2 * self.generation)) < (1.4 + 2 / (n + 1)) * par.chi_n
        self.pc = (1 - par.cc) * self.pc + hsig * math.sqrt(par.cc * (2 - par.cc) * par.mueff) * y_w

        steps = (selected - old) / self.sigma
        rank_mu = (steps.T * par.weights) @ steps
        c1a = par.c1 * (1 - (1 - hsig) * par.cc * (2 - par.cc))
        self.C = (1 - c1a - par.cmu) * self.C + par.c1 * np.outer(self.pc, self.pc) + par.cmu * rank_mu

        self.sigma *= math.exp(min(1.0, (par.cs / par.damps) * (ps_norm / par.chi_n - 1)))
        self._decompose()
        return order

    def _decompose(self) -> None:
        self.C = np.triu(self.C) + np.triu(self.C, 1).T
        eigvals, self.B = np.linalg.eigh(self.C)
        eigvals = np.maximum(eigvals, 1e-300)
        self.D = np.sqrt(eigvals)

    def collapsed(self) -> bool:
        return self.sigma * float(self.D.max()) < SIGMA_COLLAPSE


# ---------------------------------------------------------------------------
# Driver
# ---------------------------------------------------------------------------
def _finite_or_worst(values: Sequence[float], generation: int) -> np.ndarray:
    out = np.empty(len(values))
    for i, v in enumerate(values):
        v = float(v)
        if not math.isfinite(v):
            log_warning("cmaes", f"generation {generation}: candidate {i} returned {v}; ranked worst")
            v = math.inf
        out[i] = v
    return out


def _evaluate(objective: Objective, points: np.ndarray, workers: int) -> list[float]:
    if workers <= 1 or len(points) == 1:
        return [objective(p.copy()) for p in points]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(lambda p: objective(p.copy()), points))


def cmaes_minimize(
    objective: Objective,
    cfg: CmaConfig,
    *,
    workers: int = 1,
    on_generation: Optional[Callable[[GenerationRecord], None]] = None,
) -> CmaResult:
    """
    Minimize `objective` and return the best point ever evaluated.

    A non-finite objective value ranks the candidate worst in its
    generation. Same config and deterministic objective give the same result.
    """
    es = CmaEvolutionStrategy(cfg)
    start = es.clip(es.mean.copy())
    f0 = float(_finite_or_worst([objective(start.copy())], 0)[0])
    best_point, best_fitness = start, f0
    used = 1
    result = CmaResult(best_point=best_point, best_fitness=best_fitness, evaluations_used=used, initial_fitness=f0)

    reason = "max_evaluations"
    while True:
        if best_fitness <= cfg.target_fitness:
            reason = "target_fitness"
            break
        if es.collapsed():
            reason = "sigma_collapse"
            break
        if used + es.params.lam > cfg.max_evaluations:
            reason = "max_evaluations"
            break
        candidates = es.ask()
        fitness = _finite_or_worst(_evaluate(objective, candidates, workers), es.generation + 1)
        used += len(candidates)
        order = es.tell(candidates, fitness)
        top = int(order[0])
        if fitness[top] < best_fitness:
            best_fitness = float(fitness[top])
            best_point = candidates[top].copy()
        finite = fitness[np.isfinite(fitness)]
        record = GenerationRecord(
            generation=es.generation,
            best_fitness=best_fitness,
            mean_fitness=float(finite.mean()) if finite.size else math.inf,
            sigma=es.sigma,
            ranking=tuple(int(i) for i in order),
        )
        result.generations.append(record)
        log_debug("cmaes", f"gen {record.generation} best={best_fitness:.6g} sigma={es.sigma:.3g}")
        if on_generation is not None:
            on_generation(record)

    result.best_point = np.asarray(best_point, dtype=np.float64)
    result.best_fitness = best_fitness
    result.evaluations_used = used
    result.stop_reason = reason
    return result
