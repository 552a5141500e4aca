"""
SGD with Nesterov momentum and the step learning-rate schedule.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import MutableMapping

import numpy as np

from .config import TrainConfig

NO_DECAY_SUFFIXES = (".scale", ".shift")


@dataclass
class OptimizerState:
    velocities: dict[str, np.ndarray] = field(default_factory=dict)
    epoch: int = 0

    @classmethod
    def zeros_like(cls, tensors: MutableMapping[str, np.ndarray]) -> "OptimizerState":
        return cls({k: np.zeros_like(v) for k, v in tensors.items()})


def decays(name: str) -> bool:
    """Normalization scale/shift are exempt from weight decay."""
    return not name.endswith(NO_DECAY_SUFFIXES)


def sgd_nesterov_step(
    params: MutableMapping[str, np.ndarray],
    grads: MutableMapping[str, np.ndarray],
    state: OptimizerState,
    lr: float,
    momentum: float,
    weight_decay: float,
) -> tuple[MutableMapping[str, np.ndarray], OptimizerState]:
    """
    In-place Nesterov update, look-ahead form:
      g = grad + wd * theta;  v = m * v - lr * g;  theta += m * v - lr * g
    """
    for name, grad in grads.items():
        if not np.all(np.isfinite(grad)):
            raise FloatingPointError(f"non-finite gradient for {name}")
    for name, theta in params.items():
        g = grads[name]
        if weight_decay and decays(name):
            g = g + weight_decay * theta
        v = state.velocities.get(name)
        if v is None:
            v = np.zeros_like(theta)
        v = momentum * v - lr * g
        state.velocities[name] = v.astype(theta.dtype, copy=False)
        theta += (momentum * v - lr * g).astype(theta.dtype, copy=False)
    return params, state


def lr_at(epoch: int, cfg: TrainConfig) -> float:
    if epoch < 0:
        raise ValueError(f"epoch must be >= 0, got {epoch}")
    return cfg.initial_lr * cfg.lr_decay_factor ** math.floor(epoch / cfg.lr_decay_every)
