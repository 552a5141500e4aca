"""
Training hyperparameters.
"""

from __future__ import annotations

from dataclasses import dataclass


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 4
    initial_lr: float = 0.01
    momentum: float = 0.99
    weight_decay: float = 1e-5
    lr_decay_factor: float = 0.3
    lr_decay_every: int = 30
    ce_weight: float = 0.3
    max_epochs: int = 60
    tiles_sampled_per_image: int = 90
    tiles_kept_per_image: int = 40
    validation_size: int = 9
    # Network input tile; 572 for the full-depth network, smaller at desk scale.
    tile_in: int = 188
    seed: int = 0

    def validate(self) -> None:
        positive = (
            "batch_size",
            "initial_lr",
            "lr_decay_factor",
            "lr_decay_every",
            "tiles_sampled_per_image",
            "tiles_kept_per_image",
            "validation_size",
            "tile_in",
        )
        for name in positive:
            if getattr(self, name) <= 0:
                raise ValueError(f"train.{name} must be > 0, got {getattr(self, name)}")
        if not 0 <= self.momentum < 1:
            raise ValueError(f"train.momentum must be in [0, 1), got {self.momentum}")
        if self.weight_decay < 0:
            raise ValueError(f"train.weight_decay must be >= 0, got {self.weight_decay}")
        if self.ce_weight < 0:
            raise ValueError(f"train.ce_weight must be >= 0, got {self.ce_weight}")
        if self.max_epochs < 0:
            raise ValueError(f"train.max_epochs must be >= 0, got {self.max_epochs}")
