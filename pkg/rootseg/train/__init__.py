"""
Training: instance selection, losses, optimizer, split and the epoch loop.
"""

from .config import TrainConfig
from .loop import EpochRecord, TrainingDiverged, TrainResult, image_level_f1, train_loop, validation_f1
from .split import SplitResult, split_dataset

__all__ = [
    "EpochRecord",
    "SplitResult",
    "TrainConfig",
    "TrainResult",
    "TrainingDiverged",
    "image_level_f1",
    "split_dataset",
    "train_loop",
    "validation_f1",
]
