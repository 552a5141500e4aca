"""
From-scratch numpy U-Net: layers, network, checkpoints.
"""

from .checkpoint import Checkpoint, load_checkpoint, save_checkpoint
from .unet import (
    ArchSpec,
    ForwardCache,
    NetworkParams,
    backward,
    forward,
    he_init,
    output_geometry,
    predict_image,
    valid_input_size,
)

__all__ = [
    "ArchSpec",
    "Checkpoint",
    "ForwardCache",
    "NetworkParams",
    "backward",
    "forward",
    "he_init",
    "load_checkpoint",
    "output_geometry",
    "predict_image",
    "save_checkpoint",
    "valid_input_size",
]
