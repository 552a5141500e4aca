"""
rootseg: root segmentation for rhizotron photos.

Two segmenters share one toolchain:
- a U-Net implemented in numpy, trained with Dice + cross-entropy
- a multiscale Frangi vesselness baseline tuned with CMA-ES
plus synthetic data, augmentation, and root-length analytics.
"""

from .config import __version__

__all__ = ["__version__"]
