"""
Minimal U-Net with valid convolutions, written directly in numpy.

Structure (depth d, level i has base_channels * 2**i channels):
  - levels 0 .. d-2 (down): [conv3x3 -> ReLU -> GroupNorm] x 2, keep as
    skip, 2x2 max-pool
  - level d-1 (bottom): [conv3x3 -> ReLU -> GroupNorm] x 2
  - levels d-2 .. 0 (up): 2x2 stride-2 transposed conv, concatenate the
    center-cropped skip, [conv3x3 -> ReLU -> GroupNorm] x 2
  - head: 1x1 conv to one channel, logistic

Parameter keys follow the layer path, e.g. `down0.conv1.w`, `up1.gn2.scale`,
`head.b`.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Optional

import numpy as np

from ..augment import normalize
from ..config import DEFAULT_TILE_IN
from ..imagecore import (
    RasterImage,
    TileSpec,
    assemble,
    extend_to_min_size,
    extract_tile,
    mirror_pad,
    plan_tile_grid,
    tile_batches,
)
from . import layers as L


@dataclass(frozen=True)
class ArchSpec:
    depth: int = 3
    base_channels: int = 8
    in_channels: int = 3
    out_channels: int = 1
    norm_groups: int = 4

    def channels(self, level: int) -> int:
        return self.base_channels * (2**level)

    def validate(self) -> None:
        if self.depth < 1:
            raise ValueError(f"depth must be >= 1, got {self.depth}")
        if self.base_channels < 1 or self.in_channels < 1:
            raise ValueError("base_channels and in_channels must be >= 1")
        if self.out_channels != 1:
            raise ValueError(f"only a single output channel is supported, got {self.out_channels}")
        if self.norm_groups < 1:
            raise ValueError(f"norm_groups must be >= 1, got {self.norm_groups}")
        for level in range(self.depth):
            if self.channels(level) % self.norm_groups:
                raise ValueError(
                    f"norm_groups {self.norm_groups} does not divide {self.channels(level)} "
                    f"channels at level {level}"
                )

    def to_dict(self) -> dict[str, int]:
        return {
            "depth": self.depth,
            "base_channels": self.base_channels,
            "in_channels": self.in_channels,
            "out_channels": self.out_channels,
            "norm_groups": self.norm_groups,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ArchSpec":
        return cls(**{k: int(data[k]) for k in cls().to_dict()})


@dataclass
class NetworkParams:
    arch: ArchSpec
    tensors: dict[str, np.ndarray]

    def __getitem__(self, key: str) -> np.ndarray:
        return self.tensors[key]

    def keys(self) -> list[str]:
        return list(self.tensors)

    def copy(self) -> "NetworkParams":
        return NetworkParams(self.arch, {k: v.copy() for k, v in self.tensors.items()})

    def astype(self, dtype: Any) -> "NetworkParams":
        return NetworkParams(self.arch, {k: v.astype(dtype) for k, v in self.tensors.items()})

    def all_finite(self) -> bool:
        return all(np.all(np.isfinite(v)) for v in self.tensors.values())


@dataclass
class ForwardCache:
    entries: dict[str, Any] = field(default_factory=dict)
    input_shape: tuple[int, ...] = ()


# ---------------------------------------------------------------------------
# Geometry
# ---------------------------------------------------------------------------
def output_geometry(arch: ArchSpec, input_size: int) -> int:
    """
    Output side length for a square input, following the valid-convolution
    recurrence. Raises naming the level where the size breaks.
    """
    size = input_size
    for level in range(arch.depth - 1):
        if size <= 4:
            raise ValueError(f"input {input_size}: size {size} too small at down level {level}")
        size -= 4
        if size % 2:
            raise ValueError(f"input {input_size}: odd size {size} before pooling at down level {level}")
        size //= 2
    if size <= 4:
        raise ValueError(f"input {input_size}: size {size} too small at bottom level {arch.depth - 1}")
    size -= 4
    for level in range(arch.depth - 2, -1, -1):
        size = size * 2 - 4
        if size <= 0:
            raise ValueError(f"input {input_size}: non-positive size at up level {level}")
    return size


def valid_input_size(arch: ArchSpec, near: int) -> int:
    """Smallest valid input size >= `near`."""
    size = max(near, 5)
    while True:
        try:
            output_geometry(arch, size)
            return size
        except ValueError:
            size += 1


# ---------------------------------------------------------------------------
# Initialization
# ---------------------------------------------------------------------------
def _conv_block_shapes(prefix: str, c_in: int, c_out: int) -> dict[str, tuple[int, ...]]:
    return {
        f"{prefix}.conv1.w": (c_out, c_in, 3, 3),
        f"{prefix}.conv1.b": (c_out,),
        f"{prefix}.gn1.scale": (c_out,),
        f"{prefix}.gn1.shift": (c_out,),
        f"{prefix}.conv2.w": (c_out, c_out, 3, 3),
        f"{prefix}.conv2.b": (c_out,),
        f"{prefix}.gn2.scale": (c_out,),
        f"{prefix}.gn2.shift": (c_out,),
    }


def param_shapes(arch: ArchSpec) -> dict[str, tuple[int, ...]]:
    shapes: dict[str, tuple[int, ...]] = {}
    c_in = arch.in_channels
    for level in range(arch.depth):
        shapes.update(_conv_block_shapes(f"down{level}", c_in, arch.channels(level)))
        c_in = arch.channels(level)
    for level in range(arch.depth - 2, -1, -1):
        c = arch.channels(level)
        shapes[f"up{level}.upconv.w"] = (arch.channels(level + 1), c, 2, 2)
        shapes[f"up{level}.upconv.b"] = (c,)
        shapes.update(_conv_block_shapes(f"up{level}", 2 * c, c))
    shapes["head.w"] = (arch.out_channels, arch.channels(0), 1, 1)
    shapes["head.b"] = (arch.out_channels,)
    return shapes


def fan_in(key: str, shape: tuple[int, ...]) -> int:
    if ".upconv." in key:
        return shape[0]
    return int(np.prod(shape[1:]))


def he_init(arch: ArchSpec, seed: int, dtype: Any = np.float32) -> NetworkParams:
    """Kernels ~ Normal(0, 2 / fan_in); biases and shifts 0; scales 1."""
    arch.validate()
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for key, shape in param_shapes(arch).items():
        if key.endswith(".w"):
            std = np.sqrt(2.0 / fan_in(key, shape))
            tensors[key] = (rng.standard_normal(shape) * std).astype(dtype)
        elif key.endswith(".scale"):
            tensors[key] = np.ones(shape, dtype=dtype)
        else:
            tensors[key] = np.zeros(shape, dtype=dtype)
    return NetworkParams(arch, tensors)


# ---------------------------------------------------------------------------
# Forward / backward
# ---------------------------------------------------------------------------
def _as_batch(tile: np.ndarray) -> tuple[np.ndarray, bool]:
    if tile.ndim == 3:
        return np.ascontiguousarray(tile.transpose(2, 0, 1)[None]), True
    if tile.ndim == 4:
        return tile, False
    raise ValueError(f"expected an (H, W, C) tile or (N, C, H, W) batch, got shape {tile.shape}")


def _block_forward(p: NetworkParams, prefix: str, x: np.ndarray, cache: dict) -> np.ndarray:
    groups = p.arch.norm_groups
    for i in (1, 2):
        x, c_conv = L.conv3x3_forward(x, p[f"{prefix}.conv{i}.w"], p[f"{prefix}.conv{i}.b"])
        x, c_relu = L.relu_forward(x)
        x, c_gn = L.group_norm_forward(x, groups, p[f"{prefix}.gn{i}.scale"], p[f"{prefix}.gn{i}.shift"])
        cache[f"{prefix}.{i}"] = (c_conv, c_relu, c_gn)
    return x


def _block_backward(prefix: str, dout: np.ndarray, cache: dict, grads: dict) -> np.ndarray:
    for i in (2, 1):
        c_conv, c_relu, c_gn = cache[f"{prefix}.{i}"]
        dout, grads[f"{prefix}.gn{i}.scale"], grads[f"{prefix}.gn{i}.shift"] = L.group_norm_backward(dout, c_gn)
        dout = L.relu_backward(dout, c_relu)
        dout, grads[f"{prefix}.conv{i}.w"], grads[f"{prefix}.conv{i}.b"] = L.conv3x3_backward(dout, c_conv)
    return dout


def forward(
    params: NetworkParams,
    tile: np.ndarray,
    training: bool = False,
) -> tuple[np.ndarray, Optional[ForwardCache]]:
    """
    Root probabilities for a normalized tile.

    Accepts an (H, W, C) tile, returning (H', W'), or an (N, C, H, W) batch,
    returning (N, H', W'). The cache is returned only in training mode.
    """
    arch = params.arch
    x, single = _as_batch(np.asarray(tile))
    if x.shape[1] != arch.in_channels:
        raise ValueError(f"expected {arch.in_channels} input channels, got {x.shape[1]}")
    if x.shape[2] != x.shape[3]:
        raise ValueError(f"tiles must be square, got {x.shape[2]}x{x.shape[3]}")
    expected = output_geometry(arch, x.shape[2])
    x = x.astype(params["head.w"].dtype, copy=False)

    input_shape = x.shape
    store: dict[str, Any] = {}
    skips: list[np.ndarray] = []
    for level in range(arch.depth - 1):
        x = _block_forward(params, f"down{level}", x, store)
        skips.append(x)
        x, store[f"pool{level}"] = L.maxpool_forward(x)
    x = _block_forward(params, f"down{arch.depth - 1}", x, store)
    for level in range(arch.depth - 2, -1, -1):
        x, store[f"up{level}.upconv"] = L.upconv_forward(x, params[f"up{level}.upconv.w"], params[f"up{level}.upconv.b"])
        x, store[f"up{level}.concat"] = L.crop_concat_forward(skips[level], x)
        x = _block_forward(params, f"up{level}", x, store)
    logits, store["head"] = L.conv1x1_forward(x, params["head.w"], params["head.b"])
    prob = L.sigmoid(logits)[:, 0]
    assert prob.shape[1] == expected

    out = prob[0] if single else prob
    if not training:
        return out, None
    store["prob"] = prob
    return out, ForwardCache(entries=store, input_shape=input_shape)


def backward(params: NetworkParams, cache: Optional[ForwardCache], upstream_grad: np.ndarray) -> dict[str, np.ndarray]:
    """Gradients of the loss w.r.t. every parameter, given dLoss/dprob."""
    if cache is None or "prob" not in cache.entries:
        raise RuntimeError("backward needs the cache of a training-mode forward pass")
    arch = params.arch
    store = cache.entries
    prob = store["prob"]
    dprob = np.asarray(upstream_grad, dtype=prob.dtype)
    if dprob.ndim == 2:
        dprob = dprob[None]
    if dprob.shape != prob.shape:
        raise ValueError(f"upstream gradient shape {dprob.shape} does not match output {prob.shape}")

    grads: dict[str, np.ndarray] = {}
    dlogits = (dprob * prob * (1.0 - prob))[:, None]
    dx, grads["head.w"], grads["head.b"] = L.conv1x1_backward(dlogits, store["head"])
    dskips: dict[int, np.ndarray] = {}
    # Up path runs level depth-2 .. 0, so unwind it from level 0.
    for level in range(0, arch.depth - 1):
        dx = _block_backward(f"up{level}", dx, store, grads)
        dskip, dx = L.crop_concat_backward(dx, store[f"up{level}.concat"])
        dskips[level] = dskip
        dx, grads[f"up{level}.upconv.w"], grads[f"up{level}.upconv.b"] = L.upconv_backward(dx, store[f"up{level}.upconv"])
    dx = _block_backward(f"down{arch.depth - 1}", dx, store, grads)
    for level in range(arch.depth - 2, -1, -1):
        dx = L.maxpool_backward(dx, store[f"pool{level}"])
        dx = dx + dskips[level]
        dx = _block_backward(f"down{level}", dx, store, grads)
    return {k: grads[k].astype(params[k].dtype, copy=False) for k in params.keys()}


# ---------------------------------------------------------------------------
# Whole-image inference
# ---------------------------------------------------------------------------
def predict_image(
    params: NetworkParams,
    image: RasterImage,
    *,
    in_size: int = DEFAULT_TILE_IN,
    batch_size: int = 4,
) -> RasterImage:
    """
    Probability map for a whole photo: mirror-pad, tile, forward, assemble.

    Images smaller than the output window are reflect-extended and the
    result cropped back.
    """
    out_size = output_geometry(params.arch, in_size)
    if image.ndim == 2:
        image = np.repeat(image[:, :, None], params.arch.in_channels, axis=2)
    height, width = image.shape[:2]
    work = extend_to_min_size(image, out_size)
    specs = plan_tile_grid(work.shape[0], work.shape[1], in_size, out_size)
    padded = mirror_pad(normalize(work), specs[0].margin)

    outputs: list[tuple[TileSpec, np.ndarray]] = []
    for chunk in tile_batches(specs, batch_size):
        batch = np.stack([extract_tile(padded, spec).transpose(2, 0, 1) for spec in chunk])
        prob, _ = forward(params, batch)
        outputs.extend(zip(chunk, prob))
    return assemble(outputs, shape=work.shape[:2])[:height, :width]

