"""
Versioned binary checkpoint container.

Layout (all integers little-endian):
  magic       8 bytes   b"RSEGCKPT"
  version     uint16
  header_len  uint32
  header      header_len bytes of UTF-8 JSON:
                {"arch": {...}, "metadata": {...},
                 "tensors": [{"name", "group", "dtype", "shape", "offset", "nbytes"}]}
  payload     raw little-endian tensor bytes; `offset` counts from the
              start of the payload

`group` is "params" or "velocity"; velocity tensors are present only when
the checkpoint can resume training. See help/CHECKPOINT_FORMAT.md.
"""

from __future__ import annotations

import json
import os
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .unet import ArchSpec, NetworkParams, param_shapes

MAGIC = b"RSEGCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sHI")
_DTYPES = {"float32": "<f4", "float64": "<f8"}


@dataclass
class Checkpoint:
    params: NetworkParams
    metadata: dict = field(default_factory=dict)
    velocities: Optional[dict[str, np.ndarray]] = None


def save_checkpoint(
    path: Path,
    params: NetworkParams,
    metadata: Optional[dict] = None,
    velocities: Optional[dict[str, np.ndarray]] = None,
) -> None:
    """Write atomically (temp file + rename) so a crash never leaves half a file."""
    entries = []
    chunks = []
    offset = 0
    groups = [("params", params.tensors)]
    if velocities is not None:
        groups.append(("velocity", velocities))
    for group, tensors in groups:
        for name in params.keys():
            arr = np.asarray(tensors[name])
            dtype = str(arr.dtype)
            if dtype not in _DTYPES:
                raise ValueError(f"unsupported tensor dtype {dtype} for {name}")
            data = np.ascontiguousarray(arr, dtype=_DTYPES[dtype]).tobytes()
            entries.append(
                {
                    "name": name,
                    "group": group,
                    "dtype": dtype,
                    "shape": list(arr.shape),
                    "offset": offset,
                    "nbytes": len(data),
                }
            )
            chunks.append(data)
            offset += len(data)
    header = json.dumps(
        {"arch": params.arch.to_dict(), "metadata": metadata or {}, "tensors": entries},
        sort_keys=True,
    ).encode("utf-8")

    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    with tmp.open("wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, len(header)))
        f.write(header)
        for chunk in chunks:
            f.write(chunk)
    os.replace(tmp, path)


def load_checkpoint(path: Path) -> Checkpoint:
    if not path.exists():
        raise FileNotFoundError(f"Missing checkpoint: {path}")
    raw = path.read_bytes()
    if len(raw) < _PREFIX.size:
        raise ValueError(f"{path}: truncated checkpoint")
    magic, version, header_len = _PREFIX.unpack_from(raw, 0)
    if magic != MAGIC:
        raise ValueError(f"{path}: not a rootseg checkpoint")
    if version != FORMAT_VERSION:
        raise ValueError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    try:
        header = json.loads(raw[start : start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ValueError(f"{path}: corrupt checkpoint header ({exc})") from None
    payload = memoryview(raw)[start + header_len :]

    arch = ArchSpec.from_dict(header["arch"])
    arch.validate()
    expected = param_shapes(arch)
    groups: dict[str, dict[str, np.ndarray]] = {"params": {}, "velocity": {}}
    for entry in header["tensors"]:
        end = entry["offset"] + entry["nbytes"]
        if end > len(payload):
            raise ValueError(f"{path}: truncated tensor {entry['name']}")
        arr = np.frombuffer(payload[entry["offset"] : end], dtype=_DTYPES[entry["dtype"]])
        arr = arr.reshape(entry["shape"]).astype(entry["dtype"])
        groups[entry["group"]][entry["name"]] = arr

    for name, shape in expected.items():
        got = groups["params"].get(name)
        if got is None or got.shape != shape:
            raise ValueError(f"{path}: tensor {name} missing or has the wrong shape")
    params = NetworkParams(arch, {name: groups["params"][name] for name in expected})
    velocities = groups["velocity"] or None
    return Checkpoint(params=params, metadata=dict(header.get("metadata") or {}), velocities=velocities)
