"""Versioned binary checkpoint container.

Layout, all integers little-endian:

    magic      8 bytes  b"FRAGCKPT"
    version    u32
    digest     32 bytes sha256 of the config JSON below
    config     u32 length + UTF-8 JSON (sorted keys)
    count      u32
    per array: u16 name length, name, u8 ndim, ndim x u32 shape,
               float32 little-endian data

Arrays are written sorted by name, so save -> load -> save is byte-identical.
"""

from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path
from typing import Mapping

import numpy as np
import torch

MAGIC = b"FRAGCKPT"
VERSION = 1


class CheckpointError(ValueError):
    pass


class CheckpointVersionError(CheckpointError):
    pass


def config_json(config: Mapping) -> str:
    return json.dumps(config, sort_keys=True, separators=(",", ":"))


def config_digest(config: Mapping) -> str:
    return hashlib.sha256(config_json(config).encode()).hexdigest()


def _as_array(value) -> np.ndarray:
    if isinstance(value, torch.Tensor):
        value = value.detach().cpu().numpy()
    return np.ascontiguousarray(np.asarray(value, dtype="<f4"))


def encode(config: Mapping, arrays: Mapping[str, object]) -> bytes:
    cfg = config_json(config).encode()
    parts = [MAGIC, struct.pack("<I", VERSION), hashlib.sha256(cfg).digest(), struct.pack("<I", len(cfg)), cfg]
    parts.append(struct.pack("<I", len(arrays)))
    for name in sorted(arrays):
        arr = _as_array(arrays[name])
        raw = name.encode()
        parts.append(struct.pack("<H", len(raw)) + raw)
        parts.append(struct.pack("<B", arr.ndim) + struct.pack(f"<{arr.ndim}I", *arr.shape))
        parts.append(arr.tobytes())
    return b"".join(parts)


def decode(data: bytes) -> tuple[dict, dict[str, np.ndarray]]:
    if data[:8] != MAGIC:
        raise CheckpointError("not a checkpoint file (bad magic)")
    (version,) = struct.unpack_from("<I", data, 8)
    if version != VERSION:
        raise CheckpointVersionError(f"checkpoint version {version}, expected {VERSION}")
    digest = data[12:44]
    (n_cfg,) = struct.unpack_from("<I", data, 44)
    pos = 48
    cfg = data[pos : pos + n_cfg]
    pos += n_cfg
    if hashlib.sha256(cfg).digest() != digest:
        raise CheckpointError("config digest mismatch")
    config = json.loads(cfg)
    (count,) = struct.unpack_from("<I", data, pos)
    pos += 4
    arrays = {}
    for _ in range(count):
        (n_name,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + n_name].decode()
        pos += n_name
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        size = int(np.prod(shape)) if ndim else 1
        arrays[name] = np.frombuffer(data, dtype="<f4", count=size, offset=pos).reshape(shape).copy()
        pos += 4 * size
    if pos != len(data):
        raise CheckpointError("trailing bytes after last array")
    return config, arrays


def save_checkpoint(path: str | Path, config: Mapping, arrays: Mapping[str, object]) -> None:
    path = Path(path)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_bytes(encode(config, arrays))
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    return decode(Path(path).read_bytes())


def module_arrays(module: torch.nn.Module, prefix: str = "") -> dict[str, torch.Tensor]:
    return {prefix + k: v for k, v in module.state_dict().items()}


def load_module(module: torch.nn.Module, arrays: Mapping[str, np.ndarray], prefix: str = "") -> None:
    state = {}
    for k, v in module.state_dict().items():
        key = prefix + k
        if key not in arrays:
            raise CheckpointError(f"missing array {key}")
        if tuple(arrays[key].shape) != tuple(v.shape):
            raise CheckpointError(f"shape mismatch for {key}: {arrays[key].shape} vs {tuple(v.shape)}")
        state[k] = torch.from_numpy(arrays[key]).to(v.dtype)
    module.load_state_dict(state)
