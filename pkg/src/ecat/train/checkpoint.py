"""Checkpoint container: every parameter and buffer as raw float32.

Layout (little-endian):

    magic  4 bytes "ECKP"
    version u8
    digest  8 bytes (model config fingerprint)
    stage   u8     (1 = pretrain, 2 = full)
    epoch   u32
    count   u32    entries
    entry*  name_len u16, name utf-8, ndim u8, dims u32 x ndim, f32 data

Reloading reproduces bit-identical forward outputs.
"""

from __future__ import annotations

import struct
from pathlib import Path

import numpy as np

from ..nn.module import Module

__all__ = ["save_checkpoint", "load_checkpoint", "peek_checkpoint", "CheckpointError"]

MAGIC = b"ECKP"
VERSION = 1
_HEAD = struct.Struct("<4sB8sBII")


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, model: Module, stage: int, epoch: int) -> None:
    state = model.state_arrays()
    blob = bytearray(_HEAD.pack(MAGIC, VERSION, model.cfg.digest(), stage, epoch, len(state)))
    for name, arr in state.items():
        raw = name.encode("utf-8")
        arr32 = np.ascontiguousarray(arr, dtype=np.float32)
        blob += struct.pack("<H", len(raw))
        blob += raw
        blob += struct.pack("<B", arr32.ndim)
        blob += struct.pack(f"<{arr32.ndim}I", *arr32.shape)
        blob += arr32.tobytes()
    Path(path).write_bytes(bytes(blob))


def _parse(data: bytes):
    if len(data) < _HEAD.size:
        raise CheckpointError("checkpoint shorter than its header")
    magic, version, digest, stage, epoch, count = _HEAD.unpack_from(data)
    if magic != MAGIC:
        raise CheckpointError(f"bad checkpoint magic {magic!r}")
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    pos = _HEAD.size
    state: dict[str, np.ndarray] = {}
    for _ in range(count):
        (nlen,) = struct.unpack_from("<H", data, pos)
        pos += 2
        name = data[pos : pos + nlen].decode("utf-8")
        pos += nlen
        (ndim,) = struct.unpack_from("<B", data, pos)
        pos += 1
        shape = struct.unpack_from(f"<{ndim}I", data, pos)
        pos += 4 * ndim
        n = int(np.prod(shape)) if ndim else 1
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=pos).reshape(shape)
        pos += 4 * n
        state[name] = arr.copy()
    if pos != len(data):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return digest, stage, epoch, state


def load_checkpoint(path, model: Module) -> tuple[int, int]:
    """Restore parameters/buffers; returns (stage, epoch)."""
    digest, stage, epoch, state = _parse(Path(path).read_bytes())
    if digest != model.cfg.digest():
        raise CheckpointError("checkpoint was written for a different model config")
    model.load_state_arrays(state)
    return stage, epoch


def peek_checkpoint(path) -> tuple[bytes, int, int]:
    digest, stage, epoch, _ = _parse(Path(path).read_bytes())
    return digest, stage, epoch
