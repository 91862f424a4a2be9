"""Binary model files.

Layout (all integers little-endian)::

    b"ATCN"                       magic
    u32   format version (1)
    u32   config length, then UTF-8 JSON {"target": ..., "config": {...}}
    u32   tensor count
    per tensor:
      u32 name length, UTF-8 name, u32 rank, u32 dims[rank],
      float32 payload (row-major)
    u64   checksum: BLAKE2b-64 of every preceding byte
"""
from __future__ import annotations

import hashlib
import json
import os
import struct
from pathlib import Path

import numpy as np

from .errors import ChecksumError, ModelFormatError
from .model import ArchConfig, AtcnnModel, parameter_shapes
from .numerics import Tensor

MAGIC = b"ATCN"
FORMAT_VERSION = 1


def _checksum(payload: bytes) -> int:
    return int.from_bytes(hashlib.blake2b(payload, digest_size=8).digest(), "little")


def model_to_bytes(model: AtcnnModel) -> bytes:
    header = json.dumps({"target": model.target, "config": model.config.to_dict()},
                        sort_keys=True).encode("utf-8")
    parts = [MAGIC, struct.pack("<I", FORMAT_VERSION), struct.pack("<I", len(header)), header,
             struct.pack("<I", len(model.params))]
    for name, t in model.params.items():
        raw = name.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)) + raw)
        parts.append(struct.pack(f"<I{t.ndim}I", t.ndim, *t.shape))
        parts.append(np.ascontiguousarray(t.data, dtype="<f4").tobytes())
    body = b"".join(parts)
    return body + struct.pack("<Q", _checksum(body))


class _Reader:
    def __init__(self, buf: bytes):
        self.buf, self.pos = buf, 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise ModelFormatError("model file is truncated")
        out = self.buf[self.pos:self.pos + n]
        self.pos += n
        return out

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]


def model_from_bytes(buf: bytes) -> AtcnnModel:
    if len(buf) < 8 + len(MAGIC) or buf[:4] != MAGIC:
        raise ModelFormatError("not an ATCN model file (bad magic)")
    body, tail = buf[:-8], buf[-8:]
    r = _Reader(body)
    if struct.unpack("<Q", tail)[0] != _checksum(body):
        raise ChecksumError("model file checksum mismatch")
    r.take(4)
    version = r.u32()
    if version != FORMAT_VERSION:
        raise ModelFormatError(f"unsupported model format version {version} (expected {FORMAT_VERSION})")
    header = json.loads(r.take(r.u32()).decode("utf-8"))
    config = ArchConfig.from_dict(header["config"])
    expected = parameter_shapes(config)
    dtype = np.dtype(config.dtype)
    params = {}
    for _ in range(r.u32()):
        name = r.take(r.u32()).decode("utf-8")
        rank = r.u32()
        shape = tuple(r.u32() for _ in range(rank))
        count = int(np.prod(shape)) if shape else 1
        data = np.frombuffer(r.take(4 * count), dtype="<f4").reshape(shape).astype(dtype)
        params[name] = Tensor(data, requires_grad=True, name=name)
    if r.pos != len(body):
        raise ModelFormatError("trailing bytes after last tensor")
    got = {k: v.shape for k, v in params.items()}
    if got != expected:
        raise ModelFormatError(f"tensor set does not match config: {got} vs {expected}")
    return AtcnnModel(config, header["target"], params)


def save_model(model: AtcnnModel, path) -> Path:
    path = Path(path)
    tmp = path.with_suffix(path.suffix + ".tmp")
    tmp.write_bytes(model_to_bytes(model))
    os.replace(tmp, path)
    return path


def load_model(path) -> AtcnnModel:
    return model_from_bytes(Path(path).read_bytes())
