"""Flat binary parameter files ("TNSR").

Layout, all little-endian:

    magic   4 bytes  b"TNSR"
    version u32      currently 1
    count   u32      number of tensors
    per tensor:
        name_len u16, name bytes (utf-8)
        rank     u8
        extents  u32 * rank
        payload  float32 * prod(extents), row-major

Payloads are always 32-bit on disk; callers choose the in-memory dtype on
load.  Round-trips of float32 data are bit-identical.
"""

from __future__ import annotations

import struct
from typing import Mapping

import numpy as np

from .errors import DataFormatError
from .tensor import Tensor

MAGIC = b"TNSR"
VERSION = 1


def save_params(path, params: Mapping[str, Tensor]) -> None:
    """Write named parameters in insertion order."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<II", VERSION, len(params)))
        for name, tensor in params.items():
            encoded = name.encode("utf-8")
            if len(encoded) > 0xFFFF:
                raise ValueError(f"parameter name too long: {name!r}")
            arr = np.ascontiguousarray(tensor.data, dtype=np.float32)
            if arr.ndim > 0xFF:
                raise ValueError(f"rank {arr.ndim} exceeds format limit")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.astype("<f4", copy=False).tobytes())


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise DataFormatError(
                f"truncated file: expected {n} byte(s) for {what}, "
                f"{len(self.blob) - self.pos} remain", offset=self.pos)
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk


def load_params(path, dtype=np.float32) -> dict[str, Tensor]:
    """Read a TNSR file back into named tensors (grads disabled)."""
    with open(path, "rb") as fh:
        blob = fh.read()
    r = _Reader(blob)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise DataFormatError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    version, count = struct.unpack("<II", r.take(8, "header"))
    if version != VERSION:
        raise DataFormatError(f"unsupported version {version}", offset=4)
    params: dict[str, Tensor] = {}
    for i in range(count):
        (name_len,) = struct.unpack("<H", r.take(2, "name length"))
        name = r.take(name_len, "name").decode("utf-8")
        (rank,) = struct.unpack("<B", r.take(1, "rank"))
        shape = struct.unpack(f"<{rank}I", r.take(4 * rank, "extents"))
        n = int(np.prod(shape, dtype=np.int64)) if rank else 1
        payload = r.take(4 * n, f"payload of {name!r}")
        arr = np.frombuffer(payload, dtype="<f4").reshape(shape).astype(dtype)
        if name in params:
            raise DataFormatError(f"duplicate tensor name {name!r}", offset=r.pos)
        params[name] = Tensor(arr, name=name)
    if r.pos != len(blob):
        raise DataFormatError(f"{len(blob) - r.pos} trailing byte(s) after last tensor",
                              offset=r.pos)
    return params
