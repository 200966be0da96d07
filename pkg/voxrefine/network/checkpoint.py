"""
Weight checkpoint codec.

Layout (little endian):
    magic "ESSCWGT" | u32 version | 32-byte config digest | u32 tensor count
    per tensor: u32 name length | utf-8 name | u32 rank | rank x u32 extents | float64 data
"""

from __future__ import annotations

import hashlib
import logging
import struct
from pathlib import Path
from typing import Union

import numpy as np

from voxrefine.network.config import RefineConfig
from voxrefine.network.models import ConfigMismatchError
from voxrefine.network.unet import RefineWeights, build_weights
from voxrefine.voxio import FormatError

logger = logging.getLogger(__name__)

CHECKPOINT_MAGIC = b"ESSCWGT"
CHECKPOINT_VERSION = 1
DIGEST_BYTES = 32

_U32 = struct.Struct("<I")


def encode_checkpoint(weights: RefineWeights) -> bytes:
    parts = [CHECKPOINT_MAGIC, _U32.pack(CHECKPOINT_VERSION), weights.cfg.digest(), _U32.pack(len(weights.store))]
    for name, tensor in weights.store:
        encoded = name.encode("utf-8")
        parts.append(_U32.pack(len(encoded)))
        parts.append(encoded)
        parts.append(_U32.pack(tensor.ndim))
        parts.extend(_U32.pack(extent) for extent in tensor.shape)
        parts.append(tensor.data.astype("<f8").tobytes())
    return b"".join(parts)


class _Reader:
    def __init__(self, data: bytes):
        self.data = data
        self.offset = 0

    def take(self, count: int, what: str) -> bytes:
        end = self.offset + count
        if end > len(self.data):
            raise FormatError(f"checkpoint truncated while reading {what} at byte {self.offset}")
        chunk = self.data[self.offset:end]
        self.offset = end
        return chunk

    def u32(self, what: str) -> int:
        return _U32.unpack(self.take(4, what))[0]


def decode_checkpoint(data: bytes) -> tuple[bytes, dict[str, np.ndarray]]:
    """Parse a checkpoint into its config digest and named arrays (in file order)."""
    reader = _Reader(data)
    if reader.take(len(CHECKPOINT_MAGIC), "magic") != CHECKPOINT_MAGIC:
        raise FormatError("not a weight checkpoint (bad magic)")
    version = reader.u32("version")
    if version != CHECKPOINT_VERSION:
        raise FormatError(f"unsupported checkpoint version {version}")
    digest = reader.take(DIGEST_BYTES, "config digest")
    count = reader.u32("tensor count")

    arrays: dict[str, np.ndarray] = {}
    for _ in range(count):
        name = reader.take(reader.u32("name length"), "tensor name").decode("utf-8")
        rank = reader.u32(f"rank of {name}")
        shape = tuple(reader.u32(f"extent of {name}") for _ in range(rank))
        size = int(np.prod(shape, dtype=np.int64))
        raw = reader.take(8 * size, f"data of {name}")
        arrays[name] = np.frombuffer(raw, dtype="<f8").astype(np.float64).reshape(shape)
    if reader.offset != len(data):
        raise FormatError(f"{len(data) - reader.offset} trailing bytes after the last tensor")
    return digest, arrays


def load_weights(data: bytes, cfg: RefineConfig) -> RefineWeights:
    """Rebuild the architecture for `cfg` and fill it from checkpoint bytes."""
    digest, arrays = decode_checkpoint(data)
    if digest != cfg.digest():
        raise ConfigMismatchError(
            f"checkpoint was written for config {digest.hex()[:12]}, current config is {cfg.digest().hex()[:12]}"
        )
    weights = build_weights(cfg)
    weights.store.load(arrays)
    return weights


def save_checkpoint(path: Union[str, Path], weights: RefineWeights) -> str:
    """Write the checkpoint and return the SHA-256 hex digest of its bytes."""
    data = encode_checkpoint(weights)
    Path(path).write_bytes(data)
    logger.info(f"Wrote checkpoint {path} ({len(data)} bytes)")
    return hashlib.sha256(data).hexdigest()


def load_checkpoint(path: Union[str, Path], cfg: RefineConfig) -> RefineWeights:
    return load_weights(Path(path).read_bytes(), cfg)
