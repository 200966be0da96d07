"""
Desk-scale file formats: simple labelled grids and precomputed text embeddings.

Both start with an 8-byte magic and a little-endian u32 version; all integers are
little-endian u32, reals little-endian float64.
"""

import struct
from pathlib import Path
from typing import Union

import numpy as np

from voxrefine.voxio.bits import pack_bits, unpack_bits
from voxrefine.voxio.models import FormatError, SemGrid, TextEmbedding

GRID_MAGIC = b"ESSCGRID"
TEXT_MAGIC = b"ESSCTEXT"
FORMAT_VERSION = 1

_GRID_HEADER = struct.Struct("<8s5I")
_TEXT_HEADER = struct.Struct("<8s4I")


def write_grid_simple(grid: SemGrid, max_class: int) -> bytes:
    if max_class < grid.max_label:
        raise FormatError(f"max class {max_class} is below the largest label {grid.max_label}")
    if max_class > 0xFFFF:
        raise FormatError(f"max class {max_class} does not fit unsigned 16-bit labels")
    x, y, z = grid.dims
    header = _GRID_HEADER.pack(GRID_MAGIC, FORMAT_VERSION, x, y, z, max_class)
    return header + grid.labels.reshape(-1).astype("<u2").tobytes() + pack_bits(grid.valid.reshape(-1))


def read_grid_simple(data: bytes) -> tuple[SemGrid, int]:
    """Decode a simple grid file; returns the grid and its declared largest class index."""
    if len(data) < _GRID_HEADER.size:
        raise FormatError("grid file is shorter than its header")
    magic, version, x, y, z, max_class = _GRID_HEADER.unpack_from(data)
    if magic != GRID_MAGIC:
        raise FormatError(f"bad grid magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported grid version {version}")
    if min(x, y, z) < 1:
        raise FormatError(f"grid dims must be positive, got {(x, y, z)}")
    count = x * y * z
    label_end = _GRID_HEADER.size + 2 * count
    expected = label_end + (count + 7) // 8
    if len(data) != expected:
        raise FormatError(f"grid payload must be {expected} bytes, got {len(data)}")
    labels = np.frombuffer(data[_GRID_HEADER.size:label_end], dtype="<u2").astype(np.int64)
    if labels.size and labels.max() > max_class:
        raise FormatError(f"label {int(labels.max())} exceeds declared max class {max_class}")
    valid = unpack_bits(data[label_end:], count)
    return SemGrid(labels.reshape(x, y, z), valid.reshape(x, y, z)), max_class


def write_text_embedding(text: TextEmbedding) -> bytes:
    header = _TEXT_HEADER.pack(TEXT_MAGIC, FORMAT_VERSION, text.global_dim, text.token_count, text.token_dim)
    return header + text.global_vector.astype("<f8").tobytes() + text.tokens.reshape(-1).astype("<f8").tobytes()


def read_text_embedding(data: bytes) -> TextEmbedding:
    if len(data) < _TEXT_HEADER.size:
        raise FormatError("text embedding file is shorter than its header")
    magic, version, global_dim, token_count, token_dim = _TEXT_HEADER.unpack_from(data)
    if magic != TEXT_MAGIC:
        raise FormatError(f"bad text embedding magic {magic!r}")
    if version != FORMAT_VERSION:
        raise FormatError(f"unsupported text embedding version {version}")
    global_end = _TEXT_HEADER.size + 8 * global_dim
    expected = global_end + 8 * token_count * token_dim
    if len(data) < expected:
        raise FormatError(f"truncated text embedding: need {expected} bytes, got {len(data)}")
    if len(data) > expected:
        raise FormatError(f"text embedding has {len(data) - expected} trailing bytes")
    global_vector = np.frombuffer(data[_TEXT_HEADER.size:global_end], dtype="<f8")
    tokens = np.frombuffer(data[global_end:expected], dtype="<f8").reshape(token_count, token_dim)
    return TextEmbedding(global_vector.astype(np.float64), tokens.astype(np.float64))


def load_grid(path: Union[str, Path]) -> tuple[SemGrid, int]:
    return read_grid_simple(Path(path).read_bytes())


def save_grid(path: Union[str, Path], grid: SemGrid, max_class: int) -> None:
    Path(path).write_bytes(write_grid_simple(grid, max_class))


def load_text(path: Union[str, Path]) -> TextEmbedding:
    return read_text_embedding(Path(path).read_bytes())


def save_text(path: Union[str, Path], text: TextEmbedding) -> None:
    Path(path).write_bytes(write_text_embedding(text))
