"""
SemanticKITTI voxel files.

`*.label` holds one unsigned 16-bit little-endian raw label per voxel; `*.invalid`,
`*.bin` and `*.occluded` hold one MSB-first bit per voxel. Voxel (x, y, z) has linear
index x * (Y * Z) + y * Z + z.
"""

import logging
from pathlib import Path
from typing import Optional, Union

import numpy as np
import yaml
from pydantic import ValidationError

from voxrefine.voxio.bits import pack_bits, unpack_bits
from voxrefine.voxio.models import SEMKITTI_DIMS, FormatError, LabelRemap, LabelRemapError, SemGrid

logger = logging.getLogger(__name__)

VOXEL_COUNT = SEMKITTI_DIMS[0] * SEMKITTI_DIMS[1] * SEMKITTI_DIMS[2]
LABEL_BYTES = VOXEL_COUNT * 2
MASK_BYTES = VOXEL_COUNT // 8


def read_semkitti_voxels(label_bytes: bytes, invalid_bytes: bytes, remap: LabelRemap) -> SemGrid:
    """Decode a `.label` / `.invalid` pair into a grid of training classes."""
    if len(label_bytes) != LABEL_BYTES:
        raise FormatError(f"label buffer must hold {LABEL_BYTES} bytes, got {len(label_bytes)}")
    if len(invalid_bytes) != MASK_BYTES:
        raise FormatError(f"invalid buffer must hold {MASK_BYTES} bytes, got {len(invalid_bytes)}")

    raw = np.frombuffer(label_bytes, dtype="<u2").astype(np.int64)
    table = remap.lookup_table()
    labels = table[raw]
    unmapped = labels < 0
    if unmapped.any():
        bad = int(raw[np.argmax(unmapped)])
        raise LabelRemapError(f"raw label {bad} has no entry in the remap table")

    invalid = unpack_bits(invalid_bytes, VOXEL_COUNT)
    return SemGrid(labels.reshape(SEMKITTI_DIMS), ~invalid.reshape(SEMKITTI_DIMS))


def write_semkitti_voxels(grid: SemGrid) -> tuple[bytes, bytes]:
    """Encode a grid as (`.label` bytes, `.invalid` bytes)."""
    if grid.dims != SEMKITTI_DIMS:
        raise FormatError(f"SemanticKITTI grids are {SEMKITTI_DIMS}, got {grid.dims}")
    if grid.max_label > 0xFFFF:
        raise FormatError(f"label {grid.max_label} does not fit unsigned 16-bit")
    label_bytes = grid.labels.reshape(-1).astype("<u2").tobytes()
    return label_bytes, pack_bits(~grid.valid.reshape(-1))


def read_semkitti_files(
    label_path: Union[str, Path],
    invalid_path: Optional[Union[str, Path]],
    remap: LabelRemap,
    occluded_path: Optional[Union[str, Path]] = None,
) -> SemGrid:
    """Read a scene from disk; without an `.invalid` file (prediction files) every voxel counts as known."""
    if occluded_path is not None:
        # evaluation masks known space with the invalid mask only
        logger.debug(f"Ignoring occlusion mask {occluded_path}")
    invalid_bytes = Path(invalid_path).read_bytes() if invalid_path is not None else bytes(MASK_BYTES)
    return read_semkitti_voxels(Path(label_path).read_bytes(), invalid_bytes, remap)


def load_remap(path: Union[str, Path]) -> LabelRemap:
    """
    Load a raw -> class table from JSON, or from the benchmark's YAML config (`.yaml`, `.yml`)
    of which only `learning_map` is used.
    """
    path = Path(path)
    if path.suffix.lower() not in (".yaml", ".yml"):
        return LabelRemap.model_validate_json(path.read_text())
    try:
        document = yaml.safe_load(path.read_text())
    except yaml.YAMLError as e:
        raise LabelRemapError(f"{path} is not valid YAML: {e}") from e
    if not isinstance(document, dict) or "learning_map" not in document:
        raise LabelRemapError(f"{path} has no learning_map section")
    try:
        return LabelRemap(learning_map=document["learning_map"])
    except ValidationError as e:
        raise LabelRemapError(f"{path}: {e.error_count()} invalid learning_map entries") from e
