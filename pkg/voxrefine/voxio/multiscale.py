"""
Coarse-scale supervision targets and grid padding.
"""

import numpy as np

from voxrefine.voxio.models import VoxIOError, SemGrid

SUPPORTED_FACTORS = (1, 2, 4, 8)


def _blocks(volume: np.ndarray, factor: int) -> np.ndarray:
    x, y, z = volume.shape
    f = factor
    blocks = volume.reshape(x // f, f, y // f, f, z // f, f).transpose(0, 2, 4, 1, 3, 5)
    return blocks.reshape(x // f, y // f, z // f, f ** 3)


def downsample_labels_majority(grid: SemGrid, factor: int) -> SemGrid:
    """
    Collapse every factor^3 block into one voxel.

    A block with valid non-empty children takes their majority class (ties go to the
    smaller class index); a block whose valid children are all empty becomes empty; a
    block without valid children stays invalid.
    """
    if factor not in SUPPORTED_FACTORS:
        raise VoxIOError(f"downsampling factor must be one of {SUPPORTED_FACTORS}, got {factor}")
    for axis, extent in zip("XYZ", grid.dims):
        if extent % factor:
            raise VoxIOError(f"{axis} extent {extent} is not divisible by {factor}")
    if factor == 1:
        return grid.copy()

    labels = _blocks(grid.labels, factor)
    valid = _blocks(grid.valid, factor)
    votes = valid & (labels != 0)
    num_labels = grid.max_label + 1
    nx, ny, nz, _ = labels.shape
    block_ids = np.broadcast_to(np.arange(nx * ny * nz).reshape(nx, ny, nz, 1), labels.shape)
    keys = block_ids[votes] * num_labels + labels[votes]
    tally = np.bincount(keys, minlength=nx * ny * nz * num_labels).reshape(nx, ny, nz, num_labels)
    has_vote = tally.sum(axis=-1) > 0
    out_labels = np.where(has_vote, tally.argmax(axis=-1), 0)
    return SemGrid(out_labels, valid.any(axis=-1))


def pad_grid(grid: SemGrid, multiple: int) -> SemGrid:
    """Pad every axis up to a multiple of `multiple` with invalid empty voxels."""
    pads = [(0, (-extent) % multiple) for extent in grid.dims]
    if not any(after for _, after in pads):
        return grid.copy()
    return SemGrid(np.pad(grid.labels, pads), np.pad(grid.valid, pads, constant_values=False))


def crop_grid(grid: SemGrid, dims: tuple[int, int, int]) -> SemGrid:
    x, y, z = dims
    return SemGrid(grid.labels[:x, :y, :z], grid.valid[:x, :y, :z])
