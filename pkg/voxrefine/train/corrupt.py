"""
Synthetic coarse predictions: seeded label noise applied to ground truth.
"""

from __future__ import annotations

import logging
from typing import Sequence, Union

import numpy as np

from voxrefine.train.models import BlobEraseNoise, CorruptionStats, DropoutNoise, NoiseSpec, SwapNoise
from voxrefine.voxio import SemGrid

logger = logging.getLogger(__name__)


def _swap(labels: np.ndarray, spec: SwapNoise, rng: np.random.Generator) -> np.ndarray:
    draw = rng.random(labels.shape)
    return np.where((labels == spec.source) & (draw < spec.prob), spec.target, labels)


def _dropout(labels: np.ndarray, spec: DropoutNoise, rng: np.random.Generator) -> np.ndarray:
    draw = rng.random(labels.shape)
    return np.where((labels != 0) & (draw < spec.prob), 0, labels)


def _blob_erase(labels: np.ndarray, spec: BlobEraseNoise, rng: np.random.Generator) -> np.ndarray:
    out = labels.copy()
    grid = np.indices(labels.shape)
    for _ in range(spec.count):
        centre = [rng.integers(0, extent) for extent in labels.shape]
        dist2 = sum((axis - c) ** 2 for axis, c in zip(grid, centre))
        out[dist2 <= spec.radius ** 2] = 0
    return out


_APPLY = {"swap": _swap, "dropout": _dropout, "blob_erase": _blob_erase}


def corrupt_labels(
    gt: SemGrid,
    noise: Sequence[NoiseSpec],
    seed: Union[int, Sequence[int]],
) -> tuple[SemGrid, CorruptionStats]:
    """
    Apply each noise spec in order with one generator seeded by `seed`.

    Only labels change; the validity mask is carried over untouched.
    """
    rng = np.random.default_rng(seed)
    labels = gt.labels.copy()
    changed_per_spec = []
    for spec in noise:
        updated = _APPLY[spec.kind](labels, spec, rng)
        changed_per_spec.append(int((updated != labels).sum()))
        labels = updated
    changed = float((labels != gt.labels).mean()) if labels.size else 0.0
    logger.debug(f"Corruption changed {changed:.3f} of voxels")
    return SemGrid(labels, gt.valid.copy()), CorruptionStats(changed_fraction=changed, changed_per_spec=changed_per_spec)
