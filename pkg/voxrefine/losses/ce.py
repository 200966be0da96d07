"""
Class-weighted cross-entropy over known voxels, per scale and summed over scales.
"""

from __future__ import annotations

import logging
from typing import Literal, Mapping

import numpy as np

from voxrefine.losses.models import ClassWeights, LossError
from voxrefine.network.models import MultiScaleLogits
from voxrefine.tensor import Tensor, log_softmax_lastdim, take
from voxrefine.voxio import SemGrid

logger = logging.getLogger(__name__)

Normalization = Literal["classes", "voxels"]


def class_weights_from_frequencies(counts: np.ndarray, eps: float = 1e-3) -> ClassWeights:
    """
    Inverse-log frequency weights w_c = 1 / ln(n_c + eps) on raw voxel counts.

    Classes that never occur get the largest weight among the observed classes.
    """
    counts = np.asarray(counts, dtype=np.float64).reshape(-1)
    if eps <= 0:
        raise LossError(f"eps must be positive, got {eps}")
    if (counts < 0).any():
        raise LossError("voxel counts must be non-negative")
    if counts.sum() <= 0:
        raise LossError("class counts are all zero")
    seen = counts > 0
    weights = np.zeros_like(counts)
    weights[seen] = 1.0 / np.log(counts[seen] + eps)
    if (weights[seen] <= 0).any():
        raise LossError("non-zero class counts must be at least 1")
    weights[~seen] = weights[seen].max()
    return ClassWeights(weights)


def valid_rows(logits: Tensor, target: SemGrid) -> tuple[Tensor, np.ndarray]:
    """
    Logit rows (N_valid, C) of the known voxels and their target labels.
    """
    if tuple(logits.shape[1:]) != target.dims:
        raise LossError(f"logits spatial dims {logits.shape[1:]} do not match target {target.dims}")
    keep = np.flatnonzero(target.valid.reshape(-1))
    if keep.size == 0:
        raise LossError("target has no valid voxels")
    labels = target.labels.reshape(-1)[keep]
    channels = logits.shape[0]
    if labels.max() >= channels:
        raise LossError(f"target label {int(labels.max())} has no logit channel (C={channels})")
    rows = take(logits.reshape(channels, -1), keep, axis=1).permute(1, 0)
    return rows, labels


def weighted_ce(
    logits: Tensor,
    target: SemGrid,
    weights: ClassWeights,
    normalization: Normalization = "classes",
) -> Tensor:
    """
    -(1/C) sum_i w_{y_i} log softmax(logits_i)[y_i] over the known voxels i.

    `normalization="voxels"` divides by the number of known voxels instead of C.
    """
    channels = logits.shape[0]
    if len(weights) != channels:
        raise LossError(f"{len(weights)} class weights for {channels} logit channels")
    rows, labels = valid_rows(logits, target)
    log_probs = log_softmax_lastdim(rows)
    picked = take(log_probs.reshape(-1), np.arange(labels.size) * channels + labels)
    total = (picked * weights.w[labels]).sum()
    denominator = channels if normalization == "classes" else labels.size
    return -total / float(denominator)


def multiscale_ce(
    logits: MultiScaleLogits,
    targets: Mapping[int, SemGrid],
    weights: ClassWeights,
    normalization: Normalization = "classes",
) -> Tensor:
    """Unweighted sum of `weighted_ce` over every scale present in `logits`."""
    total = None
    for scale in logits:
        if scale not in targets:
            raise LossError(f"no target grid for scale {scale}")
        term = weighted_ce(logits[scale], targets[scale], weights, normalization)
        total = term if total is None else total + term
    if total is None:
        raise LossError("no logits to supervise")
    return total
