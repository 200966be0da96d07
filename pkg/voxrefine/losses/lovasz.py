"""
Lovasz-softmax: convex surrogate of the per-class Jaccard loss.
"""

from __future__ import annotations

import numpy as np

from voxrefine.losses.ce import valid_rows
from voxrefine.tensor import Tensor, abs_, take
from voxrefine.voxio import SemGrid


def jaccard_gradient(fg_sorted: np.ndarray) -> np.ndarray:
    """Lovasz extension weights for foreground flags sorted by decreasing error, per column."""
    gts = fg_sorted.sum(axis=0)
    intersection = gts - np.cumsum(fg_sorted, axis=0)
    union = gts + np.cumsum(1.0 - fg_sorted, axis=0)
    jaccard = 1.0 - intersection / union
    grad = jaccard.copy()
    grad[1:] = jaccard[1:] - jaccard[:-1]
    return grad


def lovasz_softmax(probs: Tensor, target: SemGrid) -> Tensor:
    """Mean over target-present classes of the Lovasz extension on sorted |fg - p| errors."""
    rows, labels = valid_rows(probs, target)
    present = np.unique(labels)
    fg = (labels[:, None] == present[None, :]).astype(np.float64)
    errors = abs_(take(rows, present, axis=1) - fg)

    n, k = errors.shape
    order = np.argsort(-errors.data, axis=0, kind="stable")
    flat = (order * k + np.arange(k)[None, :]).reshape(-1)
    sorted_errors = take(errors.reshape(-1), flat).reshape(n, k)
    weights = jaccard_gradient(np.take_along_axis(fg, order, axis=0))
    return (sorted_errors * weights).sum(axis=0).mean()
