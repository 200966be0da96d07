"""
Completion IoU and per-class IoU over a confusion matrix of known voxels.
"""

from __future__ import annotations

import numpy as np

from voxrefine.metrics.models import CompletionIoU, ConfusionMatrix, MetricsError, SemanticIoU
from voxrefine.voxio import SemGrid


def accumulate(cm: ConfusionMatrix, pred: SemGrid, gt: SemGrid) -> ConfusionMatrix:
    """Add every voxel that is valid in `gt` to `cm` (in place) and return it."""
    if pred.dims != gt.dims:
        raise MetricsError(f"prediction dims {pred.dims} differ from ground truth {gt.dims}")
    keep = gt.valid.reshape(-1)
    truth = gt.labels.reshape(-1)[keep]
    guess = pred.labels.reshape(-1)[keep]
    k = cm.num_classes
    if truth.size and max(int(truth.max()), int(guess.max())) >= k:
        raise MetricsError(f"label {max(int(truth.max()), int(guess.max()))} is outside the {k} evaluated classes")
    cm.counts += np.bincount(truth * k + guess, minlength=k * k).reshape(k, k)
    return cm


def confusion_of(pred: SemGrid, gt: SemGrid, num_classes: int) -> ConfusionMatrix:
    return accumulate(ConfusionMatrix(num_classes), pred, gt)


def completion_iou(cm: ConfusionMatrix) -> CompletionIoU:
    """Binary occupied-vs-empty IoU; the all-empty/all-empty case scores 1 and is flagged."""
    occupied_gt = cm.counts[1:, :].sum()
    occupied_pred = cm.counts[:, 1:].sum()
    tp = int(cm.counts[1:, 1:].sum())
    fp = int(occupied_pred - tp)
    fn = int(occupied_gt - tp)
    if tp + fp + fn == 0:
        return CompletionIoU(iou=1.0, degenerate=True)
    return CompletionIoU(iou=tp / (tp + fp + fn))


def miou(cm: ConfusionMatrix, eps: float = 1e-12) -> SemanticIoU:
    """
    IoU_c = TP_c / (TP_c + FP_c + FN_c + eps) for every semantic class c >= 1.

    `mean` averages all semantic classes (absent ones score 0); `present_mean` only those
    seen in the prediction or the ground truth.
    """
    counts = cm.counts.astype(np.float64)
    tp = np.diag(counts)
    fp = counts.sum(axis=0) - tp
    fn = counts.sum(axis=1) - tp
    per_class = (tp / (tp + fp + fn + eps))[1:]
    present = ((tp + fp + fn) > 0)[1:]
    present_mean = float(per_class[present].mean()) if present.any() else 0.0
    return SemanticIoU(
        per_class=per_class.tolist(),
        mean=float(per_class.mean()),
        present_mean=present_mean,
        present=present.tolist(),
    )
