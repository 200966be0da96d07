"""
Scene-class affinity loss: log precision, recall and specificity per class.
"""

from __future__ import annotations

from typing import Literal

import numpy as np

from voxrefine.losses.ce import valid_rows
from voxrefine.losses.models import LossError
from voxrefine.tensor import Tensor, clamp_min, concat, log, take
from voxrefine.voxio import SemGrid

RATIO_FLOOR = 1e-7

Mode = Literal["semantic", "geometric"]


def affinity_rows(probs: Tensor, target: SemGrid, mode: Mode) -> tuple[Tensor, np.ndarray]:
    """
    Probability rows of the known voxels with their targets.

    Geometric mode collapses classes to [empty, occupied] with p(occupied) = 1 - p(empty).
    """
    rows, labels = valid_rows(probs, target)
    if mode == "semantic":
        return rows, labels
    if mode != "geometric":
        raise LossError(f"unknown SCAL mode {mode!r}")
    empty = take(rows, [0], axis=1)
    return concat([empty, 1.0 - empty], axis=1), (labels != 0).astype(np.int64)


def _log_ratio(numerator: Tensor, denominator) -> Tensor:
    return log(clamp_min(numerator / denominator, RATIO_FLOOR))


def scal(probs: Tensor, target: SemGrid, mode: Mode = "semantic") -> Tensor:
    """
    -(1/C') sum_c (P_c + R_c + S_c) over the C' classes of `mode`.

    Classes absent from the target contribute nothing; within a class each term is skipped
    when its denominator is zero. Ratios are floored at 1e-7 before the log.
    """
    rows, labels = affinity_rows(probs, target, mode)
    n_classes = rows.shape[1]
    terms: list[Tensor] = []
    for c in range(n_classes):
        y = (labels == c).astype(np.float64)
        if not y.any():
            continue
        p = take(rows, [c], axis=1).reshape(-1)
        hits = (p * y).sum()
        if p.data.sum() > 0:
            terms.append(_log_ratio(hits, p.sum()))
        terms.append(_log_ratio(hits, float(y.sum())))
        negatives = 1.0 - y
        if negatives.sum() > 0:
            terms.append(_log_ratio(((1.0 - p) * negatives).sum(), float(negatives.sum())))
    total = terms[0]
    for term in terms[1:]:
        total = total + term
    return -total / float(n_classes)
