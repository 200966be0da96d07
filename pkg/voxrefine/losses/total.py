"""
Training objective: weighted sum of multi-scale CE, geometric and semantic SCAL and the
optional Lovasz-softmax term.
"""

from __future__ import annotations

import logging
from typing import Mapping, Optional

from voxrefine.losses.ce import multiscale_ce
from voxrefine.losses.lovasz import lovasz_softmax
from voxrefine.losses.models import ClassWeights, LossBreakdown, LossError
from voxrefine.losses.scal import scal
from voxrefine.network.config import RefineConfig
from voxrefine.network.models import MultiScaleLogits
from voxrefine.tensor import Tensor, softmax_lastdim
from voxrefine.voxio import SemGrid

logger = logging.getLogger(__name__)


def class_probs(logits: Tensor) -> Tensor:
    """Softmax over the class axis of a (C, D, H, W) logit volume."""
    return softmax_lastdim(logits.permute(1, 2, 3, 0)).permute(3, 0, 1, 2)


def _per_scale(logits: MultiScaleLogits, targets: Mapping[int, SemGrid], fn) -> Tensor:
    total = None
    for scale in logits:
        if scale not in targets:
            raise LossError(f"no target grid for scale {scale}")
        term = fn(class_probs(logits[scale]), targets[scale])
        total = term if total is None else total + term
    return total


def total_loss(
    logits: MultiScaleLogits,
    targets: Mapping[int, SemGrid],
    cfg: RefineConfig,
    weights: Optional[ClassWeights] = None,
) -> tuple[Tensor, LossBreakdown]:
    """
    lambda_ce * L_ce + lambda_scal_geo * L_scal_geo + lambda_scal_sem * L_scal_sem
    + lambda_lovasz * L_lovasz, each summed over the supervised scales.

    Terms with a zero coefficient are not evaluated.
    """
    weights = weights if weights is not None else ClassWeights.uniform(cfg.num_classes)
    terms: dict[str, Tensor] = {}
    if cfg.lambda_ce > 0:
        terms["ce"] = multiscale_ce(logits, targets, weights, cfg.ce_normalization) * cfg.lambda_ce
    if cfg.lambda_scal_geo > 0:
        terms["scal_geo"] = _per_scale(logits, targets, lambda p, t: scal(p, t, "geometric")) * cfg.lambda_scal_geo
    if cfg.lambda_scal_sem > 0:
        terms["scal_sem"] = _per_scale(logits, targets, lambda p, t: scal(p, t, "semantic")) * cfg.lambda_scal_sem
    if cfg.lambda_lovasz > 0:
        terms["lovasz"] = _per_scale(logits, targets, lovasz_softmax) * cfg.lambda_lovasz

    if not terms:
        return Tensor(0.0), LossBreakdown()
    total = None
    for term in terms.values():
        total = term if total is None else total + term
    breakdown = LossBreakdown(**{name: term.item() for name, term in terms.items()}, total=total.item())
    return total, breakdown
