"""
Training loop for the refiner: forward -> total loss -> backward -> AdamW under the
warmup/cosine schedule, one scene per step.
"""

from __future__ import annotations

import hashlib
import logging
from pathlib import Path
from typing import Optional, Sequence, TextIO

import numpy as np

from voxrefine.losses import ClassWeights, class_weights_from_frequencies, total_loss
from voxrefine.metrics import ConfusionMatrix, accumulate, miou, score
from voxrefine.network import GRID_MULTIPLE, RefineWeights, argmax_labels, build_weights, encode_checkpoint, refine_forward
from voxrefine.network.config import RefineConfig
from voxrefine.tensor import backward
from voxrefine.train.corrupt import corrupt_labels
from voxrefine.train.dataset import SceneSample
from voxrefine.train.models import DivergenceError, EpochRecord, RunConfig, StepRecord, TrainingError, TrainResult
from voxrefine.train.optim import AdamW
from voxrefine.train.schedule import cosine_warmup_lr
from voxrefine.voxio import SemGrid, crop_grid, downsample_labels_majority, pad_grid

logger = logging.getLogger(__name__)


def scale_targets(gt: SemGrid, scales: Sequence[int]) -> dict[int, SemGrid]:
    padded = pad_grid(gt, GRID_MULTIPLE)
    return {scale: downsample_labels_majority(padded, scale) for scale in scales}


def class_weights_for(samples: Sequence[SceneSample], cfg: RefineConfig, weighting: str) -> ClassWeights:
    if weighting == "uniform":
        return ClassWeights.uniform(cfg.num_classes)
    counts = np.zeros(cfg.num_classes)
    for sample in samples:
        counts += np.bincount(sample.gt.labels[sample.gt.valid], minlength=cfg.num_classes)[: cfg.num_classes]
    return class_weights_from_frequencies(counts, cfg.class_weight_eps)


FIXED_STREAM = 7919


def fixed_coarse(sample: SceneSample, run: RunConfig, index: int) -> SemGrid:
    """The scene's own coarse grid, or one fixed corruption of its ground truth."""
    if sample.coarse is not None:
        return sample.coarse
    return corrupt_labels(sample.gt, run.noise, (run.refine.seed, FIXED_STREAM, index))[0]


def coarse_input(sample: SceneSample, run: RunConfig, index: int, step: int) -> SemGrid:
    """
    The coarse grid fed to the refiner at `step`.

    joint_stub mode regenerates it from ground truth with a per-step seed; it is plain data
    either way, so no gradient reaches whatever produced it.
    """
    if run.mode == "joint_stub":
        return corrupt_labels(sample.gt, run.noise, (run.refine.seed, step))[0]
    return fixed_coarse(sample, run, index)


def predict(grid: SemGrid, weights: RefineWeights, text=None) -> SemGrid:
    """Pad to the network multiple, refine, take the argmax and crop back to `grid`'s dims."""
    padded = pad_grid(grid, GRID_MULTIPLE)
    logits = refine_forward(padded, weights.cfg, weights, text)
    return crop_grid(argmax_labels(logits, padded), grid.dims)


def evaluate(samples: Sequence[SceneSample], weights: RefineWeights, run: RunConfig, epoch: int, step: int) -> EpochRecord:
    refined = ConfusionMatrix(weights.cfg.num_classes)
    coarse = ConfusionMatrix(weights.cfg.num_classes)
    for i, sample in enumerate(samples):
        source = fixed_coarse(sample, run, i)
        accumulate(refined, predict(source, weights, sample.text), sample.gt)
        accumulate(coarse, source, sample.gt)
    scores = score("val", refined)
    return EpochRecord(
        epoch=epoch,
        step=step,
        iou=scores.iou,
        miou=scores.miou,
        miou_present=scores.miou_present,
        coarse_miou=miou(coarse).mean,
    )


def _emit(log: Optional[TextIO], record) -> None:
    if log is not None:
        log.write(record.model_dump_json() + "\n")
        log.flush()


def train_refiner(
    train: Sequence[SceneSample],
    val: Sequence[SceneSample],
    run: RunConfig,
    weights: Optional[RefineWeights] = None,
) -> tuple[RefineWeights, TrainResult]:
    """
    Train a refiner and write its checkpoint and metric log.

    The step budget is `run.steps` when set, otherwise epochs x training scenes. Training is
    a deterministic function of the samples and the run config.
    """
    cfg = run.refine
    if not train and (run.steps or cfg.epochs):
        raise TrainingError("no training samples")
    weights = weights if weights is not None else build_weights(cfg)
    class_weights = class_weights_for(train, cfg, run.class_weighting) if train else ClassWeights.uniform(cfg.num_classes)
    total_steps = run.steps if run.steps is not None else cfg.epochs * len(train)
    targets = [scale_targets(sample.gt, cfg.scales) for sample in train]
    optimizer = AdamW(dict(weights.store), cfg.betas, cfg.adam_eps, cfg.weight_decay)
    eval_every = run.eval_every or max(1, len(train))

    Path(run.metric_log).parent.mkdir(parents=True, exist_ok=True)
    final: Optional[EpochRecord] = None
    with open(run.metric_log, "w") as log:
        for step in range(total_steps):
            index = step % len(train)
            epoch = step // len(train)
            sample = train[index]
            lr = cosine_warmup_lr(step, total_steps, cfg.lr_peak, cfg.warmup_frac)
            logger.info(f"📍 Step {step} (epoch {epoch}, scene {sample.name}, lr {lr:.3e})")

            coarse = pad_grid(coarse_input(sample, run, index, step), GRID_MULTIPLE)
            optimizer.zero_grad()
            logits = refine_forward(coarse, cfg, weights, sample.text)
            loss, breakdown = total_loss(logits, targets[index], cfg, class_weights)
            if not np.isfinite(breakdown.total):
                logger.error(f"❌ Loss diverged at step {step}: {breakdown.model_dump()}")
                raise DivergenceError(f"loss is not finite at step {step}")
            if loss.requires_grad:
                backward(loss)
            try:
                optimizer.step(lr)
            except DivergenceError:
                logger.error(f"❌ Gradient diverged at step {step}")
                raise
            logger.info(f"Loss {breakdown.total:.5f} (ce {breakdown.ce:.5f}, geo {breakdown.scal_geo:.5f}, sem {breakdown.scal_sem:.5f})")
            _emit(log, StepRecord(step=step, epoch=epoch, scene=sample.name, lr=lr, loss=breakdown))

            if val and (step + 1) % eval_every == 0:
                final = evaluate(val, weights, run, epoch, step + 1)
                logger.info(f"Validation IoU {100 * final.iou:.2f}, mIoU {100 * final.miou:.2f} (coarse {100 * final.coarse_miou:.2f})")
                _emit(log, final)

        if val and (final is None or final.step != total_steps):
            final = evaluate(val, weights, run, max(0, (total_steps - 1) // max(1, len(train))), total_steps)
            _emit(log, final)

    data = encode_checkpoint(weights)
    Path(run.checkpoint).parent.mkdir(parents=True, exist_ok=True)
    Path(run.checkpoint).write_bytes(data)
    sha = hashlib.sha256(data).hexdigest()
    logger.info(f"✅ Training finished after {total_steps} steps, checkpoint {run.checkpoint}")
    return weights, TrainResult(steps=total_steps, checkpoint=run.checkpoint, checkpoint_sha256=sha, final=final)
