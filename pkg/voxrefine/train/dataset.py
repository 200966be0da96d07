"""
Scene samples for training and validation, read from disk or generated.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Optional

from voxrefine.network.config import RefineConfig
from voxrefine.train.models import DatasetSpec, FileDataset, SampleEntry, SampleReadError, SyntheticDataset
from voxrefine.train.synthetic import layered_scene, random_text
from voxrefine.voxio import LabelRemap, SemGrid, TextEmbedding, VoxIOError, load_remap, load_scene, load_text

logger = logging.getLogger(__name__)


@dataclass
class SceneSample:
    """
    One scene. `coarse` is None when the coarse input is produced on the fly.
    """

    name: str
    gt: SemGrid
    coarse: Optional[SemGrid] = None
    text: Optional[TextEmbedding] = None


def _read_entry(
    entry: SampleEntry,
    num_classes: int,
    grid_format: str = "grid",
    remap: Optional[LabelRemap] = None,
) -> SceneSample:
    name = entry.name or Path(entry.gt).stem
    try:
        gt = load_scene(entry.gt, grid_format, remap, require_mask=True)
        coarse = load_scene(entry.coarse, grid_format, remap) if entry.coarse else None
        text = load_text(entry.text) if entry.text else None
    except (OSError, VoxIOError) as e:
        raise SampleReadError(f"cannot read sample {name}: {e}") from e
    for grid, role in ((gt, "ground truth"), (coarse, "coarse grid")):
        if grid is None:
            continue
        if grid.max_label >= num_classes:
            raise SampleReadError(f"{role} of {name} has label {grid.max_label} outside {num_classes} classes")
        if grid.dims != gt.dims:
            raise SampleReadError(f"{role} of {name} has dims {grid.dims}, ground truth has {gt.dims}")
    return SceneSample(name=name, gt=gt, coarse=coarse, text=text)


def load_samples(dataset: DatasetSpec, cfg: RefineConfig) -> tuple[list[SceneSample], list[SceneSample]]:
    """(train, val) samples; synthetic datasets validate on their training scenes."""
    if isinstance(dataset, FileDataset):
        try:
            remap = load_remap(dataset.remap) if dataset.remap is not None else None
        except (OSError, ValueError) as e:
            raise SampleReadError(f"cannot read label remap {dataset.remap}: {e}") from e
        train = [_read_entry(entry, cfg.num_classes, dataset.grid_format, remap) for entry in dataset.train]
        val = [_read_entry(entry, cfg.num_classes, dataset.grid_format, remap) for entry in dataset.val]
        logger.info(f"Loaded {len(train)} training and {len(val)} validation scenes")
        return train, val

    assert isinstance(dataset, SyntheticDataset)
    scenes = []
    for i in range(dataset.scenes):
        text = random_text(cfg.text_global_dim, cfg.text_token_dim, seed=dataset.seed + i) if dataset.text else None
        scenes.append(SceneSample(name=f"synthetic{i}", gt=layered_scene(dataset.dims, cfg.num_classes, dataset.seed + i), text=text))
    return scenes, scenes
