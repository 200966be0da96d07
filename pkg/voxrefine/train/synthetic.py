"""
Procedural layered scenes: a two-class ground slab, boxes standing on it and a floating
canopy layer, all on a seeded generator.
"""

from __future__ import annotations

import numpy as np

from voxrefine.voxio import SemGrid, TextEmbedding


def layered_scene(dims: tuple[int, int, int], num_classes: int = 5, seed: int = 0) -> SemGrid:
    """
    Ground-truth grid with labels in [0, num_classes).

    Class 1 covers the ground slab for x < X/2 and class 2 the rest (class 1 everywhere when
    only one semantic class exists); classes 3 and up label boxes and the canopy.
    """
    if num_classes < 2:
        raise ValueError(f"a layered scene needs at least one semantic class, got num_classes={num_classes}")
    rng = np.random.default_rng(seed)
    x, y, z = dims
    labels = np.zeros(dims, dtype=np.int64)

    ground = max(1, z // 4)
    labels[:, :, :ground] = 1
    if num_classes > 2:
        labels[x // 2:, :, :ground] = 2

    object_classes = list(range(3, num_classes)) or [num_classes - 1]
    for i in range(max(2, (x * y) // 128)):
        cls = object_classes[i % len(object_classes)]
        sx, sy = rng.integers(2, max(3, x // 4) + 1), rng.integers(2, max(3, y // 4) + 1)
        ox, oy = rng.integers(0, max(1, x - sx) + 1), rng.integers(0, max(1, y - sy) + 1)
        top = min(z, ground + int(rng.integers(1, max(2, z // 2) + 1)))
        labels[ox:ox + sx, oy:oy + sy, ground:top] = cls

    if z - ground >= 3:
        canopy = object_classes[-1]
        level = z - 2
        mask = rng.random((x, y)) < 0.25
        labels[:, :, level][mask] = canopy
    return SemGrid(labels, np.ones(dims, dtype=bool))


def random_text(global_dim: int, token_dim: int, tokens: int = 4, seed: int = 0) -> TextEmbedding:
    """A fixed random scene embedding standing in for precomputed text features."""
    rng = np.random.default_rng(seed)
    return TextEmbedding(rng.normal(size=global_dim), rng.normal(size=(tokens, token_dim)))
