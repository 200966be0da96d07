"""Reshapes between channel-first volumes, voxel rows and attention heads."""

from __future__ import annotations

from voxrefine.tensor import Tensor


def to_rows(volume: Tensor) -> Tensor:
    """(C, D, H, W) -> (D*H*W, C)"""
    c = volume.shape[0]
    return volume.reshape(c, -1).permute(1, 0)


def from_rows(rows: Tensor, dims: tuple[int, ...]) -> Tensor:
    """(D*H*W, C) -> (C, D, H, W)"""
    return rows.permute(1, 0).reshape((rows.shape[1], *dims))


def to_heads(rows: Tensor, heads: int) -> Tensor:
    """(N, C) -> (heads, N, C // heads); channel c goes to head c // (C // heads)."""
    n, c = rows.shape
    return rows.reshape(n, heads, c // heads).permute(1, 0, 2)


def from_heads(split: Tensor) -> Tensor:
    """(heads, N, d) -> (N, heads * d)"""
    h, n, d = split.shape
    return split.permute(1, 0, 2).reshape(n, h * d)
