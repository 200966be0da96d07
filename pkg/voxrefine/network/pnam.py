"""
Attention-based feature aggregation blocks for the coarser decoder scales.

Each block upsamples the coarse stream, lets it attend to itself (global self-attention)
and to the skip features inside a local window (neighborhood cross-attention), then fuses
both with a normalised feed-forward residual.
"""

from __future__ import annotations

import numpy as np

from voxrefine.network.layout import from_heads, from_rows, to_heads, to_rows
from voxrefine.network.models import ConfigMismatchError, ConvParams, PnaBlockParams, SeparableQKV
from voxrefine.network.params import ParamStore
from voxrefine.tensor import (
    ShapeError,
    Tensor,
    attention,
    conv3d,
    layer_norm,
    leaky_relu,
    linear,
    nearest_upsample3d,
    neighborhood_attention,
    neighborhood_attention_weights,
    neighborhood_index,
)
from voxrefine.tensor.ops import DEFAULT_SLOPE

# decoder scales whose aggregation block is attention based; scale 1 stays convolutional
PNAM_SCALES = (2, 4, 8)


def build_pna_block(
    store: ParamStore,
    name: str,
    width: int,
    heads: int,
    window: int,
    ffn_ratio: int = 2,
    query_source: str = "up",
) -> PnaBlockParams:
    if width % heads:
        raise ConfigMismatchError(f"{name}: heads={heads} does not divide width {width}")

    def separable(stream: str) -> SeparableQKV:
        return SeparableQKV(
            pointwise=store.conv(f"{name}.sa.{stream}.pointwise", width, width, 1),
            depthwise=store.conv(f"{name}.sa.{stream}.depthwise", width, width, 3, depthwise=True),
        )

    return PnaBlockParams(
        up_project=store.conv(f"{name}.up_project", width, 2 * width, 1),
        sa_q=separable("q"),
        sa_k=separable("k"),
        sa_v=separable("v"),
        sa_out=store.linear(f"{name}.sa.out", width, width),
        nca_q=store.conv(f"{name}.nca.q", width, width, 1),
        nca_k=store.conv(f"{name}.nca.k", width, width, 1),
        nca_v=store.conv(f"{name}.nca.v", width, width, 1),
        nca_out=store.linear(f"{name}.nca.out", width, width),
        norm=store.norm(f"{name}.norm", width),
        ffn_in=store.linear(f"{name}.ffn.in", ffn_ratio * width, width),
        ffn_out=store.linear(f"{name}.ffn.out", width, ffn_ratio * width),
        heads=heads,
        window=window,
        query_source=query_source,
    )


def _pointwise(x: Tensor, p: ConvParams) -> Tensor:
    return conv3d(x, p.weight, p.bias)


def _separable(x: Tensor, p: SeparableQKV) -> Tensor:
    mixed = _pointwise(x, p.pointwise)
    return conv3d(mixed, p.depthwise.weight, p.depthwise.bias, padding=1, depthwise=True)


def self_attention_block(f_up: Tensor, p: PnaBlockParams) -> Tensor:
    """Dense multi-head attention over every voxel of `f_up`, added back onto `f_up`."""
    dims = f_up.shape[1:]
    q = to_heads(to_rows(_separable(f_up, p.sa_q)), p.heads)
    k = to_heads(to_rows(_separable(f_up, p.sa_k)), p.heads)
    v = to_heads(to_rows(_separable(f_up, p.sa_v)), p.heads)
    attended = from_heads(attention(q, k, v))
    return f_up + from_rows(linear(attended, p.sa_out.weight, p.sa_out.bias), dims)


def _cross_streams(f_skip: Tensor, f_up: Tensor, p: PnaBlockParams) -> tuple[Tensor, Tensor, Tensor]:
    if f_skip.shape != f_up.shape:
        raise ShapeError(f"neighborhood cross-attention: skip {f_skip.shape} and up {f_up.shape} differ")
    queries, context = (f_up, f_skip) if p.query_source == "up" else (f_skip, f_up)
    q = to_heads(to_rows(_pointwise(queries, p.nca_q)), p.heads)
    k = to_heads(to_rows(_pointwise(context, p.nca_k)), p.heads)
    v = to_heads(to_rows(_pointwise(context, p.nca_v)), p.heads)
    return q, k, v


def neighborhood_cross_attention(f_skip: Tensor, f_up: Tensor, p: PnaBlockParams) -> Tensor:
    """
    Windowed cross-attention between the decoder stream and the skip features.

    With the default query source every voxel of `f_up` queries the skip voxels inside the
    w^3 window around it; windows are shifted inward at the volume boundary.
    """
    q, k, v = _cross_streams(f_skip, f_up, p)
    dims = f_up.shape[1:]
    index = neighborhood_index(dims, p.window)
    attended = from_heads(neighborhood_attention(q, k, v, index))
    return f_up + from_rows(linear(attended, p.nca_out.weight, p.nca_out.bias), dims)


def cross_attention_weights(f_skip: Tensor, f_up: Tensor, p: PnaBlockParams) -> tuple[np.ndarray, np.ndarray]:
    """Attention probabilities (heads, N, keys) of the cross-attention and the key index they refer to."""
    q, k, _ = _cross_streams(f_skip, f_up, p)
    index = neighborhood_index(f_up.shape[1:], p.window)
    return neighborhood_attention_weights(q.data, k.data, index), index


def pna_fab_forward(
    f_in: Tensor,
    f_skip: Tensor,
    p: PnaBlockParams,
    slope: float = DEFAULT_SLOPE,
    eps: float = 1e-5,
) -> Tensor:
    """
    Upsample the coarse stream and fuse it with the skip features through attention.

    Returns FFN(LayerNorm(F_self + F_cross)) + (F_self + F_cross) at the skip resolution.
    """
    expected = tuple(2 * n for n in f_in.shape[1:])
    if tuple(f_skip.shape[1:]) != expected:
        raise ConfigMismatchError(f"attention FAB: skip dims {f_skip.shape[1:]} are not twice the coarse dims {f_in.shape[1:]}")
    f_up = nearest_upsample3d(_pointwise(f_in, p.up_project), 2)
    fused = self_attention_block(f_up, p) + neighborhood_cross_attention(f_skip, f_up, p)

    rows = to_rows(fused)
    hidden = linear(layer_norm(rows, p.norm.gain, p.norm.shift, eps), p.ffn_in.weight, p.ffn_in.bias)
    hidden = linear(leaky_relu(hidden, slope), p.ffn_out.weight, p.ffn_out.bias)
    return from_rows(hidden + rows, fused.shape[1:])
