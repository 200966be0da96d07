"""
Text-guided fusion: a global affine modulation followed by dual cross-attention between
token embeddings and voxel features.
"""

from __future__ import annotations

from typing import Optional, Union

import numpy as np

from voxrefine.network.layout import from_heads, from_rows, to_heads, to_rows
from voxrefine.network.models import (
    AttentionParams,
    ConfigMismatchError,
    DcamParams,
    FusionParams,
    LinearParams,
    MissingTextError,
    MlpParams,
    SigmParams,
)
from voxrefine.network.params import ParamStore
from voxrefine.tensor import Tensor, attention, attention_weights, layer_norm, leaky_relu, linear
from voxrefine.tensor.ops import DEFAULT_SLOPE
from voxrefine.tensor.tensor import as_tensor
from voxrefine.voxio import TextEmbedding

PLACEMENTS = ("none", "encoder", "decoder", "both")
STAGE_KINDS = ("feb", "fab")


def build_fusion(
    store: ParamStore,
    name: str,
    width: int,
    global_dim: int,
    token_dim: int,
    heads: int,
) -> FusionParams:
    if width % heads:
        raise ConfigMismatchError(f"{name}: dcam heads={heads} does not divide width {width}")

    def mlp(prefix: str) -> MlpParams:
        return MlpParams(
            fc1=store.linear(f"{prefix}.fc1", width, global_dim),
            fc2=store.linear(f"{prefix}.fc2", width, width),
        )

    def attn(prefix: str) -> AttentionParams:
        return AttentionParams(
            q=store.linear(f"{prefix}.q", width, width),
            k=store.linear(f"{prefix}.k", width, width),
            v=store.linear(f"{prefix}.v", width, width),
            out=store.linear(f"{prefix}.out", width, width),
        )

    return FusionParams(
        sigm=SigmParams(gamma=mlp(f"{name}.sigm.gamma"), beta=mlp(f"{name}.sigm.beta")),
        dcam=DcamParams(
            token_project=store.linear(f"{name}.dcam.token_project", width, token_dim),
            text_self=attn(f"{name}.dcam.text_self"),
            text_to_voxel=attn(f"{name}.dcam.text_to_voxel"),
            voxel_to_text=attn(f"{name}.dcam.voxel_to_text"),
            norm=store.norm(f"{name}.dcam.norm", width),
            heads=heads,
        ),
    )


def _apply(x: Tensor, p: LinearParams) -> Tensor:
    return linear(x, p.weight, p.bias)


def _mlp(x: Tensor, p: MlpParams, slope: float) -> Tensor:
    return _apply(leaky_relu(_apply(x, p.fc1), slope), p.fc2)


def sigm_modulate(
    f_in: Tensor,
    global_vector: Union[Tensor, np.ndarray],
    p: SigmParams,
    slope: float = DEFAULT_SLOPE,
) -> Tensor:
    """(1 + gamma) * F + beta with gamma, beta predicted per channel from the global text vector."""
    g = as_tensor(global_vector)
    if g.ndim != 1:
        raise ConfigMismatchError(f"global text vector must be 1D, got shape {g.shape}")
    width = f_in.shape[0]
    gamma = _mlp(g, p.gamma, slope).reshape(width, 1, 1, 1)
    beta = _mlp(g, p.beta, slope).reshape(width, 1, 1, 1)
    return f_in * (gamma + 1.0) + beta


def _multi_head(queries: Tensor, context: Tensor, p: AttentionParams, heads: int, record: Optional[list]) -> Tensor:
    q = to_heads(_apply(queries, p.q), heads)
    k = to_heads(_apply(context, p.k), heads)
    v = to_heads(_apply(context, p.v), heads)
    if record is not None:
        record.append(attention_weights(q.data, k.data))
    return _apply(from_heads(attention(q, k, v)), p.out)


def dcam_forward(
    f_in: Tensor,
    tokens: Union[Tensor, np.ndarray],
    p: DcamParams,
    eps: float = 1e-5,
    record: Optional[list] = None,
) -> Tensor:
    """
    Dual cross-attention between scene tokens and voxel features.

    Text self-attention, then text-to-voxel and voxel-to-text cross-attention, closed by
    LayerNorm(F_voxel_enhanced + F_in) per voxel. When `record` is a list, the attention
    probabilities of the three stages are appended to it in order.
    """
    tokens = as_tensor(tokens)
    if tokens.ndim != 2 or tokens.shape[0] < 1:
        raise ConfigMismatchError(f"token matrix must be (L, D_t) with L >= 1, got {tokens.shape}")
    dims = f_in.shape[1:]
    voxels = to_rows(f_in)

    text = _apply(tokens, p.token_project)
    text_attn = text + _multi_head(text, text, p.text_self, p.heads, record)
    text_enhanced = text_attn + _multi_head(text_attn, voxels, p.text_to_voxel, p.heads, record)
    voxel_enhanced = _multi_head(voxels, text_enhanced, p.voxel_to_text, p.heads, record)

    out = layer_norm(voxel_enhanced + voxels, p.norm.gain, p.norm.shift, eps)
    return from_rows(out, dims)


def text_tensors(text: TextEmbedding) -> tuple[Tensor, Tensor]:
    return Tensor(text.global_vector), Tensor(text.tokens)


def apply_fusion(
    stage_output: Tensor,
    placement: str,
    stage_kind: str,
    text: Optional[Union[TextEmbedding, tuple[Tensor, Tensor]]],
    params: Optional[FusionParams],
    slope: float = DEFAULT_SLOPE,
    eps: float = 1e-5,
) -> Tensor:
    """
    Run SIGM then DCAM on `stage_output` when the placement covers this stage kind.

    `text` is a TextEmbedding or a (global vector, tokens) tensor pair.
    """
    if placement not in PLACEMENTS:
        raise ConfigMismatchError(f"unknown fusion placement {placement!r}")
    if stage_kind not in STAGE_KINDS:
        raise ConfigMismatchError(f"unknown stage kind {stage_kind!r}")
    if placement == "none":
        return stage_output
    if text is None:
        raise MissingTextError(f"fusion placement {placement!r} needs a text embedding")
    if placement != "both" and (placement, stage_kind) not in (("encoder", "feb"), ("decoder", "fab")):
        return stage_output
    if params is None:
        raise ConfigMismatchError(f"no fusion parameters for a {stage_kind} stage under placement {placement!r}")

    global_vector, tokens = text_tensors(text) if isinstance(text, TextEmbedding) else text
    modulated = sigm_modulate(stage_output, global_vector, params.sigm, slope)
    return dcam_forward(modulated, tokens, params.dcam, eps)
