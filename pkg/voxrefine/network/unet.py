"""
Label-embedding 3D U-Net that refines a coarse semantic voxel grid.

embed -> 4 encoder blocks (FEB) -> residual bottleneck -> 4 aggregation blocks (FAB)
-> one prediction head per supervised scale. Attention FABs replace the convolutional ones
at scales 2, 4, 8 when the decoder is "pnam"; text fusion blocks follow FEB and/or FAB
outputs according to the fusion placement.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Union

import numpy as np

from voxrefine.network.config import ENCODER_STAGES, GRID_MULTIPLE, RefineConfig
from voxrefine.network.models import (
    ConfigMismatchError,
    ConvBlockParams,
    ConvParams,
    FabParams,
    FebParams,
    FusionParams,
    MissingTextError,
    MultiScaleLogits,
    PnaBlockParams,
)
from voxrefine.network.params import ParamStore
from voxrefine.network.pnam import PNAM_SCALES, build_pna_block, pna_fab_forward
from voxrefine.network.vlgm import apply_fusion, build_fusion, text_tensors
from voxrefine.tensor import (
    Tensor,
    concat,
    conv3d,
    embedding,
    instance_norm3d,
    leaky_relu,
    max_pool3d,
    nearest_upsample3d,
)
from voxrefine.tensor.ops import DEFAULT_SLOPE
from voxrefine.voxio import SemGrid, TextEmbedding

logger = logging.getLogger(__name__)


@dataclass
class RefineWeights:
    """Every learned tensor of one refiner, both by name (`store`) and by role."""

    cfg: RefineConfig
    store: ParamStore
    table: Tensor
    conv_in: ConvParams
    febs: list[FebParams]
    bottleneck: ConvBlockParams
    fabs: dict[int, Union[FabParams, PnaBlockParams]]
    heads: dict[int, ConvParams]
    fusion: dict[str, FusionParams] = field(default_factory=dict)

    def describe(self) -> list[tuple[str, str]]:
        """(site, kind) pairs for every decoder block and fusion site, coarse to fine."""
        rows = [(f"fab{s}", "pnam" if isinstance(p, PnaBlockParams) else "conv") for s, p in self.fabs.items()]
        rows += [(site, "fusion") for site in self.fusion]
        return rows


def build_conv_block(store: ParamStore, name: str, c_in: int, c_out: int) -> ConvBlockParams:
    return ConvBlockParams(
        conv1=store.conv(f"{name}.conv1", c_out, c_in, 3),
        conv2=store.conv(f"{name}.conv2", c_out, c_out, 3),
    )


def build_feb(store: ParamStore, name: str, width: int, cfg: RefineConfig) -> FebParams:
    block = build_conv_block(store, f"{name}.block", width, width)
    if cfg.feb_downsample == "conv_down":
        down = store.conv(f"{name}.down", 2 * width, width, 2)
    else:
        down = store.conv(f"{name}.down", 2 * width, width, 1)
    post_block = build_conv_block(store, f"{name}.post_block", 2 * width, 2 * width) if cfg.feb_blocks == "two_blocks" else None
    return FebParams(block=block, down=down, post_block=post_block)


def build_fab(store: ParamStore, name: str, fine_width: int, coarse_width: int) -> FabParams:
    return FabParams(
        block=build_conv_block(store, f"{name}.block", fine_width + coarse_width, fine_width),
        project=store.conv(f"{name}.project", fine_width, coarse_width, 1),
    )


def build_weights(cfg: RefineConfig, seed: Optional[int] = None) -> RefineWeights:
    """Allocate and initialise every tensor the configuration calls for, in a fixed order."""
    store = ParamStore(cfg.seed if seed is None else seed)
    g = cfg.base_width
    table = store.register("unet.embed.table", store.rng.normal(0.0, 1.0, size=(cfg.num_classes, cfg.embedding_width)))
    conv_in = store.conv("unet.conv_in", g, cfg.embedding_width, 1)

    fusion: dict[str, FusionParams] = {}

    def fusion_site(site: str, width: int) -> None:
        fusion[site] = build_fusion(
            store, f"vlgm.{site}", width, cfg.text_global_dim, cfg.text_token_dim, cfg.dcam_heads
        )

    febs = []
    for stage in range(ENCODER_STAGES):
        febs.append(build_feb(store, f"unet.feb{stage}", cfg.width(stage), cfg))
        if cfg.fuses("feb"):
            fusion_site(f"enc{stage + 1}", cfg.width(stage + 1))

    bottleneck = build_conv_block(store, "unet.bottleneck", cfg.width(ENCODER_STAGES), cfg.width(ENCODER_STAGES))

    fabs: dict[int, Union[FabParams, PnaBlockParams]] = {}
    for stage in reversed(range(ENCODER_STAGES)):
        scale = 2 ** stage
        fine, coarse = cfg.width(stage), cfg.width(stage + 1)
        if cfg.decoder == "pnam" and scale in PNAM_SCALES:
            fabs[scale] = build_pna_block(
                store, f"pnam.fab{scale}", fine, cfg.heads, cfg.window, cfg.ffn_ratio, cfg.nca_query_source
            )
        else:
            fabs[scale] = build_fab(store, f"unet.fab{scale}", fine, coarse)
        if cfg.fuses("fab"):
            fusion_site(f"dec{scale}", fine)

    heads = {
        scale: store.conv(f"unet.head{scale}", cfg.num_classes, cfg.width(int(np.log2(scale))), 1)
        for scale in cfg.scales
    }
    logger.debug(f"Built refiner with {len(store)} tensors, {store.count()} weights")
    return RefineWeights(cfg, store, table, conv_in, febs, bottleneck, fabs, heads, fusion)


def conv_block(x: Tensor, p: ConvBlockParams, slope: float = DEFAULT_SLOPE, eps: float = 1e-5) -> Tensor:
    """[conv3d k=3 pad=1 -> instance norm -> leaky relu] x 2"""
    for conv in (p.conv1, p.conv2):
        x = leaky_relu(instance_norm3d(conv3d(x, conv.weight, conv.bias, padding=1), eps), slope)
    return x


def embed_labels(grid: SemGrid, table: Tensor, conv_in: ConvParams) -> Tensor:
    """Look up one table row per voxel, then mix to the base width with a 1x1x1 convolution."""
    if grid.max_label >= table.shape[0]:
        raise ConfigMismatchError(f"label {grid.max_label} is outside the embedding table of {table.shape[0]} rows")
    rows = embedding(table, grid.labels.reshape(-1))
    f_emb = rows.permute(1, 0).reshape((table.shape[1], *grid.dims))
    return conv3d(f_emb, conv_in.weight, conv_in.bias)


def _check_even(x: Tensor, what: str) -> None:
    for axis, extent in zip(("depth", "height", "width"), x.shape[1:]):
        if extent % 2:
            raise ConfigMismatchError(f"{what}: {axis} axis extent {extent} is odd")


def feb_forward(
    f_in: Tensor,
    p: FebParams,
    variant: str = "conv_down",
    slope: float = DEFAULT_SLOPE,
    eps: float = 1e-5,
) -> tuple[Tensor, Tensor]:
    """
    Encoder block: residual ConvBlock at the input scale, then halve the resolution.

    Returns (F_skip, F_out) where F_skip = ConvBlock(F_in) + F_in and F_out has twice the
    channels at half the spatial extent.
    """
    _check_even(f_in, "FEB")
    f_skip = conv_block(f_in, p.block, slope, eps) + f_in
    if variant == "conv_down":
        f_out = conv3d(f_skip, p.down.weight, p.down.bias, stride=2)
    elif variant == "maxpool":
        f_out = conv3d(max_pool3d(f_skip), p.down.weight, p.down.bias)
    else:
        raise ConfigMismatchError(f"unknown FEB downsampling variant {variant!r}")
    if p.post_block is not None:
        f_out = conv_block(f_out, p.post_block, slope, eps)
    return f_skip, f_out


def fab_forward(
    f_in: Tensor,
    f_skip: Tensor,
    p: FabParams,
    slope: float = DEFAULT_SLOPE,
    eps: float = 1e-5,
) -> Tensor:
    """ConvBlock(concat(F_skip, F_up)) + project(F_up) with F_up the 2x nearest upsample of F_in."""
    expected = tuple(2 * n for n in f_in.shape[1:])
    if tuple(f_skip.shape[1:]) != expected:
        raise ConfigMismatchError(f"FAB: skip dims {f_skip.shape[1:]} are not twice the coarse dims {f_in.shape[1:]}")
    f_up = nearest_upsample3d(f_in, 2)
    fused = conv_block(concat([f_skip, f_up], axis=0), p.block, slope, eps)
    return fused + conv3d(f_up, p.project.weight, p.project.bias)


def pred_head(f_out: Tensor, p: ConvParams) -> Tensor:
    return conv3d(f_out, p.weight, p.bias)


def refine_forward(
    grid: SemGrid,
    cfg: RefineConfig,
    weights: RefineWeights,
    text: Optional[TextEmbedding] = None,
) -> MultiScaleLogits:
    """Run the full refiner on one scene and return logits at every configured scale."""
    for axis, extent in zip("XYZ", grid.dims):
        if extent % GRID_MULTIPLE:
            raise ConfigMismatchError(f"grid {axis} extent {extent} is not divisible by {GRID_MULTIPLE}")
    if cfg.fusion != "none" and text is None:
        raise MissingTextError(f"fusion placement {cfg.fusion!r} needs a text embedding")
    if weights.cfg.digest() != cfg.digest():
        raise ConfigMismatchError("weights were built for a different architecture")

    slope, eps = cfg.slope, cfg.norm_eps
    text_pair = text_tensors(text) if (text is not None and cfg.fusion != "none") else None

    x = embed_labels(grid, weights.table, weights.conv_in)
    skips = []
    for stage, feb in enumerate(weights.febs):
        skip, x = feb_forward(x, feb, cfg.feb_downsample, slope, eps)
        skips.append(skip)
        x = apply_fusion(x, cfg.fusion, "feb", text_pair, weights.fusion.get(f"enc{stage + 1}"), slope, eps)

    x = conv_block(x, weights.bottleneck, slope, eps) + x

    logits = MultiScaleLogits()
    for stage in reversed(range(ENCODER_STAGES)):
        scale = 2 ** stage
        block = weights.fabs[scale]
        if isinstance(block, PnaBlockParams):
            x = pna_fab_forward(x, skips[stage], block, slope, eps)
        else:
            x = fab_forward(x, skips[stage], block, slope, eps)
        x = apply_fusion(x, cfg.fusion, "fab", text_pair, weights.fusion.get(f"dec{scale}"), slope, eps)
        if scale in weights.heads:
            logits.by_scale[scale] = pred_head(x, weights.heads[scale])
    return logits


def argmax_labels(logits: MultiScaleLogits, like: Optional[SemGrid] = None) -> SemGrid:
    """
    Full-resolution argmax over classes; ties go to the smaller class index.

    The validity mask is copied from `like` (the input grid) when given.
    """
    if 1 not in logits:
        raise ConfigMismatchError("argmax needs full-resolution logits")
    labels = np.argmax(logits[1].data, axis=0)
    valid = like.valid.copy() if like is not None else None
    return SemGrid(labels, valid)
