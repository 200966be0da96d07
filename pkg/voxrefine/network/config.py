"""
Hyperparameters of the refinement network and its training objective.
"""

from __future__ import annotations

import hashlib
import json
from typing import Literal, Optional

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SUPPORTED_SCALES = (1, 2, 4, 8)
ENCODER_STAGES = 4
# four halvings between full resolution and the bottleneck
GRID_MULTIPLE = 2 ** ENCODER_STAGES

# fields that change the set or shape of learned tensors, or the forward computation
ARCHITECTURE_FIELDS = (
    "num_classes",
    "base_width",
    "embed_dim",
    "scales",
    "feb_downsample",
    "feb_blocks",
    "decoder",
    "fusion",
    "heads",
    "window",
    "nca_query_source",
    "dcam_heads",
    "ffn_ratio",
    "text_global_dim",
    "text_token_dim",
    "slope",
    "norm_eps",
)


class RefineConfig(BaseModel):
    """
    Architecture and optimisation settings of one refiner.

    `num_classes` counts every label value including the empty class 0, so logits carry
    `num_classes` channels and grids hold labels in [0, num_classes).
    """

    model_config = ConfigDict(extra="forbid")

    num_classes: int = Field(default=20, ge=2)
    base_width: int = Field(default=16, ge=1)
    embed_dim: Optional[int] = Field(default=None, ge=1)
    scales: list[int] = Field(default_factory=lambda: list(SUPPORTED_SCALES))

    feb_downsample: Literal["conv_down", "maxpool"] = "conv_down"
    feb_blocks: Literal["one_block", "two_blocks"] = "two_blocks"
    decoder: Literal["conv", "pnam"] = "conv"
    fusion: Literal["none", "encoder", "decoder", "both"] = "none"

    heads: int = Field(default=4, ge=1)
    window: int = 3
    nca_query_source: Literal["up", "skip"] = "up"
    dcam_heads: int = Field(default=4, ge=1)
    ffn_ratio: int = Field(default=2, ge=1)
    text_global_dim: int = Field(default=768, ge=1)
    text_token_dim: int = Field(default=256, ge=1)

    slope: float = Field(default=0.01, ge=0.0, lt=1.0)
    norm_eps: float = Field(default=1e-5, gt=0.0)

    lr_peak: float = Field(default=5e-5, gt=0.0)
    warmup_frac: float = Field(default=0.05, gt=0.0, lt=1.0)
    epochs: int = Field(default=10, ge=0)
    weight_decay: float = Field(default=0.01, ge=0.0)
    betas: tuple[float, float] = (0.9, 0.99)
    adam_eps: float = Field(default=1e-8, gt=0.0)

    lambda_ce: float = Field(default=1.0, ge=0.0)
    lambda_scal_geo: float = Field(default=1.0, ge=0.0)
    lambda_scal_sem: float = Field(default=1.0, ge=0.0)
    lambda_lovasz: float = Field(default=0.0, ge=0.0)
    ce_normalization: Literal["classes", "voxels"] = "classes"
    class_weight_eps: float = Field(default=1e-3, gt=0.0)

    seed: int = 0

    @field_validator("scales")
    @classmethod
    def _check_scales(cls, scales: list[int]) -> list[int]:
        if not scales:
            raise ValueError("scales must not be empty")
        unknown = sorted(set(scales) - set(SUPPORTED_SCALES))
        if unknown:
            raise ValueError(f"unsupported scales {unknown}, choose from {list(SUPPORTED_SCALES)}")
        if 1 not in scales:
            raise ValueError("scales must include full resolution (1)")
        return sorted(set(scales))

    @field_validator("window")
    @classmethod
    def _check_window(cls, window: int) -> int:
        if window < 1 or window % 2 == 0:
            raise ValueError(f"window must be odd and >= 1, got {window}")
        return window

    @field_validator("betas")
    @classmethod
    def _check_betas(cls, betas: tuple[float, float]) -> tuple[float, float]:
        if not all(0.0 <= b < 1.0 for b in betas):
            raise ValueError(f"betas must lie in [0, 1), got {betas}")
        return betas

    @model_validator(mode="after")
    def _check_head_widths(self) -> "RefineConfig":
        # PNAM runs at widths 2G, 4G, 8G; fusion sites at G .. 16G
        if self.decoder == "pnam" and (2 * self.base_width) % self.heads:
            raise ValueError(f"heads={self.heads} must divide the attention width {2 * self.base_width}")
        if self.fusion != "none" and self.base_width % self.dcam_heads:
            raise ValueError(f"dcam_heads={self.dcam_heads} must divide base_width={self.base_width}")
        return self

    @property
    def embedding_width(self) -> int:
        return self.embed_dim if self.embed_dim is not None else self.base_width

    def width(self, stage: int) -> int:
        """Channel width at encoder stage `stage` (0 = full resolution, 4 = bottleneck)."""
        return self.base_width * 2 ** stage

    def fuses(self, stage_kind: str) -> bool:
        if self.fusion == "both":
            return True
        return (self.fusion, stage_kind) in (("encoder", "feb"), ("decoder", "fab"))

    def architecture(self) -> dict:
        values = {name: getattr(self, name) for name in ARCHITECTURE_FIELDS}
        values["embed_dim"] = self.embedding_width
        return values

    def digest(self) -> bytes:
        """SHA-256 over the canonical JSON of the architecture fields."""
        canonical = json.dumps(self.architecture(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).digest()
