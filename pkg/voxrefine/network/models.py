from dataclasses import dataclass, field
from typing import Iterator, Optional

from voxrefine.tensor import Tensor


class NetworkError(ValueError):
	"""Base class for refinement network errors"""


class ConfigMismatchError(NetworkError):
	"""Error raised when weights or inputs do not fit the network configuration"""


class MissingTextError(NetworkError):
	"""Error raised when a fusion placement is configured but no text embedding is supplied"""


@dataclass
class ConvParams:
	weight: Tensor
	bias: Tensor


@dataclass
class LinearParams:
	weight: Tensor
	bias: Tensor


@dataclass
class NormParams:
	gain: Tensor
	shift: Tensor


@dataclass
class ConvBlockParams:
	"""Two [conv3d k=3 -> instance norm -> leaky relu] stages."""

	conv1: ConvParams
	conv2: ConvParams


@dataclass
class FebParams:
	block: ConvBlockParams
	down: ConvParams
	post_block: Optional[ConvBlockParams] = None


@dataclass
class FabParams:
	block: ConvBlockParams
	project: ConvParams


@dataclass
class SeparableQKV:
	"""Pointwise 1x1x1 projection followed by a depthwise 3x3x3 convolution."""

	pointwise: ConvParams
	depthwise: ConvParams


@dataclass
class PnaBlockParams:
	up_project: ConvParams
	sa_q: SeparableQKV
	sa_k: SeparableQKV
	sa_v: SeparableQKV
	sa_out: LinearParams
	nca_q: ConvParams
	nca_k: ConvParams
	nca_v: ConvParams
	nca_out: LinearParams
	norm: NormParams
	ffn_in: LinearParams
	ffn_out: LinearParams
	heads: int
	window: int
	query_source: str = 'up'


@dataclass
class MlpParams:
	fc1: LinearParams
	fc2: LinearParams


@dataclass
class SigmParams:
	gamma: MlpParams
	beta: MlpParams


@dataclass
class AttentionParams:
	q: LinearParams
	k: LinearParams
	v: LinearParams
	out: LinearParams


@dataclass
class DcamParams:
	token_project: LinearParams
	text_self: AttentionParams
	text_to_voxel: AttentionParams
	voxel_to_text: AttentionParams
	norm: NormParams
	heads: int


@dataclass
class FusionParams:
	sigm: SigmParams
	dcam: DcamParams


@dataclass
class MultiScaleLogits:
	"""
	Per-scale logit volumes keyed by downsampling factor.

	by_scale[s] has shape (C, X/s, Y/s, Z/s).
	"""

	by_scale: dict[int, Tensor] = field(default_factory=dict)

	def __getitem__(self, scale: int) -> Tensor:
		return self.by_scale[scale]

	def __contains__(self, scale: int) -> bool:
		return scale in self.by_scale

	def __iter__(self) -> Iterator[int]:
		return iter(sorted(self.by_scale))

	def __len__(self) -> int:
		return len(self.by_scale)

	@property
	def scales(self) -> list[int]:
		return sorted(self.by_scale)
