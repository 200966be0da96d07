from typing import Annotated, Literal, Optional, Union

from pydantic import BaseModel, ConfigDict, Field, model_validator

from voxrefine.losses import LossBreakdown
from voxrefine.network.config import RefineConfig
from voxrefine.voxio import GridFormat


class TrainingError(ValueError):
	"""Base class for training errors"""


class DivergenceError(TrainingError):
	"""Error raised when a loss or gradient stops being finite"""


class SampleReadError(TrainingError):
	"""Error raised when a training or validation sample cannot be read"""


class SwapNoise(BaseModel):
	"""Relabel voxels of class `source` as `target` with probability `prob`."""

	kind: Literal["swap"] = "swap"
	source: int = Field(ge=0)
	target: int = Field(ge=0)
	prob: float = Field(ge=0.0, le=1.0)


class DropoutNoise(BaseModel):
	"""Turn occupied voxels empty with probability `prob`."""

	kind: Literal["dropout"] = "dropout"
	prob: float = Field(ge=0.0, le=1.0)


class BlobEraseNoise(BaseModel):
	"""Empty `count` balls of the given voxel radius at random centres."""

	kind: Literal["blob_erase"] = "blob_erase"
	count: int = Field(ge=0)
	radius: int = Field(ge=0)


NoiseSpec = Annotated[Union[SwapNoise, DropoutNoise, BlobEraseNoise], Field(discriminator="kind")]


def default_noise() -> list:
	return [SwapNoise(source=1, target=2, prob=0.8), DropoutNoise(prob=0.2)]


class CorruptionStats(BaseModel):
	changed_fraction: float
	changed_per_spec: list[int]


class SampleEntry(BaseModel):
	"""One scene on disk: simple-grid files, coarse input optional in joint_stub mode."""

	name: Optional[str] = None
	gt: str
	coarse: Optional[str] = None
	text: Optional[str] = None


class FileDataset(BaseModel):
	"""
	Scenes listed on disk. With `grid_format="semkitti"` ground truth and coarse inputs are
	`.label` files (ground truth with its `.invalid` mask) remapped through `remap`.
	"""

	kind: Literal["files"] = "files"
	train: list[SampleEntry]
	val: list[SampleEntry] = Field(default_factory=list)
	grid_format: GridFormat = "grid"
	remap: Optional[str] = None

	@model_validator(mode="after")
	def _check_remap(self) -> "FileDataset":
		if self.grid_format == "semkitti" and self.remap is None:
			raise ValueError("semkitti datasets need a remap file")
		return self


class SyntheticDataset(BaseModel):
	"""Procedurally generated layered scenes; validation reuses the training scenes."""

	kind: Literal["synthetic"] = "synthetic"
	dims: tuple[int, int, int] = (32, 32, 8)
	scenes: int = Field(default=1, ge=1)
	seed: int = 0
	text: bool = False


DatasetSpec = Annotated[Union[FileDataset, SyntheticDataset], Field(discriminator="kind")]


class RunConfig(BaseModel):
	"""Everything one training run needs, loaded from a single JSON document."""

	model_config = ConfigDict(extra="forbid")

	refine: RefineConfig = Field(default_factory=RefineConfig)
	mode: Literal["separate", "joint_stub"] = "separate"
	dataset: DatasetSpec = Field(default_factory=SyntheticDataset)
	noise: list[NoiseSpec] = Field(default_factory=default_noise)
	steps: Optional[int] = Field(default=None, ge=0)
	eval_every: Optional[int] = Field(default=None, ge=1)
	class_weighting: Literal["frequency", "uniform"] = "frequency"
	checkpoint: str = "refiner.ckpt"
	metric_log: str = "metrics.jsonl"

	@model_validator(mode="after")
	def _check_sources(self) -> "RunConfig":
		if self.mode == "separate" and isinstance(self.dataset, FileDataset):
			missing = [entry.gt for entry in self.dataset.train if entry.coarse is None]
			if missing:
				raise ValueError(f"separate mode needs a coarse grid for every training sample, missing for {missing[:3]}")
		return self


class StepRecord(BaseModel):
	kind: Literal["step"] = "step"
	step: int
	epoch: int
	scene: str
	lr: float
	loss: LossBreakdown


class EpochRecord(BaseModel):
	kind: Literal["epoch"] = "epoch"
	epoch: int
	step: int
	iou: float
	miou: float
	miou_present: float
	coarse_miou: float


class TrainResult(BaseModel):
	steps: int
	checkpoint: str
	checkpoint_sha256: str
	final: Optional[EpochRecord] = None
