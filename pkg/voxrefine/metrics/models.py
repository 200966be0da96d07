from dataclasses import dataclass
from typing import Optional

import numpy as np
from pydantic import BaseModel

# SemanticKITTI semantic classes after the standard remap; index 0 is empty
SEMKITTI_CLASSES = (
	'empty', 'car', 'bicycle', 'motorcycle', 'truck', 'other-vehicle', 'person', 'bicyclist',
	'motorcyclist', 'road', 'parking', 'sidewalk', 'other-ground', 'building', 'fence',
	'vegetation', 'trunk', 'terrain', 'pole', 'traffic-sign',
)


class MetricsError(ValueError):
	"""Error raised when predictions and ground truth cannot be compared"""


@dataclass
class ConfusionMatrix:
	"""
	Voxel tally over known space.

	counts[g, p] is the number of valid voxels with ground truth g predicted as p; class 0
	is empty.
	"""

	num_classes: int
	counts: Optional[np.ndarray] = None

	def __post_init__(self):
		if self.num_classes < 2:
			raise MetricsError(f"need at least 2 classes, got {self.num_classes}")
		if self.counts is None:
			self.counts = np.zeros((self.num_classes, self.num_classes), dtype=np.int64)
		self.counts = np.asarray(self.counts, dtype=np.int64)
		if self.counts.shape != (self.num_classes, self.num_classes):
			raise MetricsError(f"counts must be {self.num_classes}x{self.num_classes}, got {self.counts.shape}")

	@property
	def total(self) -> int:
		return int(self.counts.sum())

	def copy(self) -> "ConfusionMatrix":
		return ConfusionMatrix(self.num_classes, self.counts.copy())

	def __add__(self, other: "ConfusionMatrix") -> "ConfusionMatrix":
		if other.num_classes != self.num_classes:
			raise MetricsError(f"cannot merge {self.num_classes}- and {other.num_classes}-class matrices")
		return ConfusionMatrix(self.num_classes, self.counts + other.counts)


class CompletionIoU(BaseModel):
	"""Occupancy IoU; `degenerate` marks the all-empty case scored as 1."""

	iou: float
	degenerate: bool = False


class SemanticIoU(BaseModel):
	per_class: list[float]
	mean: float
	present_mean: float
	present: list[bool]


class SceneMetrics(BaseModel):
	"""One table row: a sequence (or the aggregate) with its scores."""

	sequence: str
	iou: float
	miou: float
	miou_present: float
	per_class: list[float]
	degenerate: bool = False


class MetricsReport(BaseModel):
	rows: list[SceneMetrics]
	class_names: list[str]

	@property
	def aggregate(self) -> SceneMetrics:
		return self.rows[-1]
