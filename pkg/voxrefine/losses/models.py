from dataclasses import dataclass

import numpy as np
from pydantic import BaseModel


class LossError(ValueError):
	"""Error raised when a loss cannot be evaluated on its inputs"""


@dataclass
class ClassWeights:
	"""Positive per-class weights, one entry per logit channel."""

	w: np.ndarray

	def __post_init__(self):
		self.w = np.ascontiguousarray(self.w, dtype=np.float64).reshape(-1)
		if self.w.size == 0:
			raise LossError("class weights must not be empty")
		if not np.isfinite(self.w).all() or (self.w <= 0).any():
			raise LossError(f"class weights must be finite and positive, got {self.w.tolist()}")

	def __len__(self) -> int:
		return self.w.size

	@classmethod
	def uniform(cls, num_classes: int) -> "ClassWeights":
		return cls(np.ones(num_classes))


class LossBreakdown(BaseModel):
	"""Weighted loss terms of one step; `total` is their sum."""

	ce: float = 0.0
	scal_geo: float = 0.0
	scal_sem: float = 0.0
	lovasz: float = 0.0
	total: float = 0.0
