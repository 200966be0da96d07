from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from pydantic import BaseModel, field_validator

SEMKITTI_DIMS = (256, 256, 32)


class VoxIOError(ValueError):
	"""Base class for all voxel I/O errors"""


class FormatError(VoxIOError):
	"""Error raised when a byte buffer does not follow its declared layout"""


class LabelRemapError(VoxIOError):
	"""Error raised when a raw label has no entry in the remap table"""


@dataclass
class SemGrid:
	"""
	Dense labelled voxel volume.

	labels: (X, Y, Z) class indices, 0 = empty.
	valid: (X, Y, Z) booleans, False marks unknown space.
	"""

	labels: np.ndarray
	valid: np.ndarray = field(default=None)

	def __post_init__(self):
		self.labels = np.ascontiguousarray(self.labels, dtype=np.int64)
		if self.labels.ndim != 3:
			raise VoxIOError(f"labels must be a 3D volume, got rank {self.labels.ndim}")
		if self.valid is None:
			self.valid = np.ones(self.labels.shape, dtype=bool)
		self.valid = np.ascontiguousarray(self.valid, dtype=bool)
		if self.valid.shape != self.labels.shape:
			raise VoxIOError(f"validity mask {self.valid.shape} does not match labels {self.labels.shape}")
		if self.labels.size and self.labels.min() < 0:
			raise VoxIOError("labels must be non-negative")

	@property
	def dims(self) -> tuple[int, int, int]:
		return tuple(int(n) for n in self.labels.shape)

	@property
	def max_label(self) -> int:
		return int(self.labels.max()) if self.labels.size else 0

	@classmethod
	def empty(cls, dims: tuple[int, int, int]) -> "SemGrid":
		return cls(np.zeros(dims, dtype=np.int64), np.ones(dims, dtype=bool))

	def copy(self) -> "SemGrid":
		return SemGrid(self.labels.copy(), self.valid.copy())

	def __eq__(self, other: object) -> bool:
		if not isinstance(other, SemGrid):
			return NotImplemented
		return np.array_equal(self.labels, other.labels) and np.array_equal(self.valid, other.valid)


@dataclass
class TextEmbedding:
	"""Precomputed scene text features: one global vector and a token matrix."""

	global_vector: np.ndarray
	tokens: np.ndarray

	def __post_init__(self):
		self.global_vector = np.ascontiguousarray(self.global_vector, dtype=np.float64).reshape(-1)
		self.tokens = np.ascontiguousarray(self.tokens, dtype=np.float64)
		if self.global_vector.size == 0:
			raise VoxIOError("global embedding must have at least one entry")
		if self.tokens.ndim != 2 or self.tokens.shape[0] < 1 or self.tokens.shape[1] < 1:
			raise VoxIOError(f"token embedding must be a non-empty L x D_t matrix, got {self.tokens.shape}")
		if not (np.isfinite(self.global_vector).all() and np.isfinite(self.tokens).all()):
			raise VoxIOError("text embedding contains non-finite values")

	@property
	def global_dim(self) -> int:
		return self.global_vector.size

	@property
	def token_count(self) -> int:
		return self.tokens.shape[0]

	@property
	def token_dim(self) -> int:
		return self.tokens.shape[1]


class LabelRemap(BaseModel):
	"""Raw on-disk label id -> training class id"""

	learning_map: dict[int, int]
	description: Optional[str] = None

	@field_validator("learning_map")
	@classmethod
	def _check_ranges(cls, value: dict[int, int]) -> dict[int, int]:
		for raw, mapped in value.items():
			if not 0 <= raw <= 0xFFFF:
				raise ValueError(f"raw label {raw} does not fit unsigned 16-bit")
			if mapped < 0:
				raise ValueError(f"raw label {raw} maps to negative class {mapped}")
		return value

	@classmethod
	def identity(cls, num_classes: int) -> "LabelRemap":
		return cls(learning_map={c: c for c in range(num_classes + 1)})

	def lookup_table(self) -> np.ndarray:
		table = np.full(0x10000, -1, dtype=np.int64)
		for raw, mapped in self.learning_map.items():
			table[raw] = mapped
		return table
