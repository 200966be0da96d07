from dataclasses import dataclass
from typing import Callable

import numpy as np
from pydantic import BaseModel

from voxrefine.tensor import Tensor


class GradCheckError(ValueError):
	"""Error raised for unknown or malformed gradient check cases"""


@dataclass
class CaseInstance:
	"""
	One random instance of a differentiable computation.

	forward() rebuilds the output from the current values of `params`; the checker perturbs
	those values in place.
	"""

	params: dict[str, Tensor]
	forward: Callable[[], Tensor]


@dataclass
class GradCase:
	"""Represents a registered gradient check case"""

	name: str
	description: str
	build: Callable[[np.random.Generator], CaseInstance]
	negative_control: bool = False


class GradCheckResult(BaseModel):
	op: str
	description: str
	trials: int
	max_rel_err: float
	passed: bool


class GradCheckReport(BaseModel):
	tol: float
	eps: float
	atol: float
	results: list[GradCheckResult]

	@property
	def passed(self) -> bool:
		return all(result.passed for result in self.results)

	@property
	def failures(self) -> list[str]:
		return [result.op for result in self.results if not result.passed]
