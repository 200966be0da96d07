"""
Dense float64 tensors with reverse-mode differentiation.
"""

from __future__ import annotations

import logging
from typing import Any, ClassVar, Iterable, Optional, Sequence, Union

import numpy as np

from voxrefine.tensor.models import TensorError

logger = logging.getLogger(__name__)

DTYPE = np.float64

ArrayLike = Union[np.ndarray, float, int, Sequence[float], Sequence[Sequence[float]]]


class Function:
	"""
	Base class for differentiable operations.

	Subclasses implement `forward` on raw arrays and `backward`, which maps the gradient of
	the loss w.r.t. the output to one gradient per input (None where no gradient is needed).
	Anything `backward` needs from the forward pass goes into `self.saved`.
	"""

	name: ClassVar[str] = "function"

	def __init__(self, *inputs: "Tensor"):
		self.inputs = inputs
		self.saved: dict[str, Any] = {}

	def forward(self, *arrays: np.ndarray, **kwargs: Any) -> np.ndarray:
		raise NotImplementedError(f"Forward pass not implemented for {self.name}")

	def backward(self, grad: np.ndarray) -> Sequence[Optional[np.ndarray]]:
		raise NotImplementedError(f"Backward pass not implemented for {self.name}")

	@classmethod
	def apply(cls, *inputs: "Tensor", **kwargs: Any) -> "Tensor":
		fn = cls(*inputs)
		out = fn.forward(*(t.data for t in inputs), **kwargs)
		requires_grad = any(t.requires_grad for t in inputs)
		return Tensor(out, requires_grad=requires_grad, creator=fn if requires_grad else None)

	@staticmethod
	def unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
		"""Sum out axes that numpy broadcasting expanded so `grad` matches `shape`."""
		if grad.shape == shape:
			return grad
		while grad.ndim > len(shape):
			grad = grad.sum(axis=0)
		for axis, extent in enumerate(shape):
			if extent == 1 and grad.shape[axis] != 1:
				grad = grad.sum(axis=axis, keepdims=True)
		return grad


class Tensor:
	"""
	A float64 array that can take part in a differentiation graph.

	Leaves are created directly; every other tensor remembers the `Function` that produced it.
	"""

	__array_priority__ = 100

	def __init__(
		self,
		data: ArrayLike,
		requires_grad: bool = False,
		creator: Optional[Function] = None,
		name: Optional[str] = None,
	):
		self.data = np.ascontiguousarray(data, dtype=DTYPE)
		self.requires_grad = requires_grad
		self.creator = creator
		self.name = name
		self.grad: Optional[np.ndarray] = None

	@property
	def shape(self) -> tuple[int, ...]:
		return self.data.shape

	@property
	def ndim(self) -> int:
		return self.data.ndim

	@property
	def size(self) -> int:
		return self.data.size

	@property
	def is_leaf(self) -> bool:
		return self.creator is None

	def item(self) -> float:
		return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

	def numpy(self) -> np.ndarray:
		return self.data

	def detach(self) -> "Tensor":
		return Tensor(self.data.copy())

	def zero_grad(self) -> None:
		self.grad = None

	def accumulate_grad(self, grad: np.ndarray) -> None:
		if grad.shape != self.data.shape:
			raise TensorError(f"gradient shape {grad.shape} does not match tensor shape {self.data.shape}")
		self.grad = grad.copy() if self.grad is None else self.grad + grad

	def all_finite(self) -> bool:
		return bool(np.isfinite(self.data).all())

	def __repr__(self) -> str:
		label = f", name={self.name!r}" if self.name else ""
		return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad}{label})"

	# arithmetic sugar, routed through the differentiable primitives
	def __add__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
		return F.add(self, other)

	def __radd__(self, other: ArrayLike) -> "Tensor":
		return F.add(other, self)

	def __sub__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
		return F.sub(self, other)

	def __rsub__(self, other: ArrayLike) -> "Tensor":
		return F.sub(other, self)

	def __mul__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
		return F.mul(self, other)

	def __rmul__(self, other: ArrayLike) -> "Tensor":
		return F.mul(other, self)

	def __truediv__(self, other: Union["Tensor", ArrayLike]) -> "Tensor":
		return F.div(self, other)

	def __rtruediv__(self, other: ArrayLike) -> "Tensor":
		return F.div(other, self)

	def __neg__(self) -> "Tensor":
		return F.neg(self)

	def __matmul__(self, other: "Tensor") -> "Tensor":
		return F.matmul(self, other)

	def sum(self, axis: Optional[Union[int, tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
		return F.sum(self, axis=axis, keepdims=keepdims)

	def mean(self, axis: Optional[Union[int, tuple[int, ...]]] = None, keepdims: bool = False) -> "Tensor":
		return F.mean(self, axis=axis, keepdims=keepdims)

	def reshape(self, *shape: int) -> "Tensor":
		if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
			shape = tuple(shape[0])
		return F.reshape(self, shape)

	def permute(self, *axes: int) -> "Tensor":
		if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
			axes = tuple(axes[0])
		return F.permute(self, axes)


class Graph:
	"""
	Topologically ordered record of the functions that produced a tensor.

	Inputs always precede their consumers; `backward` replays the record in reverse.
	"""

	def __init__(self, nodes: list[Function]):
		self.nodes = nodes

	def __len__(self) -> int:
		return len(self.nodes)

	@classmethod
	def trace(cls, output: Tensor) -> "Graph":
		if output.creator is None:
			return cls([])
		order: list[Function] = []
		seen: set[int] = set()
		stack: list[tuple[Function, bool]] = [(output.creator, False)]
		while stack:
			fn, expanded = stack.pop()
			if expanded:
				order.append(fn)
				continue
			if id(fn) in seen:
				continue
			seen.add(id(fn))
			stack.append((fn, True))
			for parent in reversed(fn.inputs):
				if parent.creator is not None and id(parent.creator) not in seen:
					stack.append((parent.creator, False))
		return cls(order)


def backward(loss: Tensor, graph: Optional[Graph] = None) -> Graph:
	"""
	Populate `.grad` of every leaf that `loss` depends on and that requires grad.

	Gradients accumulate into existing `.grad` buffers; clear them with `zero_grad` between steps.
	"""
	if loss.data.size != 1:
		raise TensorError(f"backward needs a scalar loss, got shape {loss.shape}")
	if not loss.requires_grad:
		raise TensorError("loss does not depend on any tensor that requires grad")

	seed = np.ones_like(loss.data)
	if loss.creator is None:
		loss.accumulate_grad(seed)
		return Graph([])

	graph = graph if graph is not None else Graph.trace(loss)
	pending: dict[int, np.ndarray] = {id(loss.creator): seed}
	for fn in reversed(graph.nodes):
		grad = pending.pop(id(fn), None)
		if grad is None:
			continue
		input_grads = fn.backward(grad)
		for tensor, input_grad in zip(fn.inputs, input_grads):
			if input_grad is None or not tensor.requires_grad:
				continue
			if tensor.creator is None:
				tensor.accumulate_grad(input_grad)
			else:
				key = id(tensor.creator)
				pending[key] = pending[key] + input_grad if key in pending else input_grad
	return graph


def zero_grad(tensors: Iterable[Tensor]) -> None:
	for tensor in tensors:
		tensor.zero_grad()


def as_tensor(value: Union[Tensor, ArrayLike]) -> Tensor:
	return value if isinstance(value, Tensor) else Tensor(value)


from voxrefine.tensor import functional as F  # noqa: E402
