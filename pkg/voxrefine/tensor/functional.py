"""
Elementwise, reduction and layout primitives.

Each primitive is a `Function` subclass plus a thin wrapper that accepts tensors or plain
numbers. Broadcasting follows numpy; gradients are summed back over broadcast axes.
"""

from __future__ import annotations

from typing import Optional, Sequence, Union

import numpy as np

from voxrefine.tensor.models import ShapeError
from voxrefine.tensor.tensor import ArrayLike, Function, Tensor, as_tensor

Axis = Optional[Union[int, tuple[int, ...]]]


class Add(Function):
	name = "add"

	def forward(self, a, b):
		return a + b

	def backward(self, grad):
		a, b = self.inputs
		return self.unbroadcast(grad, a.shape), self.unbroadcast(grad, b.shape)


class Sub(Function):
	name = "sub"

	def forward(self, a, b):
		return a - b

	def backward(self, grad):
		a, b = self.inputs
		return self.unbroadcast(grad, a.shape), self.unbroadcast(-grad, b.shape)


class Mul(Function):
	name = "mul"

	def forward(self, a, b):
		return a * b

	def backward(self, grad):
		a, b = self.inputs
		return (
			self.unbroadcast(grad * b.data, a.shape),
			self.unbroadcast(grad * a.data, b.shape),
		)


class Div(Function):
	name = "div"

	def forward(self, a, b):
		return a / b

	def backward(self, grad):
		a, b = self.inputs
		return (
			self.unbroadcast(grad / b.data, a.shape),
			self.unbroadcast(-grad * a.data / (b.data * b.data), b.shape),
		)


class Neg(Function):
	name = "neg"

	def forward(self, a):
		return -a

	def backward(self, grad):
		return (-grad,)


class Exp(Function):
	name = "exp"

	def forward(self, a):
		out = np.exp(a)
		self.saved["out"] = out
		return out

	def backward(self, grad):
		return (grad * self.saved["out"],)


class Log(Function):
	name = "log"

	def forward(self, a):
		return np.log(a)

	def backward(self, grad):
		return (grad / self.inputs[0].data,)


class Abs(Function):
	name = "abs"

	def forward(self, a):
		return np.abs(a)

	def backward(self, grad):
		return (grad * np.sign(self.inputs[0].data),)


class ClampMin(Function):
	name = "clamp_min"

	def forward(self, a, *, floor: float):
		self.saved["pass"] = a >= floor
		return np.maximum(a, floor)

	def backward(self, grad):
		return (np.where(self.saved["pass"], grad, 0.0),)


class Sum(Function):
	name = "sum"

	def forward(self, a, *, axis: Axis, keepdims: bool):
		self.saved["axis"] = axis
		self.saved["keepdims"] = keepdims
		return np.sum(a, axis=axis, keepdims=keepdims)

	def backward(self, grad):
		shape = self.inputs[0].shape
		axis = self.saved["axis"]
		if axis is not None and not self.saved["keepdims"]:
			axes = (axis,) if isinstance(axis, int) else axis
			grad = np.expand_dims(grad, tuple(ax % len(shape) for ax in axes))
		return (np.broadcast_to(grad, shape).copy(),)


class Reshape(Function):
	name = "reshape"

	def forward(self, a, *, shape: tuple[int, ...]):
		return a.reshape(shape)

	def backward(self, grad):
		return (grad.reshape(self.inputs[0].shape),)


class Permute(Function):
	name = "permute"

	def forward(self, a, *, axes: tuple[int, ...]):
		self.saved["axes"] = axes
		return np.ascontiguousarray(np.transpose(a, axes))

	def backward(self, grad):
		inverse = np.argsort(self.saved["axes"])
		return (np.ascontiguousarray(np.transpose(grad, inverse)),)


class Concat(Function):
	name = "concat"

	def forward(self, *arrays, axis: int):
		self.saved["axis"] = axis
		self.saved["splits"] = np.cumsum([a.shape[axis] for a in arrays])[:-1]
		return np.concatenate(arrays, axis=axis)

	def backward(self, grad):
		return tuple(np.split(grad, self.saved["splits"], axis=self.saved["axis"]))


class Take(Function):
	name = "take"

	def forward(self, a, *, indices: np.ndarray, axis: int):
		self.saved["indices"] = indices
		self.saved["axis"] = axis
		return np.take(a, indices, axis=axis)

	def backward(self, grad):
		a = self.inputs[0]
		axis = self.saved["axis"] % a.ndim
		out = np.zeros(a.shape)
		index = [slice(None)] * a.ndim
		index[axis] = self.saved["indices"]
		np.add.at(out, tuple(index), grad)
		return (out,)


class MatMul(Function):
	name = "matmul"

	def forward(self, a, b):
		if a.shape[-1] != b.shape[-2]:
			raise ShapeError(f"matmul: contraction axis mismatch {a.shape[-1]} vs {b.shape[-2]}")
		return a @ b

	def backward(self, grad):
		a, b = self.inputs
		grad_a = grad @ np.swapaxes(b.data, -1, -2)
		grad_b = np.swapaxes(a.data, -1, -2) @ grad
		return self.unbroadcast(grad_a, a.shape), self.unbroadcast(grad_b, b.shape)


def add(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
	return Add.apply(as_tensor(a), as_tensor(b))


def sub(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
	return Sub.apply(as_tensor(a), as_tensor(b))


def mul(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
	return Mul.apply(as_tensor(a), as_tensor(b))


def div(a: Union[Tensor, ArrayLike], b: Union[Tensor, ArrayLike]) -> Tensor:
	return Div.apply(as_tensor(a), as_tensor(b))


def neg(a: Tensor) -> Tensor:
	return Neg.apply(a)


def exp(a: Tensor) -> Tensor:
	return Exp.apply(a)


def log(a: Tensor) -> Tensor:
	return Log.apply(a)


def abs_(a: Tensor) -> Tensor:
	return Abs.apply(a)


def clamp_min(a: Tensor, floor: float) -> Tensor:
	return ClampMin.apply(a, floor=floor)


def sum(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:  # noqa: A001
	return Sum.apply(a, axis=axis, keepdims=keepdims)


def mean(a: Tensor, axis: Axis = None, keepdims: bool = False) -> Tensor:
	if axis is None:
		count = a.size
	else:
		axes = (axis,) if isinstance(axis, int) else axis
		count = int(np.prod([a.shape[ax] for ax in axes]))
	return div(sum(a, axis=axis, keepdims=keepdims), float(count))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
	return Reshape.apply(a, shape=tuple(shape))


def permute(a: Tensor, axes: Sequence[int]) -> Tensor:
	return Permute.apply(a, axes=tuple(axes))


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
	return Concat.apply(*tensors, axis=axis)


def take(a: Tensor, indices: np.ndarray, axis: int = 0) -> Tensor:
	return Take.apply(a, indices=np.asarray(indices, dtype=np.intp), axis=axis)


def matmul(a: Tensor, b: Tensor) -> Tensor:
	return MatMul.apply(a, b)
