"""
Volumetric and attention operators used by the refinement network.

Feature volumes are laid out (channel, depth, height, width); a voxel grid's (X, Y, Z)
axes map to (D, H, W). Every operator is differentiable w.r.t. all tensor arguments.
"""

from __future__ import annotations

import logging
import math
from typing import Optional

import numpy as np

from voxrefine.tensor.models import ShapeError, TensorError
from voxrefine.tensor.tensor import Function, Tensor

logger = logging.getLogger(__name__)

DEFAULT_SLOPE = 0.01


def _conv_slices(offset: tuple[int, int, int], out_dims: tuple[int, int, int], stride: int):
	return (slice(None),) + tuple(
		slice(o, o + stride * (n - 1) + 1, stride) for o, n in zip(offset, out_dims)
	)


class Conv3d(Function):
	name = "conv3d"

	def forward(self, x, weight, bias, *, stride: int, padding: int, depthwise: bool):
		k = weight.shape[-1]
		p = padding
		spatial = x.shape[1:]
		out_dims = tuple((n + 2 * p - k) // stride + 1 for n in spatial)
		padded = np.pad(x, ((0, 0), (p, p), (p, p), (p, p))) if p else x
		out = np.zeros((weight.shape[0],) + out_dims)
		for a in range(k):
			for b in range(k):
				for c in range(k):
					patch = padded[_conv_slices((a, b, c), out_dims, stride)]
					if depthwise:
						out += weight[:, 0, a, b, c][:, None, None, None] * patch
					else:
						out += np.tensordot(weight[:, :, a, b, c], patch, axes=(1, 0))
		out += bias[:, None, None, None]
		self.saved.update(padded=padded, out_dims=out_dims, stride=stride, padding=p, depthwise=depthwise)
		return out

	def backward(self, grad):
		x, weight, _ = self.inputs
		padded = self.saved["padded"]
		out_dims = self.saved["out_dims"]
		stride = self.saved["stride"]
		p = self.saved["padding"]
		depthwise = self.saved["depthwise"]
		k = weight.shape[-1]
		w = weight.data
		grad_padded = np.zeros_like(padded)
		grad_weight = np.zeros_like(w)
		for a in range(k):
			for b in range(k):
				for c in range(k):
					window = _conv_slices((a, b, c), out_dims, stride)
					patch = padded[window]
					if depthwise:
						grad_padded[window] += w[:, 0, a, b, c][:, None, None, None] * grad
						grad_weight[:, 0, a, b, c] = (grad * patch).sum(axis=(1, 2, 3))
					else:
						grad_padded[window] += np.tensordot(w[:, :, a, b, c], grad, axes=(0, 0))
						grad_weight[:, :, a, b, c] = np.tensordot(grad, patch, axes=([1, 2, 3], [1, 2, 3]))
		d, h, wd = x.shape[1:]
		grad_x = grad_padded[:, p:p + d, p:p + h, p:p + wd]
		return np.ascontiguousarray(grad_x), grad_weight, grad.sum(axis=(1, 2, 3))


def conv3d(
	x: Tensor,
	weight: Tensor,
	bias: Tensor,
	stride: int = 1,
	padding: int = 0,
	depthwise: bool = False,
) -> Tensor:
	"""
	3D cross-correlation of a (C_in, D, H, W) volume.

	Args:
		x: input volume.
		weight: (C_out, C_in, k, k, k), or (C, 1, k, k, k) when `depthwise`.
		bias: (C_out,).
		stride: 1 or 2.
		padding: zero padding on every spatial side.
		depthwise: convolve each channel with its own kernel.
	"""
	if x.ndim != 4:
		raise ShapeError(f"conv3d: input must be (C, D, H, W), got rank {x.ndim}")
	if weight.ndim != 5 or len(set(weight.shape[2:])) != 1:
		raise ShapeError(f"conv3d: weight must be (C_out, C_in, k, k, k), got {weight.shape}")
	k = weight.shape[-1]
	if stride not in (1, 2):
		raise ShapeError(f"conv3d: stride must be 1 or 2, got {stride}")
	if padding < 0:
		raise ShapeError(f"conv3d: padding must be non-negative, got {padding}")
	if padding > 0 and k % 2 == 0:
		raise ShapeError(f"conv3d: padded convolution needs an odd kernel, got k={k}")
	if depthwise:
		if weight.shape[1] != 1 or weight.shape[0] != x.shape[0]:
			raise ShapeError(
				f"conv3d: depthwise weight must be ({x.shape[0]}, 1, k, k, k), got {weight.shape}"
			)
	elif weight.shape[1] != x.shape[0]:
		raise ShapeError(f"conv3d: channel axis mismatch, input has {x.shape[0]}, weight expects {weight.shape[1]}")
	if bias.shape != (weight.shape[0],):
		raise ShapeError(f"conv3d: bias must have shape ({weight.shape[0]},), got {bias.shape}")
	for axis, extent in zip(("depth", "height", "width"), x.shape[1:]):
		if extent + 2 * padding < k:
			raise ShapeError(f"conv3d: {axis} axis extent {extent} is smaller than the kernel")
	return Conv3d.apply(x, weight, bias, stride=stride, padding=padding, depthwise=depthwise)


class InstanceNorm3d(Function):
	name = "instance_norm3d"

	def forward(self, x, *, eps: float):
		mean = x.mean(axis=(1, 2, 3), keepdims=True)
		centered = x - mean
		var = (centered * centered).mean(axis=(1, 2, 3), keepdims=True)
		denom = var + eps
		if np.any(denom <= 0):
			raise TensorError("instance_norm3d: zero variance channel with eps=0")
		inv_std = 1.0 / np.sqrt(denom)
		normalized = centered * inv_std
		self.saved.update(normalized=normalized, inv_std=inv_std)
		return normalized

	def backward(self, grad):
		normalized = self.saved["normalized"]
		inv_std = self.saved["inv_std"]
		n = normalized[0].size
		grad_sum = grad.sum(axis=(1, 2, 3), keepdims=True)
		dot = (grad * normalized).sum(axis=(1, 2, 3), keepdims=True)
		return (inv_std * (grad - grad_sum / n - normalized * dot / n),)


def instance_norm3d(x: Tensor, eps: float = 1e-5) -> Tensor:
	if x.ndim != 4:
		raise ShapeError(f"instance_norm3d: input must be (C, D, H, W), got rank {x.ndim}")
	if eps < 0:
		raise TensorError(f"instance_norm3d: eps must be non-negative, got {eps}")
	if eps == 0 and int(np.prod(x.shape[1:])) < 2:
		raise TensorError("instance_norm3d: a single-voxel volume needs eps > 0")
	return InstanceNorm3d.apply(x, eps=eps)


class LeakyReLU(Function):
	name = "leaky_relu"

	def forward(self, x, *, slope: float):
		self.saved["slope"] = slope
		return np.where(x >= 0, x, slope * x)

	def backward(self, grad):
		x = self.inputs[0].data
		return (np.where(x >= 0, grad, self.saved["slope"] * grad),)


def leaky_relu(x: Tensor, slope: float = DEFAULT_SLOPE) -> Tensor:
	if not 0 <= slope < 1:
		raise TensorError(f"leaky_relu: slope must lie in [0, 1), got {slope}")
	return LeakyReLU.apply(x, slope=slope)


class Linear(Function):
	name = "linear"

	def forward(self, x, weight, bias):
		return x @ weight.T + bias

	def backward(self, grad):
		x, weight, _ = self.inputs
		flat_grad = grad.reshape(-1, weight.shape[0])
		flat_x = x.data.reshape(-1, weight.shape[1])
		return grad @ weight.data, flat_grad.T @ flat_x, flat_grad.sum(axis=0)


def linear(x: Tensor, weight: Tensor, bias: Tensor) -> Tensor:
	"""Affine map along the last axis: x @ weight.T + bias."""
	if weight.ndim != 2 or x.shape[-1] != weight.shape[1]:
		raise ShapeError(f"linear: last input axis {x.shape[-1]} does not match weight {weight.shape}")
	if bias.shape != (weight.shape[0],):
		raise ShapeError(f"linear: bias must have shape ({weight.shape[0]},), got {bias.shape}")
	return Linear.apply(x, weight, bias)


def _softmax(x: np.ndarray) -> np.ndarray:
	shifted = np.exp(x - x.max(axis=-1, keepdims=True))
	return shifted / shifted.sum(axis=-1, keepdims=True)


class Softmax(Function):
	name = "softmax_lastdim"

	def forward(self, x):
		out = _softmax(x)
		self.saved["out"] = out
		return out

	def backward(self, grad):
		out = self.saved["out"]
		return (out * (grad - (grad * out).sum(axis=-1, keepdims=True)),)


def softmax_lastdim(x: Tensor) -> Tensor:
	return Softmax.apply(x)


class LogSoftmax(Function):
	name = "log_softmax"

	def forward(self, x):
		shifted = x - x.max(axis=-1, keepdims=True)
		out = shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))
		self.saved["out"] = out
		return out

	def backward(self, grad):
		probs = np.exp(self.saved["out"])
		return (grad - probs * grad.sum(axis=-1, keepdims=True),)


def log_softmax_lastdim(x: Tensor) -> Tensor:
	return LogSoftmax.apply(x)


class LayerNorm(Function):
	name = "layer_norm"

	def forward(self, x, gain, shift, *, eps: float):
		mean = x.mean(axis=-1, keepdims=True)
		centered = x - mean
		var = (centered * centered).mean(axis=-1, keepdims=True)
		inv_std = 1.0 / np.sqrt(var + eps)
		normalized = centered * inv_std
		self.saved.update(normalized=normalized, inv_std=inv_std)
		return normalized * gain + shift

	def backward(self, grad):
		_, gain, _ = self.inputs
		normalized = self.saved["normalized"]
		inv_std = self.saved["inv_std"]
		n = normalized.shape[-1]
		grad_norm = grad * gain.data
		grad_x = inv_std * (
			grad_norm
			- grad_norm.sum(axis=-1, keepdims=True) / n
			- normalized * (grad_norm * normalized).sum(axis=-1, keepdims=True) / n
		)
		lead = tuple(range(grad.ndim - 1))
		return grad_x, (grad * normalized).sum(axis=lead), grad.sum(axis=lead)


def layer_norm(x: Tensor, gain: Tensor, shift: Tensor, eps: float = 1e-5) -> Tensor:
	d = x.shape[-1]
	if gain.shape != (d,) or shift.shape != (d,):
		raise ShapeError(f"layer_norm: gain/shift must have shape ({d},)")
	if d < 2 and eps <= 0:
		raise TensorError("layer_norm: a width-1 axis needs eps > 0")
	return LayerNorm.apply(x, gain, shift, eps=eps)


class NearestUpsample3d(Function):
	name = "nearest_upsample3d"

	def forward(self, x, *, factor: int):
		self.saved["factor"] = factor
		out = x
		for axis in (1, 2, 3):
			out = np.repeat(out, factor, axis=axis)
		return out

	def backward(self, grad):
		f = self.saved["factor"]
		c, d, h, w = self.inputs[0].shape
		return (grad.reshape(c, d, f, h, f, w, f).sum(axis=(2, 4, 6)),)


def nearest_upsample3d(x: Tensor, factor: int = 2) -> Tensor:
	if x.ndim != 4:
		raise ShapeError(f"nearest_upsample3d: input must be (C, D, H, W), got rank {x.ndim}")
	if factor < 2:
		raise TensorError(f"nearest_upsample3d: factor must be >= 2, got {factor}")
	return NearestUpsample3d.apply(x, factor=factor)


class MaxPool3d(Function):
	name = "max_pool3d"

	def forward(self, x):
		c, d, h, w = x.shape
		blocks = x.reshape(c, d // 2, 2, h // 2, 2, w // 2, 2).transpose(0, 1, 3, 5, 2, 4, 6)
		blocks = blocks.reshape(c, d // 2, h // 2, w // 2, 8)
		winner = blocks.argmax(axis=-1)
		self.saved["winner"] = winner
		return np.take_along_axis(blocks, winner[..., None], axis=-1)[..., 0]

	def backward(self, grad):
		c, d, h, w = self.inputs[0].shape
		winner = self.saved["winner"]
		blocks = np.zeros((c, d // 2, h // 2, w // 2, 8))
		np.put_along_axis(blocks, winner[..., None], grad[..., None], axis=-1)
		blocks = blocks.reshape(c, d // 2, h // 2, w // 2, 2, 2, 2).transpose(0, 1, 4, 2, 5, 3, 6)
		return (blocks.reshape(c, d, h, w),)


def max_pool3d(x: Tensor) -> Tensor:
	"""2x2x2 max pooling with stride 2; ties go to the first voxel of the block."""
	if x.ndim != 4:
		raise ShapeError(f"max_pool3d: input must be (C, D, H, W), got rank {x.ndim}")
	for axis, extent in zip(("depth", "height", "width"), x.shape[1:]):
		if extent % 2:
			raise ShapeError(f"max_pool3d: {axis} axis extent {extent} is odd")
	return MaxPool3d.apply(x)


class Embedding(Function):
	name = "embedding"

	def forward(self, table, *, indices: np.ndarray):
		self.saved["indices"] = indices
		return table[indices]

	def backward(self, grad):
		table = self.inputs[0]
		out = np.zeros(table.shape)
		np.add.at(out, self.saved["indices"], grad)
		return (out,)


def embedding(table: Tensor, indices: np.ndarray) -> Tensor:
	"""Row lookup: output[..., :] = table[indices[...], :]."""
	indices = np.asarray(indices, dtype=np.intp)
	if indices.size and (indices.min() < 0 or indices.max() >= table.shape[0]):
		raise ShapeError(f"embedding: index out of table range [0, {table.shape[0]})")
	return Embedding.apply(table, indices=indices)


def attention_weights(q: np.ndarray, k: np.ndarray, mask: Optional[np.ndarray] = None) -> np.ndarray:
	"""softmax(q k^T / sqrt(d)) per head, with disallowed keys at -inf before the softmax."""
	scores = q @ np.swapaxes(k, -1, -2) / math.sqrt(q.shape[-1])
	if mask is not None:
		scores = np.where(mask, scores, -np.inf)
	return _softmax(scores)


class Attention(Function):
	name = "attention"

	def forward(self, q, k, v, *, mask: Optional[np.ndarray]):
		probs = attention_weights(q, k, mask)
		self.saved["probs"] = probs
		return probs @ v

	def backward(self, grad):
		q, k, v = (t.data for t in self.inputs)
		probs = self.saved["probs"]
		scale = 1.0 / math.sqrt(q.shape[-1])
		grad_v = np.swapaxes(probs, -1, -2) @ grad
		grad_probs = grad @ np.swapaxes(v, -1, -2)
		grad_scores = probs * (grad_probs - (grad_probs * probs).sum(axis=-1, keepdims=True))
		grad_q = grad_scores @ k * scale
		grad_k = np.swapaxes(grad_scores, -1, -2) @ q * scale
		return grad_q, grad_k, grad_v


def attention(q: Tensor, k: Tensor, v: Tensor, mask: Optional[np.ndarray] = None) -> Tensor:
	"""
	Multi-head scaled dot-product attention.

	Args:
		q: (h, N_q, d) queries.
		k: (h, N_k, d) keys.
		v: (h, N_k, d) values.
		mask: optional boolean (N_q, N_k); False entries are excluded from the softmax.
	"""
	if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
		raise ShapeError("attention: q, k, v must be (heads, tokens, width)")
	if q.shape[0] != k.shape[0] or k.shape[0] != v.shape[0]:
		raise ShapeError("attention: head axis mismatch")
	if q.shape[2] != k.shape[2]:
		raise ShapeError(f"attention: width axis mismatch {q.shape[2]} vs {k.shape[2]}")
	if k.shape[1] != v.shape[1]:
		raise ShapeError(f"attention: key axis mismatch {k.shape[1]} vs {v.shape[1]}")
	if mask is not None:
		mask = np.asarray(mask, dtype=bool)
		if mask.shape != (q.shape[1], k.shape[1]):
			raise ShapeError(f"attention: mask must be {(q.shape[1], k.shape[1])}, got {mask.shape}")
		if not mask.any(axis=1).all():
			raise TensorError("attention: a query row has no allowed key")
	return Attention.apply(q, k, v, mask=mask)


def neighborhood_index(dims: tuple[int, int, int], window: int) -> np.ndarray:
	"""
	Linear key indices of the window around every voxel, shape (D*H*W, keys).

	The window is shifted inward at the boundaries so it never leaves the volume; along an
	axis shorter than the window the whole axis is used.
	"""
	if window < 1 or window % 2 == 0:
		raise TensorError(f"neighborhood window must be odd and >= 1, got {window}")
	radius = window // 2
	per_axis = []
	for extent in dims:
		span = min(window, extent)
		centers = np.arange(extent)
		start = np.clip(centers - radius, 0, extent - span)
		per_axis.append(start[:, None] + np.arange(span)[None, :])
	d, h, w = dims
	ix, iy, iz = per_axis
	keys = (
		ix[:, None, None, :, None, None] * (h * w)
		+ iy[None, :, None, None, :, None] * w
		+ iz[None, None, :, None, None, :]
	)
	return keys.reshape(d * h * w, -1)


def neighborhood_attention_weights(q: np.ndarray, k: np.ndarray, index: np.ndarray) -> np.ndarray:
	gathered = k[:, index]
	scores = np.einsum("hnd,hnmd->hnm", q, gathered) / math.sqrt(q.shape[-1])
	return _softmax(scores)


class NeighborhoodAttention(Function):
	name = "neighborhood_attention"

	def forward(self, q, k, v, *, index: np.ndarray):
		probs = neighborhood_attention_weights(q, k, index)
		self.saved.update(probs=probs, index=index)
		return np.einsum("hnm,hnmd->hnd", probs, v[:, index])

	def backward(self, grad):
		q, k, v = (t.data for t in self.inputs)
		probs = self.saved["probs"]
		index = self.saved["index"]
		scale = 1.0 / math.sqrt(q.shape[-1])
		keys = k[:, index]
		values = v[:, index]
		grad_v = np.zeros_like(v)
		np.add.at(grad_v, (slice(None), index), np.einsum("hnm,hnd->hnmd", probs, grad))
		grad_probs = np.einsum("hnd,hnmd->hnm", grad, values)
		grad_scores = probs * (grad_probs - (grad_probs * probs).sum(axis=-1, keepdims=True))
		grad_q = np.einsum("hnm,hnmd->hnd", grad_scores, keys) * scale
		grad_k = np.zeros_like(k)
		np.add.at(grad_k, (slice(None), index), np.einsum("hnm,hnd->hnmd", grad_scores, q) * scale)
		return grad_q, grad_k, grad_v


def neighborhood_attention(q: Tensor, k: Tensor, v: Tensor, index: np.ndarray) -> Tensor:
	"""Attention where query n only sees the keys listed in `index[n]`."""
	if q.shape != k.shape or k.shape != v.shape:
		raise ShapeError(f"neighborhood_attention: q, k, v shapes differ: {q.shape}, {k.shape}, {v.shape}")
	if index.shape[0] != q.shape[1]:
		raise ShapeError(f"neighborhood_attention: index covers {index.shape[0]} queries, expected {q.shape[1]}")
	return NeighborhoodAttention.apply(q, k, v, index=np.asarray(index, dtype=np.intp))
