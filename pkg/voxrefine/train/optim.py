"""
AdamW with decoupled weight decay over a named parameter set.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from voxrefine.tensor import Tensor
from voxrefine.train.models import DivergenceError

logger = logging.getLogger(__name__)


@dataclass
class AdamState:
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adamw_step(
    params: Mapping[str, Tensor],
    state: AdamState,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.99),
    eps: float = 1e-8,
    weight_decay: float = 0.01,
) -> AdamState:
    """
    One in-place AdamW update of every tensor in `params` from its `.grad`.

    Weight decay shrinks each parameter by (1 - lr * weight_decay) before the bias-corrected
    adaptive step. Tensors without a gradient are updated as if it were zero.
    """
    for name, tensor in params.items():
        if tensor.grad is not None and not np.isfinite(tensor.grad).all():
            raise DivergenceError(f"non-finite gradient in {name}")

    beta1, beta2 = betas
    state.step += 1
    correction1 = 1.0 - beta1 ** state.step
    correction2 = 1.0 - beta2 ** state.step
    for name, tensor in params.items():
        grad = tensor.grad if tensor.grad is not None else np.zeros_like(tensor.data)
        m = state.m.get(name)
        v = state.v.get(name)
        m = (1.0 - beta1) * grad if m is None else beta1 * m + (1.0 - beta1) * grad
        v = (1.0 - beta2) * grad * grad if v is None else beta2 * v + (1.0 - beta2) * grad * grad
        state.m[name] = m
        state.v[name] = v
        if weight_decay:
            tensor.data *= 1.0 - lr * weight_decay
        tensor.data -= lr * (m / correction1) / (np.sqrt(v / correction2) + eps)
    return state


class AdamW:
    """Stateful wrapper binding `adamw_step` to one parameter set."""

    def __init__(
        self,
        params: Mapping[str, Tensor],
        betas: tuple[float, float] = (0.9, 0.99),
        eps: float = 1e-8,
        weight_decay: float = 0.01,
    ):
        self.params = dict(params)
        self.betas = betas
        self.eps = eps
        self.weight_decay = weight_decay
        self.state = AdamState()

    def step(self, lr: float) -> None:
        adamw_step(self.params, self.state, lr, self.betas, self.eps, self.weight_decay)

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()
