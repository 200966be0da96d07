"""
Named, seeded storage for every learned tensor of a refiner.
"""

from __future__ import annotations

import logging
from typing import Iterator

import numpy as np

from voxrefine.network.models import ConfigMismatchError, ConvParams, LinearParams, NormParams
from voxrefine.tensor import Tensor

logger = logging.getLogger(__name__)


class ParamStore:
    """
    Ordered name -> Tensor registry.

    Tensors are drawn from one seeded generator in registration order, so building the
    same architecture with the same seed reproduces every value bit for bit.
    """

    def __init__(self, seed: int = 0):
        self.rng = np.random.default_rng(seed)
        self.tensors: dict[str, Tensor] = {}

    def __len__(self) -> int:
        return len(self.tensors)

    def __iter__(self) -> Iterator[tuple[str, Tensor]]:
        return iter(self.tensors.items())

    def __getitem__(self, name: str) -> Tensor:
        return self.tensors[name]

    def names(self) -> list[str]:
        return list(self.tensors)

    def register(self, name: str, data: np.ndarray) -> Tensor:
        if name in self.tensors:
            raise ConfigMismatchError(f"parameter {name!r} registered twice")
        tensor = Tensor(data, requires_grad=True, name=name)
        self.tensors[name] = tensor
        return tensor

    def kaiming(self, name: str, shape: tuple[int, ...], fan_in: int) -> Tensor:
        std = np.sqrt(2.0 / fan_in)
        return self.register(name, self.rng.normal(0.0, std, size=shape))

    def conv(self, name: str, c_out: int, c_in: int, k: int, depthwise: bool = False) -> ConvParams:
        if depthwise:
            weight = self.kaiming(f"{name}.weight", (c_out, 1, k, k, k), k ** 3)
        else:
            weight = self.kaiming(f"{name}.weight", (c_out, c_in, k, k, k), c_in * k ** 3)
        return ConvParams(weight, self.register(f"{name}.bias", np.zeros(c_out)))

    def linear(self, name: str, d_out: int, d_in: int) -> LinearParams:
        weight = self.kaiming(f"{name}.weight", (d_out, d_in), d_in)
        return LinearParams(weight, self.register(f"{name}.bias", np.zeros(d_out)))

    def norm(self, name: str, width: int) -> NormParams:
        return NormParams(
            self.register(f"{name}.gain", np.ones(width)),
            self.register(f"{name}.shift", np.zeros(width)),
        )

    def fill(self, prefix: str, value: float = 0.0) -> int:
        """Overwrite every tensor whose name starts with `prefix`; returns how many matched."""
        matched = 0
        for name, tensor in self.tensors.items():
            if name.startswith(prefix):
                tensor.data[...] = value
                matched += 1
        return matched

    def zero_grad(self) -> None:
        for tensor in self.tensors.values():
            tensor.zero_grad()

    def snapshot(self) -> dict[str, np.ndarray]:
        return {name: tensor.data.copy() for name, tensor in self.tensors.items()}

    def load(self, arrays: dict[str, np.ndarray]) -> None:
        missing = sorted(set(self.tensors) - set(arrays))
        extra = sorted(set(arrays) - set(self.tensors))
        if missing or extra:
            raise ConfigMismatchError(f"parameter sets differ: missing {missing[:5]}, unexpected {extra[:5]}")
        for name, tensor in self.tensors.items():
            array = arrays[name]
            if array.shape != tensor.shape:
                raise ConfigMismatchError(f"parameter {name!r} has shape {array.shape}, expected {tensor.shape}")
            tensor.data[...] = array
        logger.debug(f"Loaded {len(arrays)} parameter tensors")

    def count(self) -> int:
        return int(sum(tensor.size for tensor in self.tensors.values()))
