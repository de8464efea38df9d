"""Named trainable parameters with gradient slots."""

import math

import numpy as np

from ..splitmix import SplitMix64
from .tensor import Tensor


class ParamStore:
    """Ordered mapping name -> leaf :class:`Tensor`; ``.grad`` holds the gradient slot."""

    def __init__(self):
        self._params = {}

    def add(self, name, value):
        if name in self._params:
            raise KeyError(f"duplicate parameter name {name!r}")
        t = Tensor(np.array(value, dtype=np.float64), requires_grad=True)
        self._params[name] = t
        return t

    def __getitem__(self, name):
        return self._params[name]

    def __contains__(self, name):
        return name in self._params

    def __iter__(self):
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self):
        return self._params.items()

    def names(self):
        return list(self._params)

    def zero_grad(self):
        for t in self._params.values():
            t.grad = None

    def grad(self, name):
        """Gradient of ``name`` (zeros if the loss did not touch it)."""
        t = self._params[name]
        return np.zeros_like(t.data) if t.grad is None else t.grad

    def grads(self):
        return {name: self.grad(name) for name in self._params}

    def values(self):
        return {name: t.data.copy() for name, t in self._params.items()}

    def load(self, values):
        for name, arr in values.items():
            t = self._params[name]
            if t.data.shape != np.shape(arr):
                raise ValueError(f"{name}: shape {np.shape(arr)} does not match {t.data.shape}")
            t.data = np.array(arr, dtype=np.float64)

    def size(self):
        return sum(t.data.size for t in self._params.values())


def init_uniform(rng: SplitMix64, shape):
    """uniform(-s, s) with s = 1/sqrt(fan_in), fan_in = leading dimension."""
    s = 1.0 / math.sqrt(shape[0])
    return rng.uniform_array(shape, -s, s)
