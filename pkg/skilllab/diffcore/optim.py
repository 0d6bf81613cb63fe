"""
Parameter sets and the Adam optimiser
"""
from collections import OrderedDict
from typing import Dict, Iterator, Tuple

import numpy as np

from skilllab.diffcore.tensor import Tensor
from skilllab.errors import FrozenError, ShapeError, TapeError


class ParameterSet:
    """
    Named trainable tensors plus Adam moment slots and a step counter.

    Once frozen, ``adam_step`` refuses to update the set.
    """

    def __init__(self):
        self._params: "OrderedDict[str, Tensor]" = OrderedDict()
        self.m: Dict[str, np.ndarray] = {}
        self.v: Dict[str, np.ndarray] = {}
        self.step = 0
        self.frozen = False

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._params:
            raise ValueError(f"duplicate parameter '{name}'")
        t = Tensor(np.asarray(value, dtype=np.float32), requires_grad=True)
        self._params[name] = t
        self.m[name] = np.zeros_like(t.data)
        self.v[name] = np.zeros_like(t.data)
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._params[name]

    def __contains__(self, name: str) -> bool:
        return name in self._params

    def __iter__(self) -> Iterator[str]:
        return iter(self._params)

    def __len__(self):
        return len(self._params)

    def items(self) -> Iterator[Tuple[str, Tensor]]:
        return iter(self._params.items())

    def count(self, prefix: str = "") -> int:
        """Number of scalar parameters, optionally only names starting with prefix."""
        return sum(t.size for n, t in self._params.items() if n.startswith(prefix))

    def freeze(self) -> None:
        self.frozen = True
        for t in self._params.values():
            t.requires_grad = False
            t.grad = None

    def zero_grad(self) -> None:
        for t in self._params.values():
            t.grad = np.zeros_like(t.data)

    def clear_grad(self) -> None:
        for t in self._params.values():
            t.grad = None

    def cast(self, dtype) -> None:
        """Change storage precision in place (used by gradient checks)."""
        for name, t in self._params.items():
            t.data = t.data.astype(dtype)
            if t.grad is not None:
                t.grad = t.grad.astype(dtype)

    def state_dict(self) -> "OrderedDict[str, np.ndarray]":
        return OrderedDict((n, t.data.copy()) for n, t in self._params.items())

    def load_state_dict(self, values: Dict[str, np.ndarray], prefix: str = "") -> None:
        for name, t in self._params.items():
            key = prefix + name
            if key not in values:
                raise ShapeError(f"checkpoint has no parameter '{key}'")
            value = np.asarray(values[key], dtype=np.float32)
            if value.shape != t.shape:
                raise ShapeError(f"parameter '{key}' has shape {value.shape}, expected {t.shape}")
            t.data = value.copy()


def clip_grad_norm(params: ParameterSet, max_norm: float) -> float:
    """Scale gradients so their global L2 norm is at most max_norm; returns the norm before."""
    total = float(np.sqrt(sum(float(np.sum(t.grad.astype(np.float64) ** 2))
                              for _, t in params.items() if t.grad is not None)))
    if max_norm > 0 and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for _, t in params.items():
            if t.grad is not None:
                t.grad = t.grad * scale
    return total


def adam_step(params: ParameterSet, lr: float, beta1: float = 0.9, beta2: float = 0.999,
              eps: float = 1e-8) -> None:
    """
    One bias-corrected Adam update, then clear the gradients

    Parameters:
    -----------
    params : ParameterSet
        Parameters with populated gradients
    lr, beta1, beta2, eps : float
        Step size, moment decay rates and denominator floor
    """
    if params.frozen:
        raise FrozenError("parameter set is frozen")
    missing = [n for n, t in params.items() if t.grad is None]
    if missing:
        raise TapeError(f"missing gradient for parameter '{missing[0]}'")
    params.step += 1
    t = params.step
    for name, p in params.items():
        g = p.grad.astype(np.float32)
        m = params.m[name] = beta1 * params.m[name] + (1.0 - beta1) * g
        v = params.v[name] = beta2 * params.v[name] + (1.0 - beta2) * g * g
        m_hat = m / (1.0 - beta1 ** t)
        v_hat = v / (1.0 - beta2 ** t)
        p.data = (p.data - lr * m_hat / (np.sqrt(v_hat) + eps)).astype(np.float32)
    params.clear_grad()
