"""
Parameterised layers

Each layer registers its tensors in a shared ParameterSet under a dotted prefix
and is called like a function on Tensors.
"""
from typing import Sequence

import numpy as np

from skilllab.diffcore import (
    ParameterSet, Tensor, dense, gather, glorot, layer_norm, multihead_attention, normal_init, tanh,
)


class Linear:
    def __init__(self, params: ParameterSet, name: str, d_in: int, d_out: int,
                 rng: np.random.Generator, scale: float = 1.0):
        self.w = params.add(f"{name}.w", glorot(rng, d_in, d_out, scale))
        self.b = params.add(f"{name}.b", np.zeros(d_out, dtype=np.float32))
        self.d_in, self.d_out = d_in, d_out

    def __call__(self, x: Tensor) -> Tensor:
        return dense(x, self.w, self.b)

    @staticmethod
    def count(d_in: int, d_out: int) -> int:
        return d_in * d_out + d_out


class MLP:
    """tanh hidden layers followed by a linear output layer."""

    def __init__(self, params: ParameterSet, name: str, d_in: int, hidden: Sequence[int], d_out: int,
                 rng: np.random.Generator, scale: float = 1.0):
        dims = [d_in] + list(hidden) + [d_out]
        self.layers = [Linear(params, f"{name}.{i}", dims[i], dims[i + 1], rng, scale)
                       for i in range(len(dims) - 1)]

    def __call__(self, x: Tensor) -> Tensor:
        for layer in self.layers[:-1]:
            x = tanh(layer(x))
        return self.layers[-1](x)

    @staticmethod
    def count(d_in: int, hidden: Sequence[int], d_out: int) -> int:
        dims = [d_in] + list(hidden) + [d_out]
        return sum(Linear.count(dims[i], dims[i + 1]) for i in range(len(dims) - 1))


class LayerNorm:
    def __init__(self, params: ParameterSet, name: str, d: int):
        self.gamma = params.add(f"{name}.gamma", np.ones(d, dtype=np.float32))
        self.beta = params.add(f"{name}.beta", np.zeros(d, dtype=np.float32))

    def __call__(self, x: Tensor) -> Tensor:
        return layer_norm(x, self.gamma, self.beta)

    @staticmethod
    def count(d: int) -> int:
        return 2 * d


class Embedding:
    def __init__(self, params: ParameterSet, name: str, n: int, d: int, rng: np.random.Generator):
        self.table = params.add(f"{name}.table", normal_init(rng, (n, d), std=0.5))

    def __call__(self, index: np.ndarray) -> Tensor:
        return gather(self.table, index)

    @staticmethod
    def count(n: int, d: int) -> int:
        return n * d


class CrossAttention:
    """Queries from one token set, keys and values from another, own QKV projections."""

    def __init__(self, params: ParameterSet, name: str, d: int, n_heads: int,
                 rng: np.random.Generator, scale: float = 1.0):
        self.ln = LayerNorm(params, f"{name}.ln", d)
        self.wq = params.add(f"{name}.wq", glorot(rng, d, d, scale))
        self.wk = params.add(f"{name}.wk", glorot(rng, d, d, scale))
        self.wv = params.add(f"{name}.wv", glorot(rng, d, d, scale))
        self.out = Linear(params, f"{name}.out", d, d, rng, scale)
        self.n_heads = n_heads

    def __call__(self, queries: Tensor, context: Tensor) -> Tensor:
        q_in, kv_in = self.ln(queries), self.ln(context)
        return multihead_attention(dense(q_in, self.wq), dense(kv_in, self.wk), dense(kv_in, self.wv),
                                   self.n_heads, self.out.w, self.out.b)

    @staticmethod
    def count(d: int) -> int:
        return LayerNorm.count(d) + 3 * d * d + Linear.count(d, d)
