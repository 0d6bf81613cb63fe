"""
Network building blocks on top of the tensor core
"""
import math
from typing import Optional

import numpy as np

from skilllab.diffcore.tensor import Tensor, matmul, reshape, softmax, transpose, add
from skilllab.errors import ShapeError


def glorot(rng: np.random.Generator, fan_in: int, fan_out: int, scale: float = 1.0) -> np.ndarray:
    """Uniform Glorot initialisation of a (fan_in, fan_out) weight matrix."""
    limit = scale * math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=(fan_in, fan_out)).astype(np.float32)


def normal_init(rng: np.random.Generator, shape, std: float = 0.02) -> np.ndarray:
    return (std * rng.standard_normal(shape)).astype(np.float32)


def dense(x: Tensor, w: Tensor, b: Optional[Tensor] = None) -> Tensor:
    y = matmul(x, w)
    return y if b is None else add(y, b)


def sinusoidal_features(tau: np.ndarray, n: int) -> np.ndarray:
    """
    Sine/cosine features of flow times in [0, 1], shape (..., n).

    Frequencies are powers of two times pi.
    """
    tau = np.asarray(tau, dtype=np.float64)[..., None]
    freqs = math.pi * 2.0 ** np.arange(n // 2)
    angles = tau * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1).astype(np.float32)


def _split_heads(x: Tensor, n_heads: int) -> Tensor:
    b, t, d = x.shape
    return transpose(reshape(x, (b, t, n_heads, d // n_heads)), (0, 2, 1, 3))


def multihead_attention(q: Tensor, k: Tensor, v: Tensor, n_heads: int, out_w: Tensor,
                        out_b: Optional[Tensor] = None) -> Tensor:
    """
    Scaled dot-product attention over projected queries, keys and values

    Parameters:
    -----------
    q : Tensor of shape (B, Tq, D)
        Projected queries
    k, v : Tensor of shape (B, Tk, D)
        Projected keys and values
    n_heads : int
        Number of heads; must divide D
    out_w, out_b : Tensor
        Output projection (D, D_out) and optional bias (D_out,)

    Returns:
    --------
    Tensor of shape (B, Tq, D_out): heads concatenated, then projected
    """
    squeeze = q.ndim == 2
    if squeeze:
        q, k, v = (reshape(t, (1,) + t.shape) for t in (q, k, v))
    if q.ndim != 3 or k.ndim != 3 or v.ndim != 3:
        raise ShapeError(f"multihead_attention: expected (B, T, D) inputs, got {q.shape}, {k.shape}, {v.shape}")
    b, tq, d = q.shape
    if k.shape[-1] != d or v.shape[-1] != d or k.shape[:2] != v.shape[:2] or k.shape[0] != b:
        raise ShapeError(f"multihead_attention: q {q.shape}, k {k.shape}, v {v.shape} do not match")
    if d % n_heads:
        raise ShapeError(f"multihead_attention: feature dim {d} not divisible by {n_heads} heads")
    qh, kh, vh = (_split_heads(t, n_heads) for t in (q, k, v))
    scores = matmul(qh, transpose(kh, (0, 1, 3, 2))) * (1.0 / math.sqrt(d // n_heads))
    heads = matmul(softmax(scores, axis=-1), vh)
    merged = reshape(transpose(heads, (0, 2, 1, 3)), (b, tq, d))
    out = dense(merged, out_w, out_b)
    if squeeze:
        out = reshape(out, out.shape[1:])
    return out
