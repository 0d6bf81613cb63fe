"""
Dense tensors with tape-based reverse-mode differentiation

Every op that touches a tensor requiring gradients appends its output to the
thread-local tape together with a closure mapping the output gradient to
parent gradients. ``backward`` walks the tape once in reverse; the tape must be
reset before the next backward pass.
"""
import contextlib
import threading
from typing import Callable, Optional, Sequence, Tuple

import numpy as np
from scipy import special

from skilllab.errors import ShapeError, TapeError

_local = threading.local()


class Tape:
    """Ops recorded since the last reset, in execution order."""

    def __init__(self):
        self.nodes = []
        self.consumed = False

    def __len__(self):
        return len(self.nodes)


def _ctx():
    if not hasattr(_local, 'tape'):
        _local.tape = Tape()
        _local.grad_enabled = True
        _local.dtype = np.float32
    return _local


def reset_tape() -> Tape:
    ctx = _ctx()
    ctx.tape = Tape()
    return ctx.tape


def current_tape() -> Tape:
    return _ctx().tape


def default_dtype():
    return _ctx().dtype


@contextlib.contextmanager
def no_grad():
    ctx = _ctx()
    previous = ctx.grad_enabled
    ctx.grad_enabled = False
    try:
        yield
    finally:
        ctx.grad_enabled = previous


@contextlib.contextmanager
def precision(dtype):
    """Create new tensors with ``dtype`` inside the block (float64 for checks)."""
    ctx = _ctx()
    previous = ctx.dtype
    ctx.dtype = np.dtype(dtype).type
    try:
        yield
    finally:
        ctx.dtype = previous


class Tensor:
    __array_ufunc__ = None   # ndarray (op) Tensor dispatches to the Tensor side

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=default_dtype())
        self.requires_grad = bool(requires_grad)
        self.grad: Optional[np.ndarray] = None
        self._parents: Tuple["Tensor", ...] = ()
        self._backward: Optional[Callable] = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0])

    @property
    def is_leaf(self) -> bool:
        return self._backward is None

    # arithmetic
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __truediv__(self, other):
        if isinstance(other, Tensor):
            raise ShapeError("div: only division by a constant is supported")
        return mul(self, 1.0 / np.asarray(other, dtype=np.float64))

    def __pow__(self, exponent: float):
        return power(self, exponent)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, index):
        return slice_(self, index)

    # unary and shape helpers
    def tanh(self):
        return tanh(self)

    def sigmoid(self):
        return sigmoid(self)

    def relu(self):
        return relu(self)

    def exp(self):
        return exp(self)

    def log(self):
        return log(self)

    def sum(self, axis=None, keepdims: bool = False):
        return sum_(self, axis, keepdims)

    def mean(self, axis=None, keepdims: bool = False):
        return mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def detach(self):
        return detach(self)

    def backward(self):
        backward(self)


def _lift(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def record_op(value, parents: Sequence[Tensor], backward_fn: Callable) -> Tensor:
    """
    Wrap an op result and register it on the tape.

    ``backward_fn`` receives the output gradient and returns one gradient (or
    None) per parent, each shaped like that parent.
    """
    out = Tensor(value)
    ctx = _ctx()
    if ctx.grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
        ctx.tape.nodes.append(out)
    return out


def _unbroadcast(g: np.ndarray, shape: Tuple[int, ...]) -> np.ndarray:
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for i, n in enumerate(shape):
        if n == 1 and g.shape[i] != 1:
            g = g.sum(axis=i, keepdims=True)
    return g


def _broadcast_value(name: str, fn, a: Tensor, b: Tensor):
    try:
        return fn(a.data, b.data)
    except ValueError as e:
        raise ShapeError(f"{name}: incompatible shapes {a.shape} and {b.shape}") from e


# ---------------------------------------------------------------------------
# binary ops

def add(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    value = _broadcast_value('add', np.add, a, b)
    return record_op(value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    value = _broadcast_value('sub', np.subtract, a, b)
    return record_op(value, (a, b), lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b) -> Tensor:
    a, b = _lift(a), _lift(b)
    value = _broadcast_value('mul', np.multiply, a, b)
    return record_op(value, (a, b), lambda g: (_unbroadcast(g * b.data, a.shape),
                                               _unbroadcast(g * a.data, b.shape)))


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading axes broadcast."""
    a, b = _lift(a), _lift(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    value = _broadcast_value('matmul', np.matmul, a, b)

    def back(g):
        ga = g @ np.swapaxes(b.data, -1, -2)
        gb = np.swapaxes(a.data, -1, -2) @ g
        return _unbroadcast(ga, a.shape), _unbroadcast(gb, b.shape)
    return record_op(value, (a, b), back)


# ---------------------------------------------------------------------------
# elementwise

def power(x: Tensor, exponent: float) -> Tensor:
    p = float(exponent)
    return record_op(x.data ** p, (x,), lambda g: (g * p * x.data ** (p - 1.0),))


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return record_op(y, (x,), lambda g: (g * (1.0 - y * y),))


def sigmoid(x: Tensor) -> Tensor:
    y = special.expit(x.data)
    return record_op(y, (x,), lambda g: (g * y * (1.0 - y),))


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return record_op(x.data * mask, (x,), lambda g: (g * mask,))


def exp(x: Tensor) -> Tensor:
    y = np.exp(x.data)
    return record_op(y, (x,), lambda g: (g * y,))


def log(x: Tensor) -> Tensor:
    return record_op(np.log(x.data), (x,), lambda g: (g / x.data,))


def detach(x: Tensor) -> Tensor:
    """Same values, no history: gradients never flow through the result."""
    return Tensor(np.array(x.data, copy=True))


# ---------------------------------------------------------------------------
# reductions and shape ops

def _axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    axes = axis if isinstance(axis, tuple) else (axis,)
    return tuple(a % ndim for a in axes)


def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    value = x.data.sum(axis=axis, keepdims=keepdims)
    axes = _axes(axis, x.ndim)

    def back(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, x.shape).copy(),)
    return record_op(value, (x,), back)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    count = int(np.prod([x.shape[a] for a in _axes(axis, x.ndim)])) if x.ndim else 1
    return mul(sum_(x, axis, keepdims), 1.0 / max(count, 1))


def reshape(x: Tensor, shape) -> Tensor:
    try:
        value = x.data.reshape(shape)
    except ValueError as e:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from e
    return record_op(value, (x,), lambda g: (g.reshape(x.shape),))


def transpose(x: Tensor, axes=None) -> Tensor:
    axes = tuple(range(x.ndim))[::-1] if axes is None else tuple(axes)
    inverse = tuple(np.argsort(axes))
    return record_op(x.data.transpose(axes), (x,), lambda g: (g.transpose(inverse),))


def slice_(x: Tensor, index) -> Tensor:
    value = x.data[index]

    def back(g):
        z = np.zeros_like(x.data)
        np.add.at(z, index, g)
        return (z,)
    return record_op(value, (x,), back)


def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [_lift(t) for t in tensors]
    try:
        value = np.concatenate([t.data for t in tensors], axis=axis)
    except ValueError as e:
        raise ShapeError(f"concat: incompatible shapes {[t.shape for t in tensors]}") from e
    sizes = [t.shape[axis] for t in tensors]
    cuts = np.cumsum(sizes)[:-1]
    return record_op(value, tensors, lambda g: tuple(np.split(g, cuts, axis=axis)))


def gather(table: Tensor, index) -> Tensor:
    """Rows of ``table`` selected by an integer index array (embedding lookup)."""
    index = np.asarray(index, dtype=np.int64)
    if table.ndim != 2:
        raise ShapeError(f"gather: table must be 2-D, got {table.shape}")
    if index.size and (index.min() < 0 or index.max() >= table.shape[0]):
        raise ShapeError(f"gather: index out of range for table of {table.shape[0]} rows")
    value = table.data[index]

    def back(g):
        z = np.zeros_like(table.data)
        np.add.at(z, index, g)
        return (z,)
    return record_op(value, (table,), back)


# ---------------------------------------------------------------------------
# normalisation

def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(f"layer_norm: gain/bias {gamma.shape}/{beta.shape} do not match features {d}")
    mu = x.data.mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(x.data.var(axis=-1, keepdims=True) + eps)
    xhat = (x.data - mu) * inv
    value = xhat * gamma.data + beta.data

    def back(g):
        gx_hat = g * gamma.data
        gx = inv * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                    - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        return gx, (g * xhat).sum(axis=lead), g.sum(axis=lead)
    return record_op(value, (x, gamma, beta), back)


def softmax(x: Tensor, axis: int = -1) -> Tensor:
    y = special.softmax(x.data, axis=axis)
    return record_op(y, (x,), lambda g: (y * (g - (g * y).sum(axis=axis, keepdims=True)),))


def log_softmax(x: Tensor, axis: int = -1) -> Tensor:
    value = x.data - special.logsumexp(x.data, axis=axis, keepdims=True)
    y = np.exp(value)
    return record_op(value, (x,), lambda g: (g - y * g.sum(axis=axis, keepdims=True),))


# ---------------------------------------------------------------------------
# losses

def mse(pred: Tensor, target, reduction: str = 'mean') -> Tensor:
    """Mean squared error; reduction 'mean' (scalar) or 'row' (mean over the last axis)."""
    target = _lift(target)
    if pred.shape != target.shape:
        raise ShapeError(f"mse: prediction {pred.shape} and target {target.shape} differ")
    diff = sub(pred, target)
    sq = mul(diff, diff)
    if reduction == 'row':
        return mean(sq, axis=-1)
    return mean(sq)


def bce(p: Tensor, target, reduction: str = 'mean', eps: float = 1e-7) -> Tensor:
    """Binary cross-entropy of probabilities ``p`` against targets in [0, 1]."""
    target = _lift(target)
    if p.shape != target.shape:
        raise ShapeError(f"bce: probability {p.shape} and target {target.shape} differ")
    pc = np.clip(p.data, eps, 1.0 - eps)
    y = target.data
    value = -(y * np.log(pc) + (1.0 - y) * np.log(1.0 - pc))
    scale = 1.0 / max(value.size, 1) if reduction == 'mean' else 1.0

    def back(g):
        gp = g * scale * (-y / pc + (1.0 - y) / (1.0 - pc))
        gy = g * scale * (np.log(1.0 - pc) - np.log(pc))
        return gp, gy
    out = value.mean() if reduction == 'mean' else value
    return record_op(out, (p, target), back)


def cross_entropy(logits: Tensor, labels) -> Tensor:
    """Mean negative log-likelihood of integer labels under softmax(logits)."""
    labels = np.asarray(labels, dtype=np.int64)
    if logits.ndim != 2 or labels.shape != (logits.shape[0],):
        raise ShapeError(f"cross_entropy: logits {logits.shape} and labels {labels.shape} do not match")
    logp = logits.data - special.logsumexp(logits.data, axis=-1, keepdims=True)
    n = logits.shape[0]
    value = -logp[np.arange(n), labels].mean()

    def back(g):
        grad = np.exp(logp)
        grad[np.arange(n), labels] -= 1.0
        return (g * grad / n,)
    return record_op(value, (logits,), back)


# ---------------------------------------------------------------------------
# backward pass

def backward(loss: Tensor) -> None:
    """
    Accumulate d(loss)/d(leaf) into ``.grad`` of every leaf requiring gradients.

    Raises TapeError when the current tape was already used by a backward pass.
    """
    if loss.size != 1:
        raise ShapeError(f"backward: loss must be a scalar, got shape {loss.shape}")
    tape = current_tape()
    if tape.consumed:
        raise TapeError("backward called twice without reset_tape()")
    tape.consumed = True
    if not loss.requires_grad:
        return
    if loss.is_leaf:
        loss.grad = np.ones_like(loss.data) if loss.grad is None else loss.grad + 1.0
        return
    grads = {id(loss): np.ones_like(loss.data)}
    for node in reversed(tape.nodes):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        for parent, pg in zip(node._parents, node._backward(g)):
            if pg is None or not parent.requires_grad:
                continue
            if parent.is_leaf:
                pg = np.asarray(pg, dtype=parent.data.dtype)
                parent.grad = pg.copy() if parent.grad is None else parent.grad + pg
            else:
                key = id(parent)
                grads[key] = grads[key] + pg if key in grads else pg
