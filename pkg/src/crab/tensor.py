"""Dense float64 tensors with reverse-mode automatic differentiation.

Every operation returns a new :class:`Tensor` that remembers its inputs and a
closure mapping the output gradient to input gradients. :class:`Tape`
linearises that graph in topological order and replays it backwards.

Tensors have rank 0 to 3. A leading batch axis is allowed on any operand;
binary elementwise ops follow numpy broadcasting and matmul shares a rank-2
operand across the batch.
"""

from __future__ import annotations

from typing import Callable, Iterable, Sequence

import numpy as np

from crab.errors import ConfigError, ContractError, DimensionError, VocabError

MAX_RANK = 3

BackwardFn = Callable[[np.ndarray], Sequence["np.ndarray | None"]]


class Tensor:
    """A value in the computation graph.

    Args:
        data: Anything ``np.asarray`` accepts. Copied and cast to float64.
        requires_grad: Whether gradients should be accumulated into ``grad``.
    """

    __slots__ = ("data", "requires_grad", "grad", "op", "_parents", "_backward")

    def __init__(self, data, requires_grad: bool = False):
        arr = np.array(data, dtype=np.float64)
        if arr.ndim > MAX_RANK:
            raise DimensionError(f"tensor rank {arr.ndim} exceeds {MAX_RANK}: shape {arr.shape}")
        self.data = arr
        self.requires_grad = requires_grad
        self.grad: np.ndarray | None = None
        self.op = "leaf"
        self._parents: tuple[Tensor, ...] = ()
        self._backward: BackwardFn | None = None

    @classmethod
    def _result(cls, data: np.ndarray, parents: tuple[Tensor, ...], backward: BackwardFn, op: str) -> Tensor:
        out = cls.__new__(cls)
        if data.ndim > MAX_RANK:
            raise DimensionError(f"{op} would produce rank {data.ndim}: shape {data.shape}")
        out.data = data
        out.grad = None
        out.op = op
        out.requires_grad = any(p.requires_grad for p in parents)
        if out.requires_grad:
            out._parents = parents
            out._backward = backward
        else:
            out._parents = ()
            out._backward = None
        return out

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def zero_grad(self) -> None:
        self.grad = None

    def detach(self) -> Tensor:
        return Tensor(self.data)

    def backward(self) -> None:
        backward(self)

    def __repr__(self) -> str:
        flag = ", requires_grad=True" if self.requires_grad else ""
        return f"Tensor(shape={self.shape}, op={self.op}{flag})"

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

    def __truediv__(self, other):
        return div(self, other)

    def __rtruediv__(self, other):
        return div(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __rmatmul__(self, other):
        return matmul(other, self)


def as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


class Tape:
    """Executed operations reachable from ``root``, inputs before outputs."""

    def __init__(self, root: Tensor):
        order: list[Tensor] = []
        seen: set[int] = set()
        stack: list[tuple[Tensor, bool]] = [(root, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for parent in node._parents:
                if parent.requires_grad and id(parent) not in seen:
                    stack.append((parent, False))
        self.root = root
        self.ops = order

    def __len__(self) -> int:
        return len(self.ops)

    def backward(self) -> None:
        pending: dict[int, np.ndarray] = {id(self.root): np.ones_like(self.root.data)}
        for node in reversed(self.ops):
            g = pending.pop(id(node), None)
            if g is None:
                continue
            node.grad = g if node.grad is None else node.grad + g
            if node._backward is None:
                continue
            for parent, pg in zip(node._parents, node._backward(g)):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                pending[key] = pg if key not in pending else pending[key] + pg


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(t) into ``t.grad`` for every reachable tensor."""
    if loss.data.size != 1:
        raise ContractError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        return
    Tape(loss).backward()


def _unbroadcast(grad: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if grad.shape == shape:
        return grad
    extra = grad.ndim - len(shape)
    if extra > 0:
        grad = grad.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and grad.shape[i] != 1)
    if axes:
        grad = grad.sum(axis=axes, keepdims=True)
    return grad.reshape(shape)


def _broadcast_shape(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} do not broadcast") from None


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "add")

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(g, b.shape)

    return Tensor._result(a.data + b.data, (a, b), back, "add")


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "sub")

    def back(g):
        return _unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)

    return Tensor._result(a.data - b.data, (a, b), back, "sub")


def mul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "mul")

    def back(g):
        return _unbroadcast(g * b.data, a.shape), _unbroadcast(g * a.data, b.shape)

    return Tensor._result(a.data * b.data, (a, b), back, "mul")


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _broadcast_shape(a, b, "div")
    out = a.data / b.data

    def back(g):
        return _unbroadcast(g / b.data, a.shape), _unbroadcast(-g * out / b.data, b.shape)

    return Tensor._result(out, (a, b), back, "div")


def matmul(a, b) -> Tensor:
    """Matrix product over the last two axes; leading batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")
    try:
        out = a.data @ b.data
    except ValueError:
        raise DimensionError(f"matmul: batch axes of {a.shape} and {b.shape} disagree") from None

    def back(g):
        ga = _unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape) if b.requires_grad else None
        return ga, gb

    return Tensor._result(out, (a, b), back, "matmul")


def transpose(x) -> Tensor:
    """Swap the last two axes."""
    x = as_tensor(x)
    if x.ndim < 2:
        raise DimensionError(f"transpose needs rank >= 2, got {x.shape}")

    def back(g):
        return (np.swapaxes(g, -1, -2),)

    return Tensor._result(np.ascontiguousarray(np.swapaxes(x.data, -1, -2)), (x,), back, "transpose")


def concat(parts: Sequence[Tensor], axis: int = -1) -> Tensor:
    """Join tensors along ``axis`` (columns by default)."""
    if not parts:
        raise ContractError("concat needs at least one part")
    parts = [as_tensor(p) for p in parts]
    ndim = parts[0].ndim
    ax = axis % ndim
    ref = parts[0].shape
    for p in parts[1:]:
        if p.ndim != ndim or any(p.shape[i] != ref[i] for i in range(ndim) if i != ax):
            raise DimensionError(f"concat along axis {axis}: {ref} vs {p.shape}")
    sizes = [p.shape[ax] for p in parts]
    bounds = np.cumsum(sizes)[:-1]

    def back(g):
        return tuple(np.split(g, bounds, axis=ax))

    return Tensor._result(np.concatenate([p.data for p in parts], axis=ax), tuple(parts), back, "concat")


def take(x, start: int, stop: int, axis: int = -1) -> Tensor:
    """Contiguous slice ``[start, stop)`` along ``axis``."""
    x = as_tensor(x)
    ax = axis % x.ndim
    if not 0 <= start < stop <= x.shape[ax]:
        raise DimensionError(f"take [{start}, {stop}) out of range for axis {axis} of {x.shape}")
    index = [slice(None)] * x.ndim
    index[ax] = slice(start, stop)
    index = tuple(index)

    def back(g):
        full = np.zeros_like(x.data)
        full[index] = g
        return (full,)

    return Tensor._result(x.data[index].copy(), (x,), back, "take")


def split(x, sizes: Iterable[int], axis: int = -1) -> list[Tensor]:
    """Inverse of :func:`concat`: consecutive slices of the given sizes."""
    x = as_tensor(x)
    sizes = list(sizes)
    if int(np.sum(sizes)) != x.shape[axis]:
        raise DimensionError(f"split sizes {sizes} do not cover axis {axis} of {x.shape}")
    out, start = [], 0
    for n in sizes:
        out.append(take(x, start, start + n, axis))
        start += n
    return out


def sum(x, axis: int | None = None, keepdims: bool = False) -> Tensor:  # noqa: A001
    x = as_tensor(x)

    def back(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, x.shape).copy(),)

    return Tensor._result(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), (x,), back, "sum")


def mean(x, axis: int | None = None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    n = x.data.size if axis is None else x.shape[axis]
    return mul(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = np.exp(x.data)

    def back(g):
        return (g * y,)

    return Tensor._result(y, (x,), back, "exp")


def leaky_relu(x, alpha: float = 0.01) -> Tensor:
    """``x`` where positive, ``alpha * x`` elsewhere; slope ``alpha`` at 0."""
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"leaky_relu slope must lie in (0, 1), got {alpha}")
    x = as_tensor(x)
    pos = x.data > 0

    def back(g):
        return (np.where(pos, g, alpha * g),)

    return Tensor._result(np.where(pos, x.data, alpha * x.data), (x,), back, "leaky_relu")


def _stable_sigmoid(v: np.ndarray) -> np.ndarray:
    z = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = _stable_sigmoid(x.data)

    def back(g):
        return (g * y * (1.0 - y),)

    return Tensor._result(y, (x,), back, "sigmoid")


def softplus(x) -> Tensor:
    """``log(1 + exp(x))`` without overflow."""
    x = as_tensor(x)
    y = np.maximum(x.data, 0.0) + np.log1p(np.exp(-np.abs(x.data)))

    def back(g):
        return (g * _stable_sigmoid(x.data),)

    return Tensor._result(y, (x,), back, "softplus")


def l2_norm(x, axis: int | None = None) -> Tensor:
    """Euclidean norm. ``axis=None`` returns a rank-0 scalar, otherwise keepdims."""
    x = as_tensor(x)
    if axis is None:
        y = np.asarray(np.sqrt(np.sum(x.data * x.data)))
    else:
        y = np.sqrt(np.sum(x.data * x.data, axis=axis, keepdims=True))

    def back(g):
        # zero subgradient at the origin
        ratio = np.divide(x.data, y, out=np.zeros_like(x.data), where=np.broadcast_to(y, x.shape) > 0)
        return (g * ratio,)

    return Tensor._result(y, (x,), back, "l2_norm")


def log_softmax(x, axis: int = -2) -> Tensor:
    """Log of the normalised exponentials along ``axis`` (the class axis of a column vector)."""
    x = as_tensor(x)
    shifted = x.data - x.data.max(axis=axis, keepdims=True)
    y = shifted - np.log(np.exp(shifted).sum(axis=axis, keepdims=True))

    def back(g):
        return (g - np.exp(y) * g.sum(axis=axis, keepdims=True),)

    return Tensor._result(y, (x,), back, "log_softmax")


def masked_softmax(x, mask: np.ndarray, axis: int = -1) -> Tensor:
    """Softmax along ``axis`` where entries with ``mask == 0`` get a -inf logit.

    ``mask`` broadcasts against ``x`` and must leave at least one live entry per slice.
    """
    x = as_tensor(x)
    live = np.broadcast_to(np.asarray(mask, dtype=bool), x.shape)
    logits = np.where(live, x.data, -np.inf)
    e = np.exp(logits - logits.max(axis=axis, keepdims=True))
    p = e / e.sum(axis=axis, keepdims=True)

    def back(g):
        return (p * (g - (g * p).sum(axis=axis, keepdims=True)),)

    return Tensor._result(p, (x,), back, "masked_softmax")


def layer_norm(x, gain, bias, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis, then scale by ``gain`` and shift by ``bias``."""
    x, gain, bias = as_tensor(x), as_tensor(gain), as_tensor(bias)
    k = x.shape[-1]
    if gain.shape != (k,) or bias.shape != (k,):
        raise DimensionError(f"layer_norm: gain {gain.shape} / bias {bias.shape} vs features {k}")
    mu = x.data.mean(axis=-1, keepdims=True)
    centered = x.data - mu
    inv_std = 1.0 / np.sqrt((centered * centered).mean(axis=-1, keepdims=True) + eps)
    xhat = centered * inv_std
    lead = tuple(range(x.ndim - 1))

    def back(g):
        dxhat = g * gain.data
        dx = inv_std * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))
        return dx, (g * xhat).sum(axis=lead), g.sum(axis=lead)

    return Tensor._result(xhat * gain.data + bias.data, (x, gain, bias), back, "layer_norm")


def embedding(table, ids: np.ndarray) -> Tensor:
    """Row lookup: ``out[..., j, :] = table[ids[..., j], :]``."""
    table = as_tensor(table)
    ids = np.asarray(ids, dtype=np.int64)
    if table.ndim != 2:
        raise DimensionError(f"embedding table must be rank 2, got {table.shape}")
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise VocabError(f"token id outside [0, {table.shape[0]}): min {ids.min()}, max {ids.max()}")

    def back(g):
        full = np.zeros_like(table.data)
        np.add.at(full, ids, g)
        return (full,)

    return Tensor._result(table.data[ids], (table,), back, "embedding")
