"""Tape-based reverse-mode differentiation over dense numpy arrays.

Broadcasting follows numpy semantics for the elementwise binary primitives
(``add``, ``sub``, ``mul``, ``div``): shapes are right-aligned, missing
leading axes are treated as extent 1, and an axis of extent 1 stretches to
match the other operand. Gradients flowing back into a broadcast operand are
summed over the stretched axes. ``matmul`` broadcasts only its leading
(batch) axes; the trailing two axes follow matrix-product rules. No other
primitive broadcasts.

Every primitive executed while gradient recording is enabled and at least
one input requires a gradient is appended to a single global tape. Calling
:func:`backward` replays the tape in reverse and then clears it, so a second
call without a fresh forward pass is an error.
"""

from __future__ import annotations

import contextlib
from typing import Callable, Iterable, Sequence

import numpy as np

_state = {"grad": True, "dtype": np.float32}


class NonFiniteError(FloatingPointError):
    """A primitive produced NaN or Inf."""


class Tape:
    def __init__(self) -> None:
        self.records: list[tuple[Tensor, tuple[Tensor, ...], Callable]] = []

    def append(self, out: "Tensor", inputs: tuple["Tensor", ...], fn: Callable) -> None:
        self.records.append((out, inputs, fn))

    def clear(self) -> None:
        self.records.clear()

    def __len__(self) -> int:
        return len(self.records)


TAPE = Tape()


@contextlib.contextmanager
def no_grad():
    prev = _state["grad"]
    _state["grad"] = False
    try:
        yield
    finally:
        _state["grad"] = prev


@contextlib.contextmanager
def default_dtype(dtype):
    """Temporarily change the dtype new tensors are cast to (gradient checks use float64)."""
    prev = _state["dtype"]
    _state["dtype"] = np.dtype(dtype).type
    try:
        yield
    finally:
        _state["dtype"] = prev


def grad_enabled() -> bool:
    return _state["grad"]


class Tensor:
    __array_priority__ = 100

    def __init__(self, data, requires_grad: bool = False, dtype=None):
        if isinstance(data, Tensor):
            data = data.data
        self.data = np.asarray(data, dtype=dtype or _state["dtype"])
        self.requires_grad = bool(requires_grad)
        self.grad: np.ndarray | None = None
        self._leaf = True

    @classmethod
    def _from_op(cls, data: np.ndarray, requires_grad: bool) -> "Tensor":
        t = cls.__new__(cls)
        t.data = data
        t.requires_grad = requires_grad
        t.grad = None
        t._leaf = False
        return t

    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def size(self) -> int:
        return self.data.size

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def item(self) -> float:
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float("nan")

    def detach(self) -> "Tensor":
        return Tensor(self.data, dtype=self.data.dtype)

    def __repr__(self) -> str:
        return f"Tensor(shape={self.shape}, requires_grad={self.requires_grad})"

    def __len__(self) -> int:
        return len(self.data)

    # operator sugar
    def __add__(self, o):
        return add(self, o)

    def __radd__(self, o):
        return add(o, self)

    def __sub__(self, o):
        return sub(self, o)

    def __rsub__(self, o):
        return sub(o, self)

    def __mul__(self, o):
        return mul(self, o)

    def __rmul__(self, o):
        return mul(o, self)

    def __truediv__(self, o):
        return div(self, o)

    def __rtruediv__(self, o):
        return div(o, self)

    def __neg__(self):
        return neg(self)

    def __pow__(self, p):
        return power(self, p)

    def __matmul__(self, o):
        return matmul(self, o)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes or None)

    def swapaxes(self, a: int, b: int):
        axes = list(range(self.ndim))
        axes[a], axes[b] = axes[b], axes[a]
        return transpose(self, tuple(axes))

    def sum(self, axis=None, keepdims=False):
        return tsum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return mean(self, axis, keepdims)


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.data.dtype if like is not None else None
    return Tensor(x, dtype=dtype)


def _record(name: str, data: np.ndarray, inputs: tuple[Tensor, ...], fn: Callable) -> Tensor:
    if not np.all(np.isfinite(data)):
        raise NonFiniteError(f"non-finite output from primitive '{name}'")
    rg = _state["grad"] and any(t.requires_grad for t in inputs)
    out = Tensor._from_op(data, rg)
    if rg:
        TAPE.append(out, inputs, fn)
    return out


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    lead = g.ndim - len(shape)
    if lead > 0:
        g = g.sum(axis=tuple(range(lead)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g.reshape(shape)


def _broadcast_shape(name: str, a: Tensor, b: Tensor) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ValueError(f"{name}: shapes {a.shape} and {b.shape} are not broadcast-compatible") from None


def _binary(name, a, b):
    if not isinstance(a, Tensor):
        a = as_tensor(a, b if isinstance(b, Tensor) else None)
    if not isinstance(b, Tensor):
        b = as_tensor(b, a)
    _broadcast_shape(name, a, b)
    return a, b


# ---------------------------------------------------------------- elementwise


def add(a, b) -> Tensor:
    a, b = _binary("add", a, b)
    sa, sb = a.shape, b.shape
    return _record("add", a.data + b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = _binary("sub", a, b)
    sa, sb = a.shape, b.shape
    return _record("sub", a.data - b.data, (a, b), lambda g: (unbroadcast(g, sa), unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = _binary("mul", a, b)
    ad, bd = a.data, b.data
    return _record("mul", ad * bd, (a, b), lambda g: (unbroadcast(g * bd, ad.shape), unbroadcast(g * ad, bd.shape)))


def div(a, b) -> Tensor:
    a, b = _binary("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def fn(g):
        return unbroadcast(g / bd, ad.shape), unbroadcast(-g * out / bd, bd.shape)

    return _record("div", out, (a, b), fn)


def neg(a: Tensor) -> Tensor:
    return _record("neg", -a.data, (a,), lambda g: (-g,))


def power(a: Tensor, p: float) -> Tensor:
    ad = a.data
    return _record("power", ad**p, (a,), lambda g: (g * p * ad ** (p - 1),))


def exp(a: Tensor) -> Tensor:
    out = np.exp(a.data)
    return _record("exp", out, (a,), lambda g: (g * out,))


def log(a: Tensor) -> Tensor:
    ad = a.data
    return _record("log", np.log(ad), (a,), lambda g: (g / ad,))


def tanh(a: Tensor) -> Tensor:
    out = np.tanh(a.data)
    return _record("tanh", out, (a,), lambda g: (g * (1 - out * out),))


def sigmoid(a: Tensor) -> Tensor:
    out = 1.0 / (1.0 + np.exp(-a.data))
    return _record("sigmoid", out, (a,), lambda g: (g * out * (1 - out),))


def silu(a: Tensor) -> Tensor:
    x = a.data
    s = 1.0 / (1.0 + np.exp(-x))
    return _record("silu", x * s, (a,), lambda g: (g * (s * (1 + x * (1 - s))),))


_GELU_C = np.sqrt(2.0 / np.pi)


def gelu(a: Tensor) -> Tensor:
    """tanh approximation of GELU."""
    x = a.data
    c = x.dtype.type(_GELU_C)
    u = c * (x + 0.044715 * x**3)
    th = np.tanh(u)
    out = 0.5 * x * (1 + th)

    def fn(g):
        du = c * (1 + 3 * 0.044715 * x * x)
        return (g * (0.5 * (1 + th) + 0.5 * x * (1 - th * th) * du),)

    return _record("gelu", out, (a,), fn)


def round_ste(a: Tensor) -> Tensor:
    """Round half away from zero; the backward pass treats rounding as identity."""
    x = a.data
    return _record("round_ste", np.sign(x) * np.floor(np.abs(x) + 0.5), (a,), lambda g: (g,))


# ------------------------------------------------------------------ structure


def matmul(a, b) -> Tensor:
    a, b = (as_tensor(a), as_tensor(b))
    if a.ndim < 2 or b.ndim < 2:
        raise ValueError(f"matmul: operands must be at least 2-D, got {a.shape} and {b.shape}")
    if a.shape[-1] != b.shape[-2]:
        raise ValueError(f"matmul: inner dimensions differ for shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ValueError(f"matmul: batch axes of {a.shape} and {b.shape} are not broadcast-compatible") from None
    ad, bd = a.data, b.data

    def fn(g):
        ga = g @ np.swapaxes(bd, -1, -2)
        if bd.ndim == 2 and ad.ndim > 2:
            gb = ad.reshape(-1, ad.shape[-1]).T @ g.reshape(-1, g.shape[-1])
        else:
            gb = np.swapaxes(ad, -1, -2) @ g
        return unbroadcast(ga, ad.shape), unbroadcast(gb, bd.shape)

    return _record("matmul", ad @ bd, (a, b), fn)


def transpose(a: Tensor, axes: Sequence[int] | None = None) -> Tensor:
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(ax % a.ndim for ax in axes)
    inv = tuple(np.argsort(axes))
    return _record("transpose", np.transpose(a.data, axes), (a,), lambda g: (np.transpose(g, inv),))


def reshape(a: Tensor, shape: Sequence[int]) -> Tensor:
    src = a.shape
    try:
        out = a.data.reshape(shape)
    except ValueError:
        raise ValueError(f"reshape: cannot reshape {src} into {tuple(shape)}") from None
    return _record("reshape", out, (a,), lambda g: (g.reshape(src),))


def _norm_axes(axis, ndim):
    if axis is None:
        return tuple(range(ndim))
    if isinstance(axis, int):
        axis = (axis,)
    return tuple(ax % ndim for ax in axis)


def tsum(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    src = a.shape

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g, src).copy(),)

    return _record("sum", a.data.sum(axis=axes, keepdims=keepdims), (a,), fn)


def mean(a: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    axes = _norm_axes(axis, a.ndim)
    n = int(np.prod([a.shape[ax] for ax in axes])) if axes else 1
    src = a.shape

    def fn(g):
        if not keepdims:
            g = np.expand_dims(g, axes)
        return (np.broadcast_to(g / n, src).copy(),)

    return _record("mean", a.data.mean(axis=axes, keepdims=keepdims), (a,), fn)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = tuple(as_tensor(t) for t in tensors)
    nd = tensors[0].ndim
    axis = axis % nd
    for t in tensors[1:]:
        if t.ndim != nd or any(t.shape[i] != tensors[0].shape[i] for i in range(nd) if i != axis):
            raise ValueError(f"concat: shapes {tensors[0].shape} and {t.shape} differ off axis {axis}")
    sizes = np.cumsum([t.shape[axis] for t in tensors])[:-1]

    def fn(g):
        return tuple(np.split(g, sizes, axis=axis))

    return _record("concat", np.concatenate([t.data for t in tensors], axis=axis), tensors, fn)


def _is_basic_index(idx) -> bool:
    items = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(i, (slice, int, np.integer, type(None), type(Ellipsis))) for i in items)


def getitem(a: Tensor, idx) -> Tensor:
    if isinstance(idx, Tensor):
        idx = idx.data.astype(np.int64)
    src, dtype = a.shape, a.data.dtype
    basic = _is_basic_index(idx)

    def fn(g):
        z = np.zeros(src, dtype=dtype)
        if basic:
            z[idx] = g
        else:
            np.add.at(z, idx, g)
        return (z,)

    return _record("slice", np.array(a.data[idx]), (a,), fn)


def embedding(table: Tensor, idx) -> Tensor:
    idx = np.asarray(idx, dtype=np.int64)
    if idx.size and (idx.min() < 0 or idx.max() >= table.shape[0]):
        raise IndexError(f"embedding: index out of range for table of shape {table.shape}")
    src, dtype = table.shape, table.data.dtype

    def fn(g):
        z = np.zeros(src, dtype=dtype)
        np.add.at(z, idx.reshape(-1), g.reshape(-1, src[-1]))
        return (z,)

    return _record("embedding", table.data[idx], (table,), fn)


# -------------------------------------------------------------- normalisation


def softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data - a.data.max(axis=axis, keepdims=True)
    e = np.exp(x)
    out = e / e.sum(axis=axis, keepdims=True)
    return _record("softmax", out, (a,), lambda g: (out * (g - (g * out).sum(axis=axis, keepdims=True)),))


def log_softmax(a: Tensor, axis: int = -1) -> Tensor:
    x = a.data - a.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(x).sum(axis=axis, keepdims=True))
    out = x - lse
    p = np.exp(out)
    return _record("log_softmax", out, (a,), lambda g: (g - p * g.sum(axis=axis, keepdims=True),))


def layer_norm(a: Tensor, eps: float = 1e-5) -> Tensor:
    """Normalise over the last axis (no affine parameters)."""
    x = a.data
    mu = x.mean(axis=-1, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv

    def fn(g):
        gm = g.mean(axis=-1, keepdims=True)
        gx = (g * xhat).mean(axis=-1, keepdims=True)
        return (inv * (g - gm - xhat * gx),)

    return _record("layer_norm", xhat, (a,), fn)


def rope(a: Tensor, cos: np.ndarray, sin: np.ndarray) -> Tensor:
    """Rotary transform on the last axis (split-halves convention).

    ``cos`` and ``sin`` hold one angle per channel pair and must broadcast
    against ``a[..., :D/2]`` without enlarging it.
    """
    x = a.data
    h = x.shape[-1] // 2
    if x.shape[-1] % 2:
        raise ValueError(f"rope: last axis must be even, got shape {x.shape}")
    cos = np.asarray(cos, dtype=x.dtype)
    sin = np.asarray(sin, dtype=x.dtype)
    x1, x2 = x[..., :h], x[..., h:]
    out = np.concatenate([x1 * cos - x2 * sin, x2 * cos + x1 * sin], axis=-1)
    if out.shape != x.shape:
        raise ValueError(f"rope: angle tables {cos.shape} enlarge input {x.shape}")

    def fn(g):
        g1, g2 = g[..., :h], g[..., h:]
        return (np.concatenate([g1 * cos + g2 * sin, g2 * cos - g1 * sin], axis=-1),)

    return _record("rope", out, (a,), fn)


# --------------------------------------------------------------------- losses


def cross_entropy(logits: Tensor, targets, weights=None) -> Tensor:
    """Mean negative log-likelihood over positions with nonzero weight.

    ``targets`` is an integer array matching ``logits.shape[:-1]``; entries
    below zero are ignored.
    """
    targets = np.asarray(targets, dtype=np.int64)
    if targets.shape != logits.shape[:-1]:
        raise ValueError(f"cross_entropy: logits {logits.shape} do not match targets {targets.shape}")
    w = np.ones(targets.shape, dtype=logits.data.dtype) if weights is None else np.asarray(weights, dtype=logits.data.dtype)
    w = np.where(targets < 0, 0, w).astype(logits.data.dtype)
    safe = np.where(targets < 0, 0, targets)
    x = logits.data - logits.data.max(axis=-1, keepdims=True)
    logp = x - np.log(np.exp(x).sum(axis=-1, keepdims=True))
    picked = np.take_along_axis(logp, safe[..., None], axis=-1)[..., 0]
    denom = max(float(w.sum()), 1e-12)
    loss = np.asarray(-(w * picked).sum() / denom, dtype=logits.data.dtype)

    def fn(g):
        p = np.exp(logp)
        onehot = np.zeros_like(p)
        np.put_along_axis(onehot, safe[..., None], 1.0, axis=-1)
        return ((p - onehot) * (w / denom)[..., None] * g,)

    return _record("cross_entropy", loss, (logits,), fn)


def mse(pred: Tensor, target, mask=None) -> Tensor:
    """Mean squared error over the elements selected by ``mask`` (broadcast to ``pred``)."""
    t = target.data if isinstance(target, Tensor) else np.asarray(target, dtype=pred.data.dtype)
    if t.shape != pred.shape:
        raise ValueError(f"mse: prediction {pred.shape} and target {t.shape} differ")
    m = np.ones(pred.shape, dtype=pred.data.dtype) if mask is None else np.broadcast_to(
        np.asarray(mask, dtype=pred.data.dtype), pred.shape)
    diff = pred.data - t
    denom = max(float(m.sum()), 1e-12)
    loss = np.asarray((m * diff * diff).sum() / denom, dtype=pred.data.dtype)
    return _record("mse", loss, (pred,), lambda g: (2 * m * diff / denom * g,))


# ------------------------------------------------------------------- backward


def backward(loss: Tensor, params: Iterable[Tensor] | None = None) -> dict[Tensor, np.ndarray]:
    """Accumulate d(loss)/d(leaf) into ``leaf.grad`` and return the gradient map.

    Leaves listed in ``params`` that the loss does not depend on receive a
    zero gradient.
    """
    if loss.size != 1:
        raise ValueError(f"backward: loss must be a scalar, got shape {loss.shape}")
    if not len(TAPE):
        raise RuntimeError("backward: tape is empty (already consumed, or no recorded forward pass)")
    if loss._leaf or not loss.requires_grad:
        raise RuntimeError("backward: loss was not produced by a recorded forward pass")
    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.data)}
    leaves: dict[int, Tensor] = {}
    for out, inputs, fn in reversed(TAPE.records):
        g = grads.pop(id(out), None)
        if g is None:
            continue
        for t, gi in zip(inputs, fn(g)):
            if gi is None or not t.requires_grad:
                continue
            k = id(t)
            if t._leaf:
                leaves[k] = t
            grads[k] = grads[k] + gi if k in grads else gi
    TAPE.clear()
    result: dict[Tensor, np.ndarray] = {}
    for k, t in leaves.items():
        g = grads[k].astype(t.data.dtype, copy=False)
        t.grad = g if t.grad is None else t.grad + g
        result[t] = t.grad
    for p in params or ():
        if p.grad is None:
            p.grad = np.zeros_like(p.data)
        result.setdefault(p, p.grad)
    return result
