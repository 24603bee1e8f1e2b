"""Differentiable primitives.

Binary elementwise ops follow numpy broadcasting restricted to operands whose
shape can be broadcast to the other's; cotangents are summed back with
:func:`sum_to`.
"""
from __future__ import annotations

from typing import Sequence

import numpy as np

from .tensor import DomainError, ShapeError, Tensor, as_tensor, record


def _bshape(a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"cannot broadcast {a.shape} with {b.shape}") from None


def sum_to(x: Tensor, shape: tuple[int, ...]) -> Tensor:
    """Sum ``x`` down to ``shape`` (inverse of broadcasting)."""
    shape = tuple(shape)
    if x.shape == shape:
        return x
    lead = x.ndim - len(shape)
    axes = list(range(lead))
    for i, n in enumerate(shape):
        if n == 1 and x.shape[lead + i] != 1:
            axes.append(lead + i)
    out = sum(x, axis=tuple(axes)) if axes else x
    return reshape(out, shape)


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    if x.shape == shape:
        return x
    try:
        data = np.broadcast_to(x.data, shape).copy()
    except ValueError:
        raise ShapeError(f"cannot broadcast {x.shape} to {shape}") from None
    src = x.shape
    return record("broadcast_to", data, (x,), lambda g, n: (sum_to(g, src),))


def add(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b)
    sa, sb = a.shape, b.shape

    def vjp(g, needs):
        return (sum_to(g, sa) if needs[0] else None,
                sum_to(g, sb) if needs[1] else None)

    return record("add", a.data + b.data, (a, b), vjp)


broadcast_add = add


def sub(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b)
    sa, sb = a.shape, b.shape

    def vjp(g, needs):
        return (sum_to(g, sa) if needs[0] else None,
                scale(sum_to(g, sb), -1.0) if needs[1] else None)

    return record("sub", a.data - b.data, (a, b), vjp)


def mul(a, b) -> Tensor:
    if isinstance(b, (int, float)) and not isinstance(b, bool):
        return scale(a, float(b))
    if isinstance(a, (int, float)) and not isinstance(a, bool):
        return scale(b, float(a))
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b)
    sa, sb = a.shape, b.shape

    def vjp(g, needs):
        return (sum_to(mul(g, b), sa) if needs[0] else None,
                sum_to(mul(g, a), sb) if needs[1] else None)

    return record("mul", a.data * b.data, (a, b), vjp)


def div(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    _bshape(a, b)
    if np.any(b.data == 0):
        raise DomainError("division by zero")
    sa, sb = a.shape, b.shape
    out = None

    def vjp(g, needs):
        ga = sum_to(div(g, b), sa) if needs[0] else None
        gb = sum_to(scale(div(mul(g, out), b), -1.0), sb) if needs[1] else None
        return ga, gb

    out = record("div", a.data / b.data, (a, b), vjp)
    return out


def scale(x, c: float) -> Tensor:
    x = as_tensor(x)
    c = float(c)
    return record("scale", x.data * c, (x,), lambda g, n: (scale(g, c),))


def matmul(a, b) -> Tensor:
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}")
    sa, sb = a.shape, b.shape

    def vjp(g, needs):
        ga = sum_to(matmul(g, transpose(b)), sa) if needs[0] else None
        gb = sum_to(matmul(transpose(a), g), sb) if needs[1] else None
        return ga, gb

    try:
        data = np.matmul(a.data, b.data)
    except ValueError:
        raise ShapeError(f"matmul shapes {a.shape} @ {b.shape}") from None
    return record("matmul", data, (a, b), vjp)


def transpose(x, ax1: int = -2, ax2: int = -1) -> Tensor:
    x = as_tensor(x)
    if x.ndim < 2:
        raise ShapeError("transpose needs rank >= 2")
    return record("transpose", np.swapaxes(x.data, ax1, ax2), (x,),
                  lambda g, n: (transpose(g, ax1, ax2),))


def reshape(x, shape: Sequence[int]) -> Tensor:
    x = as_tensor(x)
    src = x.shape
    try:
        data = x.data.reshape(tuple(shape))
    except ValueError:
        raise ShapeError(f"cannot reshape {src} to {tuple(shape)}") from None
    return record("reshape", data, (x,), lambda g, n: (reshape(g, src),))


def concat(xs: Sequence[Tensor], axis: int = -1) -> Tensor:
    xs = [as_tensor(x) for x in xs]
    nd = xs[0].ndim
    ax = axis % nd
    for x in xs[1:]:
        if x.ndim != nd or any(x.shape[i] != xs[0].shape[i] for i in range(nd) if i != ax):
            raise ShapeError(f"concat shapes {[t.shape for t in xs]} along {axis}")
    bounds = np.cumsum([0] + [x.shape[ax] for x in xs])

    def vjp(g, needs):
        return tuple(slice_(g, ax, int(bounds[i]), int(bounds[i + 1])) if needs[i] else None
                     for i in range(len(xs)))

    return record("concat", np.concatenate([x.data for x in xs], axis=ax), xs, vjp)


def slice_(x, axis: int, start: int, stop: int, step: int = 1) -> Tensor:
    x = as_tensor(x)
    ax = axis % x.ndim
    if not (0 <= start <= x.shape[ax] and start <= stop <= x.shape[ax]) or step < 1:
        raise ShapeError(f"slice [{start}:{stop}:{step}] out of range for axis of {x.shape[ax]}")
    idx = [slice(None)] * x.ndim
    idx[ax] = slice(start, stop, step)
    src = x.shape
    return record("slice", x.data[tuple(idx)], (x,),
                  lambda g, n: (_pad_slice(g, ax, start, stop, step, src),))


def _pad_slice(g, ax, start, stop, step, shape) -> Tensor:
    """Place ``g`` into zeros of ``shape`` at the slice; adjoint of slice_."""
    out = np.zeros(shape)
    idx = [slice(None)] * len(shape)
    idx[ax] = slice(start, stop, step)
    out[tuple(idx)] = g.data
    return record("pad_slice", out, (g,), lambda gg, n: (slice_(gg, ax, start, stop, step),))


def sum(x, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001 - mirrors numpy
    x = as_tensor(x)
    src = x.shape
    data = np.sum(x.data, axis=axis, keepdims=True)
    kshape = data.shape
    if not keepdims:
        data = np.sum(x.data, axis=axis)

    def vjp(g, needs):
        return (broadcast_to(reshape(g, kshape), src),)

    return record("sum", np.asarray(data), (x,), vjp)


def mean(x, axis=None, keepdims: bool = False) -> Tensor:
    x = as_tensor(x)
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([x.shape[a] for a in axes]))
    return scale(sum(x, axis=axis, keepdims=keepdims), 1.0 / n)


def softmax(x) -> Tensor:
    x = as_tensor(x)
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    y = None

    def vjp(g, needs):
        gy = mul(g, y)
        return (sub(gy, mul(y, sum(gy, axis=-1, keepdims=True))),)

    y = record("softmax", e / e.sum(axis=-1, keepdims=True), (x,), vjp)
    return y


def exp(x) -> Tensor:
    x = as_tensor(x)
    y = None
    y = record("exp", np.exp(x.data), (x,), lambda g, n: (mul(g, y),))
    return y


def log(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data <= 0):
        raise DomainError("log of non-positive value")
    return record("log", np.log(x.data), (x,), lambda g, n: (div(g, x),))


def sqrt(x) -> Tensor:
    x = as_tensor(x)
    if np.any(x.data < 0):
        raise DomainError("sqrt of negative value")
    y = None
    y = record("sqrt", np.sqrt(x.data), (x,), lambda g, n: (scale(div(g, y), 0.5),))
    return y


def square(x) -> Tensor:
    x = as_tensor(x)
    return record("square", x.data * x.data, (x,), lambda g, n: (scale(mul(g, x), 2.0),))


def leaky_relu(x, slope: float = 0.2) -> Tensor:
    x = as_tensor(x)
    m = np.where(x.data > 0, 1.0, slope)
    return record("leaky_relu", x.data * m, (x,), lambda g, n: (mul(g, Tensor(m)),))


def elu(x) -> Tensor:
    x = as_tensor(x)
    pos = x.data > 0
    y = None

    def vjp(g, needs):
        # d/dx = 1 on the positive side, exp(x) = y + 1 elsewhere
        return (mul(g, add(Tensor(pos.astype(float)), mul(Tensor((~pos).astype(float)), add(y, 1.0)))),)

    y = record("elu", np.where(pos, x.data, np.expm1(np.minimum(x.data, 0.0))), (x,), vjp)
    return y


def sigmoid(x) -> Tensor:
    x = as_tensor(x)
    y = None
    y = record("sigmoid", 0.5 * (1.0 + np.tanh(0.5 * x.data)), (x,),
               lambda g, n: (mul(g, mul(y, sub(1.0, y))),))
    return y


def take_flat(x, idx: np.ndarray) -> Tensor:
    """``out[...] = x.flat[idx[...]]``; output has the shape of ``idx``."""
    x = as_tensor(x)
    idx = np.asarray(idx, dtype=np.intp)
    src = x.shape
    return record("take_flat", x.data.reshape(-1)[idx], (x,),
                  lambda g, n: (put_flat(g, idx, src),))


def put_flat(g, idx: np.ndarray, shape: Sequence[int]) -> Tensor:
    """Scatter-add ``g`` into zeros of ``shape`` at flat positions ``idx``."""
    g = as_tensor(g)
    idx = np.asarray(idx, dtype=np.intp)
    if g.shape != idx.shape:
        raise ShapeError(f"put_flat values {g.shape} vs index {idx.shape}")
    size = int(np.prod(shape))
    data = np.bincount(idx.reshape(-1), weights=g.data.reshape(-1), minlength=size)
    return record("put_flat", data.reshape(shape), (g,), lambda gg, n: (take_flat(gg, idx),))


def _row_flat_index(shape, rows: np.ndarray) -> np.ndarray:
    b, t, d = shape
    rows = np.asarray(rows, dtype=np.intp)
    if rows.ndim == 1:
        rows = np.broadcast_to(rows, (b, rows.shape[0]))
    if rows.shape[0] != b:
        raise ShapeError(f"row index batch {rows.shape[0]} vs tensor batch {b}")
    if rows.size and (rows.min() < 0 or rows.max() >= t):
        raise ShapeError("row index out of range")
    base = (np.arange(b)[:, None] * t + rows) * d
    return base[:, :, None] + np.arange(d)[None, None, :]


def gather_rows(x, rows: np.ndarray) -> Tensor:
    """Select time steps of a B×T×D tensor; ``rows`` is (k,) or (B, k)."""
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError("gather_rows expects B×T×D")
    return take_flat(x, _row_flat_index(x.shape, rows))


def scatter_rows(g, rows: np.ndarray, t: int) -> Tensor:
    """Adjoint of :func:`gather_rows`: sum rows of ``g`` into a B×t×D zero tensor."""
    g = as_tensor(g)
    b, _, d = g.shape
    return put_flat(g, _row_flat_index((b, t, d), rows), (b, t, d))


def max_pool1d(x, width: int, stride: int, pad: int) -> Tensor:
    """Max over time windows of a B×T×D tensor; padding never wins.

    Ties go to the first maximal index.
    """
    x = as_tensor(x)
    if x.ndim != 3:
        raise ShapeError("max_pool1d expects B×T×D")
    b, t, d = x.shape
    t_out = (t + 2 * pad - width) // stride + 1
    if t_out < 1 or pad >= width:
        raise ShapeError(f"max_pool1d cannot pool T={t} with width={width} pad={pad}")
    xp = np.full((b, t + 2 * pad, d), -np.inf)
    xp[:, pad:pad + t] = x.data
    starts = np.arange(t_out) * stride
    win = starts[:, None] + np.arange(width)[None, :]          # t_out × width
    vals = xp[:, win, :]                                       # b × t_out × width × d
    arg = np.argmax(vals, axis=2)                              # first max on ties
    src_t = win[np.arange(t_out)[None, :, None], arg] - pad    # b × t_out × d
    flat = (np.arange(b)[:, None, None] * t + src_t) * d + np.arange(d)[None, None, :]
    return take_flat(x, flat)


def conv1d(x, w, bias, width: int, stride: int = 1, pad: int = 0) -> Tensor:
    """Temporal convolution of B×T×Cin with ``w`` of shape width×Cin×Cout.

    Zero padding; computed as a sum of per-tap strided slices times the tap's
    weight matrix.
    """
    x, w = as_tensor(x), as_tensor(w)
    if x.ndim != 3 or w.ndim != 3 or w.shape[0] != width or w.shape[1] != x.shape[2]:
        raise ShapeError(f"conv1d input {x.shape} with weight {w.shape}")
    b, t, c = x.shape
    t_out = (t + 2 * pad - width) // stride + 1
    if t_out < 1:
        raise ShapeError(f"conv1d output length {t_out} < 1")
    if pad:
        z = Tensor(np.zeros((b, pad, c)))
        x = concat([z, x, z], axis=1)
    out = None
    for k in range(width):
        tap = slice_(x, 1, k, k + stride * (t_out - 1) + 1, stride)
        term = matmul(tap, reshape(slice_(w, 0, k, k + 1), w.shape[1:]))
        out = term if out is None else add(out, term)
    if bias is not None:
        out = add(out, bias)
    return out


PRIMITIVES = {
    "matmul": matmul,
    "add": add,
    "sub": sub,
    "mul": mul,
    "div": div,
    "scale": scale,
    "concat": concat,
    "slice": slice_,
    "reshape": reshape,
    "transpose": transpose,
    "sum": sum,
    "mean": mean,
    "softmax": softmax,
    "exp": exp,
    "log": log,
    "sqrt": sqrt,
    "square": square,
    "leaky_relu": leaky_relu,
    "elu": elu,
    "sigmoid": sigmoid,
    "max_pool1d": max_pool1d,
    "conv1d": conv1d,
    "gather_rows": gather_rows,
    "scatter_rows": scatter_rows,
    "broadcast_add": broadcast_add,
    "broadcast_to": broadcast_to,
    "take_flat": take_flat,
    "put_flat": put_flat,
}


def forward(op: str, *inputs, **attrs) -> Tensor:
    """Apply the primitive named ``op``."""
    try:
        fn = PRIMITIVES[op]
    except KeyError:
        raise ValueError(f"unknown primitive {op!r}") from None
    return fn(*inputs, **attrs)


def linear(x, w, b=None) -> Tensor:
    y = matmul(x, w)
    return add(y, b) if b is not None else y


def gelu(x) -> Tensor:
    """Sigmoid approximation ``x * sigmoid(1.702 x)``."""
    return mul(x, sigmoid(scale(x, 1.702)))

