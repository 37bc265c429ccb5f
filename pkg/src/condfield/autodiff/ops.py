"""Differentiable operations on :class:`Tensor`.

Every op checks operand shapes, computes its output with numpy and registers
a closure producing the parent gradients. ``forward_op`` dispatches by name.
"""

from __future__ import annotations

from typing import Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .tensor import ShapeError, Tensor, make_node


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _broadcast_shape(kind: str, a: Tensor, b: Tensor) -> tuple[int, ...]:
    try:
        return np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{kind}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise binary -------------------------------------------------------

def add(a, b) -> Tensor:
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape("add", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data + b.data, "add", (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(g, sb)))


def sub(a, b) -> Tensor:
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape("sub", a, b)
    sa, sb = a.shape, b.shape
    return make_node(a.data - b.data, "sub", (a, b),
                     lambda g: (_unbroadcast(g, sa), _unbroadcast(-g, sb)))


def mul(a, b) -> Tensor:
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape("mul", a, b)
    ad, bd = a.data, b.data

    def bwd(g):
        ga = _unbroadcast(g * bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(g * ad, bd.shape) if b.requires_grad else None
        return ga, gb
    return make_node(ad * bd, "mul", (a, b), bwd)


def div(a, b) -> Tensor:
    a, b = as_tensor(a, b if isinstance(b, Tensor) else None), as_tensor(b, a if isinstance(a, Tensor) else None)
    _broadcast_shape("div", a, b)
    ad, bd = a.data, b.data
    out = ad / bd

    def bwd(g):
        ga = _unbroadcast(g / bd, ad.shape) if a.requires_grad else None
        gb = _unbroadcast(-g * out / bd, bd.shape) if b.requires_grad else None
        return ga, gb
    return make_node(out, "div", (a, b), bwd)


def neg(x: Tensor) -> Tensor:
    return make_node(-x.data, "neg", (x,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """Batched matrix product over the last two axes; batch axes broadcast."""
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}") from None
    ad, bd = a.data, b.data

    def bwd(g):
        ga = _unbroadcast(g @ np.swapaxes(bd, -1, -2), ad.shape) if a.requires_grad else None
        gb = _unbroadcast(np.swapaxes(ad, -1, -2) @ g, bd.shape) if b.requires_grad else None
        return ga, gb
    return make_node(ad @ bd, "matmul", (a, b), bwd)


# -- elementwise unary --------------------------------------------------------

def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make_node(np.where(mask, x.data, 0).astype(x.dtype), "relu", (x,),
                     lambda g: (g * mask,))


def sin(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(np.sin(xd), "sin", (x,), lambda g: (g * np.cos(xd),))


def cos(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(np.cos(xd), "cos", (x,), lambda g: (-g * np.sin(xd),))


def exp(x: Tensor) -> Tensor:
    out = np.exp(x.data)
    return make_node(out, "exp", (x,), lambda g: (g * out,))


def log(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(np.log(xd), "log", (x,), lambda g: (g / xd,))


def sigmoid(x: Tensor) -> Tensor:
    out = 0.5 * (np.tanh(0.5 * x.data) + 1)
    return make_node(out.astype(x.dtype), "sigmoid", (x,), lambda g: (g * out * (1 - out),))


def softplus(x: Tensor) -> Tensor:
    xd = x.data
    out = np.logaddexp(0, xd).astype(x.dtype)
    return make_node(out, "softplus", (x,),
                     lambda g: (g * (0.5 * (np.tanh(0.5 * xd) + 1)),))


def tanh(x: Tensor) -> Tensor:
    out = np.tanh(x.data)
    return make_node(out, "tanh", (x,), lambda g: (g * (1 - out * out),))


def square(x: Tensor) -> Tensor:
    xd = x.data
    return make_node(xd * xd, "square", (x,), lambda g: (2 * g * xd,))


def scale(x: Tensor, c: float) -> Tensor:
    return make_node(x.data * x.dtype.type(c), "scale", (x,), lambda g: (g * x.dtype.type(c),))


# -- normalization ------------------------------------------------------------

def softmax(x: Tensor, axis: int = -1) -> Tensor:
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    out = e / e.sum(axis=axis, keepdims=True)

    def bwd(g):
        return (out * (g - (g * out).sum(axis=axis, keepdims=True)),)
    return make_node(out, "softmax", (x,), bwd)


def layer_norm(x: Tensor, gain: Tensor | None = None, bias: Tensor | None = None,
               eps: float = 1e-5) -> Tensor:
    """Normalize over the last axis, then apply optional affine gain/bias."""
    d = x.shape[-1]
    for name, p in (("gain", gain), ("bias", bias)):
        if p is not None and p.shape != (d,):
            raise ShapeError(f"layer_norm: {name} shape {p.shape} does not match {x.shape}")
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    rstd = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + eps)
    xhat = (xc * rstd).astype(x.dtype)
    out = xhat
    if gain is not None:
        out = out * gain.data
    if bias is not None:
        out = out + bias.data
    parents = [x] + [p for p in (gain, bias) if p is not None]
    red = tuple(range(x.ndim - 1))

    def bwd(g):
        gx_hat = g * gain.data if gain is not None else g
        gx = rstd * (gx_hat - gx_hat.mean(axis=-1, keepdims=True)
                     - xhat * (gx_hat * xhat).mean(axis=-1, keepdims=True))
        res = [gx.astype(x.dtype)]
        if gain is not None:
            res.append((g * xhat).sum(axis=red))
        if bias is not None:
            res.append(g.sum(axis=red))
        return res
    return make_node(out, "layer_norm", parents, bwd)


# -- shape ops ----------------------------------------------------------------

def concat(tensors: Sequence[Tensor], axis: int = -1) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ref = tensors[0]
    ax = axis % ref.ndim
    for t in tensors[1:]:
        if t.ndim != ref.ndim or any(s != r for i, (s, r) in enumerate(zip(t.shape, ref.shape)) if i != ax):
            raise ShapeError(f"concat: incompatible shapes {ref.shape} and {t.shape} along axis {axis}")
    sizes = [t.shape[ax] for t in tensors]
    splits = np.cumsum(sizes)[:-1]

    def bwd(g):
        return np.split(g, splits, axis=ax)
    return make_node(np.concatenate([t.data for t in tensors], axis=ax), "concat", tensors, bwd)


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {shape}") from None
    src = x.shape
    return make_node(out, "reshape", (x,), lambda g: (g.reshape(src),))


def transpose(x: Tensor, axes: Sequence[int]) -> Tensor:
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = tuple(np.argsort([a % x.ndim for a in axes]))
    return make_node(np.transpose(x.data, axes), "transpose", (x,),
                     lambda g: (np.transpose(g, inv),))


def broadcast_to(x: Tensor, shape: Sequence[int]) -> Tensor:
    shape = tuple(shape)
    try:
        out = np.broadcast_to(x.data, shape)
    except ValueError:
        raise ShapeError(f"broadcast_to: cannot broadcast {x.shape} to {shape}") from None
    src = x.shape
    return make_node(out, "broadcast_to", (x,), lambda g: (_unbroadcast(g, src),))


def sum(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:  # noqa: A001
    src = x.shape

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, src),)
    return make_node(np.asarray(x.data.sum(axis=axis, keepdims=keepdims)), "sum", (x,), bwd)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    src = x.shape
    if axis is None:
        n = x.size
    else:
        axes = (axis,) if isinstance(axis, int) else axis
        n = int(np.prod([src[a] for a in axes]))
    inv_n = x.dtype.type(1.0 / n)

    def bwd(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g * inv_n, src),)
    return make_node(np.asarray(x.data.mean(axis=axis, keepdims=keepdims)), "mean", (x,), bwd)


def getitem(x: Tensor, index) -> Tensor:
    out = x.data[index]
    src, dtype = x.shape, x.dtype
    parts = index if isinstance(index, tuple) else (index,)
    basic = all(isinstance(i, (int, slice, type(Ellipsis), type(None))) for i in parts)

    def bwd(g):
        gx = np.zeros(src, dtype=dtype)
        if basic:
            gx[index] = g
        else:
            np.add.at(gx, index, g)
        return (gx,)
    return make_node(np.array(out), "getitem", (x,), bwd)


def take_rows(x: Tensor, rows) -> Tensor:
    """Gather rows along axis 0.

    The backward pass records the gathered rows on ``x.touched_rows``, so a
    sparse optimizer step only visits rows that actually received gradient.
    """
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size and (rows.min() < 0 or rows.max() >= x.shape[0]):
        raise IndexError(f"take_rows: row index out of range for {x.shape[0]} rows")
    src, dtype = x.shape, x.dtype

    def bwd(g):
        if x.touched_rows is None:
            x.touched_rows = set()
        x.touched_rows.update(int(r) for r in rows.ravel())
        gx = np.zeros(src, dtype=dtype)
        np.add.at(gx, rows, g)
        return (gx,)
    return make_node(x.data[rows], "take_rows", (x,), bwd)


def take_along_axis(x: Tensor, index: np.ndarray, axis: int) -> Tensor:
    index = np.asarray(index, dtype=np.int64)
    ax = axis % x.ndim
    out = np.take_along_axis(x.data, index, axis=ax)
    src, dtype = x.shape, x.dtype

    def bwd(g):
        n = src[ax]
        gm = np.moveaxis(g, ax, -1)
        im = np.moveaxis(np.broadcast_to(index, g.shape), ax, -1)
        lead = gm.shape[:-1]
        base = (np.arange(int(np.prod(lead))) * n).reshape(lead + (1,))
        flat = np.bincount((im + base).ravel(), weights=gm.ravel(),
                           minlength=int(np.prod(lead)) * n)
        gx = np.moveaxis(flat.reshape(lead + (n,)), -1, ax)
        return (gx.astype(dtype),)
    return make_node(out, "take_along_axis", (x,), bwd)


# -- convolution --------------------------------------------------------------

def conv2d(x: Tensor, w: Tensor, b: Tensor | None = None, stride: int = 1,
           padding: int = 0) -> Tensor:
    """NHWC convolution with an (kh, kw, cin, cout) kernel, via im2col."""
    if x.ndim != 4 or w.ndim != 4 or x.shape[-1] != w.shape[2]:
        raise ShapeError(f"conv2d: incompatible shapes {x.shape} and {w.shape}")
    n, h, wd, c = x.shape
    kh, kw, _, co = w.shape
    p, s = padding, stride
    xp = np.pad(x.data, ((0, 0), (p, p), (p, p), (0, 0))) if p else x.data
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))[:, ::s, ::s]
    ho, wo = win.shape[1], win.shape[2]
    cols = np.ascontiguousarray(win.transpose(0, 1, 2, 4, 5, 3)).reshape(n * ho * wo, kh * kw * c)
    wm = w.data.reshape(kh * kw * c, co)
    out = (cols @ wm).reshape(n, ho, wo, co)
    if b is not None:
        out = out + b.data
    parents = [x, w] + ([b] if b is not None else [])

    def bwd(g):
        g2 = g.reshape(n * ho * wo, co)
        res = []
        if x.requires_grad:
            gcols = (g2 @ wm.T).reshape(n, ho, wo, kh, kw, c)
            gxp = np.zeros(xp.shape, dtype=x.dtype)
            for i in range(kh):
                for j in range(kw):
                    gxp[:, i:i + s * ho:s, j:j + s * wo:s, :] += gcols[:, :, :, i, j, :]
            res.append(gxp[:, p:p + h, p:p + wd, :] if p else gxp)
        else:
            res.append(None)
        res.append((cols.T @ g2).reshape(w.shape) if w.requires_grad else None)
        if b is not None:
            res.append(g2.sum(axis=0))
        return res
    return make_node(out, "conv2d", parents, bwd)


OPS = {
    "add": add, "sub": sub, "mul": mul, "div": div, "neg": neg, "matmul": matmul,
    "relu": relu, "sin": sin, "cos": cos, "exp": exp, "log": log,
    "sigmoid": sigmoid, "softplus": softplus, "tanh": tanh, "square": square,
    "softmax": softmax, "layer_norm": layer_norm, "concat": concat,
    "reshape": reshape, "transpose": transpose, "broadcast_to": broadcast_to,
    "sum": sum, "mean": mean, "getitem": getitem, "take_rows": take_rows,
    "take_along_axis": take_along_axis, "conv2d": conv2d,
}


def forward_op(kind: str, *inputs, **kwargs) -> Tensor:
    try:
        fn = OPS[kind]
    except KeyError:
        raise ValueError(f"unknown op kind {kind!r}") from None
    if kind == "concat":
        return fn(list(inputs), **kwargs)
    return fn(*inputs, **kwargs)


Tensor.__add__ = lambda self, o: add(self, o)
Tensor.__radd__ = lambda self, o: add(o, self)
Tensor.__sub__ = lambda self, o: sub(self, o)
Tensor.__rsub__ = lambda self, o: sub(o, self)
Tensor.__mul__ = lambda self, o: mul(self, o)
Tensor.__rmul__ = lambda self, o: mul(o, self)
Tensor.__truediv__ = lambda self, o: div(self, o)
Tensor.__rtruediv__ = lambda self, o: div(o, self)
Tensor.__neg__ = neg
Tensor.__matmul__ = lambda self, o: matmul(self, o)
Tensor.__rmatmul__ = lambda self, o: matmul(o, self)
Tensor.__getitem__ = getitem
Tensor.reshape = lambda self, *shape: reshape(self, shape[0] if len(shape) == 1 and isinstance(shape[0], (tuple, list)) else shape)
Tensor.transpose = lambda self, *axes: transpose(self, axes[0] if len(axes) == 1 and isinstance(axes[0], (tuple, list)) else axes)
Tensor.sum = lambda self, axis=None, keepdims=False: sum(self, axis, keepdims)
Tensor.mean = lambda self, axis=None, keepdims=False: mean(self, axis, keepdims)
