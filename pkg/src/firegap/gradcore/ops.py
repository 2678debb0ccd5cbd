"""Differentiable primitives.

Every primitive returns a new :class:`Tensor`; its backward closure maps the
upstream gradient to a tuple of input gradients (``None`` for inputs that do
not require one).
"""

import numpy as np
from scipy.special import expit

from firegap import kernels
from firegap.gradcore.tensor import ConfigError, DimensionError, Tensor, as_tensor, make


def _unbroadcast(g, shape):
    if g.shape == shape:
        return g
    while g.ndim > len(shape):
        g = g.sum(axis=0)
    for ax, n in enumerate(shape):
        if n == 1 and g.shape[ax] != 1:
            g = g.sum(axis=ax, keepdims=True)
    return g


def _need(t):
    return t.requires_grad


# ---------------------------------------------------------------------------
# elementwise arithmetic
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g, a.shape) if _need(a) else None,
                _unbroadcast(g, b.shape) if _need(b) else None)

    return make(a.data + b.data, (a, b), bw, "add")


def sub(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g, a.shape) if _need(a) else None,
                _unbroadcast(-g, b.shape) if _need(b) else None)

    return make(a.data - b.data, (a, b), bw, "sub")


def mul(a, b):
    a, b = as_tensor(a), as_tensor(b)

    def bw(g):
        return (_unbroadcast(g * b.data, a.shape) if _need(a) else None,
                _unbroadcast(g * a.data, b.shape) if _need(b) else None)

    return make(a.data * b.data, (a, b), bw, "mul")


def div(a, b):
    a, b = as_tensor(a), as_tensor(b)
    out = a.data / b.data

    def bw(g):
        return (_unbroadcast(g / b.data, a.shape) if _need(a) else None,
                _unbroadcast(-g * out / b.data, b.shape) if _need(b) else None)

    return make(out, (a, b), bw, "div")


def neg(a):
    return make(-a.data, (a,), lambda g: (-g,), "neg")


def power(a, p):
    p = float(p)
    out = a.data ** p

    def bw(g):
        return (g * p * a.data ** (p - 1.0),)

    return make(out, (a,), bw, "pow")


def exp(a):
    out = np.exp(a.data)
    return make(out, (a,), lambda g: (g * out,), "exp")


def log(a):
    a = as_tensor(a)
    if np.any(a.data <= 0.0):
        raise FloatingPointError("log of a non-positive value")
    return make(np.log(a.data), (a,), lambda g: (g / a.data,), "log")


def sqrt(a):
    out = np.sqrt(a.data)
    return make(out, (a,), lambda g: (g * 0.5 / out,), "sqrt")


def clamp(a, lo=None, hi=None):
    out = np.clip(a.data, lo, hi)
    inside = np.ones(a.shape, dtype=bool)
    if lo is not None:
        inside &= a.data >= lo
    if hi is not None:
        inside &= a.data <= hi
    return make(out, (a,), lambda g: (g * inside,), "clamp")


# ---------------------------------------------------------------------------
# activations
# ---------------------------------------------------------------------------

def _sigmoid_np(x):
    return expit(x)  # overflow-safe logistic


def sigmoid(a):
    s = _sigmoid_np(a.data)
    return make(s, (a,), lambda g: (g * s * (1.0 - s),), "sigmoid")


def silu(a):
    s = _sigmoid_np(a.data)
    out = a.data * s
    return make(out, (a,), lambda g: (g * (s + a.data * s * (1.0 - s)),), "silu")


def relu(a):
    pos = a.data > 0
    return make(a.data * pos, (a,), lambda g: (g * pos,), "relu")


def tanh(a):
    out = np.tanh(a.data)
    return make(out, (a,), lambda g: (g * (1.0 - out * out),), "tanh")


_ACTIVATIONS = {"silu": silu, "sigmoid": sigmoid, "relu": relu}


def activation(x, kind):
    try:
        fn = _ACTIVATIONS[kind]
    except KeyError:
        raise ConfigError(f"unknown activation {kind!r}; expected one of {sorted(_ACTIVATIONS)}") from None
    return fn(as_tensor(x))


# ---------------------------------------------------------------------------
# reductions / shape
# ---------------------------------------------------------------------------

def sum(a, axis=None, keepdims=False):  # noqa: A001 - mirrors numpy
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g, a.shape).copy(),)

    return make(out, (a,), bw, "sum")


def mean(a, axis=None, keepdims=False):
    n = a.data.size if axis is None else int(np.prod([a.shape[ax] for ax in np.atleast_1d(axis)]))
    out = a.data.mean(axis=axis, keepdims=keepdims)

    def bw(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return (np.broadcast_to(g / n, a.shape).copy(),)

    return make(out, (a,), bw, "mean")


def reshape(a, shape):
    return make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),), "reshape")


def transpose(a, axes=None):
    axes = tuple(range(a.ndim))[::-1] if axes is None else tuple(axes)
    inv = np.argsort(axes)
    return make(a.data.transpose(axes), (a,), lambda g: (g.transpose(inv),), "transpose")


def _is_basic(idx):
    parts = idx if isinstance(idx, tuple) else (idx,)
    return all(isinstance(p, (int, np.integer, slice)) or p is None or p is Ellipsis for p in parts)


def getitem(a, idx):
    basic = _is_basic(idx)

    def bw(g):
        out = np.zeros_like(a.data)
        if basic:
            out[idx] = g  # basic indexing never repeats an element
        else:
            np.add.at(out, idx, g)
        return (out,)

    return make(a.data[idx], (a,), bw, "getitem")


def concat(tensors, axis=0):
    tensors = [as_tensor(t) for t in tensors]
    sizes = [t.shape[axis] for t in tensors]
    bounds = np.cumsum(sizes)[:-1]

    def bw(g):
        parts = np.split(g, bounds, axis=axis)
        return tuple(p if t.requires_grad else None for p, t in zip(parts, tensors))

    return make(np.concatenate([t.data for t in tensors], axis=axis), tensors, bw, "concat")


def stack(tensors, axis=0):
    return concat([reshape(t, t.shape[:axis] + (1,) + t.shape[axis:]) for t in tensors], axis=axis)


# ---------------------------------------------------------------------------
# linear algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = as_tensor(a), as_tensor(b)
    if a.ndim < 2 or b.ndim < 2:
        raise DimensionError("matmul operands need at least 2 dimensions")
    if a.shape[-1] != b.shape[-2]:
        raise DimensionError(f"matmul inner extents differ: {a.shape} @ {b.shape}")
    out = np.matmul(a.data, b.data)

    def bw(g):
        ga = _unbroadcast(np.matmul(g, np.swapaxes(b.data, -1, -2)), a.shape) if _need(a) else None
        gb = _unbroadcast(np.matmul(np.swapaxes(a.data, -1, -2), g), b.shape) if _need(b) else None
        return ga, gb

    return make(out, (a, b), bw, "matmul")


def conv2d(x, w, stride=1, padding=0):
    """2-D cross-correlation. ``x``: (C,H,W) or (N,C,H,W); ``w``: (O,C,k,k)."""
    x, w = as_tensor(x), as_tensor(w)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    if xd.ndim != 4 or w.ndim != 4:
        raise DimensionError(f"conv2d expects (N,C,H,W) input and (O,C,k,k) kernel, got {x.shape}, {w.shape}")
    n, c, h, wid = xd.shape
    o, ci, k, k2 = w.shape
    if ci != c:
        raise DimensionError(f"conv2d channel mismatch: input has {c}, kernel expects {ci}")
    if k != k2:
        raise DimensionError("conv2d kernel must be square")
    if padding < 0 or stride < 1:
        raise ConfigError("conv2d needs padding >= 0 and stride >= 1")
    hp, wp = h + 2 * padding, wid + 2 * padding
    if hp < k or wp < k:
        raise DimensionError("conv2d spatial extent smaller than kernel after padding")
    ho, wo = (hp - k) // stride + 1, (wp - k) // stride + 1
    xp = np.pad(xd, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else xd
    cols = kernels.im2col(xp, k, stride)
    w2 = w.data.reshape(o, -1)
    out = (w2 @ cols).reshape(o, n, ho, wo).transpose(1, 0, 2, 3)
    if squeeze:
        out = out[0]
    out = np.ascontiguousarray(out)

    def bw(g):
        g4 = g[None] if squeeze else g
        g2 = g4.transpose(1, 0, 2, 3).reshape(o, -1)
        gw = (g2 @ cols.T).reshape(w.shape) if _need(w) else None
        gx = None
        if _need(x):
            gxp = kernels.col2im(w2.T @ g2, xp.shape, k, stride)
            if padding:
                gxp = gxp[:, :, padding:padding + h, padding:padding + wid]
            gx = np.ascontiguousarray(gxp[0] if squeeze else gxp)
        return gx, gw

    return make(out, (x, w), bw, "conv2d")


# ---------------------------------------------------------------------------
# normalisation / softmax
# ---------------------------------------------------------------------------

def group_norm(x, groups, gamma, beta, eps=1e-5):
    """Group normalisation over (C,H,W) or (N,C,H,W) input."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    squeeze = x.ndim == 3
    xd = x.data[None] if squeeze else x.data
    n, c = xd.shape[:2]
    if groups < 1 or c % groups:
        raise ConfigError(f"group_norm: {c} channels not divisible into {groups} groups")
    xg = xd.reshape(n, groups, -1)
    mu = xg.mean(axis=2, keepdims=True)
    xc = xg - mu
    var = (xc * xc).mean(axis=2, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = (xc * inv).reshape(xd.shape)
    cshape = (1, c) + (1,) * (xd.ndim - 2)
    out = xhat * gamma.data.reshape(cshape) + beta.data.reshape(cshape)
    if squeeze:
        out = out[0]

    def bw(g):
        g4 = g[None] if squeeze else g
        red = (0,) + tuple(range(2, xd.ndim))
        ggam = (g4 * xhat).sum(axis=red) if _need(gamma) else None
        gbet = g4.sum(axis=red) if _need(beta) else None
        gx = None
        if _need(x):
            dxhat = (g4 * gamma.data.reshape(cshape)).reshape(n, groups, -1)
            xh = xhat.reshape(n, groups, -1)
            gxg = inv * (dxhat - dxhat.mean(axis=2, keepdims=True)
                         - xh * (dxhat * xh).mean(axis=2, keepdims=True))
            gx = gxg.reshape(xd.shape)
            if squeeze:
                gx = gx[0]
        return gx, ggam, gbet

    return make(out, (x, gamma, beta), bw, "group_norm")


def layer_norm(x, gamma, beta, eps=1e-5):
    """Normalise over the last axis."""
    x, gamma, beta = as_tensor(x), as_tensor(gamma), as_tensor(beta)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def bw(g):
        red = tuple(range(g.ndim - 1))
        ggam = (g * xhat).sum(axis=red) if _need(gamma) else None
        gbet = g.sum(axis=red) if _need(beta) else None
        gx = None
        if _need(x):
            d = g * gamma.data
            gx = inv * (d - d.mean(axis=-1, keepdims=True) - xhat * (d * xhat).mean(axis=-1, keepdims=True))
        return gx, ggam, gbet

    return make(out, (x, gamma, beta), bw, "layer_norm")


def softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    e = np.exp(z)
    y = e / e.sum(axis=axis, keepdims=True)

    def bw(g):
        return (y * (g - (g * y).sum(axis=axis, keepdims=True)),)

    return make(y, (x,), bw, "softmax")


def log_softmax(x, axis=-1):
    x = as_tensor(x)
    z = x.data - x.data.max(axis=axis, keepdims=True)
    lse = np.log(np.exp(z).sum(axis=axis, keepdims=True))
    out = z - lse
    sm = np.exp(out)

    def bw(g):
        return (g - sm * g.sum(axis=axis, keepdims=True),)

    return make(out, (x,), bw, "log_softmax")


# ---------------------------------------------------------------------------
# resampling
# ---------------------------------------------------------------------------

def upsample_nearest(x, factor):
    if int(factor) != factor or factor < 1:
        raise ConfigError(f"upsample factor must be an integer >= 1, got {factor}")
    factor = int(factor)
    x = as_tensor(x)
    if factor == 1:
        return make(x.data.copy(), (x,), lambda g: (g,), "upsample_nearest")
    out = x.data.repeat(factor, axis=-2).repeat(factor, axis=-1)

    def bw(g):
        sh = g.shape[:-2] + (x.shape[-2], factor, x.shape[-1], factor)
        return (g.reshape(sh).sum(axis=(-3, -1)),)

    return make(out, (x,), bw, "upsample_nearest")


def bilinear_matrix(n_in, n_out):
    """Row-stochastic (n_out, n_in) interpolation matrix, half-pixel centres."""
    m = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        src = min(max(src, 0.0), n_in - 1)
        lo = int(np.floor(src))
        hi = min(lo + 1, n_in - 1)
        frac = src - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m


def upsample_bilinear(x, size):
    """Separable bilinear resize of the two trailing axes to ``size``."""
    x = as_tensor(x)
    ah = Tensor(bilinear_matrix(x.shape[-2], size[0]))
    aw = Tensor(bilinear_matrix(x.shape[-1], size[1]).T)
    return matmul(matmul(ah, x), aw)


def dropout(x, p, rng, training=True):
    if not training or p <= 0.0:
        return x
    keep = (rng.random(x.shape) >= p) / (1.0 - p)
    return mul(x, Tensor(keep))
