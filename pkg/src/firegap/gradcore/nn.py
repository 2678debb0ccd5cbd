"""Module containers and the standard layers used by every model."""

import zlib

import numpy as np

from firegap.gradcore import ops
from firegap.gradcore.tensor import ConfigError, Tensor


class Parameter(Tensor):
    """Learnable tensor. ``init`` names the scheme applied by :meth:`Module.initialize`."""

    __slots__ = ("init", "fan_in")

    def __init__(self, shape, init="zeros", fan_in=None):
        super().__init__(np.zeros(shape), requires_grad=True)
        self.init = init
        self.fan_in = fan_in


def param_rng(seed, name):
    """Per-parameter RNG from the run seed and a stable hash of the parameter path."""
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, zlib.crc32(name.encode("utf-8"))])


class Module:
    """Minimal module tree: attributes that are Parameters or Modules are registered in assignment order."""

    training = True

    def __setattr__(self, key, value):
        if isinstance(value, (Parameter, Module)) or (
            isinstance(value, list) and value and all(isinstance(v, Module) for v in value)
        ):
            self.__dict__.setdefault("_children", []).append(key)
        object.__setattr__(self, key, value)

    def named_parameters(self, prefix=""):
        for key in self.__dict__.get("_children", []):
            val = getattr(self, key)
            path = f"{prefix}{key}"
            if isinstance(val, Parameter):
                yield path, val
            elif isinstance(val, Module):
                yield from val.named_parameters(path + ".")
            else:
                for i, m in enumerate(val):
                    yield from m.named_parameters(f"{path}.{i}.")

    def parameters(self):
        return [p for _, p in self.named_parameters()]

    def modules(self):
        yield self
        for key in self.__dict__.get("_children", []):
            val = getattr(self, key)
            if isinstance(val, Module):
                yield from val.modules()
            elif isinstance(val, list):
                for m in val:
                    yield from m.modules()

    def train(self, mode=True):
        for m in self.modules():
            m.training = mode
        return self

    def eval(self):
        return self.train(False)

    def zero_grad(self):
        for p in self.parameters():
            p.grad = None

    def initialize(self, seed):
        """Kaiming-uniform weights (fan-in), zero biases, unit/zero norm affine; ``const:<v>`` fills a constant."""
        names = set()
        for name, p in self.named_parameters():
            if name in names:
                raise ConfigError(f"duplicate parameter name {name}")
            names.add(name)
            if p.init == "kaiming":
                bound = np.sqrt(6.0 / p.fan_in)
                p.data = param_rng(seed, name).uniform(-bound, bound, size=p.shape)
            elif p.init == "ones":
                p.data = np.ones(p.shape)
            elif p.init == "normal":
                p.data = 0.02 * param_rng(seed, name).standard_normal(p.shape)
            elif p.init.startswith("const:"):
                p.data = np.full(p.shape, float(p.init[6:]))
            else:
                p.data = np.zeros(p.shape)
        return self

    def state_dict(self):
        return {name: p.data.copy() for name, p in self.named_parameters()}

    def load_state_dict(self, state):
        own = dict(self.named_parameters())
        if set(own) != set(state):
            missing = sorted(set(own) - set(state))[:3]
            extra = sorted(set(state) - set(own))[:3]
            raise ConfigError(f"state mismatch; missing={missing} unexpected={extra}")
        for name, p in own.items():
            arr = np.asarray(state[name], dtype=np.float64)
            if arr.shape != p.shape:
                raise ConfigError(f"shape mismatch for {name}: {arr.shape} vs {p.shape}")
            p.data = arr.copy()

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)


class Conv2d(Module):
    def __init__(self, c_in, c_out, k=3, stride=1, padding=None, bias=True):
        self.stride = stride
        self.padding = k // 2 if padding is None else padding
        self.weight = Parameter((c_out, c_in, k, k), "kaiming", fan_in=c_in * k * k)
        self.bias = Parameter((c_out,)) if bias else None

    def forward(self, x):
        y = ops.conv2d(x, self.weight, self.stride, self.padding)
        if self.bias is not None:
            y = y + self.bias.reshape((-1, 1, 1))
        return y


class Linear(Module):
    def __init__(self, d_in, d_out, bias=True):
        self.weight = Parameter((d_in, d_out), "kaiming", fan_in=d_in)
        self.bias = Parameter((d_out,)) if bias else None

    def forward(self, x):
        y = ops.matmul(x, self.weight)
        if self.bias is not None:
            y = y + self.bias
        return y


class GroupNorm(Module):
    def __init__(self, channels, groups=8, eps=1e-5):
        if channels % groups:
            raise ConfigError(f"GroupNorm: {channels} channels not divisible by {groups} groups")
        self.groups = groups
        self.eps = eps
        self.gamma = Parameter((channels,), "ones")
        self.beta = Parameter((channels,))

    def forward(self, x):
        return ops.group_norm(x, self.groups, self.gamma, self.beta, self.eps)


class LayerNorm(Module):
    def __init__(self, dim, eps=1e-5):
        self.eps = eps
        self.gamma = Parameter((dim,), "ones")
        self.beta = Parameter((dim,))

    def forward(self, x):
        return ops.layer_norm(x, self.gamma, self.beta, self.eps)


def split_heads(x, heads):
    """(..., L, D) -> (..., heads, L, D/heads)."""
    *lead, length, dim = x.shape
    x = x.reshape(tuple(lead) + (length, heads, dim // heads))
    nd = x.ndim
    axes = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    return x.transpose(axes)


def merge_heads(x):
    *lead, heads, length, dh = x.shape
    nd = x.ndim
    axes = tuple(range(nd - 3)) + (nd - 2, nd - 3, nd - 1)
    return x.transpose(axes).reshape(tuple(lead) + (length, heads * dh))


def scaled_dot_attention(q, k, v):
    """softmax(q k^T / sqrt(d_k)) v; returns (output, weights)."""
    dk = q.shape[-1]
    scores = ops.matmul(q, k.transpose(_swap_last(k.ndim))) * (1.0 / np.sqrt(dk))
    w = ops.softmax(scores, axis=-1)
    return ops.matmul(w, v), w


def _swap_last(nd):
    return tuple(range(nd - 2)) + (nd - 1, nd - 2)


class MultiHeadAttention(Module):
    """Multi-head attention with separate query and key/value streams."""

    def __init__(self, dim, heads, dim_kv=None):
        if dim % heads:
            raise ConfigError(f"attention dim {dim} not divisible by {heads} heads")
        dim_kv = dim if dim_kv is None else dim_kv
        self.heads = heads
        self.q = Linear(dim, dim)
        self.k = Linear(dim_kv, dim)
        self.v = Linear(dim_kv, dim)
        self.o = Linear(dim, dim)
        self.last_weights = None

    def forward(self, x, context=None):
        context = x if context is None else context
        q = split_heads(self.q(x), self.heads)
        k = split_heads(self.k(context), self.heads)
        v = split_heads(self.v(context), self.heads)
        out, w = scaled_dot_attention(q, k, v)
        self.last_weights = w.data
        return self.o(merge_heads(out))
