"""Tensor type and the reverse-mode tape."""

from contextlib import contextmanager

import numpy as np


class GradError(RuntimeError):
    """Misuse of the autodiff engine (non-scalar loss, non-deterministic f, ...)."""


class DimensionError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class NumericError(ArithmeticError):
    """Non-finite values where finite ones are required (NaN loss, overflowing KL, ...)."""


_grad_enabled = True


def is_grad_enabled():
    return _grad_enabled


@contextmanager
def no_grad():
    """Evaluate without recording any graph."""
    global _grad_enabled
    prev = _grad_enabled
    _grad_enabled = False
    try:
        yield
    finally:
        _grad_enabled = prev


class Tensor:
    """float64 n-d array that can sit on a gradient tape.

    A non-leaf tensor keeps its parents and a backward closure mapping the
    upstream gradient to one gradient (or ``None``) per parent.
    """

    __slots__ = ("data", "requires_grad", "grad", "_parents", "_backward", "op", "taint")
    __array_priority__ = 100

    def __init__(self, data, requires_grad=False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._backward = None
        self.op = "leaf"
        self.taint = False

    @property
    def shape(self):
        return self.data.shape

    @property
    def ndim(self):
        return self.data.ndim

    @property
    def size(self):
        return self.data.size

    def numpy(self):
        return self.data

    def item(self):
        return float(self.data.reshape(-1)[0]) if self.data.size == 1 else float(self.data)

    def detach(self):
        return Tensor(self.data)

    def zero_grad(self):
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.shape}, op={self.op}, requires_grad={self.requires_grad})"

    def __len__(self):
        return self.data.shape[0]

    # operator sugar; implementations live in ops.py
    def __add__(self, other):
        return _ops().add(self, other)

    def __radd__(self, other):
        return _ops().add(other, self)

    def __sub__(self, other):
        return _ops().sub(self, other)

    def __rsub__(self, other):
        return _ops().sub(other, self)

    def __mul__(self, other):
        return _ops().mul(self, other)

    def __rmul__(self, other):
        return _ops().mul(other, self)

    def __truediv__(self, other):
        return _ops().div(self, other)

    def __rtruediv__(self, other):
        return _ops().div(other, self)

    def __neg__(self):
        return _ops().neg(self)

    def __pow__(self, p):
        return _ops().power(self, p)

    def __matmul__(self, other):
        return _ops().matmul(self, other)

    def __getitem__(self, idx):
        return _ops().getitem(self, idx)

    def sum(self, axis=None, keepdims=False):
        return _ops().sum(self, axis, keepdims)

    def mean(self, axis=None, keepdims=False):
        return _ops().mean(self, axis, keepdims)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return _ops().reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return _ops().transpose(self, axes or None)

    def backward(self):
        backward(self)


def _ops():
    from firegap.gradcore import ops

    return ops


def as_tensor(x):
    return x if isinstance(x, Tensor) else Tensor(x)


def make(data, parents, backward_fn, op):
    """Create an op output, recording it on the tape only when needed."""
    out = Tensor(data)
    out.op = op
    out.taint = any(p.taint for p in parents)
    if _grad_enabled and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward_fn
    return out


class Tape:
    """Topologically ordered record of the primitive applications behind a tensor."""

    def __init__(self, nodes):
        self.nodes = nodes

    @classmethod
    def from_output(cls, out):
        order, seen = [], set()
        stack = [(out, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in seen:
                continue
            seen.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in seen:
                    stack.append((p, False))
        return cls(order)

    def __len__(self):
        return len(self.nodes)

    def ops(self):
        return [n.op for n in self.nodes]

    def backward(self, loss, params=None, retain_graph=False):
        if loss.data.size != 1:
            raise GradError(f"backward needs a scalar loss, got shape {loss.shape}")
        grads = {id(loss): np.ones_like(loss.data)}
        for node in reversed(self.nodes):
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node.grad = g.copy() if node.grad is None else node.grad + g
                continue
            pgrads = node._backward(g)
            for p, pg in zip(node._parents, pgrads):
                if pg is None or not p.requires_grad:
                    continue
                if pg.shape != p.data.shape:
                    raise GradError(f"{node.op}: gradient shape {pg.shape} != {p.data.shape}")
                key = id(p)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
            if not retain_graph:
                node._parents = ()
                node._backward = None
        if params is not None:
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)


def backward(loss, params=None, retain_graph=False):
    """Populate ``.grad`` on every leaf reachable from ``loss``.

    Leaves listed in ``params`` but not reached receive a zero gradient.
    """
    if not isinstance(loss, Tensor):
        raise GradError("loss must be a Tensor")
    if loss.data.size != 1:
        raise GradError(f"backward needs a scalar loss, got shape {loss.shape}")
    if not loss.requires_grad:
        if params is not None:
            for p in params:
                if p.grad is None:
                    p.grad = np.zeros_like(p.data)
        return Tape([])
    tape = Tape.from_output(loss)
    tape.backward(loss, params=params, retain_graph=retain_graph)
    return tape
