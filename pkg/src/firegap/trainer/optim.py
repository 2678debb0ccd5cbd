"""AdamW, cosine learning-rate decay and global-norm clipping."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamState:
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    t: int = 0


def adamw_step(params, grads, state, lr, weight_decay=1e-2, betas=(0.9, 0.999), eps=1e-8):
    """One AdamW update in place.

    Weight decay is decoupled: p <- p - lr * (m_hat / (sqrt(v_hat) + eps) + wd * p),
    so with zero gradients each step multiplies p by (1 - lr * wd).
    """
    b1, b2 = betas
    state.t += 1
    c1 = 1.0 - b1 ** state.t
    c2 = 1.0 - b2 ** state.t
    for i, (p, g) in enumerate(zip(params, grads)):
        if g is None:
            g = np.zeros_like(p.data)
        m = state.m.get(i)
        if m is None:
            m = state.m[i] = np.zeros_like(p.data)
            state.v[i] = np.zeros_like(p.data)
        v = state.v[i]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        update = (m / c1) / (np.sqrt(v / c2) + eps)
        p.data = p.data - lr * (update + weight_decay * p.data)
    return state


def cosine_lr(epoch, max_epochs, lr0):
    """lr0 * (1 + cos(pi * epoch / max_epochs)) / 2."""
    return lr0 * 0.5 * (1.0 + math.cos(math.pi * epoch / max_epochs))


def clip_grad_norm(grads, max_norm):
    """Scale gradients in place so their global L2 norm is at most ``max_norm``; returns the pre-clip norm."""
    total = math.sqrt(sum(float(np.vdot(g, g)) for g in grads if g is not None))
    if max_norm and total > max_norm:
        scale = max_norm / (total + 1e-12)
        for g in grads:
            if g is not None:
                g *= scale
    return total
