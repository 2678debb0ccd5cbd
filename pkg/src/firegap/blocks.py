"""Convolutional building blocks shared by the Stage-I and Stage-II networks (NCHW)."""

import numpy as np

from firegap.gradcore import ops
from firegap.gradcore.nn import Conv2d, GroupNorm, Linear, Module, MultiHeadAttention


def norm_groups(c, groups=8):
    g = min(groups, c)
    while c % g:
        g -= 1
    return g


def sinusoidal_embedding(steps, dim):
    """(N,) integer steps -> (N, dim) sin/cos features."""
    steps = np.asarray(steps, dtype=np.float64).reshape(-1, 1)
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / max(half - 1, 1))
    ang = steps * freqs[None]
    return np.concatenate([np.sin(ang), np.cos(ang)], axis=1)


class ResBlock(Module):
    """GN-SiLU-Conv x2 with a residual path; optional AdaGN (scale, shift) from an embedding."""

    def __init__(self, c_in, c_out, emb_dim=None, dropout=0.0):
        self.norm1 = GroupNorm(c_in, norm_groups(c_in))
        self.conv1 = Conv2d(c_in, c_out, 3)
        self.norm2 = GroupNorm(c_out, norm_groups(c_out))
        self.conv2 = Conv2d(c_out, c_out, 3)
        self.skip = Conv2d(c_in, c_out, 1) if c_in != c_out else None
        self.emb = Linear(emb_dim, 2 * c_out) if emb_dim else None
        self.dropout = dropout
        self.rng = np.random.default_rng(0)

    def forward(self, x, emb=None):
        h = self.conv1(ops.silu(self.norm1(x)))
        h = self.norm2(h)
        if self.emb is not None:
            ss = self.emb(ops.silu(emb))  # (N, 2C)
            c = h.shape[1]
            scale = ss[:, :c].reshape((-1, c, 1, 1))
            shift = ss[:, c:].reshape((-1, c, 1, 1))
            h = h * (scale + 1.0) + shift
        h = ops.silu(h)
        if self.dropout:
            h = ops.dropout(h, self.dropout, self.rng, self.training)
        h = self.conv2(h)
        return h + (self.skip(x) if self.skip is not None else x)


class Down(Module):
    def __init__(self, c):
        self.conv = Conv2d(c, c, 3, stride=2, padding=1)

    def forward(self, x):
        return self.conv(x)


class Up(Module):
    """3x3 conv at the coarse resolution, then nearest-neighbour x2."""

    def __init__(self, c):
        self.conv = Conv2d(c, c, 3)

    def forward(self, x):
        return ops.upsample_nearest(self.conv(x), 2)


class SpatialSelfAttention(Module):
    """Multi-head self-attention over the pixels of a (N, C, H, W) map, residual."""

    def __init__(self, c, heads):
        self.norm = GroupNorm(c, norm_groups(c))
        self.attn = MultiHeadAttention(c, heads)

    def forward(self, x):
        n, c, h, w = x.shape
        t = self.norm(x).reshape((n, c, h * w)).transpose((0, 2, 1))
        y = self.attn(t).transpose((0, 2, 1)).reshape((n, c, h, w))
        return x + y


PRIOR_LOGIT = -2.0  # sigmoid ~ 0.12, roughly the burning share of a fire-bearing frame


class UNetCore(Module):
    """Encoder/decoder with skips. ``channels[i]`` is the width at resolution size/2**i;
    the bottleneck sits at size/2**len(channels) with ``channels[-1]`` features."""

    def __init__(self, c_in, channels, blocks=1, emb_dim=None, attn_heads=0, c_out=1):
        self.channels = tuple(channels)
        # c_in=None: caller supplies the stem output itself
        self.stem = Conv2d(c_in, channels[0], 3) if c_in else None
        enc, downs = [], []
        prev = channels[0]
        for c in channels:
            for _ in range(blocks):
                enc.append(ResBlock(prev, c, emb_dim))
                prev = c
            downs.append(Down(c))
        self.enc = enc
        self.downs = downs
        self.mid1 = ResBlock(prev, prev, emb_dim)
        self.mid_attn = SpatialSelfAttention(prev, attn_heads) if attn_heads else None
        self.mid2 = ResBlock(prev, prev, emb_dim)
        ups, dec = [], []
        for c in reversed(channels):
            ups.append(Up(prev))
            for b in range(blocks):
                dec.append(ResBlock(prev + c if b == 0 else c, c, emb_dim))
                prev = c
        self.ups = ups
        self.dec = dec
        self.blocks = blocks
        self.head_norm = GroupNorm(prev, norm_groups(prev))
        self.head = Conv2d(prev, c_out, 1)
        # start at a constant low-fire prediction (focal-loss prior trick)
        self.head.weight.init = "zeros"
        if c_out == 1:
            self.head.bias.init = f"const:{PRIOR_LOGIT}"

    def encode(self, h, emb=None):
        skips = []
        k = 0
        for lvl in range(len(self.channels)):
            for _ in range(self.blocks):
                h = self.enc[k](h, emb)
                k += 1
            skips.append(h)
            h = self.downs[lvl](h)
        return h, skips

    def middle(self, h, emb=None):
        h = self.mid1(h, emb)
        if self.mid_attn is not None:
            h = self.mid_attn(h)
        return self.mid2(h, emb)

    def decode(self, h, skips, emb=None):
        k = 0
        for lvl in range(len(self.channels)):
            h = self.ups[lvl](h)
            h = ops.concat([h, skips[-1 - lvl]], axis=1)
            for _ in range(self.blocks):
                h = self.dec[k](h, emb)
                k += 1
        return self.head(ops.silu(self.head_norm(h)))

    def forward(self, x, emb=None):
        h, skips = self.encode(self.stem(x) if self.stem is not None else x, emb)
        return self.decode(self.middle(h, emb), skips, emb)
