"""Stage-II next-day forecaster: U-Net encoder shared over days, temporal attention at the bottleneck."""

from dataclasses import dataclass

import numpy as np

from firegap.blocks import PRIOR_LOGIT, Down, ResBlock, Up, norm_groups
from firegap.datagen.channels import N_ENCODED
from firegap.gradcore import ops
from firegap.gradcore.nn import Conv2d, GroupNorm, Module, Parameter
from firegap.gradcore.tensor import ConfigError, DimensionError, Tensor, as_tensor, no_grad
from firegap.trainer.losses import focal_loss


@dataclass
class TemporalAttentionRecord:
    """Bottleneck attention, shape (N, heads, T, h, w); h = w = 1 in scalar mode."""

    alpha: np.ndarray
    scalar: bool = False

    @property
    def heads(self):
        return self.alpha.shape[1]

    def per_day(self):
        """(N, heads, T) weights averaged over bottleneck pixels."""
        return self.alpha.mean(axis=(-2, -1))


def attention_weights(scores, axis=1):
    """Softmax over the time axis."""
    return ops.softmax(scores, axis=axis)


def temporal_fuse(features, alpha, heads):
    """Collapse time: z = sum_k alpha_k * h_k, channel groups follow their head.

    ``features`` (N, T, C, H, W); ``alpha`` (N, T, heads, h, w) with (h, w) either
    (H, W) or (1, 1). No value projection is applied.
    """
    features, alpha = as_tensor(features), as_tensor(alpha)
    n, t, c, hh, ww = features.shape
    if c % heads:
        raise ConfigError(f"{c} channels not divisible by {heads} heads")
    a = alpha.reshape((n, t, heads, 1) + alpha.shape[-2:])
    f = features.reshape((n, t, heads, c // heads, hh, ww))
    return ops.sum(f * a, axis=1).reshape((n, c, hh, ww))


class UTAE(Module):
    kind = "utae"

    def __init__(self, preset):
        ch = tuple(preset.utae_channels)
        self.channels = ch
        self.T = preset.history
        self.heads = preset.utae_heads
        self.key_dim = preset.utae_key_dim
        self.scalar_alpha = preset.utae_scalar_alpha
        self.drop = preset.utae_dropout
        self.focal_gamma = preset.focal_gamma
        self.focal_alpha = preset.utae_focal_alpha
        for c in ch:
            if c % self.heads:
                raise ConfigError(f"encoder width {c} not divisible by {self.heads} temporal heads")
        self.use_position = True
        self.rng = np.random.default_rng(0)
        self.last_attention = None

        self.stem = Conv2d(N_ENCODED, ch[0], 3)
        self.enc = [ResBlock(ch[0], ch[0])] + [ResBlock(ch[i - 1], ch[i]) for i in range(1, len(ch))]
        self.downs = [Down(c) for c in ch[:-1]]

        cb = ch[-1]
        self.key_norm = GroupNorm(cb, norm_groups(cb))
        self.key = Conv2d(cb, self.heads * self.key_dim, 1)
        self.pos = Parameter((self.T, self.heads * self.key_dim), "normal")
        self.query = Parameter((self.heads, self.key_dim), "normal")

        self.ups = [Up(ch[i + 1]) for i in reversed(range(len(ch) - 1))]
        self.dec = [ResBlock(ch[i + 1] + ch[i], ch[i]) for i in reversed(range(len(ch) - 1))]
        self.head = Conv2d(ch[0], 1, 1)
        self.head.weight.init = "zeros"
        self.head.bias.init = f"const:{PRIOR_LOGIT}"

    def _check(self, x):
        x = as_tensor(x)
        if x.ndim == 4:
            x = x.reshape((1,) + x.shape)
        if x.ndim != 5 or x.shape[1] != self.T or x.shape[2] != N_ENCODED:
            raise DimensionError(f"expected (N, {self.T}, {N_ENCODED}, H, W) sequence, got {x.shape}")
        return x

    def encode(self, x):
        """Per-day features at every level, each (N, T, C_l, H_l, W_l)."""
        x = self._check(x)
        n, t = x.shape[:2]
        h = self.stem(x.reshape((n * t,) + x.shape[2:]))
        feats = []
        for lvl, block in enumerate(self.enc):
            if lvl:
                h = self.downs[lvl - 1](h)
            h = block(h)
            feats.append(h.reshape((n, t) + h.shape[1:]))
        return feats

    def scores(self, bottleneck):
        """Master-query logits (N, T, heads, h, w) from bottleneck features."""
        n, t, c, hh, ww = bottleneck.shape
        k = self.key(self.key_norm(bottleneck.reshape((n * t, c, hh, ww))))
        k = k.reshape((n, t, self.heads, self.key_dim, hh, ww))
        if self.use_position:
            k = k + self.pos.reshape((1, t, self.heads, self.key_dim, 1, 1))
        if self.scalar_alpha:
            k = ops.mean(k, axis=(-2, -1), keepdims=True)
        q = self.query.reshape((1, 1, self.heads, self.key_dim, 1, 1))
        return ops.sum(k * q, axis=3) * (1.0 / np.sqrt(self.key_dim))

    def fuse(self, feats, rng=None):
        """Temporal attention at the bottleneck, broadcast to every level. Returns (zs, record)."""
        alpha = attention_weights(self.scores(feats[-1]))
        record = TemporalAttentionRecord(alpha.data.transpose(0, 2, 1, 3, 4).copy(), self.scalar_alpha)
        self.last_attention = record
        if self.drop:
            alpha = ops.dropout(alpha, self.drop, rng or self.rng, self.training)
        n, t, heads, ah, aw = alpha.shape
        zs = []
        for f in feats:
            size = f.shape[-2:]
            a = alpha
            if not self.scalar_alpha and (ah, aw) != tuple(size):
                a = ops.upsample_bilinear(alpha.reshape((n, t * heads, ah, aw)), size)
                a = a.reshape((n, t, heads) + tuple(size))
            zs.append(temporal_fuse(f, a, heads))
        return zs, record

    def decode(self, zs, rng=None):
        """Skip decoder -> logits (N, 1, H, W)."""
        h = zs[-1]
        for i, (up, block) in enumerate(zip(self.ups, self.dec)):
            h = block(ops.concat([up(h), zs[-2 - i]], axis=1))
        if self.drop:
            h = ops.dropout(h, self.drop, rng or self.rng, self.training)
        return self.head(h)

    def logits(self, x, rng=None):
        zs, _ = self.fuse(self.encode(x), rng)
        return self.decode(zs, rng)

    def forward(self, x, rng=None):
        return ops.sigmoid(self.logits(x, rng))

    def loss(self, x, target, rng=None):
        prob = ops.sigmoid(self.logits(x, rng))[:, 0]
        return focal_loss(prob, target, self.focal_gamma, self.focal_alpha)

    def predict_prob(self, x, batch=16):
        """(N, T, 42, H, W) -> (N, H, W) next-day fire probabilities, eval mode."""
        x = np.asarray(x.data if isinstance(x, Tensor) else x)
        if x.ndim == 4:
            x = x[None]
        was = self.training
        self.eval()
        out = []
        try:
            with no_grad():
                for i in range(0, x.shape[0], batch):
                    out.append(ops.sigmoid(self.logits(x[i:i + batch])).data[:, 0])
        finally:
            self.train(was)
        return np.concatenate(out) if out else np.zeros((0,) + x.shape[-2:])


def build_forecaster(preset, seed=0):
    model = UTAE(preset).initialize(seed)
    model.rng = np.random.default_rng([seed, 0xD40])
    model.preset = preset
    return model
