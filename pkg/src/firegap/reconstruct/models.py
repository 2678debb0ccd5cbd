"""Stage-I networks: per-day fire-map reconstruction from a corrupted 42-channel state."""

from dataclasses import dataclass

import numpy as np

from firegap.blocks import PRIOR_LOGIT, UNetCore, sinusoidal_embedding
from firegap.datagen.channels import ENV_CHANNELS, FIRE_CHANNEL, FIRE_DERIVED, N_ENCODED
from firegap.gradcore import ops
from firegap.gradcore.nn import Conv2d, LayerNorm, Linear, Module, MultiHeadAttention, Parameter
from firegap.gradcore.tensor import ConfigError, DimensionError, NumericError, Tensor, as_tensor, no_grad
from firegap.occlusion import MASK_STATE
from firegap.trainer.losses import d3pm_loss, focal_loss, kl_gaussian


@dataclass
class ReconOutput:
    prob: np.ndarray  # (N, H, W) in [0, 1]
    binary: np.ndarray  # (N, H, W) uint8
    latent: dict = None  # CVAE: mu / logvar / z
    trace: list = None  # D3PM: remaining MASK count after each jump


def binarize(prob, threshold=0.5):
    """Strict ``prob > threshold``."""
    return (np.asarray(prob) > threshold).astype(np.uint8)


def as_batch(x):
    x = as_tensor(x)
    if x.ndim == 3:
        x = x.reshape((1,) + x.shape)
    if x.ndim != 4 or x.shape[1] != N_ENCODED:
        raise DimensionError(f"expected (N, {N_ENCODED}, H, W) input, got {x.shape}")
    return x


def categorical_view(x):
    """Ternary fire channel -> {0, 1, MASK_STATE} integer map."""
    f = x.data[:, FIRE_CHANNEL] if isinstance(x, Tensor) else np.asarray(x)[:, FIRE_CHANNEL]
    return np.where(f < 0, MASK_STATE, f > 0.5).astype(np.int64)


class ReconModel(Module):
    kind = ""
    focal_gamma = 2.0
    focal_alpha = 0.25

    def _set_loss(self, preset):
        self.focal_gamma = preset.focal_gamma
        self.focal_alpha = preset.focal_alpha

    def logits(self, x):
        raise NotImplementedError

    def loss(self, x, target, rng=None):
        return focal_loss(ops.sigmoid(self.logits(x))[:, 0], target, self.focal_gamma, self.focal_alpha)

    def predict_prob(self, x, rng=None, batch=32):
        x = np.asarray(x.data if isinstance(x, Tensor) else x)
        out = []
        with no_grad():
            for i in range(0, x.shape[0], batch):
                out.append(ops.sigmoid(self.logits(x[i:i + batch])).data[:, 0])
        return np.concatenate(out) if out else np.zeros((0,) + x.shape[-2:])

    def reconstruct(self, x, rng=None):
        prob = self.predict_prob(x, rng)
        return ReconOutput(prob, binarize(prob))


class MaskUNet(ReconModel):
    """Residual encoder-decoder with skips and bottleneck self-attention."""

    kind = "unet"

    def __init__(self, preset):
        self._set_loss(preset)
        self.core = UNetCore(N_ENCODED, preset.unet_channels, preset.unet_blocks, attn_heads=preset.unet_attn_heads)

    def logits(self, x):
        return self.core(as_batch(x))


class MaskCVAE(ReconModel):
    """Conditional VAE: prior p(z | x~) and posterior q(z | F, x~) share the x~ trunk.

    Default inference decodes the prior mean (deterministic).
    """

    kind = "cvae"

    def __init__(self, preset):
        self._set_loss(preset)
        ch = tuple(preset.cvae_channels)
        self.latent_dim = preset.cvae_latent
        self.beta = preset.cvae_beta
        self.cb = ch[-1]
        self.bsize = preset.size // 2 ** len(ch)
        self.core = UNetCore(N_ENCODED, ch, 1)
        self.post_convs = [Conv2d(1, ch[0], 3, stride=2, padding=1)] + [
            Conv2d(ch[0], ch[0], 3, stride=2, padding=1) for _ in range(len(ch) - 1)
        ]
        self.post_mix = Conv2d(self.cb + ch[0], self.cb, 3)
        self.prior_head = Linear(self.cb, 2 * self.latent_dim)
        self.post_head = Linear(self.cb, 2 * self.latent_dim)
        self.z_proj = Linear(self.latent_dim, self.cb * self.bsize * self.bsize)
        # small heads keep the initial KL and latent injection near zero
        for lin in (self.prior_head, self.post_head, self.z_proj):
            lin.weight.init = "normal"

    def _trunk(self, x):
        h, skips = self.core.encode(self.core.stem(x))
        return self.core.middle(h), skips

    def _split(self, ml):
        return ml[:, :self.latent_dim], ml[:, self.latent_dim:]

    def prior(self, h):
        return self._split(self.prior_head(h.mean(axis=(2, 3))))

    def posterior(self, h, target):
        g = Tensor(np.asarray(target, dtype=np.float64)[:, None])
        for conv in self.post_convs:
            g = ops.silu(conv(g))
        m = ops.silu(self.post_mix(ops.concat([h, g], axis=1)))
        return self._split(self.post_head(m.mean(axis=(2, 3))))

    def decode(self, h, skips, z):
        zmap = self.z_proj(z).reshape((-1, self.cb, self.bsize, self.bsize))
        return self.core.decode(h + zmap, skips)

    def loss_terms(self, x, target, rng):
        x = as_batch(x)
        h, skips = self._trunk(x)
        mu_p, lv_p = self.prior(h)
        mu_q, lv_q = self.posterior(h, target)
        eps = Tensor(rng.standard_normal(mu_q.shape))
        z = mu_q + ops.exp(lv_q * 0.5) * eps
        rec = focal_loss(ops.sigmoid(self.decode(h, skips, z))[:, 0], target, self.focal_gamma, self.focal_alpha)
        kl = kl_gaussian(mu_q, lv_q, mu_p, lv_p)
        if not np.isfinite(kl.data).all():
            raise NumericError(
                f"non-finite KL; posterior logvar in [{lv_q.data.min():.3g}, {lv_q.data.max():.3g}], "
                f"prior logvar in [{lv_p.data.min():.3g}, {lv_p.data.max():.3g}]"
            )
        return rec, kl

    def loss(self, x, target, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        rec, kl = self.loss_terms(x, target, rng)
        return rec + kl * self.beta

    def logits(self, x):
        h, skips = self._trunk(as_batch(x))
        mu_p, _ = self.prior(h)
        return self.decode(h, skips, mu_p)

    def sample(self, x, k, rng):
        """``k`` stochastic reconstructions with z ~ p(z | x~)."""
        if k < 1:
            raise ConfigError(f"sample count k={k} must be >= 1")
        outs = []
        with no_grad():
            h, skips = self._trunk(as_batch(x))
            mu_p, lv_p = self.prior(h)
            for _ in range(k):
                z = mu_p.data + np.exp(0.5 * lv_p.data) * rng.standard_normal(mu_p.shape)
                prob = ops.sigmoid(self.decode(h, skips, Tensor(z))).data[:, 0]
                outs.append(ReconOutput(prob, binarize(prob), {"mu": mu_p.data, "logvar": lv_p.data, "z": z}))
        return outs


class CrossBlock(Module):
    """Pre-norm cross-attention (fire queries, environment keys/values) + MLP."""

    def __init__(self, dim, heads, ratio):
        self.norm_q = LayerNorm(dim)
        self.norm_kv = LayerNorm(dim)
        self.attn = MultiHeadAttention(dim, heads)
        self.norm_mlp = LayerNorm(dim)
        self.fc1 = Linear(dim, ratio * dim)
        self.fc2 = Linear(ratio * dim, dim)

    def forward(self, q, kv):
        q = q + self.attn(self.norm_q(q), self.norm_kv(kv))
        return q + self.fc2(ops.silu(self.fc1(self.norm_mlp(q))))


class MaskViT(ReconModel):
    kind = "vit"
    _fire_idx = np.array(FIRE_DERIVED)
    _env_idx = np.array(ENV_CHANNELS)

    def __init__(self, preset):
        self._set_loss(preset)
        p = preset.vit_patch
        if preset.size % p:
            raise ConfigError(f"image size {preset.size} not divisible by patch {p}")
        self.p = p
        self.grid = preset.size // p
        dim = preset.vit_dim
        self.fire_embed = Linear(len(FIRE_DERIVED) * p * p, dim)
        self.env_embed = Linear(len(ENV_CHANNELS) * p * p, dim)
        self.pos = Parameter((self.grid * self.grid, dim), "normal")
        self.blocks = [CrossBlock(dim, preset.vit_heads, preset.vit_mlp_ratio) for _ in range(preset.vit_depth)]
        self.norm = LayerNorm(dim)
        self.head = Linear(dim, p * p)
        self.head.weight.init = "normal"
        self.head.bias.init = f"const:{PRIOR_LOGIT}"

    def patchify(self, x):
        n, c, h, w = x.shape
        p = self.p
        x = x.reshape((n, c, h // p, p, w // p, p)).transpose((0, 2, 4, 1, 3, 5))
        return x.reshape((n, (h // p) * (w // p), c * p * p))

    def unpatchify(self, t, h, w):
        n, p = t.shape[0], self.p
        t = t.reshape((n, h // p, w // p, p, p)).transpose((0, 1, 3, 2, 4))
        return t.reshape((n, 1, h, w))

    def tokens(self, x):
        x = as_batch(x)
        _, _, h, w = x.shape
        if h % self.p or w % self.p:
            raise ConfigError(f"spatial size {h}x{w} not divisible by patch {self.p}")
        if (h // self.p) * (w // self.p) != self.grid ** 2:
            raise DimensionError(f"{h}x{w} input does not match the {self.grid}x{self.grid} token grid")
        q = self.fire_embed(self.patchify(x[:, self._fire_idx])) + self.pos
        kv = self.env_embed(self.patchify(x[:, self._env_idx])) + self.pos
        return q, kv, h, w

    def logits(self, x):
        q, kv, h, w = self.tokens(x)
        for blk in self.blocks:
            q = blk(q, kv)
        return self.unpatchify(self.head(self.norm(q)), h, w)

    def attention_weights(self):
        return [blk.attn.last_weights for blk in self.blocks]


# ---------------------------------------------------------------------------
# absorbing-state discrete diffusion
# ---------------------------------------------------------------------------

def transition_matrix(s, steps):
    """One-step Q_s over {0, 1, MASK}; beta_s = 1 / (S - s + 1)."""
    if not 1 <= s <= steps:
        raise ConfigError(f"step {s} outside [1, {steps}]")
    beta = 1.0 / (steps - s + 1)
    return np.array([[1 - beta, 0.0, beta], [0.0, 1 - beta, beta], [0.0, 0.0, 1.0]])


def d3pm_forward_corrupt(f0, s, steps, rng):
    """Sample F^(s) ~ q(F^(s) | F^(0)); each non-MASK cell is MASK with probability s / S."""
    s_arr = np.asarray(s)
    if np.any(s_arr < 0) or np.any(s_arr > steps):
        raise ConfigError(f"diffusion step outside [0, {steps}]")
    f0 = np.asarray(f0, dtype=np.int64)
    p = s_arr.astype(np.float64) / steps
    if p.ndim:
        p = p.reshape(p.shape + (1,) * (f0.ndim - p.ndim))
    u = rng.random(f0.shape)
    return np.where(u < p, MASK_STATE, f0)


def reverse_distribution(state, logits, s, s_next):
    """p(F^(s_next) | F^(s)) per cell as (N, H, W, 3); s_next = s - 1 is the single step.

    MASK cells stay masked with probability s_next / s, otherwise take the
    predicted clean class; non-MASK cells are fixed.
    """
    z = logits[:, :2]
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    p0 = e / e.sum(axis=1, keepdims=True)
    if not np.isfinite(p0).all():
        raise NumericError("denoiser produced non-finite class probabilities")
    keep = s_next / s
    dist = np.zeros(state.shape + (3,))
    masked = state == MASK_STATE
    dist[..., 0] = np.where(masked, (1 - keep) * p0[:, 0], state == 0)
    dist[..., 1] = np.where(masked, (1 - keep) * p0[:, 1], state == 1)
    dist[..., 2] = np.where(masked, keep, 0.0)
    return dist


def sample_categorical(dist, rng):
    c = np.cumsum(dist, axis=-1)
    u = rng.random(dist.shape[:-1])[..., None]
    return np.minimum((u >= c).sum(axis=-1), dist.shape[-1] - 1)


class MaskD3PM(ReconModel):
    """Absorbing-state D3PM with an AdaGN ResUNet denoiser conditioned on x~ and the step."""

    kind = "d3pm"

    def __init__(self, preset):
        ch = tuple(preset.d3pm_channels)
        self.steps = preset.d3pm_steps
        self.sample_steps = preset.d3pm_sample_steps
        self.time_dim = preset.d3pm_time_dim
        self.t1 = Linear(self.time_dim, self.time_dim)
        self.t2 = Linear(self.time_dim, self.time_dim)
        self.cond_stem = Conv2d(N_ENCODED, ch[0], 3)
        self.state_stem = Conv2d(3, ch[0], 3, bias=False)
        self.core = UNetCore(None, ch, 1, emb_dim=self.time_dim, c_out=3)

    def time_embedding(self, s):
        return self.t2(ops.silu(self.t1(Tensor(sinusoidal_embedding(s, self.time_dim)))))

    def denoise(self, cond, state, s):
        """Logits over {0, 1, MASK}; ``cond`` is the cached conditioning stem output."""
        onehot = np.moveaxis(np.eye(3)[state], -1, 1)
        h = cond + self.state_stem(Tensor(onehot))
        return self.core(h, self.time_embedding(s))

    def loss(self, x, target, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        x = as_batch(x)
        obs = categorical_view(x)
        target = np.asarray(target, dtype=np.int64)
        s = rng.integers(1, self.steps + 1, size=x.shape[0])
        state = d3pm_forward_corrupt(target, s, self.steps, rng)
        state = np.where(obs != MASK_STATE, obs, state)
        return d3pm_loss(self.denoise(self.cond_stem(x), state, s), target, state)

    def reverse_step(self, state, s, x, rng, s_next=None, cond=None):
        """One reverse jump s -> s_next (default s - 1); returns (distribution, new state)."""
        x = as_batch(x)
        s_next = s - 1 if s_next is None else s_next
        with no_grad():
            cond = self.cond_stem(x) if cond is None else cond
            logits = self.denoise(cond, state, np.full(x.shape[0], s)).data
        dist = reverse_distribution(state, logits, s, s_next)
        new = sample_categorical(dist, rng)
        obs = categorical_view(x)
        return dist, np.where(obs != MASK_STATE, obs, new)

    def schedule(self, n_jumps=None):
        n_jumps = self.sample_steps if n_jumps is None else n_jumps
        pts = np.unique(np.round(np.linspace(0, self.steps, n_jumps + 1)).astype(int))
        return pts[::-1]

    def sample(self, x, rng, n_jumps=None):
        """Run the reverse chain from all-MASK (observed cells clamped); returns (state, trace)."""
        x = as_batch(x)
        obs = categorical_view(x)
        state = obs.copy()
        trace = []
        with no_grad():
            cond = self.cond_stem(x)
            sched = self.schedule(n_jumps)
            for s, s_next in zip(sched[:-1], sched[1:]):
                _, state = self.reverse_step(state, int(s), x, rng, int(s_next), cond)
                trace.append(int((state == MASK_STATE).sum()))
        return state, trace

    def predict_prob(self, x, rng=None, batch=32):
        rng = np.random.default_rng(0) if rng is None else rng
        x = np.asarray(x.data if isinstance(x, Tensor) else x)
        out = [self.sample(x[i:i + batch], rng)[0] for i in range(0, x.shape[0], batch)]
        return np.concatenate(out).astype(np.float64) if out else np.zeros((0,) + x.shape[-2:])

    def reconstruct(self, x, rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        x = np.asarray(x.data if isinstance(x, Tensor) else x)
        states, trace = [], []
        for i in range(0, x.shape[0], 32):
            st, tr = self.sample(x[i:i + 32], rng)
            states.append(st)
            trace.append(tr)
        state = np.concatenate(states).astype(np.float64)
        return ReconOutput(state, binarize(state), trace=trace)

    def logits(self, x):
        """Single-jump clean-class logit (fire minus no-fire) from the all-MASK state."""
        x = as_batch(x)
        obs = categorical_view(x)
        state = np.where(obs != MASK_STATE, obs, MASK_STATE)
        lg = self.denoise(self.cond_stem(x), state, np.full(x.shape[0], self.steps))
        return lg[:, 1:2] - lg[:, 0:1]


MODEL_KINDS = ("unet", "cvae", "vit", "d3pm")
_CLASSES = {"unet": MaskUNet, "cvae": MaskCVAE, "vit": MaskViT, "d3pm": MaskD3PM}


def build_model(kind, preset, seed=0):
    try:
        cls = _CLASSES[kind]
    except KeyError:
        raise ConfigError(f"unknown Stage-I model {kind!r}; choose from {MODEL_KINDS}") from None
    model = cls(preset).initialize(seed)
    model.preset = preset
    return model
