"""Corruption operator: pixel-wise / block-wise masking of the fire channel.

Masks use 1 = observed, 0 = missing. The random stream for a day never
depends on eta, so masks at increasing eta are nested (pixel-wise: same
uniform field thresholded; block-wise: same block sequence, stopped later).
"""

from dataclasses import asdict, dataclass, field

import numpy as np

from firegap.datagen.channels import FIRE_CHANNEL, FIRE_TIME_CHANNEL
from firegap.gradcore.tensor import ConfigError, DimensionError

MECHANISMS = ("pixelwise", "blockwise")
ETA_GRID = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8)
MASK_STATE = 2  # categorical view: 0 no-fire, 1 fire, 2 MASK


def _check_eta(eta):
    if not 0.0 <= eta < 1.0:
        raise ConfigError(f"eta={eta} outside [0, 1)")


@dataclass(frozen=True)
class CorruptionSpec:
    mechanism: str = "pixelwise"
    eta: float = 0.0
    block_min: int = 4
    block_max: int = 16
    seed: int = 0
    # pixelwise candidates: "grid" (every cell) or "fire" (fire cells only)
    scope: str = "grid"
    # mask eta of the grid on frames without any fire
    cover_empty: bool = True

    def __post_init__(self):
        if self.mechanism not in MECHANISMS:
            raise ConfigError(f"unknown mechanism {self.mechanism!r}")
        _check_eta(self.eta)
        if not (isinstance(self.block_min, int) and isinstance(self.block_max, int)):
            raise ConfigError("block sizes must be integers")
        if not 4 <= self.block_min <= self.block_max <= 16:
            raise ConfigError(f"block size range [{self.block_min}, {self.block_max}] not inside [4, 16]")
        if self.scope not in ("grid", "fire"):
            raise ConfigError(f"unknown scope {self.scope!r}")

    def with_eta(self, eta):
        return CorruptionSpec(self.mechanism, float(eta), self.block_min, self.block_max, self.seed, self.scope, self.cover_empty)

    def rng(self, *key):
        mech = MECHANISMS.index(self.mechanism)
        return np.random.default_rng([int(self.seed) & 0xFFFFFFFF, 0xC0CC, mech, *[int(k) for k in key]])

    def to_json(self):
        return asdict(self)


@dataclass
class MaskStack:
    masks: np.ndarray  # (T, H, W) uint8
    achieved: np.ndarray  # (T,) masked-fire fraction per day
    rects: list = field(default_factory=list)  # per day: list of (y0, x0, y1, x1), clipped, half-open
    spec: CorruptionSpec = None

    @property
    def occluded(self):
        return self.masks == 0


def masked_fraction(fire, mask):
    fire = np.asarray(fire) != 0
    n = int(fire.sum())
    return float((fire & (np.asarray(mask) == 0)).sum()) / max(1, n)


def pixelwise_mask(fire, eta, rng, scope="fire", cover_empty=False):
    """Each candidate cell goes missing independently with probability ``eta``."""
    _check_eta(eta)
    fire = np.asarray(fire) != 0
    u = rng.random(fire.shape)
    drop = u < eta
    if scope == "fire" and not (cover_empty and not fire.any()):
        drop &= fire
    return (~drop).astype(np.uint8)


def _window_counts(grid, s):
    """Sum of ``grid`` in every s x s window whose top-left is in [-(s-1), H-1] x [-(s-1), W-1]."""
    p = np.pad(grid.astype(np.int64), s - 1)
    c = np.zeros((p.shape[0] + 1, p.shape[1] + 1), dtype=np.int64)
    c[1:, 1:] = p.cumsum(0).cumsum(1)
    h, w = grid.shape[0] + s - 1, grid.shape[1] + s - 1
    return c[s:s + h, s:s + w] - c[:h, s:s + w] - c[s:s + h, :w] + c[:h, :w]


def blockwise_mask(fire, eta, rng, size_range=(4, 16), cover_empty=False):
    """Drop s x s blocks overlapping still-visible fire until the masked-fire fraction reaches eta.

    Returns (mask, achieved fraction, rectangles). Blocks are clipped at the
    borders. Without fire the mask is all ones (fraction 0), unless
    ``cover_empty`` asks for blocks anywhere until eta of the grid is gone.
    """
    _check_eta(eta)
    lo, hi = size_range
    fire = np.asarray(fire) != 0
    h, w = fire.shape
    mask = np.ones((h, w), dtype=np.uint8)
    rects = []
    total = int(fire.sum())
    if eta == 0.0:
        return mask, 0.0, rects
    if total == 0:
        if cover_empty:
            while (mask == 0).mean() < eta:
                s = int(rng.integers(lo, hi + 1))
                y0 = int(rng.integers(-(s - 1), h))
                x0 = int(rng.integers(-(s - 1), w))
                r = (max(y0, 0), max(x0, 0), min(y0 + s, h), min(x0 + s, w))
                mask[r[0]:r[2], r[1]:r[3]] = 0
                rects.append(r)
        return mask, 0.0, rects
    masked = 0
    while masked < eta * total:
        s = int(rng.integers(lo, hi + 1))
        visible = fire & (mask == 1)
        counts = _window_counts(visible, s)
        pos = np.flatnonzero(counts.ravel() > 0)
        k = int(pos[rng.integers(pos.size)])
        y0, x0 = divmod(k, counts.shape[1])
        y0, x0 = y0 - (s - 1), x0 - (s - 1)
        r = (max(y0, 0), max(x0, 0), min(y0 + s, h), min(x0 + s, w))
        mask[r[0]:r[2], r[1]:r[3]] = 0
        rects.append(r)
        masked = int((fire & (mask == 0)).sum())
    return mask, masked / total, rects


def make_masks(fire_days, spec, key=()):
    """MaskStack for a (T, H, W) stack; the same spec (eta) applies to every day."""
    fire_days = np.asarray(fire_days)
    masks, achieved, rects = [], [], []
    for d, f in enumerate(fire_days):
        rng = spec.rng(*key, d)
        if spec.mechanism == "pixelwise":
            m = pixelwise_mask(f, spec.eta, rng, spec.scope, spec.cover_empty)
            r = []
        else:
            m, _, r = blockwise_mask(f, spec.eta, rng, (spec.block_min, spec.block_max), spec.cover_empty)
        masks.append(m)
        achieved.append(masked_fraction(f, m))
        rects.append(r)
    return MaskStack(np.stack(masks), np.asarray(achieved), rects, spec)


@dataclass
class CorruptedSample:
    inputs: np.ndarray  # (T, 42, H, W); fire channel ternary, fire_time zeroed where missing
    masks: MaskStack
    clean: object = None  # the clean SampleSequence (or inputs array) this came from

    @property
    def fire(self):
        return self.inputs[:, FIRE_CHANNEL]

    def categorical(self):
        """(T, H, W) int8 view with states {0, 1, MASK_STATE}."""
        f = self.inputs[:, FIRE_CHANNEL]
        return np.where(f < 0, MASK_STATE, f).astype(np.int8)

    def hadamard(self):
        """Inputs with the fire channel as F * M (missing reads as no fire)."""
        out = self.inputs.copy()
        out[:, FIRE_CHANNEL] = np.maximum(out[:, FIRE_CHANNEL], 0)
        return out


def apply_mask(inputs, masks):
    """Corrupt a (T, 42, H, W) (or single-day (42, H, W)) stack with a mask stack."""
    clean = inputs
    if hasattr(inputs, "inputs"):
        inputs = inputs.inputs
    stack = masks if isinstance(masks, MaskStack) else None
    m = np.asarray(stack.masks if stack is not None else masks)
    single = inputs.ndim == 3
    x = inputs[None] if single else inputs
    m = m[None] if m.ndim == 2 else m
    if m.shape != (x.shape[0],) + x.shape[2:]:
        raise DimensionError(f"mask shape {m.shape} does not match inputs {x.shape}")
    out = np.array(x, copy=True)
    miss = m == 0
    fire = out[:, FIRE_CHANNEL]
    fire[miss] = -1
    out[:, FIRE_TIME_CHANNEL][miss] = 0
    if stack is None:
        stack = MaskStack(m.astype(np.uint8), np.array([masked_fraction(x[d, FIRE_CHANNEL], m[d]) for d in range(m.shape[0])]))
    return CorruptedSample(out[0] if single else out, stack, clean)


def corrupt(inputs, spec, key=()):
    """Masks + corrupted inputs for one sample. ``key`` picks the random stream (e.g. event, day)."""
    x = inputs.inputs if hasattr(inputs, "inputs") else inputs
    stack = make_masks(x[:, FIRE_CHANNEL] > 0.5, spec, key)
    return apply_mask(inputs, stack)
