"""Non-learning Stage-I baselines operating on the ternary fire channel."""

import numpy as np

from firegap import kernels
from firegap.datagen.channels import FIRE_CHANNEL, N_ENCODED
from firegap.reconstruct.models import ReconOutput, binarize

DILATION_RADIUS = 5


def _ternary(x):
    x = np.asarray(x)
    if x.ndim >= 3 and x.shape[-3] == N_ENCODED:
        x = x[..., FIRE_CHANNEL, :, :]
    return x


def baseline_random(x, rng):
    """Missing cells ~ Bernoulli(0.5); observed cells copied."""
    f = _ternary(x)
    fill = (rng.random(f.shape) < 0.5).astype(np.float64)
    prob = np.where(f < 0, fill, f > 0.5).astype(np.float64)
    return ReconOutput(prob, binarize(prob))


def baseline_dilation(x, radius=DILATION_RADIUS):
    """Missing cells take the disk-dilated (d <= radius) value of the observed fire."""
    f = _ternary(x)
    flat = f.reshape((-1,) + f.shape[-2:])
    out = np.empty(flat.shape)
    for i, fi in enumerate(flat):
        dil = kernels.dilate_disk(fi > 0.5, radius)
        out[i] = np.where(fi < 0, dil, fi > 0.5)
    prob = out.reshape(f.shape)
    return ReconOutput(prob, binarize(prob))


class RandomBaseline:
    kind = "random"

    def __init__(self, seed=0):
        self.seed = seed

    def reconstruct(self, x, rng=None):
        return baseline_random(x, np.random.default_rng(self.seed) if rng is None else rng)


class DilationBaseline:
    kind = "dilation"

    def __init__(self, radius=DILATION_RADIUS):
        self.radius = radius

    def reconstruct(self, x, rng=None):
        return baseline_dilation(x, self.radius)
