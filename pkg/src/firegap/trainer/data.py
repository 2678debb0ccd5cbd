"""Minibatch sources for the two stages."""

import numpy as np

from firegap.datagen.channels import FIRE_CHANNEL
from firegap.gradcore.tensor import ConfigError
from firegap.occlusion import ETA_GRID, MECHANISMS, CorruptionSpec, apply_mask, make_masks

VAL_EPOCH = 1 << 20  # mask stream key reserved for validation frames


class FrameSource:
    """Single-day Stage-I pairs (corrupted state, clean fire map).

    Every epoch draws fresh masks with a mechanism and eta picked uniformly
    from the grid (mixed-eta training); pass a single eta for per-eta training.
    """

    def __init__(self, ds, train_idx, val_idx, etas=ETA_GRID, mechanisms=MECHANISMS, seed=0,
                 frames_per_epoch=None, val_frames=None):
        self.ds = ds
        self.train_frames = [(i, d) for i in train_idx for d in range(ds.inputs.shape[1])]
        self.val_frames = [(i, d) for i in val_idx for d in range(ds.inputs.shape[1])]
        if val_frames is not None and len(self.val_frames) > val_frames:
            pick = np.random.default_rng([seed, 7]).choice(len(self.val_frames), val_frames, replace=False)
            self.val_frames = [self.val_frames[j] for j in np.sort(pick)]
        self.etas = tuple(etas)
        self.mechanisms = tuple(mechanisms)
        self.seed = seed
        self.frames_per_epoch = frames_per_epoch
        if not self.train_frames:
            raise ConfigError("empty training split")

    def __len__(self):
        return len(self.train_frames)

    def _corrupt(self, frames, key_epoch, rng):
        xs, ys = [], []
        for i, d in frames:
            mech = self.mechanisms[rng.integers(len(self.mechanisms))]
            eta = self.etas[rng.integers(len(self.etas))]
            spec = CorruptionSpec(mech, eta, seed=self.seed)
            day = self.ds.inputs[i, d]
            stack = make_masks(day[FIRE_CHANNEL][None] > 0.5, spec, key=(key_epoch, i, d))
            xs.append(apply_mask(day, stack.masks[0]).inputs)
            ys.append(day[FIRE_CHANNEL])
        return np.stack(xs).astype(np.float64), np.stack(ys).astype(np.float64)

    def train_batches(self, epoch, rng, batch_size):
        order = rng.permutation(len(self.train_frames))
        if self.frames_per_epoch:
            order = order[: self.frames_per_epoch]
        for k in range(0, len(order), batch_size):
            frames = [self.train_frames[j] for j in order[k:k + batch_size]]
            yield self._corrupt(frames, epoch, rng)

    def val_batches(self, batch_size):
        rng = np.random.default_rng([self.seed, VAL_EPOCH])
        for k in range(0, len(self.val_frames), batch_size):
            yield self._corrupt(self.val_frames[k:k + batch_size], VAL_EPOCH, rng)


class SequenceSource:
    """Stage-II pairs (5-day clean history, next-day fire map)."""

    def __init__(self, ds, train_idx, val_idx, samples_per_epoch=None):
        self.ds = ds
        self.train_idx = list(train_idx)
        self.val_idx = list(val_idx)
        self.samples_per_epoch = samples_per_epoch
        if not self.train_idx:
            raise ConfigError("empty training split")

    def __len__(self):
        return len(self.train_idx)

    def _batch(self, idx):
        idx = np.sort(np.asarray(idx))
        return self.ds.inputs[idx].astype(np.float64), self.ds.targets[idx].astype(np.float64)

    def train_batches(self, epoch, rng, batch_size):
        order = rng.permutation(self.train_idx)
        if self.samples_per_epoch:
            order = order[: self.samples_per_epoch]
        for k in range(0, len(order), batch_size):
            yield self._batch(order[k:k + batch_size])

    def val_batches(self, batch_size):
        for k in range(0, len(self.val_idx), batch_size):
            yield self._batch(self.val_idx[k:k + batch_size])
