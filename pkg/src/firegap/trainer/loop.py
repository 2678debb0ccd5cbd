"""Generic training loop with cosine decay, clipping and early stopping."""

import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from firegap.gradcore.tensor import ConfigError, NumericError, backward, no_grad
from firegap.trainer.optim import AdamState, adamw_step, clip_grad_norm, cosine_lr


@dataclass
class TrainConfig:
    lr: float = 1e-4
    weight_decay: float = 1e-2
    batch_size: int = 16
    max_epochs: int = 100
    patience: int = 10
    seed: int = 0
    grad_clip: float = 1.0
    betas: tuple = (0.9, 0.999)
    eps: float = 1e-8
    # cap on examples drawn per epoch (None: the whole split)
    examples_per_epoch: int = None
    deterministic: bool = True

    def to_json(self):
        return asdict(self)

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        if "betas" in obj:
            obj["betas"] = tuple(obj["betas"])
        return cls(**obj)


PAPER_TRAIN = TrainConfig()
# CPU-sized schedules: Stage-I sees 256 freshly masked frames per epoch
DESK_TRAIN = TrainConfig(lr=1e-2, batch_size=8, max_epochs=10, examples_per_epoch=256)
DESK_STAGE2 = TrainConfig(lr=3e-3, batch_size=8, max_epochs=6)


@dataclass
class TrainTrace:
    train_loss: list = field(default_factory=list)
    val_loss: list = field(default_factory=list)
    lr: list = field(default_factory=list)
    best_epoch: int = 0  # 1-based
    epochs_run: int = 0
    stop_reason: str = ""
    wall_time: float = 0.0

    def to_json(self, with_time=False):
        d = asdict(self)
        if not with_time:
            d.pop("wall_time")
        return d


@contextmanager
def single_threaded(enabled=True):
    """Pin BLAS to one thread so reductions run in a fixed order."""
    if not enabled:
        yield
        return
    from threadpoolctl import threadpool_limits

    with threadpool_limits(limits=1):
        yield


def evaluate_loss(model, source, batch_size, seed):
    rng = np.random.default_rng([seed, 0xE7A1])
    total, count = 0.0, 0
    with no_grad():
        for x, y in source.val_batches(batch_size):
            loss = model.loss(x, y, rng)
            total += float(loss.data) * len(x)
            count += len(x)
    return total / count if count else float("nan")


def train(model, source, cfg=DESK_TRAIN, log=None):
    """Fit ``model`` on ``source``; restores and returns the best-validation parameters.

    Returns (state_dict, TrainTrace). Stops after ``max_epochs`` or after
    ``patience`` epochs without a validation improvement. Parameters are
    rounded to float32 at the end so that checkpoint round-trips are exact.
    """
    if len(source) == 0:
        raise ConfigError("empty training split")
    params = model.parameters()
    state = AdamState()
    trace = TrainTrace()
    rng = np.random.default_rng([cfg.seed, 0x7EA1])
    best, best_state, bad = np.inf, model.state_dict(), 0
    t0 = time.perf_counter()
    with single_threaded(cfg.deterministic):
        for epoch in range(1, cfg.max_epochs + 1):
            lr = cosine_lr(epoch - 1, cfg.max_epochs, cfg.lr)
            model.train()
            losses = []
            for x, y in _limit(source.train_batches(epoch, rng, cfg.batch_size), cfg):
                model.zero_grad()
                loss = model.loss(x, y, rng)
                value = float(loss.data)
                if not np.isfinite(value):
                    trace.stop_reason = "non-finite loss"
                    trace.wall_time = time.perf_counter() - t0
                    err = NumericError(f"non-finite training loss at epoch {epoch}")
                    err.trace = trace
                    raise err
                backward(loss, params)
                grads = [p.grad for p in params]
                clip_grad_norm(grads, cfg.grad_clip)
                adamw_step(params, grads, state, lr, cfg.weight_decay, cfg.betas, cfg.eps)
                losses.append(value)
            model.eval()
            val = evaluate_loss(model, source, cfg.batch_size, cfg.seed)
            trace.train_loss.append(float(np.mean(losses)))
            trace.val_loss.append(val)
            trace.lr.append(lr)
            trace.epochs_run = epoch
            if log:
                log(f"epoch {epoch:3d} lr {lr:.2e} train {trace.train_loss[-1]:.5f} val {val:.5f}")
            if val < best:
                best, best_state, bad = val, model.state_dict(), 0
                trace.best_epoch = epoch
            else:
                bad += 1
                if bad >= cfg.patience:
                    trace.stop_reason = "early stop"
                    break
        else:
            trace.stop_reason = "max epochs"
    model.load_state_dict({k: v.astype(np.float32).astype(np.float64) for k, v in best_state.items()})
    model.zero_grad()
    model.eval()
    trace.wall_time = time.perf_counter() - t0
    return model.state_dict(), trace


def _limit(batches, cfg):
    if not cfg.examples_per_epoch:
        yield from batches
        return
    seen = 0
    for x, y in batches:
        if seen >= cfg.examples_per_epoch:
            break
        yield x, y
        seen += len(x)
