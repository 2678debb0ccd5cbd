"""Losses, AdamW, cosine schedule and the early-stopping training loop."""

from firegap.trainer.data import FrameSource, SequenceSource
from firegap.trainer.losses import d3pm_loss, focal_loss, kl_gaussian
from firegap.trainer.loop import (
    DESK_STAGE2,
    DESK_TRAIN,
    PAPER_TRAIN,
    TrainConfig,
    TrainTrace,
    evaluate_loss,
    single_threaded,
    train,
)
from firegap.trainer.optim import AdamState, adamw_step, clip_grad_norm, cosine_lr
