"""Deterministic float64 tensors with reverse-mode autodiff."""

from firegap.gradcore.check import grad_check, grad_check_params
from firegap.gradcore.nn import (
    Conv2d,
    GroupNorm,
    LayerNorm,
    Linear,
    Module,
    MultiHeadAttention,
    Parameter,
    scaled_dot_attention,
)
from firegap.gradcore.ops import (
    activation,
    add,
    clamp,
    concat,
    conv2d,
    dropout,
    exp,
    group_norm,
    layer_norm,
    log,
    log_softmax,
    matmul,
    mean,
    mul,
    relu,
    sigmoid,
    silu,
    softmax,
    sqrt,
    stack,
    tanh,
    upsample_bilinear,
    upsample_nearest,
)
from firegap.gradcore.tensor import (
    ConfigError,
    DimensionError,
    GradError,
    NumericError,
    Tape,
    Tensor,
    backward,
    is_grad_enabled,
    no_grad,
)
