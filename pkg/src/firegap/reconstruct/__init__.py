"""Stage-I reconstruction: four learned models and two non-learning baselines."""

from firegap.reconstruct.baselines import (
    DILATION_RADIUS,
    DilationBaseline,
    RandomBaseline,
    baseline_dilation,
    baseline_random,
)
from firegap.reconstruct.models import (
    MODEL_KINDS,
    MaskCVAE,
    MaskD3PM,
    MaskUNet,
    MaskViT,
    ReconModel,
    ReconOutput,
    binarize,
    build_model,
    categorical_view,
    d3pm_forward_corrupt,
    reverse_distribution,
    sample_categorical,
    transition_matrix,
)
from firegap.reconstruct.presets import DESK, PAPER, PRESETS, ArchPreset, get_preset
