"""Stage-II next-day fire forecasting."""

from firegap.forecast.utae import (
    UTAE,
    TemporalAttentionRecord,
    attention_weights,
    build_forecaster,
    temporal_fuse,
)

__all__ = ["UTAE", "TemporalAttentionRecord", "attention_weights", "build_forecaster", "temporal_fuse"]
