"""Scenario-aware evaluation metrics and aggregation."""

from firegap.evalmetrics.metrics import (
    CSV_HEADER,
    METRICS,
    EvalRecord,
    aggregate,
    average_precision,
    dice_occluded,
    fpr_occluded,
    read_csv,
    records_to_csv,
    write_csv,
)
