"""Experiment orchestration, persistence and reports."""

from firegap.bench.checkpoint import CheckpointMismatch, codebook_hash, load_checkpoint, save_checkpoint
from firegap.bench.config import ExperimentConfig, load_config, save_config
from firegap.bench.pipeline import PipelineError, ReportBundle, corrupt_set, masked_view, recover, run_pipeline
from firegap.bench.reports import GainRow, compare_recovery_gain, relative_gain, summarize, write_reports

__all__ = [
    "CheckpointMismatch", "ExperimentConfig", "GainRow", "PipelineError", "ReportBundle", "codebook_hash",
    "compare_recovery_gain", "corrupt_set", "load_checkpoint", "load_config", "masked_view", "recover",
    "relative_gain", "run_pipeline", "save_checkpoint", "save_config", "summarize", "write_reports",
]
