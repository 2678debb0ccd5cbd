"""Experiment configuration (JSON, versioned)."""

import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace

from firegap.datagen.dataset import DatasetConfig
from firegap.gradcore.tensor import ConfigError
from firegap.occlusion import ETA_GRID, MECHANISMS
from firegap.reconstruct import MODEL_KINDS, PRESETS
from firegap.trainer import DESK_STAGE2, DESK_TRAIN, TrainConfig

CONFIG_VERSION = 1
BASELINES = ("random", "dilation")
PIPELINES = ("clean", "masked", "recovered")
ALLOWED_ETAS = tuple(round(0.1 * i, 1) for i in range(9))


@dataclass
class ExperimentConfig:
    """Everything that determines a run. ``seed`` drives model init, training and masking."""

    dataset: DatasetConfig = field(default_factory=DatasetConfig)
    # read this FGDS file instead of generating (its own split metadata is ignored)
    dataset_path: str = None
    split_scheme: str = "by_group_leave_one_out"
    test_group: int = 3
    preset: str = "desk"
    stage1_train: TrainConfig = field(default_factory=lambda: replace(DESK_TRAIN))
    stage2_train: TrainConfig = field(default_factory=lambda: replace(DESK_STAGE2))
    val_frames: int = 96
    # Open question default: one model per kind trained over the whole eta grid
    stage1_per_eta: bool = False
    mechanisms: tuple = MECHANISMS
    etas: tuple = ETA_GRID
    models: tuple = MODEL_KINDS
    baselines: tuple = BASELINES
    pipelines: tuple = PIPELINES
    # Stage-I models feeding the recovered pipeline (None: every learned model)
    recover_with: tuple = None
    # pre-trained checkpoints by kind ("utae" for Stage-II); these skip training
    checkpoints: dict = field(default_factory=dict)
    # extension, off by default: fine-tune Stage-II on masked sequences for this many epochs
    stage2_finetune_epochs: int = 0
    max_test_samples: int = None
    workers: int = 1
    seed: int = 42
    deterministic: bool = True
    out_dir: str = "results"
    version: int = CONFIG_VERSION

    def __post_init__(self):
        self.mechanisms = tuple(self.mechanisms)
        self.etas = tuple(float(e) for e in self.etas)
        self.models = tuple(self.models)
        self.baselines = tuple(self.baselines)
        self.pipelines = tuple(self.pipelines)
        if self.recover_with is not None:
            self.recover_with = tuple(self.recover_with)

    @property
    def recovery_models(self):
        return self.models if self.recover_with is None else self.recover_with

    def validate(self):
        if self.version != CONFIG_VERSION:
            raise ConfigError(f"config version {self.version} unsupported (expected {CONFIG_VERSION})")
        if self.preset not in PRESETS:
            raise ConfigError(f"unknown preset {self.preset!r}")
        for e in self.etas:
            if not any(abs(e - a) < 1e-9 for a in ALLOWED_ETAS):
                raise ConfigError(f"eta {e} not in {ALLOWED_ETAS}")
        if not self.etas:
            raise ConfigError("empty eta list")
        for m in self.mechanisms:
            if m not in MECHANISMS:
                raise ConfigError(f"unknown mechanism {m!r}")
        for k in self.models:
            if k not in MODEL_KINDS:
                raise ConfigError(f"unknown Stage-I model {k!r}")
        for b in self.baselines:
            if b not in BASELINES:
                raise ConfigError(f"unknown baseline {b!r}")
        for p in self.pipelines:
            if p not in PIPELINES:
                raise ConfigError(f"unknown pipeline {p!r}")
        for k in self.recovery_models:
            if k not in self.models and k not in self.baselines:
                raise ConfigError(f"recovered pipeline uses {k!r}, which is neither trained nor a baseline")
        for kind, path in self.checkpoints.items():
            if kind not in self.models and kind != "utae":
                raise ConfigError(f"checkpoint given for unused model {kind!r}")
            if not os.path.exists(path):
                raise ConfigError(f"checkpoint for {kind!r} not found: {path}")
        if self.dataset_path is not None and not os.path.exists(self.dataset_path):
            raise ConfigError(f"dataset file not found: {self.dataset_path}")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        return self

    def to_json(self):
        d = asdict(self)
        d["dataset"] = self.dataset.to_json()
        d["stage1_train"] = self.stage1_train.to_json()
        d["stage2_train"] = self.stage2_train.to_json()
        return d

    @classmethod
    def from_json(cls, obj):
        obj = dict(obj)
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(obj) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        if "dataset" in obj:
            obj["dataset"] = DatasetConfig.from_json(obj["dataset"])
        for key, default in (("stage1_train", DESK_TRAIN), ("stage2_train", DESK_STAGE2)):
            if key in obj:
                obj[key] = TrainConfig.from_json({**default.to_json(), **obj[key]})
        try:
            return cls(**obj)
        except TypeError as e:
            raise ConfigError(str(e)) from None

    def dumps(self):
        return json.dumps(self.to_json(), sort_keys=True, indent=2)

    def hash(self):
        """sha256 of the canonical JSON, ignoring where outputs are written."""
        d = self.to_json()
        d.pop("out_dir")
        d.pop("workers")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return hashlib.sha256(blob).hexdigest()


def load_config(path):
    try:
        with open(path, encoding="utf-8") as f:
            obj = json.load(f)
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: invalid JSON ({e})") from None
    if not isinstance(obj, dict):
        raise ConfigError(f"{path}: config must be a JSON object")
    return ExperimentConfig.from_json(obj)


def save_config(cfg, path):
    with open(path, "w", encoding="utf-8") as f:
        f.write(cfg.dumps() + "\n")
    return path
