import os

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.register_profile("quick", deadline=None, max_examples=15,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

# one line per acceptance criterion, echoed at the end of the run
ACCEPTANCE = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture(scope="session")
def small_dataset():
    """Small simulated dataset shared by the module tests (about 80 samples)."""
    from firegap.datagen import DatasetConfig, FireSimConfig, build_dataset

    cfg = DatasetConfig(n_events=8, n_groups=4, seed=3, sim=FireSimConfig(height=64, width=64, days=8))
    return build_dataset(cfg)


@pytest.fixture(scope="session")
def small_dataset_file(small_dataset, tmp_path_factory):
    from firegap.datagen import write_dataset

    path = tmp_path_factory.mktemp("data") / "small.fgds"
    write_dataset(small_dataset[0], str(path))
    return str(path)


def tiny_config(out_dir, dataset_path, **kw):
    """A seconds-long end-to-end run: one UNet epoch on a handful of frames."""
    from dataclasses import replace

    from firegap.bench import ExperimentConfig
    from firegap.datagen import DatasetConfig, FireSimConfig
    from firegap.trainer import DESK_STAGE2, DESK_TRAIN

    base = dict(
        dataset=DatasetConfig(n_events=8, n_groups=4, seed=3, sim=FireSimConfig(height=64, width=64, days=8)),
        dataset_path=dataset_path,
        test_group=3,
        stage1_train=replace(DESK_TRAIN, max_epochs=1, examples_per_epoch=16),
        stage2_train=replace(DESK_STAGE2, max_epochs=1, examples_per_epoch=8),
        val_frames=8,
        mechanisms=("pixelwise",),
        etas=(0.0, 0.5),
        models=("unet",),
        baselines=("dilation",),
        recover_with=("unet", "dilation"),
        max_test_samples=4,
        out_dir=str(out_dir),
        seed=7,
    )
    base.update(kw)
    return ExperimentConfig(**base)
