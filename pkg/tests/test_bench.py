import json
import os
from dataclasses import replace

import numpy as np
import pytest
from conftest import tiny_config

from firegap.bench import (
    CheckpointMismatch,
    ExperimentConfig,
    compare_recovery_gain,
    load_checkpoint,
    load_config,
    masked_view,
    recover,
    relative_gain,
    run_pipeline,
    save_checkpoint,
    save_config,
)
from firegap.bench.cli import main
from firegap.datagen import FIRE_CHANNEL, FormatError, TruncatedError
from firegap.evalmetrics import EvalRecord
from firegap.forecast import build_forecaster
from firegap.gradcore import ConfigError, Tensor
from firegap.reconstruct import DESK, build_model


# -- checkpoints -------------------------------------------------------------

@pytest.mark.parametrize("kind", ["unet", "cvae", "vit", "d3pm", "utae"])
def test_checkpoint_round_trip(kind, tmp_path, small_dataset):
    cb = small_dataset[0].codebook
    m = build_forecaster(DESK, 5) if kind == "utae" else build_model(kind, DESK, 5)
    path = save_checkpoint(m, str(tmp_path / "m.fgck"), cb, {"note": kind})
    back, meta = load_checkpoint(path, cb)
    assert meta == {"note": kind}
    for (na, a), (nb, b) in zip(m.named_parameters(), back.named_parameters()):
        assert na == nb
        np.testing.assert_array_equal(b.data, a.data.astype(np.float32))
    # float32 storage is the only loss; a second save is byte-identical
    again = save_checkpoint(back, str(tmp_path / "m2.fgck"), cb, {"note": kind})
    assert open(path, "rb").read() == open(again, "rb").read()


@pytest.fixture
def ckpt(tmp_path, small_dataset):
    m = build_model("unet", DESK, 0)
    return save_checkpoint(m, str(tmp_path / "u.fgck"), small_dataset[0].codebook), small_dataset[0].codebook


def test_checkpoint_truncated(ckpt):
    path, cb = ckpt
    data = open(path, "rb").read()
    open(path, "wb").write(data[:-4])
    with pytest.raises(TruncatedError):
        load_checkpoint(path, cb)


def test_checkpoint_trailing_bytes(ckpt):
    path, cb = ckpt
    with open(path, "ab") as f:
        f.write(b"\0\0\0\0")
    with pytest.raises(FormatError):
        load_checkpoint(path, cb)


def test_checkpoint_codebook_mismatch(ckpt):
    path, cb = ckpt
    obj = cb.to_json()
    obj["entries"][0] = dict(obj["entries"][0], mean=obj["entries"][0]["mean"] + 1.0)
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, type(cb).from_json(obj))


def test_checkpoint_kind_mismatch(ckpt):
    path, cb = ckpt
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, cb, model=build_model("cvae", DESK, 0))


def test_checkpoint_shape_mismatch(ckpt):
    path, cb = ckpt
    with pytest.raises(CheckpointMismatch):
        load_checkpoint(path, cb, model=build_model("unet", replace(DESK, unet_channels=(8, 16, 24)), 0))


def test_checkpoint_bad_header(tmp_path):
    p = tmp_path / "x.fgck"
    p.write_bytes(b"not json\n")
    with pytest.raises(FormatError):
        load_checkpoint(str(p))
    p.write_bytes(b'{"magic":"FGCK","version":9}\n')
    with pytest.raises(FormatError):
        load_checkpoint(str(p))


# -- configuration -----------------------------------------------------------

def test_config_json_round_trip(tmp_path):
    cfg = ExperimentConfig(etas=(0.1, 0.5), models=("unet",), seed=9)
    back = load_config(save_config(cfg, str(tmp_path / "c.json")))
    assert back == cfg and back.hash() == cfg.hash()
    assert replace(cfg, out_dir="elsewhere").hash() == cfg.hash()
    assert replace(cfg, seed=10).hash() != cfg.hash()


@pytest.mark.parametrize("bad", [
    dict(etas=(0.15,)), dict(etas=()), dict(mechanisms=("fog",)), dict(models=("gan",)),
    dict(preset="huge"), dict(models=("unet",), recover_with=("vit",)), dict(version=2), dict(workers=0),
    dict(checkpoints={"unet": "/nonexistent.fgck"}), dict(dataset_path="/nonexistent.fgds"),
])
def test_config_validation(bad):
    with pytest.raises(ConfigError):
        ExperimentConfig(**bad).validate()


def test_config_unknown_key(tmp_path):
    p = tmp_path / "c.json"
    p.write_text(json.dumps({"seeed": 1}))
    with pytest.raises(ConfigError):
        load_config(str(p))
    p.write_text("[1, 2")
    with pytest.raises(ConfigError):
        load_config(str(p))


# -- recovery helpers --------------------------------------------------------

def test_masked_view_zeroes_sentinel():
    x = np.zeros((1, 5, 42, 4, 4), dtype=np.float32)
    x[:, :, FIRE_CHANNEL] = -1
    x[0, 0, FIRE_CHANNEL, 0, 0] = 1
    out = masked_view(x)
    assert out[0, 0, FIRE_CHANNEL, 0, 0] == 1 and out[:, :, FIRE_CHANNEL].sum() == 1
    assert np.all(x[:, :, FIRE_CHANNEL].min() == -1)  # input untouched


def test_recover_combines_observed_and_filled():
    r = np.random.default_rng(0)
    x = r.standard_normal((2, 5, 42, 4, 4))
    fire = (r.random((2, 5, 4, 4)) < 0.4).astype(float)
    masks = (r.random((2, 5, 4, 4)) < 0.5).astype(np.uint8)
    x[:, :, FIRE_CHANNEL] = np.where(masks == 1, fire, -1)
    filled = (r.random((2, 5, 4, 4)) < 0.5).astype(float)
    out = recover(x, masks, filled)
    np.testing.assert_array_equal(out.data[:, :, FIRE_CHANNEL], np.where(masks == 1, fire, filled))
    np.testing.assert_array_equal(np.delete(out.data, FIRE_CHANNEL, axis=2), np.delete(x, FIRE_CHANNEL, axis=2))
    assert not out.taint
    leak = Tensor(filled)
    leak.taint = True
    assert recover(x, masks, leak).taint


def test_relative_gain():
    assert relative_gain(0.378, 0.482) == pytest.approx(0.275, abs=1e-3)
    assert relative_gain(0.4, 0.4) == 0.0
    assert np.isnan(relative_gain(0.0, 0.3)) and np.isnan(relative_gain(None, 0.3))


def test_compare_recovery_gain_from_records():
    def rec(model, eta, mean, mech="pixelwise"):
        return EvalRecord(model, "stage2", mech, eta, "FireContinues", "ap", mean, 0.0, 3)

    rows = [rec("clean", 0.0, 0.5, "none"), rec("masked", 0.8, 0.378), rec("recovered:unet", 0.8, 0.482),
            rec("recovered:cvae", 0.8, 0.3)]
    gains = {g.model: g for g in compare_recovery_gain(rows)}
    assert gains["unet"].gain == pytest.approx((0.482 - 0.378) / 0.378)
    assert gains["cvae"].gain < 0 and gains["unet"].ap_clean == 0.5


# -- CLI ---------------------------------------------------------------------

def test_cli_usage_errors(tmp_path, capsys):
    assert main([]) == 1
    assert main(["pipeline", "--bogus"]) == 1
    assert main(["frobnicate"]) == 1
    assert main(["pipeline", "--seed", "-3", "--out", str(tmp_path)]) == 1
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps({"etas": [0.33]}))
    assert main(["pipeline", "--config", str(bad), "--out", str(tmp_path)]) == 1
    capsys.readouterr()


def test_cli_data_errors(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path / "nothing")]) == 2
    junk = tmp_path / "junk.fgds"
    junk.write_bytes(b"garbage")
    assert main(["corrupt", "--dataset", str(junk), "--mechanism", "pixelwise", "--eta", "0.3",
                 "--out", str(tmp_path)]) == 2
    (tmp_path / "metrics.csv").write_text("wrong,header\n")
    assert main(["report", "--out", str(tmp_path)]) == 2
    err = capsys.readouterr().err
    assert "data error" in err


def test_cli_generate_and_corrupt(tmp_path, small_dataset_file, capsys):
    out = tmp_path / "c"
    assert main(["corrupt", "--dataset", small_dataset_file, "--mechanism", "blockwise", "--eta", "0.5",
                 "--out", str(out)]) == 0
    produced = [f for f in os.listdir(out) if f.endswith(".fgds")]
    assert produced
    from firegap.datagen import read_dataset

    ds = read_dataset(str(out / produced[0]))
    fire = ds.inputs[:, :, FIRE_CHANNEL]
    assert (fire == -1).any() and set(np.unique(fire)) <= {-1.0, 0.0, 1.0}
    capsys.readouterr()


# -- end to end ----------------------------------------------------------------

@pytest.fixture(scope="module")
def tiny_runs(tmp_path_factory, small_dataset_file):
    runs = []
    for k in range(2):
        out = tmp_path_factory.mktemp(f"run{k}")
        runs.append(run_pipeline(tiny_config(out, small_dataset_file)))
    return runs


def test_tiny_pipeline_outputs(tiny_runs):
    b = tiny_runs[0]
    assert b.manifest["status"] == "ok"
    for name in ("metrics", "plot_stage1", "plot_stage2", "gain", "manifest"):
        assert os.path.exists(b.path(name))
    models = {r.model for r in b.records}
    assert {"unet", "dilation", "clean", "masked", "recovered:unet", "recovered:dilation"} <= models
    audit = b.manifest["taint_audit"]
    assert audit["tainted_inputs"] == 0 and audit["recovered_cells"] > 0
    assert [s["stage"] for s in b.manifest["stages"]][0] == "generate"


def test_tiny_pipeline_is_byte_deterministic(tiny_runs):
    a, b = tiny_runs
    for name in ("metrics", "plot_stage1", "plot_stage2", "gain"):
        assert open(a.path(name), "rb").read() == open(b.path(name), "rb").read(), name
    for f in sorted(os.listdir(os.path.join(a.out_dir, "checkpoints"))):
        pa, pb = (os.path.join(x.out_dir, "checkpoints", f) for x in (a, b))
        assert open(pa, "rb").read() == open(pb, "rb").read(), f
    assert a.manifest["files"] == b.manifest["files"]


def test_eta_zero_masked_equals_clean(tiny_runs):
    recs = [r for r in tiny_runs[0].records if r.stage == "stage2" and r.metric == "ap"]
    clean = {r.scenario: r.mean for r in recs if r.model == "clean"}
    masked0 = {r.scenario: r.mean for r in recs if r.model == "masked" and r.eta == 0.0}
    assert clean.keys() == masked0.keys()
    for s in clean:
        assert masked0[s] == pytest.approx(clean[s], abs=1e-12) or (np.isnan(clean[s]) and np.isnan(masked0[s]))


def test_report_command_regenerates(tiny_runs, capsys):
    out = tiny_runs[0].out_dir
    before = open(os.path.join(out, "metrics.csv"), "rb").read()
    assert main(["report", "--out", out]) == 0
    assert open(os.path.join(out, "metrics.csv"), "rb").read() == before
    capsys.readouterr()


def test_pipeline_failure_names_stage(tmp_path, small_dataset_file):
    from firegap.bench import PipelineError

    cfg = tiny_config(tmp_path, small_dataset_file, test_group=9)
    with pytest.raises(PipelineError) as e:
        run_pipeline(cfg)
    assert e.value.stage == "generate"
    man = json.load(open(e.value.manifest))
    assert man["status"] == "failed" and man["failed_stage"] == "generate"
