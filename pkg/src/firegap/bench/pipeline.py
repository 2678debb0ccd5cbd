"""End-to-end experiment: generate -> corrupt -> Stage-I -> recover -> Stage-II -> metrics -> reports."""

import hashlib
import json
import os
import platform
import time
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager
from dataclasses import dataclass, field, replace

import numpy as np

from firegap.bench.checkpoint import load_checkpoint, save_checkpoint
from firegap.bench.reports import write_reports
from firegap.datagen import build_dataset, read_dataset, split_dataset, write_dataset
from firegap.datagen.channels import FIRE_CHANNEL
from firegap.evalmetrics import aggregate, average_precision, dice_occluded, fpr_occluded
from firegap.forecast import build_forecaster
from firegap.gradcore import ops
from firegap.gradcore.tensor import ConfigError, NumericError, Tensor
from firegap.occlusion import ETA_GRID, CorruptionSpec, corrupt
from firegap.reconstruct import DilationBaseline, RandomBaseline, build_model, get_preset
from firegap.trainer import FrameSource, SequenceSource, single_threaded, train


class PipelineError(RuntimeError):
    """A stage failed; ``stage`` names it and ``manifest`` points at the partial-results manifest."""

    def __init__(self, stage, cause, manifest=None):
        super().__init__(f"stage {stage!r} failed: {cause}")
        self.stage = stage
        self.cause = cause
        self.manifest = manifest


@dataclass
class ReportBundle:
    out_dir: str
    records: list
    files: dict = field(default_factory=dict)
    manifest: dict = field(default_factory=dict)

    def path(self, name):
        return self.files[name]


def corrupt_set(ds, idx, spec):
    """Corrupt every history in ``idx``. Returns (ternary inputs (n,T,42,H,W) f32, masks (n,T,H,W) u8)."""
    xs = np.empty((len(idx),) + ds.inputs.shape[1:], dtype=np.float32)
    ms = np.empty((len(idx),) + ds.inputs.shape[1:2] + ds.inputs.shape[3:], dtype=np.uint8)
    for j, i in enumerate(idx):
        cs = corrupt(ds.inputs[i], spec, key=(int(ds.event_ids[i]), int(ds.days[i])))
        xs[j] = cs.inputs
        ms[j] = cs.masks.masks
    return xs, ms


def masked_view(x):
    """Forecaster input from a corrupted history: missing fire reads as no fire (F * M)."""
    out = x.copy()
    f = out[:, :, FIRE_CHANNEL]
    np.maximum(f, 0, out=f)
    return out


def recover(corrupted, masks, filled):
    """Recovered history: observed fire kept, missing cells take the Stage-I binary map.

    Built with tensor ops so the taint flag of every operand reaches the result.
    ``corrupted`` must never carry ground truth in the missing cells.
    """
    corrupted = corrupted if isinstance(corrupted, Tensor) else Tensor(corrupted)
    m = Tensor(masks.astype(np.float64))
    observed = ops.clamp(corrupted[:, :, FIRE_CHANNEL], lo=0.0)
    fire = m * observed + (1.0 - m) * filled
    parts = [corrupted[:, :, :FIRE_CHANNEL], fire.reshape(fire.shape[:2] + (1,) + fire.shape[2:])]
    if FIRE_CHANNEL + 1 < corrupted.shape[2]:
        parts.append(corrupted[:, :, FIRE_CHANNEL + 1:])
    return ops.concat(parts, axis=2)


def _map(fn, items, workers):
    if workers <= 1:
        return [fn(it) for it in items]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items))


def _versions():
    import numba
    import scipy

    from firegap import __version__

    return {"firegap": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "numba": numba.__version__}


def _sha256(path):
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


class _Run:
    def __init__(self, cfg, log):
        self.cfg = cfg
        self.log = log or (lambda msg: None)
        self.out = cfg.out_dir
        os.makedirs(os.path.join(self.out, "checkpoints"), exist_ok=True)
        self.manifest = {"config": cfg.to_json(), "config_hash": cfg.hash(), "seed": cfg.seed,
                         "versions": _versions(), "stages": [], "status": "running", "traces": {}}
        self.rows = []

    def write_manifest(self):
        path = os.path.join(self.out, "manifest.json")
        with open(path, "w", encoding="utf-8") as f:
            json.dump(self.manifest, f, sort_keys=True, indent=2)
            f.write("\n")
        return path

    @contextmanager
    def stage(self, name):
        t0 = time.perf_counter()
        self.log(f"[{name}]")
        try:
            yield
        except PipelineError:
            raise
        except Exception as e:
            self.manifest["stages"].append({"stage": name, "status": "failed", "error": f"{type(e).__name__}: {e}",
                                            "seconds": round(time.perf_counter() - t0, 3)})
            self.manifest["status"] = "failed"
            self.manifest["failed_stage"] = name
            raise PipelineError(name, e, self.write_manifest()) from e
        self.manifest["stages"].append({"stage": name, "status": "ok", "seconds": round(time.perf_counter() - t0, 3)})


def _stage1_recon(model, frames, rng):
    out = model.reconstruct(frames, rng)
    return out.prob, out.binary.astype(np.float64)


def run_pipeline(cfg, log=None):
    """Run the configured experiment and write the report bundle into ``cfg.out_dir``."""
    cfg.validate()
    run = _Run(cfg, log)
    preset = get_preset(cfg.preset)
    s1_cfg = replace(cfg.stage1_train, seed=cfg.seed, deterministic=cfg.deterministic)
    s2_cfg = replace(cfg.stage2_train, seed=cfg.seed + 1, deterministic=cfg.deterministic)

    with single_threaded(cfg.deterministic):
        with run.stage("generate"):
            if cfg.dataset_path:
                ds = read_dataset(cfg.dataset_path)
                folds = split_dataset(ds.event_ids, ds.group_ids, cfg.split_scheme, cfg.dataset.seed)
                split = folds[0]
                if cfg.split_scheme == "by_group_leave_one_out":
                    by_group = {f.test_groups[0]: f for f in folds}
                    if cfg.test_group not in by_group:
                        raise ConfigError(f"test group {cfg.test_group} absent from {cfg.dataset_path}")
                    split = by_group[cfg.test_group]
            else:
                dcfg = replace(cfg.dataset, split_scheme=cfg.split_scheme, test_group=cfg.test_group)
                ds, split = build_dataset(dcfg)
                write_dataset(ds, os.path.join(run.out, "dataset.fgds"))
            test = list(split.test)
            if cfg.max_test_samples:
                test = test[: cfg.max_test_samples]
            run.manifest["dataset"] = {"samples": len(ds), "train": len(split.train), "val": len(split.val),
                                       "test": len(test), "test_groups": list(split.test_groups),
                                       "scenarios": {s: ds.scenarios.count(s) for s in sorted(set(ds.scenarios))}}
            codebook = ds.codebook

        stage1 = {}
        train_etas = tuple(e for e in ETA_GRID if e > 0)
        for kind in cfg.models:
            with run.stage(f"train-stage1:{kind}"):
                path = os.path.join(run.out, "checkpoints", f"{kind}.fgck")
                if kind in cfg.checkpoints:
                    model, _ = load_checkpoint(cfg.checkpoints[kind], codebook)
                elif cfg.stage1_per_eta:
                    model = {}
                    for eta in [e for e in cfg.etas if e > 0]:
                        m = build_model(kind, preset, cfg.seed)
                        src = FrameSource(ds, split.train, split.val, (eta,), cfg.mechanisms, cfg.seed,
                                          val_frames=cfg.val_frames)
                        _, tr = train(m, src, s1_cfg, run.log)
                        run.manifest["traces"][f"{kind}@{eta}"] = _trace_json(tr)
                        save_checkpoint(m, os.path.join(run.out, "checkpoints", f"{kind}_eta{eta:.1f}.fgck"), codebook,
                                        {"eta": eta})
                        model[eta] = m
                else:
                    model = build_model(kind, preset, cfg.seed)
                    src = FrameSource(ds, split.train, split.val, train_etas, cfg.mechanisms, cfg.seed,
                                      val_frames=cfg.val_frames)
                    _, tr = train(model, src, s1_cfg, run.log)
                    run.manifest["traces"][kind] = _trace_json(tr)
                    save_checkpoint(model, path, codebook, {"trace": _trace_json(tr)})
                stage1[kind] = model
        baselines = {"random": RandomBaseline(cfg.seed), "dilation": DilationBaseline()}
        for b in cfg.baselines:
            stage1[b] = baselines[b]

        forecaster = None
        if any(p in cfg.pipelines for p in ("clean", "masked", "recovered")):
            with run.stage("train-stage2"):
                if "utae" in cfg.checkpoints:
                    forecaster, _ = load_checkpoint(cfg.checkpoints["utae"], codebook)
                else:
                    forecaster = build_forecaster(preset, cfg.seed)
                    _, tr = train(forecaster, SequenceSource(ds, split.train, split.val), s2_cfg, run.log)
                    run.manifest["traces"]["utae"] = _trace_json(tr)
                    if cfg.stage2_finetune_epochs:
                        src = _MaskedSequenceSource(ds, split.train, split.val, cfg)
                        ft = replace(s2_cfg, max_epochs=cfg.stage2_finetune_epochs, lr=s2_cfg.lr * 0.1)
                        _, tr = train(forecaster, src, ft, run.log)
                        run.manifest["traces"]["utae_finetune"] = _trace_json(tr)
                    save_checkpoint(forecaster, os.path.join(run.out, "checkpoints", "utae.fgck"), codebook)

        scen = [ds.scenarios[i] for i in test]
        truth_next = ds.targets[test]
        audit = {"recovered_cells": 0, "tainted_inputs": 0}

        def forecast_rows(x, model_name, mech, eta):
            prob = forecaster.predict_prob(x)
            if not np.all(np.isfinite(prob)):
                raise NumericError(f"non-finite forecast for {model_name}")
            return [{"model": model_name, "stage": "stage2", "mechanism": mech, "eta": eta, "scenario": s,
                     "metric": "ap", "value": average_precision(p, t)} for p, t, s in zip(prob, truth_next, scen)]

        if "clean" in cfg.pipelines:
            with run.stage("evaluate:clean"):
                # the clean pipeline legitimately reads the true history
                run.rows += forecast_rows(ds.inputs[test], "clean", "none", 0.0)

        cells = [(mech, eta) for mech in cfg.mechanisms for eta in cfg.etas]
        n, t = len(test), ds.inputs.shape[1]
        # ground truth for Stage-I scoring only; tainted so any leak into a forecast input is caught
        truth_t = Tensor(ds.inputs[test][:, :, FIRE_CHANNEL].reshape((n * t,) + ds.inputs.shape[3:]))
        truth_t.taint = True
        truth = truth_t.data
        frame_scen = [s for s in scen for _ in range(t)]

        def cell(job):
            mech, eta = job
            rows = []
            spec = CorruptionSpec(mech, eta, seed=cfg.seed)
            xc, masks = corrupt_set(ds, test, spec)
            if "masked" in cfg.pipelines:
                rows += forecast_rows(masked_view(xc), "masked", mech, eta)
            frames = xc.reshape((n * t,) + xc.shape[2:])
            occl = masks.reshape(truth.shape) == 0
            for name, model in stage1.items():
                m = model[eta] if isinstance(model, dict) else model
                rng = np.random.default_rng([cfg.seed, 0x5EC0, sum(map(ord, name)), int(round(eta * 10)),
                                             cfg.mechanisms.index(mech)])
                if isinstance(model, dict) and eta not in model:
                    continue
                prob, binary = _stage1_recon(m, frames, rng)
                for k in range(n * t):
                    o = occl[k]
                    base = {"model": name, "stage": "stage1", "mechanism": mech, "eta": eta, "scenario": frame_scen[k]}
                    rows.append({**base, "metric": "dice", "value": dice_occluded(binary[k], truth[k], o)})
                    rows.append({**base, "metric": "fpr", "value": fpr_occluded(binary[k], truth[k], o)})
                    rows.append({**base, "metric": "ap",
                                 "value": average_precision(prob[k][o], truth[k][o]) if o.any() else None})
                if "recovered" in cfg.pipelines and name in cfg.recovery_models:
                    x_rec = recover(xc, masks, binary.reshape(masks.shape))
                    audit["recovered_cells"] += 1
                    if x_rec.taint:
                        audit["tainted_inputs"] += 1
                        raise RuntimeError(f"recovered inputs for {name} depend on ground-truth history")
                    rows += forecast_rows(x_rec.data, f"recovered:{name}", mech, eta)
            run.log(f"  cell {mech} eta={eta:.1f} done")
            return rows

        with run.stage("evaluate:grid"):
            for rows in _map(cell, cells, cfg.workers):
                run.rows += rows
        run.manifest["taint_audit"] = audit

        with run.stage("report"):
            records = aggregate(run.rows)
            files = write_reports(records, run.out, cfg)
            run.manifest["files"] = {name: _sha256(p) for name, p in sorted(files.items())}
            ck = os.path.join(run.out, "checkpoints")
            run.manifest["checkpoints"] = {f: _sha256(os.path.join(ck, f)) for f in sorted(os.listdir(ck))}
    run.manifest["status"] = "ok"
    files["manifest"] = run.write_manifest()
    return ReportBundle(run.out, records, files, run.manifest)


def _trace_json(tr):
    return {"train_loss": tr.train_loss, "val_loss": tr.val_loss, "lr": tr.lr, "best_epoch": tr.best_epoch,
            "epochs_run": tr.epochs_run, "stop_reason": tr.stop_reason}


class _MaskedSequenceSource(SequenceSource):
    """Stage-II fine-tuning on masked histories (mixed mechanism and eta per sample)."""

    def __init__(self, ds, train_idx, val_idx, cfg):
        super().__init__(ds, train_idx, val_idx)
        self.cfg = cfg

    def _batch(self, idx):
        x, y = super()._batch(idx)
        rng = np.random.default_rng([self.cfg.seed, 0xF1E, *map(int, idx)])
        for j, i in enumerate(sorted(idx)):
            mech = self.cfg.mechanisms[rng.integers(len(self.cfg.mechanisms))]
            eta = [e for e in ETA_GRID if e > 0][rng.integers(len(ETA_GRID) - 1)]
            spec = CorruptionSpec(mech, eta, seed=self.cfg.seed)
            cs = corrupt(self.ds.inputs[i], spec, key=(int(self.ds.event_ids[i]), int(self.ds.days[i])))
            x[j] = cs.hadamard()
        return x, y


__all__ = ["PipelineError", "ReportBundle", "corrupt_set", "masked_view", "recover", "run_pipeline"]
