"""Command-line interface.

Exit status: 0 success, 1 usage/configuration error, 2 data error, 3 numeric failure.
"""

import argparse
import os
import sys
from dataclasses import replace

import numpy as np

from firegap.bench.checkpoint import CheckpointMismatch, load_checkpoint, save_checkpoint
from firegap.bench.config import ExperimentConfig, load_config, save_config
from firegap.bench.pipeline import PipelineError, recover, run_pipeline
from firegap.bench.reports import summarize, write_reports
from firegap.datagen import SampleSet, build_dataset, read_dataset, split_dataset, write_dataset
from firegap.datagen.channels import FIRE_CHANNEL
from firegap.datagen.container import FormatError, TruncatedError
from firegap.datagen.encode import DataError
from firegap.datagen.simulate import GenerationError
from firegap.evalmetrics import read_csv
from firegap.forecast import build_forecaster
from firegap.gradcore.tensor import ConfigError, DimensionError, NumericError
from firegap.occlusion import MECHANISMS, CorruptionSpec, corrupt
from firegap.reconstruct import MODEL_KINDS, build_model, get_preset
from firegap.trainer import FrameSource, SequenceSource, single_threaded, train

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
COMMANDS = ("generate", "corrupt", "train-stage1", "train-stage2", "reconstruct", "evaluate", "pipeline", "report")
DATA_ERRORS = (FormatError, TruncatedError, GenerationError, DataError, DimensionError, CheckpointMismatch, OSError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.format_usage()}{self.prog}: error: {message}")


def _globals(suppress):
    # accepted before or after the command; the sub-level copy must not reset what the top level parsed
    kw = {"default": argparse.SUPPRESS} if suppress else {}
    p = argparse.ArgumentParser(add_help=False)
    g = p.add_argument_group("global options")
    g.add_argument("--config", help="experiment config (JSON)", **kw)
    g.add_argument("--seed", type=int, help="master seed (unsigned 64-bit)", **kw)
    g.add_argument("--deterministic", action="store_true", help="single-threaded, replayable run",
                   **(kw or {"default": None}))
    g.add_argument("--out", help="output directory", **kw)
    g.add_argument("--preset", choices=("paper", "desk"), help="architecture preset", **kw)
    return p


def build_parser():
    common = _globals(suppress=True)
    parser = _Parser(prog="firegap", description="Two-stage fire forecasting from partially observed histories.",
                     parents=[_globals(suppress=False)])
    sub = parser.add_subparsers(dest="command", parser_class=_Parser, metavar="{" + ",".join(COMMANDS) + "}")

    sub.add_parser("generate", parents=[common], help="simulate events and write dataset.fgds")

    p = sub.add_parser("corrupt", parents=[common], help="mask the fire channel of a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--mechanism", choices=MECHANISMS, required=True)
    p.add_argument("--eta", type=float, required=True)

    p = sub.add_parser("train-stage1", parents=[common], help="train one reconstruction model")
    p.add_argument("--dataset", required=True)
    p.add_argument("--model", choices=MODEL_KINDS, required=True)

    p = sub.add_parser("train-stage2", parents=[common], help="train the forecaster on clean histories")
    p.add_argument("--dataset", required=True)

    p = sub.add_parser("reconstruct", parents=[common], help="fill masked cells of a corrupted dataset")
    p.add_argument("--dataset", required=True, help="corrupted FGDS written by `corrupt`")
    p.add_argument("--checkpoint", required=True)

    p = sub.add_parser("evaluate", parents=[common], help="score trained checkpoints over the corruption grid")
    p.add_argument("--dataset", required=True)
    p.add_argument("--stage1", action="append", default=[], metavar="KIND=PATH")
    p.add_argument("--stage2", required=True, metavar="PATH")

    sub.add_parser("pipeline", parents=[common], help="run the full experiment")

    sub.add_parser("report", parents=[common], help="summarise an existing results directory")
    return parser


def _config(args):
    cfg = load_config(args.config) if args.config else ExperimentConfig()
    if args.seed is not None:
        if not 0 <= args.seed < 2 ** 64:
            raise UsageError("--seed must be an unsigned 64-bit integer")
        cfg = replace(cfg, seed=args.seed, dataset=replace(cfg.dataset, seed=args.seed))
    if args.deterministic:
        cfg = replace(cfg, deterministic=True)
    if args.out:
        cfg = replace(cfg, out_dir=args.out)
    if args.preset:
        cfg = replace(cfg, preset=args.preset)
    return cfg


def _split(ds, cfg):
    folds = split_dataset(ds.event_ids, ds.group_ids, cfg.split_scheme, cfg.dataset.seed)
    if cfg.split_scheme == "by_group_leave_one_out":
        by_group = {f.test_groups[0]: f for f in folds}
        if cfg.test_group not in by_group:
            raise ConfigError(f"test group {cfg.test_group} absent from dataset")
        return by_group[cfg.test_group]
    return folds[0]


def _subset(ds, inputs, meta):
    return SampleSet(inputs, ds.targets, ds.scenarios, ds.origins, ds.event_ids, ds.group_ids, ds.days,
                     ds.codebook, meta)


def cmd_generate(args, cfg, out):
    ds, split = build_dataset(replace(cfg.dataset, split_scheme=cfg.split_scheme, test_group=cfg.test_group))
    path = write_dataset(ds, os.path.join(out, "dataset.fgds"))
    print(f"wrote {path}: {len(ds)} samples (train {len(split.train)}, val {len(split.val)}, test {len(split.test)})")


def cmd_corrupt(args, cfg, out):
    ds = read_dataset(args.dataset)
    spec = CorruptionSpec(args.mechanism, args.eta, seed=cfg.seed)
    x = np.empty_like(ds.inputs)
    for i in range(len(ds)):
        x[i] = corrupt(ds.inputs[i], spec, key=(int(ds.event_ids[i]), int(ds.days[i]))).inputs
    meta = dict(ds.meta or {}, corruption=spec.to_json())
    path = write_dataset(_subset(ds, x, meta), os.path.join(out, f"corrupted_{args.mechanism}_{args.eta:.1f}.fgds"))
    print(f"wrote {path}")


def cmd_train_stage1(args, cfg, out):
    ds = read_dataset(args.dataset)
    split = _split(ds, cfg)
    model = build_model(args.model, get_preset(cfg.preset), cfg.seed)
    src = FrameSource(ds, split.train, split.val, [e for e in cfg.etas if e > 0], cfg.mechanisms, cfg.seed,
                      val_frames=cfg.val_frames)
    _, trace = train(model, src, replace(cfg.stage1_train, seed=cfg.seed, deterministic=cfg.deterministic), print)
    path = save_checkpoint(model, os.path.join(out, f"{args.model}.fgck"), ds.codebook, {"best_epoch": trace.best_epoch})
    print(f"wrote {path} (best epoch {trace.best_epoch})")


def cmd_train_stage2(args, cfg, out):
    ds = read_dataset(args.dataset)
    split = _split(ds, cfg)
    model = build_forecaster(get_preset(cfg.preset), cfg.seed)
    tcfg = replace(cfg.stage2_train, seed=cfg.seed + 1, deterministic=cfg.deterministic)
    _, trace = train(model, SequenceSource(ds, split.train, split.val), tcfg, print)
    path = save_checkpoint(model, os.path.join(out, "utae.fgck"), ds.codebook, {"best_epoch": trace.best_epoch})
    print(f"wrote {path} (best epoch {trace.best_epoch})")


def cmd_reconstruct(args, cfg, out):
    ds = read_dataset(args.dataset)
    model, _ = load_checkpoint(args.checkpoint, ds.codebook)
    x = ds.inputs
    masks = (x[:, :, FIRE_CHANNEL] >= 0).astype(np.uint8)
    n, t = masks.shape[:2]
    rng = np.random.default_rng([cfg.seed, 0x5EC0])
    with single_threaded(cfg.deterministic):
        binary = model.reconstruct(x.reshape((n * t,) + x.shape[2:]), rng).binary.reshape(masks.shape)
    rec = recover(x, masks, binary.astype(np.float64)).data.astype(np.float32)
    meta = dict(ds.meta or {}, recovered_with=model.kind)
    path = write_dataset(_subset(ds, rec, meta), os.path.join(out, "recovered.fgds"))
    print(f"wrote {path}")


def cmd_evaluate(args, cfg, out):
    ckpts = {}
    for item in args.stage1:
        kind, sep, path = item.partition("=")
        if not sep or kind not in MODEL_KINDS:
            raise UsageError(f"--stage1 expects KIND=PATH with KIND in {MODEL_KINDS}, got {item!r}")
        ckpts[kind] = path
    ckpts["utae"] = args.stage2
    cfg = replace(cfg, dataset_path=args.dataset, checkpoints=ckpts, models=tuple(k for k in ckpts if k != "utae"),
                  out_dir=out)
    _run(cfg)


def _run(cfg):
    bundle = run_pipeline(cfg, log=print)
    save_config(cfg, os.path.join(cfg.out_dir, "config.json"))
    print(summarize(bundle.records))
    print(f"reports in {cfg.out_dir}")


def cmd_pipeline(args, cfg, out):
    _run(replace(cfg, out_dir=out))


def cmd_report(args, cfg, out):
    path = os.path.join(out, "metrics.csv")
    if not os.path.exists(path):
        raise FileNotFoundError(f"no metrics.csv in {out}")
    try:
        records = read_csv(path)
    except ValueError as e:
        raise FormatError(str(e)) from None
    if not records:
        raise FormatError(f"{path} holds no results")
    write_reports(records, out, cfg if args.config else None)
    print(summarize(records))


HANDLERS = {
    "generate": cmd_generate, "corrupt": cmd_corrupt, "train-stage1": cmd_train_stage1,
    "train-stage2": cmd_train_stage2, "reconstruct": cmd_reconstruct, "evaluate": cmd_evaluate,
    "pipeline": cmd_pipeline, "report": cmd_report,
}


def _classify(err):
    if isinstance(err, PipelineError):
        return _classify(err.cause)
    if isinstance(err, (UsageError, ConfigError)):
        return EXIT_USAGE
    if isinstance(err, NumericError):
        return EXIT_NUMERIC
    if isinstance(err, DATA_ERRORS):
        return EXIT_DATA
    return None


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage() + "firegap: error: a command is required")
        cfg = _config(args)
        out = cfg.out_dir
        if args.command != "report":
            os.makedirs(out, exist_ok=True)
        HANDLERS[args.command](args, cfg, out)
    except Exception as e:  # noqa: BLE001 - mapped to exit codes below
        code = _classify(e)
        if code is None:
            raise
        msg = str(e)
        if code == EXIT_USAGE and not isinstance(e, UsageError):
            msg = f"firegap: configuration error: {msg}"
        elif code == EXIT_DATA:
            msg = f"firegap: data error: {msg}"
        elif code == EXIT_NUMERIC:
            msg = f"firegap: numeric failure: {msg}"
        print(msg, file=sys.stderr)
        return code
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
