"""Occluded-region Dice/FPR, average precision and mean +/- std aggregation."""

import csv
import io
from dataclasses import astuple, dataclass, fields

import numpy as np

from firegap.gradcore.tensor import ConfigError, DimensionError

METRICS = ("dice", "fpr", "ap")
CSV_HEADER = ("model", "stage", "mechanism", "eta", "scenario", "metric", "mean", "std", "n")


def _same_shape(*arrays):
    shapes = {np.shape(a) for a in arrays}
    if len(shapes) != 1:
        raise DimensionError(f"metric inputs differ in shape: {sorted(shapes)}")


def dice_occluded(pred, truth, occluded):
    """2|P & G| / (|P| + |G|) restricted to ``occluded``; None when both sets are empty there."""
    _same_shape(pred, truth, occluded)
    o = np.asarray(occluded, dtype=bool)
    p = (np.asarray(pred) != 0) & o
    g = (np.asarray(truth) != 0) & o
    denom = int(p.sum()) + int(g.sum())
    if denom == 0:
        return None
    return 2.0 * int((p & g).sum()) / denom


def fpr_occluded(pred, truth, occluded=None):
    """FP / (FP + TN) inside ``occluded`` (whole frame when None); None without negatives."""
    if occluded is None:
        occluded = np.ones(np.shape(truth), dtype=bool)
    _same_shape(pred, truth, occluded)
    o = np.asarray(occluded, dtype=bool)
    neg = (np.asarray(truth) == 0) & o
    n_neg = int(neg.sum())
    if n_neg == 0:
        return None
    fp = int(((np.asarray(pred) != 0) & neg).sum())
    return fp / n_neg


def average_precision(prob, truth):
    """Step-interpolated area under the PR curve; ties share one threshold. None without positives."""
    _same_shape(prob, truth)
    s = np.asarray(prob, dtype=np.float64).ravel()
    y = (np.asarray(truth) != 0).ravel()
    n_pos = int(y.sum())
    if n_pos == 0:
        return None
    order = np.argsort(-s, kind="stable")
    s, y = s[order], y[order]
    # last index of every run of equal scores
    ends = np.r_[np.flatnonzero(np.diff(s) != 0), s.size - 1]
    tp = np.cumsum(y)[ends]
    fp = (ends + 1) - tp
    precision = tp / (tp + fp)
    recall = tp / n_pos
    return float(np.sum(np.diff(np.r_[0.0, recall]) * precision))


@dataclass(frozen=True)
class EvalRecord:
    model: str
    stage: str
    mechanism: str
    eta: float
    scenario: str
    metric: str
    mean: float
    std: float
    n: int

    def __post_init__(self):
        if self.metric not in METRICS:
            raise ConfigError(f"unknown metric {self.metric!r}")


def aggregate(rows, keys=("model", "stage", "mechanism", "eta", "scenario", "metric")):
    """Per-sample dicts with a ``value`` field -> EvalRecords (population std, None values dropped).

    Groups keep first-appearance order, so output order is deterministic.
    """
    groups = {}
    for r in rows:
        k = tuple(r[key] for key in keys)
        groups.setdefault(k, [])
        if r["value"] is not None:
            groups[k].append(float(r["value"]))
    out = []
    for k, vals in groups.items():
        d = dict(zip(keys, k))
        arr = np.asarray(vals)
        mean = float(arr.mean()) if arr.size else float("nan")
        std = float(arr.std()) if arr.size else float("nan")
        out.append(EvalRecord(d["model"], d["stage"], d["mechanism"], float(d["eta"]), d["scenario"], d["metric"], mean, std, int(arr.size)))
    return out


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else repr(round(v, 10))
    return str(v)


def records_to_csv(records):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in records:
        w.writerow([_fmt(v) for v in astuple(r)])
    return buf.getvalue()


def write_csv(records, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        f.write(records_to_csv(records))
    return path


def read_csv(path):
    with open(path, encoding="utf-8", newline="") as f:
        reader = csv.reader(f)
        header = tuple(next(reader, ()))
        if header != CSV_HEADER:
            raise ValueError(f"{path}: unexpected header {header}")
        types = [fl.type for fl in fields(EvalRecord)]
        out = []
        for row in reader:
            vals = [float(v) if t in (float, "float") else int(v) if t in (int, "int") else v for v, t in zip(row, types)]
            out.append(EvalRecord(*vals))
    return out
