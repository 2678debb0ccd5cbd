"""Report emission: metric table, long-format plot data and the recovery-gain table."""

import csv
import os
from dataclasses import astuple, dataclass

import numpy as np

from firegap.evalmetrics import read_csv, write_csv

PLOT_HEADER = ("stage", "metric", "mechanism", "scenario", "series", "x", "y", "std", "n")
GAIN_HEADER = ("mechanism", "eta", "model", "scenario", "ap_clean", "ap_masked", "ap_recovered", "gain")


@dataclass(frozen=True)
class GainRow:
    mechanism: str
    eta: float
    model: str
    scenario: str
    ap_clean: float
    ap_masked: float
    ap_recovered: float
    gain: float  # (recovered - masked) / masked


def relative_gain(ap_masked, ap_recovered):
    if ap_masked is None or ap_recovered is None or not np.isfinite(ap_masked) or ap_masked == 0:
        return float("nan")
    return (ap_recovered - ap_masked) / ap_masked


def compare_recovery_gain(bundle):
    """Relative AP improvement of each recovered pipeline over the masked one, per mechanism and eta.

    Accepts a ReportBundle, a list of EvalRecords, or a path to a metrics CSV.
    """
    records = _records(bundle)
    stage2 = [r for r in records if r.stage == "stage2" and r.metric == "ap"]
    clean = {r.scenario: r.mean for r in stage2 if r.model == "clean"}
    masked = {(r.mechanism, r.eta, r.scenario): r.mean for r in stage2 if r.model == "masked"}
    out = []
    for r in stage2:
        if not r.model.startswith("recovered:"):
            continue
        m = masked.get((r.mechanism, r.eta, r.scenario))
        if m is None:
            continue
        out.append(GainRow(r.mechanism, r.eta, r.model.split(":", 1)[1], r.scenario,
                           clean.get(r.scenario, float("nan")), m, r.mean, relative_gain(m, r.mean)))
    return out


def _records(obj):
    if hasattr(obj, "records"):
        return obj.records
    if isinstance(obj, (str, os.PathLike)):
        return read_csv(obj)
    return list(obj)


def _fmt(v):
    if isinstance(v, float):
        return "nan" if np.isnan(v) else repr(round(v, 10))
    return str(v)


def _write_rows(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) for v in row])
    return path


def plot_rows(records, etas):
    """Long format: x = eta, series = model (Stage-I) or pipeline (Stage-II), y = mean metric.

    The clean pipeline has no eta; it is repeated at every eta as a reference line.
    """
    rows = []
    for r in records:
        if r.stage == "stage2" and r.model == "clean":
            continue
        rows.append((r.stage, r.metric, r.mechanism, r.scenario, r.model, r.eta, r.mean, r.std, r.n))
    mechs = sorted({r.mechanism for r in records if r.stage == "stage2" and r.mechanism != "none"})
    for r in records:
        if r.stage == "stage2" and r.model == "clean":
            for mech in mechs:
                for eta in etas:
                    rows.append((r.stage, r.metric, mech, r.scenario, "clean", float(eta), r.mean, r.std, r.n))
    return rows


def write_reports(records, out_dir, cfg=None):
    """metrics.csv, plot_stage1.csv, plot_stage2.csv and gain.csv; returns {name: path}."""
    os.makedirs(out_dir, exist_ok=True)
    files = {"metrics": write_csv(records, os.path.join(out_dir, "metrics.csv"))}
    etas = cfg.etas if cfg is not None else sorted({r.eta for r in records})
    rows = plot_rows(records, etas)
    files["plot_stage1"] = _write_rows(os.path.join(out_dir, "plot_stage1.csv"), PLOT_HEADER,
                                       [r for r in rows if r[0] == "stage1"])
    files["plot_stage2"] = _write_rows(os.path.join(out_dir, "plot_stage2.csv"), PLOT_HEADER,
                                       [r for r in rows if r[0] == "stage2"])
    files["gain"] = _write_rows(os.path.join(out_dir, "gain.csv"), GAIN_HEADER,
                                [astuple(g) for g in compare_recovery_gain(records)])
    return files


def summarize(records):
    """Short human-readable digest used by the ``report`` command."""
    lines = []
    s1 = [r for r in records if r.stage == "stage1" and r.metric == "dice" and r.scenario == "FireContinues"]
    if s1:
        lines.append("Stage-I occluded Dice (FireContinues)")
        models = list(dict.fromkeys(r.model for r in s1))
        for mech in dict.fromkeys(r.mechanism for r in s1):
            lines.append(f"  {mech}")
            for m in models:
                vals = [f"{r.mean:.3f}" for r in s1 if r.model == m and r.mechanism == mech]
                lines.append(f"    {m:<10} " + " ".join(vals))
    gains = [g for g in compare_recovery_gain(records) if g.scenario == "FireContinues"]
    if gains:
        lines.append("Stage-II AP (FireContinues): masked -> recovered (gain)")
        for g in gains:
            lines.append(f"  {g.mechanism:<9} eta={g.eta:.1f} {g.model:<9} {g.ap_masked:.3f} -> {g.ap_recovered:.3f}"
                         f" ({100 * g.gain:+.1f}%)")
    return "\n".join(lines)
