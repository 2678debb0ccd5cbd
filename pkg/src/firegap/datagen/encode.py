"""42-channel feature encoding, adaptive cropping and scenario labels."""

from dataclasses import dataclass

import numpy as np

from firegap.datagen.channels import (
    FIRE_CHANNEL,
    LAYOUT,
    N_ENCODED,
    N_LAND_COVER,
    RAW_INDEX,
    ChannelCodebook,
)

WINDOW = 64
HISTORY = 5
SCENARIOS = ("FireContinues", "FireExtinguished", "NewFire", "NoFire")


class DataError(ValueError):
    pass


def compute_stats(events):
    """Per-raw-channel (mean, std) over every pixel and day of ``events``.

    The detection-time channel only counts detected (non-NaN) pixels.
    """
    sources = sorted({src for _, tag, src in LAYOUT if tag == "zscore"}, key=RAW_INDEX.get)
    stats = {}
    for src in sources:
        total, total_sq, count = 0.0, 0.0, 0
        for ev in events:
            v = ev.raw[:, RAW_INDEX[src]].astype(np.float64)
            v = v[np.isfinite(v)]
            total += v.sum()
            total_sq += (v * v).sum()
            count += v.size
        if count == 0:
            stats[src] = (0.0, 1.0)
            continue
        mean = total / count
        # second pass for a numerically clean variance
        ss = 0.0
        for ev in events:
            v = ev.raw[:, RAW_INDEX[src]].astype(np.float64)
            v = v[np.isfinite(v)]
            ss += ((v - mean) ** 2).sum()
        std = np.sqrt(ss / count)
        stats[src] = (float(mean), float(std) if std > 0 else 1.0)
    return stats


def encode_raw(raw, codebook):
    """(..., 23, H, W) raw channels -> (..., 42, H, W) float32 encoding."""
    lead = raw.shape[:-3]
    out = np.zeros(lead + (N_ENCODED,) + raw.shape[-2:], dtype=np.float32)
    for c, entry in enumerate(codebook.entries):
        src = raw[..., RAW_INDEX[entry.source], :, :].astype(np.float64)
        if entry.transform == "zscore":
            z = (src - entry.mean) / entry.std
            out[..., c, :, :] = np.nan_to_num(z, nan=0.0, posinf=0.0, neginf=0.0)
        elif entry.transform == "cyclical_sin":
            out[..., c, :, :] = np.sin(np.radians(src))
        elif entry.transform == "cyclical_cos":
            out[..., c, :, :] = np.cos(np.radians(src))
        elif entry.transform == "onehot":
            cls = int(entry.name.split("_")[1])
            out[..., c, :, :] = src == cls
        elif entry.transform == "fire":
            out[..., c, :, :] = np.isfinite(src)
    lc = raw[..., RAW_INDEX["land_cover"], :, :]
    bad = ~np.isin(lc, np.arange(1, N_LAND_COVER + 1))
    if np.any(bad):
        raise DataError(f"unknown land-cover id(s): {sorted(set(np.unique(lc[bad]).tolist()))[:5]}")
    return out


def encode_features(event, stats_or_codebook):
    """Encode every day of ``event``; returns ((days, 42, H, W) float32, codebook)."""
    cb = stats_or_codebook if isinstance(stats_or_codebook, ChannelCodebook) else ChannelCodebook.from_stats(stats_or_codebook)
    return encode_raw(event.raw, cb), cb


def crop_origin(fire, t, window=WINDOW, history=HISTORY):
    """Top-left corner of the crop for target day ``t``.

    Centre on the fire centroid of the most recent history day that has fire;
    fall back to the grid centre. Clamped so the window fits.
    """
    days, h, w = fire.shape
    if h < window or w < window:
        raise DataError(f"event grid {h}x{w} smaller than the {window}x{window} window")
    if t - history < 0 or t >= days:
        raise DataError(f"target day {t} needs {history} history days inside [0, {days})")
    cy, cx = (h - 1) / 2.0, (w - 1) / 2.0
    centre = (h // 2, w // 2)
    for d in range(t - 1, t - history - 1, -1):
        ys, xs = np.nonzero(fire[d])
        if ys.size:
            cy, cx = ys.mean(), xs.mean()
            centre = (int(np.floor(cy + 0.5)), int(np.floor(cx + 0.5)))
            break
    oy = min(max(centre[0] - window // 2, 0), h - window)
    ox = min(max(centre[1] - window // 2, 0), w - window)
    return oy, ox


def classify_scenario(history, target):
    hist = bool(np.any(history))
    tgt = bool(np.any(target))
    if hist and tgt:
        return "FireContinues"
    if hist:
        return "FireExtinguished"
    if tgt:
        return "NewFire"
    return "NoFire"


@dataclass
class SampleSequence:
    inputs: np.ndarray  # (5, 42, 64, 64) float32
    target: np.ndarray  # (64, 64) uint8
    scenario: str
    origin: tuple
    event_id: int
    group_id: int
    t: int

    @property
    def history_fire(self):
        return self.inputs[:, FIRE_CHANNEL]


def adaptive_crop(event, t, encoded, window=WINDOW, history=HISTORY):
    oy, ox = crop_origin(event.fire, t, window, history)
    sl = (slice(oy, oy + window), slice(ox, ox + window))
    inputs = np.ascontiguousarray(encoded[t - history:t][..., sl[0], sl[1]])
    target = event.fire[t][sl].copy()
    scenario = classify_scenario(inputs[:, FIRE_CHANNEL], target)
    return SampleSequence(inputs, target, scenario, (oy, ox), event.event_id, event.group_id, t)
