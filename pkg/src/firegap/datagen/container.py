"""FGDS dataset container: one JSON manifest line + little-endian float32 payload."""

import json
import os

import numpy as np

from firegap.datagen.channels import ChannelCodebook, N_ENCODED
from firegap.datagen.encode import HISTORY, WINDOW

MAGIC = "FGDS"
VERSION = 1


class FormatError(ValueError):
    pass


class TruncatedError(OSError):
    pass


def _manifest(ds):
    n = len(ds)
    records = [
        {"scenario": ds.scenarios[i], "origin": list(ds.origins[i]), "event_id": int(ds.event_ids[i]),
         "group_id": int(ds.group_ids[i]), "t": int(ds.days[i])}
        for i in range(n)
    ]
    return {
        "magic": MAGIC,
        "version": VERSION,
        "arrays": [
            {"name": "inputs", "shape": [n, HISTORY, N_ENCODED, WINDOW, WINDOW], "dtype": "<f4"},
            {"name": "targets", "shape": [n, WINDOW, WINDOW], "dtype": "<f4"},
        ],
        "records": records,
        "codebook": ds.codebook.to_json() if ds.codebook is not None else None,
        "meta": ds.meta,
    }


def write_dataset(ds, path):
    """Serialise a SampleSet. Output bytes depend only on the content."""
    head = json.dumps(_manifest(ds), sort_keys=True, separators=(",", ":")).encode("utf-8")
    if b"\n" in head:
        raise FormatError("manifest must serialise to a single line")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(head + b"\n")
        np.ascontiguousarray(ds.inputs, dtype="<f4").tofile(f)
        np.ascontiguousarray(ds.targets, dtype="<f4").tofile(f)
    os.replace(tmp, path)
    return path


def read_manifest(path):
    with open(path, "rb") as f:
        line = f.readline()
        offset = f.tell()
    try:
        man = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as e:
        raise FormatError(f"{path}: manifest is not valid JSON ({e})") from None
    if not isinstance(man, dict) or man.get("magic") != MAGIC:
        raise FormatError(f"{path}: bad magic {man.get('magic') if isinstance(man, dict) else None!r}")
    if man.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported version {man.get('version')!r}")
    return man, offset


def read_dataset(path):
    from firegap.datagen.dataset import SampleSet

    man, offset = read_manifest(path)
    arrays = man["arrays"]
    for a in arrays:
        if a.get("dtype") != "<f4":
            raise FormatError(f"{path}: array {a.get('name')} has unsupported dtype {a.get('dtype')}")
    sizes = [int(np.prod(a["shape"])) for a in arrays]
    expected = offset + 4 * sum(sizes)
    actual = os.path.getsize(path)
    if actual < expected:
        raise TruncatedError(f"{path}: payload truncated ({actual - offset} of {expected - offset} bytes)")
    if actual > expected:
        raise FormatError(f"{path}: payload is {actual - expected} bytes longer than the manifest declares")
    n = len(man["records"])
    if any(a["shape"][0] != n for a in arrays):
        raise FormatError(f"{path}: record count {n} disagrees with array shapes")
    out = {}
    with open(path, "rb") as f:
        f.seek(offset)
        for a, size in zip(arrays, sizes):
            out[a["name"]] = np.fromfile(f, dtype="<f4", count=size).reshape(a["shape"])
    recs = man["records"]
    try:
        cb = ChannelCodebook.from_json(man["codebook"]) if man.get("codebook") else None
    except (ValueError, TypeError, KeyError) as e:
        raise FormatError(f"{path}: bad channel codebook ({e})") from None
    targets = out["targets"]
    if np.any((targets != 0) & (targets != 1)):
        raise FormatError(f"{path}: target maps are not binary")
    return SampleSet(
        out["inputs"].astype(np.float32, copy=False),
        targets.astype(np.uint8),
        [r["scenario"] for r in recs],
        [tuple(r["origin"]) for r in recs],
        [r["event_id"] for r in recs],
        [r["group_id"] for r in recs],
        [r["t"] for r in recs],
        cb,
        man.get("meta"),
    )
