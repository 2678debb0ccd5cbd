"""FGCK checkpoint container: one JSON header line + little-endian float32 parameters."""

import hashlib
import json
import os

import numpy as np

from firegap.datagen.container import FormatError, TruncatedError
from firegap.forecast import UTAE, build_forecaster
from firegap.gradcore.tensor import ConfigError
from firegap.reconstruct import ArchPreset, build_model

MAGIC = "FGCK"
VERSION = 1


class CheckpointMismatch(FormatError):
    """Checkpoint is well-formed but does not fit the requested data or model."""


def codebook_hash(codebook):
    if codebook is None:
        return None
    if hasattr(codebook, "hash"):
        return codebook.hash()
    obj = codebook
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    return hashlib.sha256(blob).hexdigest()


def _kind(model):
    return "utae" if isinstance(model, UTAE) else model.kind


def save_checkpoint(model, path, codebook=None, meta=None, preset=None):
    """Write all parameters as float32. ``preset`` defaults to the one the model was built with."""
    preset = preset or getattr(model, "preset", None)
    if preset is None:
        raise ConfigError("checkpoint needs the architecture preset")
    params = []
    offset = 0
    arrays = []
    for name, p in model.named_parameters():
        arr = np.ascontiguousarray(p.data, dtype="<f4")
        params.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size
        arrays.append(arr)
    head = {
        "magic": MAGIC,
        "version": VERSION,
        "kind": _kind(model),
        "preset": preset.to_json(),
        "codebook_hash": codebook_hash(codebook),
        "params": params,
        "n_values": offset,
        "meta": meta or {},
    }
    line = json.dumps(head, sort_keys=True, separators=(",", ":")).encode("utf-8")
    tmp = f"{path}.tmp"
    with open(tmp, "wb") as f:
        f.write(line + b"\n")
        for arr in arrays:
            arr.tofile(f)
    os.replace(tmp, path)
    return path


def read_header(path):
    with open(path, "rb") as f:
        line = f.readline()
        offset = f.tell()
    try:
        head = json.loads(line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        raise FormatError(f"{path}: checkpoint header is not valid JSON") from None
    if not isinstance(head, dict) or head.get("magic") != MAGIC:
        raise FormatError(f"{path}: not a checkpoint file")
    if head.get("version") != VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {head.get('version')!r}")
    return head, offset


def load_checkpoint(path, codebook=None, model=None):
    """Rebuild (or fill ``model``) from ``path``; returns (model, meta).

    A codebook whose hash differs from the stored one is refused, as is a
    target model whose parameter shapes differ.
    """
    head, offset = read_header(path)
    n_values = int(head["n_values"])
    expected = offset + 4 * n_values
    size = os.path.getsize(path)
    if size < expected:
        raise TruncatedError(f"{path}: payload truncated ({size - offset} of {4 * n_values} bytes)")
    if size > expected:
        raise FormatError(f"{path}: {size - expected} unexpected trailing bytes")
    if codebook is not None and head.get("codebook_hash") is not None:
        if codebook_hash(codebook) != head["codebook_hash"]:
            raise CheckpointMismatch(f"{path}: trained under a different channel codebook")
    preset = ArchPreset.from_json(head["preset"])
    if model is None:
        model = build_forecaster(preset) if head["kind"] == "utae" else build_model(head["kind"], preset)
    elif _kind(model) != head["kind"]:
        raise CheckpointMismatch(f"{path}: holds a {head['kind']} model, not {_kind(model)}")
    flat = np.fromfile(path, dtype="<f4", count=n_values, offset=offset)
    state = {}
    for p in head["params"]:
        count = int(np.prod(p["shape"], dtype=np.int64))
        state[p["name"]] = flat[p["offset"]:p["offset"] + count].reshape(p["shape"]).astype(np.float64)
    try:
        model.load_state_dict(state)
    except ConfigError as e:
        raise CheckpointMismatch(f"{path}: {e}") from None
    return model, head.get("meta", {})
