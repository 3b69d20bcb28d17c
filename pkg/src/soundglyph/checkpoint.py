"""Model checkpoints: one JSON header line plus raw little-endian blobs.

The file starts with a single line of JSON (sorted keys) describing the
format version, the model kind and architecture, and the name/shape/offset
of every parameter tensor; the rest of the file is the concatenated float64
little-endian parameter data in header order. The layout is deterministic,
so identical models produce identical bytes and a checkpoint can be
fingerprinted by its SHA-256 digest.
"""

from __future__ import annotations

import hashlib
import json
import os

import numpy as np

from .denoiser import ClassifierModel, DenoiserModel
from .errors import FormatError

MAGIC = "soundglyph-checkpoint"
VERSION = 1

_KINDS = {"denoiser": DenoiserModel, "classifier": ClassifierModel}


def save_checkpoint(path: str | os.PathLike, model, extra: dict | None = None) -> None:
    """Serialize a denoiser or classifier; `extra` must be JSON-safe."""
    kind = getattr(model, "kind", None)
    if kind not in _KINDS:
        raise FormatError(f"cannot checkpoint object of kind {kind!r}")
    names = sorted(model.params)
    entries = []
    offset = 0
    for name in names:
        arr = model.params[name]
        entries.append({"name": name, "shape": list(arr.shape), "offset": offset})
        offset += arr.size * 8
    header = {
        "format": MAGIC,
        "version": VERSION,
        "kind": kind,
        "arch": model.arch(),
        "params": entries,
        "extra": extra or {},
    }
    with open(path, "wb") as f:
        f.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("ascii"))
        f.write(b"\n")
        for name in names:
            f.write(np.ascontiguousarray(model.params[name], dtype="<f8").tobytes())


def load_checkpoint(path: str | os.PathLike):
    """Rebuild the saved model; returns (model, extra)."""
    with open(path, "rb") as f:
        header_line = f.readline()
        blob = f.read()
    try:
        header = json.loads(header_line.decode("ascii"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"not a checkpoint file: {path}") from exc
    if header.get("format") != MAGIC:
        raise FormatError(f"not a checkpoint file: {path}")
    if header.get("version") != VERSION:
        raise FormatError(f"unsupported checkpoint version {header.get('version')}")
    kind = header.get("kind")
    if kind not in _KINDS:
        raise FormatError(f"unknown checkpoint kind {kind!r}")
    model = _KINDS[kind](**header["arch"])
    for entry in header["params"]:
        name = entry["name"]
        if name not in model.params:
            raise FormatError(f"checkpoint has unknown parameter {name!r}")
        shape = tuple(entry["shape"])
        target = model.params[name]
        if shape != target.shape:
            raise FormatError(
                f"parameter {name!r} has shape {shape}, model expects {target.shape}"
            )
        start = entry["offset"]
        end = start + target.size * 8
        if end > len(blob):
            raise FormatError(f"checkpoint truncated at parameter {name!r}")
        target[...] = np.frombuffer(blob[start:end], dtype="<f8").reshape(shape)
    return model, header.get("extra", {})


def checkpoint_digest(path: str | os.PathLike) -> str:
    """SHA-256 hex digest of the checkpoint file."""
    digest = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            digest.update(chunk)
    return digest.hexdigest()
