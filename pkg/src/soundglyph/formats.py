"""Byte-exact file formats: PGM/PPM images, key=value text, traces, CSV.

Everything here is deliberately boring and fully pinned down so that two
runs with the same inputs produce identical bytes:

- Canvases are 8-bit binary PGM (P5, grayscale) or PPM (P6, RGB) with
  maxval 255; a pixel encodes round(255 * value).
- Manifests and config files are flat ``key=value`` lines, sorted by key,
  '#' comments and blank lines ignored on read.
- Traces are space-separated numeric columns, one row per line, preceded by
  a single '# column names' comment.
- Metric tables are RFC-4180-style CSV with a header row.
"""

from __future__ import annotations

import csv
import io
import os

import numpy as np

from .errors import FormatError, ParameterError, ShapeError

_KEY_OK = set("abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_.-")


# ---------------------------------------------------------------------------
# PGM / PPM


def _quantize(canvas: np.ndarray) -> np.ndarray:
    canvas = np.asarray(canvas, dtype=np.float64)
    if canvas.min() < 0.0 or canvas.max() > 1.0:
        raise ParameterError("canvas values must lie in [0, 1]")
    return np.rint(canvas * 255.0).astype(np.uint8)


def write_pgm(path: str | os.PathLike, canvas: np.ndarray) -> None:
    """Write a (1, H, W) or (H, W) canvas as binary 8-bit PGM."""
    canvas = np.asarray(canvas, dtype=np.float64)
    if canvas.ndim == 3:
        if canvas.shape[0] != 1:
            raise ShapeError(f"PGM needs a single channel, got shape {canvas.shape}")
        canvas = canvas[0]
    if canvas.ndim != 2:
        raise ShapeError(f"canvas must be (H, W) or (1, H, W), got {canvas.shape}")
    h, w = canvas.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(_quantize(canvas).tobytes())


def write_ppm(path: str | os.PathLike, canvas: np.ndarray) -> None:
    """Write a (3, H, W) canvas as binary 8-bit PPM, channels interleaved."""
    canvas = np.asarray(canvas, dtype=np.float64)
    if canvas.ndim != 3 or canvas.shape[0] != 3:
        raise ShapeError(f"PPM needs shape (3, H, W), got {canvas.shape}")
    h, w = canvas.shape[1:]
    interleaved = np.moveaxis(_quantize(canvas), 0, -1)
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(interleaved.tobytes())


def _read_netpbm_tokens(f: io.BufferedReader, count: int) -> list[int]:
    """Read whitespace/comment-separated ASCII integer header tokens."""
    tokens: list[int] = []
    current = b""
    while len(tokens) < count:
        ch = f.read(1)
        if not ch:
            raise FormatError("truncated image header")
        if ch == b"#":
            while ch not in (b"\n", b""):
                ch = f.read(1)
            continue
        if ch.isspace():
            if current:
                tokens.append(int(current))
                current = b""
            continue
        if not ch.isdigit():
            raise FormatError(f"unexpected byte {ch!r} in image header")
        current += ch
    return tokens


def _read_netpbm(path: str | os.PathLike, magic: bytes, channels: int) -> np.ndarray:
    with open(path, "rb") as f:
        if f.read(2) != magic:
            raise FormatError(f"not a {magic.decode()} image: {path}")
        w, h, maxval = _read_netpbm_tokens(f, 3)
        if maxval != 255:
            raise FormatError(f"only maxval 255 is supported, got {maxval}")
        data = f.read(w * h * channels)
        if len(data) != w * h * channels:
            raise FormatError(f"truncated pixel data in {path}")
    flat = np.frombuffer(data, dtype=np.uint8).astype(np.float64) / 255.0
    if channels == 1:
        return flat.reshape(1, h, w)
    return np.moveaxis(flat.reshape(h, w, channels), -1, 0)


def read_pgm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PGM into a (1, H, W) float canvas in [0, 1]."""
    return _read_netpbm(path, b"P5", 1)


def read_ppm(path: str | os.PathLike) -> np.ndarray:
    """Read a binary PPM into a (3, H, W) float canvas in [0, 1]."""
    return _read_netpbm(path, b"P6", 3)


# ---------------------------------------------------------------------------
# key=value manifests and config files


def format_value(value) -> str:
    """Canonical text for a manifest value; floats round-trip via repr."""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_manifest(path: str | os.PathLike, entries: dict) -> None:
    """Write a flat key=value file, keys sorted for byte stability."""
    lines = []
    for key in sorted(entries):
        if not key or not set(key) <= _KEY_OK:
            raise ParameterError(f"invalid manifest key {key!r}")
        text = format_value(entries[key])
        if "\n" in text:
            raise ParameterError(f"manifest value for {key!r} contains a newline")
        lines.append(f"{key}={text}\n")
    with open(path, "w", encoding="ascii") as f:
        f.writelines(lines)


def read_manifest(path: str | os.PathLike) -> dict[str, str]:
    """Read a key=value file; values come back as raw strings."""
    out: dict[str, str] = {}
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise FormatError(f"{path}:{lineno}: expected key=value, got {stripped!r}")
            key, _, value = stripped.partition("=")
            key = key.strip()
            if not key or not set(key) <= _KEY_OK:
                raise FormatError(f"{path}:{lineno}: invalid key {key!r}")
            out[key] = value.strip()
    return out


read_config = read_manifest


def coerce(text: str, kind: type):
    """Parse a manifest string as int, float, bool, or str."""
    if kind is bool:
        if text in ("true", "1"):
            return True
        if text in ("false", "0"):
            return False
        raise FormatError(f"expected boolean, got {text!r}")
    try:
        return kind(text)
    except ValueError as exc:
        raise FormatError(f"expected {kind.__name__}, got {text!r}") from exc


# ---------------------------------------------------------------------------
# traces and CSV


def _format_cell(value) -> str:
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def write_trace(path: str | os.PathLike, columns, rows) -> None:
    """Write space-separated numeric rows under a '# columns' comment."""
    columns = list(columns)
    with open(path, "w", encoding="ascii") as f:
        f.write("# " + " ".join(columns) + "\n")
        for row in rows:
            cells = [_format_cell(v) for v in row]
            if len(cells) != len(columns):
                raise ParameterError(
                    f"trace row has {len(cells)} cells, expected {len(columns)}"
                )
            f.write(" ".join(cells) + "\n")


def read_trace(path: str | os.PathLike) -> tuple[list[str], np.ndarray]:
    """Read a trace file back as (column names, float array (rows, cols))."""
    columns: list[str] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="ascii") as f:
        for lineno, line in enumerate(f, 1):
            stripped = line.strip()
            if not stripped:
                continue
            if stripped.startswith("#"):
                if not columns:
                    columns = stripped[1:].split()
                continue
            try:
                rows.append([float(v) for v in stripped.split()])
            except ValueError as exc:
                raise FormatError(f"{path}:{lineno}: non-numeric trace cell") from exc
    data = np.asarray(rows, dtype=np.float64) if rows else np.empty((0, len(columns)))
    if columns and data.size and data.shape[1] != len(columns):
        raise FormatError(f"{path}: rows have {data.shape[1]} cells, header names {len(columns)}")
    return columns, data


def write_csv(path: str | os.PathLike, header, rows) -> None:
    """Write a metric table as CSV with a header row."""
    with open(path, "w", encoding="ascii", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(list(header))
        for row in rows:
            writer.writerow([_format_cell(v) for v in row])
