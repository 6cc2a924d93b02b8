"""Plain-text grid files, run manifests, CSV and PNG exports."""
import hashlib
import os

import numpy as np


class GridFormatError(ValueError):
    """Malformed grid file; the message carries file and line context."""


def write_grid(path, f):
    """Write ``f`` as a header ``rows cols`` followed by row-major values.

    Values are printed with 17 significant digits, so reading back is exact.
    """
    f = np.asarray(f, dtype=float)
    if f.ndim != 2:
        raise ValueError(f"grid files hold 2-D arrays, got shape {f.shape}")
    lines = [f"{f.shape[0]} {f.shape[1]}"]
    lines.extend(" ".join(f"{x:.17g}" for x in row) for row in f)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(lines) + "\n")


def read_grid(path):
    with open(path, encoding="utf-8") as fh:
        text = fh.read()
    lines = text.splitlines()
    if not lines:
        raise GridFormatError(f"{path}:1: empty file")
    header = lines[0].split()
    try:
        rows, cols = (int(x) for x in header)
    except ValueError:
        raise GridFormatError(f"{path}:1: expected header 'rows cols', got {lines[0]!r}") from None
    if rows < 1 or cols < 1:
        raise GridFormatError(f"{path}:1: nonpositive shape {rows}x{cols}")
    values = []
    for lineno, line in enumerate(lines[1:], start=2):
        for tok in line.split():
            try:
                x = float(tok)
            except ValueError:
                raise GridFormatError(f"{path}:{lineno}: cannot parse {tok!r} as a number") from None
            if not np.isfinite(x):
                raise GridFormatError(f"{path}:{lineno}: non-finite value {tok!r}")
            values.append(x)
    if len(values) != rows * cols:
        raise GridFormatError(f"{path}: header declares {rows}x{cols} = {rows * cols} values, "
                              f"found {len(values)}")
    return np.array(values).reshape(rows, cols)


def sha256_file(path):
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def format_value(value):
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, np.integer):
        return str(int(value))
    if isinstance(value, (list, tuple)):
        return " ".join(str(v) for v in value)
    if value is None:
        return ""
    return str(getattr(value, "value", value))


def write_manifest(path, entries):
    """Write ``key = value`` lines in insertion order."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for key, value in entries.items():
            fh.write(f"{key} = {format_value(value)}\n")


def read_manifest(path):
    out = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.rstrip("\n")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            key, sep, value = line.partition("=")
            if not sep:
                raise GridFormatError(f"{path}:{lineno}: expected 'key = value', got {line!r}")
            out[key.strip()] = value.strip()
    return out


def write_csv(path, header, rows):
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(format_value(v) for v in row) + "\n")


def write_png(path, f, log_scale=False):
    """16-bit grayscale export for viewing; not covered by reproducibility."""
    from PIL import Image

    f = np.asarray(f, dtype=float)
    if log_scale:
        f = np.log10(np.maximum(f, 0.0) + 1.0)
    lo, hi = float(f.min()), float(f.max())
    scaled = np.zeros_like(f) if hi == lo else (f - lo) / (hi - lo)
    Image.fromarray(np.round(scaled * 65535).astype(np.uint16)).save(path)


def ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path
