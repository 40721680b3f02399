"""File helpers: atomic writes, covariance/data CSVs and config documents."""

from __future__ import annotations

import csv
import io
import json
import math
import os
import sys
import tempfile
from pathlib import Path

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

__all__ = [
    "ConfigError",
    "fmt",
    "atomic_write",
    "write_csv",
    "read_covariance",
    "write_covariance",
    "read_data",
    "read_document",
    "write_json",
]


class ConfigError(ValueError):
    """A configuration or input file is missing or malformed."""


def fmt(x) -> str:
    """17 significant digits, with ``inf``/``-inf``/``nan`` spelled out."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return f"{x:.17g}"


def atomic_write(path, text: str) -> Path:
    """Write ``text`` to a temp file beside ``path`` and rename it into place."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "w", newline="") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


def write_csv(path, rows, header=None) -> Path:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if header is not None:
        w.writerow(header)
    for row in rows:
        w.writerow([v if isinstance(v, str) else fmt(v) for v in row])
    return atomic_write(path, buf.getvalue())


def write_json(path, doc) -> Path:
    return atomic_write(path, json.dumps(doc, indent=2, allow_nan=True) + "\n")


def _read_numeric_csv(path) -> np.ndarray:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: file not found")
    try:
        with open(path, newline="") as fh:
            rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
        arr = np.array([[float(c) for c in r] for r in rows], dtype=float)
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if arr.ndim != 2 or arr.size == 0:
        raise ConfigError(f"{path}: expected a rectangular table of numbers")
    return arr


def read_covariance(path) -> np.ndarray:
    """Read an ``n x n`` covariance CSV (no header)."""
    from .sem_model import DegenerateDataError, validate_covariance

    S = _read_numeric_csv(path)
    try:
        return validate_covariance(S)
    except DegenerateDataError as exc:
        raise ConfigError(f"{path}: {exc}") from exc


def write_covariance(path, S) -> Path:
    return write_csv(path, np.asarray(S).tolist())


def read_data(path) -> np.ndarray:
    """Read a raw data CSV, one observation per row (no header)."""
    return _read_numeric_csv(path)


def read_document(path) -> dict:
    """Load a JSON or TOML document, chosen by file extension."""
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"{path}: file not found")
    suffix = path.suffix.lower()
    try:
        if suffix == ".json":
            doc = json.loads(path.read_text())
        elif suffix == ".toml":
            doc = tomllib.loads(path.read_text())
        else:
            raise ConfigError(f"{path}: unsupported extension {suffix!r} (use .json or .toml)")
    except (json.JSONDecodeError, tomllib.TOMLDecodeError) as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    if not isinstance(doc, dict):
        raise ConfigError(f"{path}: top level must be a table/object")
    return doc
