"""File formats: the SAMF binary feature format, CSV matrices, JSON reports.

SAMF layout (little-endian throughout):

    bytes 0-3    magic "SAMF"
    bytes 4-7    version, unsigned 32-bit (currently 1)
    bytes 8-11   n_rows, unsigned 32-bit
    bytes 12-15  n_cols, unsigned 32-bit
    bytes 16-    n_rows * n_cols IEEE-754 float32 values, row-major

The payload must be exactly 4 * n_rows * n_cols bytes with no trailing data.
Values are stored as float32 (the native precision of model activations) and
computed on as float64.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .exceptions import InvalidInputError, ParseError
from .validation import as_feature_matrix

__all__ = [
    "SAMF_MAGIC",
    "SAMF_VERSION",
    "write_samf",
    "read_samf",
    "read_csv_matrix",
    "write_csv_rows",
    "ingest",
    "read_labels",
    "canonical_json",
]

SAMF_MAGIC = b"SAMF"
SAMF_VERSION = 1
_HEADER = struct.Struct("<III")  # version, n_rows, n_cols


def write_samf(path, matrix) -> None:
    """Write a matrix as a SAMF file (values cast to float32)."""
    matrix = np.asarray(matrix, dtype=np.float64)
    if matrix.ndim == 1:
        matrix = matrix.reshape(-1, 1)
    if matrix.ndim != 2:
        raise InvalidInputError("SAMF payload must be a matrix")
    rows, cols = matrix.shape
    payload = np.ascontiguousarray(matrix, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(SAMF_MAGIC)
        fh.write(_HEADER.pack(SAMF_VERSION, rows, cols))
        fh.write(payload)


def read_samf(path) -> np.ndarray:
    """Read a SAMF file into a float64 matrix (exact widening of float32)."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != SAMF_MAGIC:
        raise ParseError(f"{path}: bad magic at byte 0, expected {SAMF_MAGIC!r}")
    if len(raw) < 4 + _HEADER.size:
        raise ParseError(
            f"{path}: truncated header, expected {4 + _HEADER.size} bytes, got {len(raw)}"
        )
    version, rows, cols = _HEADER.unpack_from(raw, 4)
    if version != SAMF_VERSION:
        raise ParseError(f"{path}: unsupported version {version} at byte 4")
    expected = 4 * rows * cols
    actual = len(raw) - 4 - _HEADER.size
    if actual != expected:
        raise ParseError(
            f"{path}: payload at byte {4 + _HEADER.size} must be exactly "
            f"{expected} bytes ({rows}x{cols} float32), got {actual}"
        )
    if rows < 1 or cols < 1:
        raise ParseError(f"{path}: empty shape {rows}x{cols}")
    values = np.frombuffer(raw, dtype="<f4", offset=4 + _HEADER.size)
    matrix = values.astype(np.float64).reshape(rows, cols)
    if not np.all(np.isfinite(matrix)):
        raise InvalidInputError(f"{path}: payload contains non-finite values")
    return matrix


def read_csv_matrix(path) -> np.ndarray:
    """Parse a headerless numeric CSV into a float64 matrix."""
    rows = []
    width = None
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cells = line.split(",")
            if width is None:
                width = len(cells)
            elif len(cells) != width:
                raise ParseError(
                    f"{path}: line {lineno}: expected {width} columns, got {len(cells)}"
                )
            try:
                rows.append([float(c) for c in cells])
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if not rows:
        raise ParseError(f"{path}: no data rows")
    return as_feature_matrix(np.asarray(rows), str(path))


def write_csv_rows(path, header, rows) -> None:
    """Write simple CSV output (curve points, labels)."""
    with open(path, "w", encoding="utf-8") as fh:
        if header:
            fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(str(c) for c in row) + "\n")


def ingest(path, fmt: str | None = None) -> np.ndarray:
    """Load a feature matrix from a SAMF or CSV file.

    ``fmt`` may be "samf", "csv", or None to infer from the file suffix.
    """
    path = Path(path)
    if fmt is None:
        suffix = path.suffix.lower()
        if suffix == ".samf":
            fmt = "samf"
        elif suffix == ".csv":
            fmt = "csv"
        else:
            raise InvalidInputError(
                f"cannot infer format of {path}; pass fmt='samf' or 'csv'"
            )
    if fmt == "samf":
        return read_samf(path)
    if fmt == "csv":
        return read_csv_matrix(path)
    raise InvalidInputError(f"unknown format {fmt!r}")


def read_labels(path) -> np.ndarray:
    """Read one integer label per line (or a single CSV column)."""
    labels = []
    with open(path, "r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            cell = line.split(",")[0]
            try:
                labels.append(int(float(cell)))
            except ValueError as exc:
                raise ParseError(f"{path}: line {lineno}: {exc}") from exc
    if not labels:
        raise ParseError(f"{path}: no labels")
    return np.asarray(labels, dtype=np.int64)


def canonical_json(obj) -> str:
    """Deterministic JSON serialization for reports (sorted keys, fixed layout)."""
    return json.dumps(obj, sort_keys=True, indent=2, allow_nan=False) + "\n"
