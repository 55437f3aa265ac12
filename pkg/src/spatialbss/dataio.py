"""CSV and manifest I/O.

Locations and field samples round-trip through headed CSV (``x1..xd`` and
``x1..xd,v1..vp``); floats are written with shortest round-trip formatting.
Matrices use 17 significant digits.  Malformed inputs raise
:class:`DataFormatError` with a line number.
"""

from __future__ import annotations

import csv
import hashlib
import json
from pathlib import Path

import numpy as np

from .errors import DataFormatError
from .locations import FieldSample, LocationSet


def _fmt(x: float) -> str:
    return repr(float(x))


def _fmt17(x: float) -> str:
    return f"{float(x):.17g}"


def write_locations_csv(locs: LocationSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"x{i + 1}" for i in range(locs.dim)])
        for row in locs.coords:
            writer.writerow([_fmt(v) for v in row])


def write_fieldsample_csv(sample: FieldSample, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            [f"x{i + 1}" for i in range(sample.locations.dim)]
            + [f"v{j + 1}" for j in range(sample.p)]
        )
        for coords, vals in zip(sample.locations.coords, sample.values):
            writer.writerow([_fmt(v) for v in coords] + [_fmt(v) for v in vals])


def _read_rows(path):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError(f"{path}: empty file") from None
        rows = list(reader)
    return [h.strip() for h in header], rows


def _split_header(header, path):
    d = 0
    while d < len(header) and header[d] == f"x{d + 1}":
        d += 1
    if d == 0:
        raise DataFormatError(f"{path}: line 1: header must start with x1, x2, ...")
    for j, name in enumerate(header[d:]):
        if name != f"v{j + 1}":
            raise DataFormatError(
                f"{path}: line 1: expected column v{j + 1}, found {name!r}"
            )
    return d, len(header) - d


def _parse_block(rows, width, path):
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: line {i + 2}: expected {width} fields, found {len(row)}"
            )
        try:
            out[i] = [float(v) for v in row]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {i + 2}: {exc}") from None
    return out


def read_locations_csv(path) -> LocationSet:
    header, rows = _read_rows(path)
    d, p = _split_header(header, path)
    if p != 0:
        raise DataFormatError(f"{path}: line 1: value columns in a locations file")
    return LocationSet(_parse_block(rows, d, path), check_duplicates=False)


def read_fieldsample_csv(path) -> FieldSample:
    header, rows = _read_rows(path)
    d, p = _split_header(header, path)
    if p == 0:
        raise DataFormatError(f"{path}: line 1: no value columns (v1, v2, ...)")
    block = _parse_block(rows, d + p, path)
    locs = LocationSet(block[:, :d], check_duplicates=False)
    return FieldSample(locs, block[:, d:])


def write_matrix_csv(matrix: np.ndarray, path) -> None:
    matrix = np.atleast_2d(np.asarray(matrix, dtype=np.float64))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in matrix:
            writer.writerow([_fmt17(v) for v in row])


def read_matrix_csv(path) -> np.ndarray:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise DataFormatError(f"{path}: empty file")
    width = len(rows[0])
    out = np.empty((len(rows), width))
    for i, row in enumerate(rows):
        if len(row) != width:
            raise DataFormatError(
                f"{path}: line {i + 1}: expected {width} fields, found {len(row)}"
            )
        try:
            out[i] = [float(v) for v in row]
        except ValueError as exc:
            raise DataFormatError(f"{path}: line {i + 1}: {exc}") from None
    return out


def config_hash(payload) -> str:
    """Stable hash of a JSON-serializable config payload."""
    blob = json.dumps(payload, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()


def write_manifest(path, payload: dict) -> None:
    Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True, default=str) + "\n")
