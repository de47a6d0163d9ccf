"""On-disk chain traces.

A trace directory holds

* ``trace.csv`` -- one row per retained draw: iteration, xi, support_size, psi
* ``xi_path.csv`` -- xi at every iteration, burn-in included
* ``sigma_mean.bin`` -- running-mean covariance
* ``snapshots.bin`` -- optional loading draws

Binary files start with a 16-byte little-endian header: the magic ``SFTR``,
then u32 rows, u32 cols and u32 count (number of stacked matrices).  The
payload is ``count`` row-major float64 matrices.
"""

from __future__ import annotations

import csv
import struct
from pathlib import Path

import numpy as np

from .errors import IngestionError

MAGIC = b"SFTR"
_HEADER = struct.Struct("<4sIII")

TRACE_CSV = "trace.csv"
XI_PATH_CSV = "xi_path.csv"
SIGMA_BIN = "sigma_mean.bin"
SNAPSHOT_BIN = "snapshots.bin"


def write_matrices(path, mats) -> None:
    arr = np.asarray(mats, dtype="<f8")
    if arr.ndim == 2:
        arr = arr[None]
    if arr.ndim != 3:
        raise ValueError(f"expected a matrix or a stack of matrices, got ndim={arr.ndim}")
    count, rows, cols = arr.shape
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, rows, cols, count))
        fh.write(np.ascontiguousarray(arr).tobytes())


def read_matrices(path) -> np.ndarray:
    """Read a stack of matrices, shape (count, rows, cols)."""
    raw = Path(path).read_bytes()
    if len(raw) < _HEADER.size:
        raise IngestionError(f"{path}: truncated header")
    magic, rows, cols, count = _HEADER.unpack_from(raw)
    if magic != MAGIC:
        raise IngestionError(f"{path}: bad magic {magic!r}")
    expected = _HEADER.size + 8 * rows * cols * count
    if len(raw) != expected:
        raise IngestionError(f"{path}: expected {expected} bytes, found {len(raw)}")
    return np.frombuffer(raw, dtype="<f8", offset=_HEADER.size).reshape(count, rows, cols).astype(float)


def write_trace(trace, outdir) -> list[Path]:
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    psi = trace.psi_scalar()
    paths = [outdir / TRACE_CSV, outdir / XI_PATH_CSV, outdir / SIGMA_BIN]
    with open(paths[0], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "xi", "support_size", "psi"])
        for it, xi, s, ps in zip(trace.iterations, trace.xi, trace.support_size, psi):
            w.writerow([int(it), int(xi), int(s), repr(float(ps))])
    with open(paths[1], "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "xi"])
        for t, xi in enumerate(trace.xi_path, start=1):
            w.writerow([t, int(xi)])
    write_matrices(paths[2], trace.sigma_mean)
    if trace.snapshots is not None:
        paths.append(outdir / SNAPSHOT_BIN)
        write_matrices(paths[-1], trace.snapshots)
    return paths


def read_scalar_trace(path) -> dict[str, np.ndarray]:
    path = Path(path)
    if path.is_dir():
        path = path / TRACE_CSV
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise IngestionError(f"{path}: empty trace file") from None
        rows = list(reader)
    cols = {name: [] for name in header}
    for line, row in enumerate(rows, start=2):
        if len(row) != len(header):
            raise IngestionError(f"{path}: row {line} has {len(row)} fields, expected {len(header)}")
        for name, cell in zip(header, row):
            try:
                cols[name].append(float(cell))
            except ValueError:
                raise IngestionError(f"{path}: non-numeric cell {cell!r} at row {line}") from None
    return {k: np.asarray(v) for k, v in cols.items()}
