"""Synthetic sparse factor designs and zero-mean Gaussian data generation."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import IngestionError, ParameterError

SIGNED_TWO = "signed_two"
UNIFORM_BAND = "uniform_band"
DIAGONAL_PATTERN = "diagonal_pattern"
DESIGNS = (SIGNED_TWO, UNIFORM_BAND, DIAGONAL_PATTERN)


@dataclass
class SyntheticTruth:
    B_star: np.ndarray
    psi_star: float
    support: np.ndarray
    design: str

    @property
    def r(self) -> int:
        return self.B_star.shape[1]

    @property
    def s(self) -> int:
        return int(self.support.size)

    @property
    def p(self) -> int:
        return self.B_star.shape[0]

    @property
    def Sigma_star(self) -> np.ndarray:
        sigma = self.B_star @ self.B_star.T
        sigma[np.diag_indices_from(sigma)] += self.psi_star
        return sigma

    def to_dict(self) -> dict:
        return {
            "design": self.design,
            "p": self.p, "r": self.r, "s": self.s,
            "psi_star": self.psi_star,
            "support": self.support.tolist(),
            "B_star": self.B_star.tolist(),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticTruth":
        return cls(np.asarray(d["B_star"], dtype=float), float(d["psi_star"]),
                   np.asarray(d["support"], dtype=np.int64), d["design"])


@dataclass
class Dataset:
    Y: np.ndarray
    truth: SyntheticTruth | None = None
    meta: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    @property
    def p(self) -> int:
        return self.Y.shape[1]


def choose_support(p: int, s: int, rng: np.random.Generator) -> np.ndarray:
    """s distinct indices from range(p) by a partial Fisher–Yates shuffle, sorted."""
    if not 0 <= s <= p:
        raise ParameterError(f"need 0 <= s <= p, got s={s}, p={p}")
    idx = np.arange(p)
    for i in range(s):
        j = int(rng.integers(i, p))
        idx[i], idx[j] = idx[j], idx[i]
    return np.sort(idx[:s])


def _check_sizes(p: int, s: int, r: int) -> None:
    if not (1 <= r <= s <= p):
        raise ParameterError(f"need 1 <= r <= s <= p, got (p, s, r)=({p}, {s}, {r})")


def gen_signed_two(p: int, s: int, r: int, rng: np.random.Generator) -> SyntheticTruth:
    """Active entries uniform on {-2, +2}; noise variance 2."""
    _check_sizes(p, s, r)
    support = choose_support(p, s, rng)
    B = np.zeros((p, r))
    B[support] = np.where(rng.random((s, r)) < 0.5, -2.0, 2.0)
    return SyntheticTruth(B, 2.0, support, SIGNED_TWO)


def gen_uniform_band(p: int, s: int, r: int, rng: np.random.Generator) -> SyntheticTruth:
    """Active entries uniform on [-4/√s, -3/√s] ∪ [3/√s, 4/√s]; noise variance 1."""
    _check_sizes(p, s, r)
    support = choose_support(p, s, rng)
    lo, hi = 3 / math.sqrt(s), 4 / math.sqrt(s)
    mag = rng.uniform(lo, hi, size=(s, r))
    sign = np.where(rng.random((s, r)) < 0.5, -1.0, 1.0)
    B = np.zeros((p, r))
    B[support] = sign * mag
    return SyntheticTruth(B, 1.0, support, UNIFORM_BAND)


def gen_diagonal_pattern(p: int = 50, r: int = 5, block: int = 5) -> SyntheticTruth:
    """Column k loads 1 on rows block*k .. block*(k+1)-1; remaining rows are zero."""
    if block * r > p:
        raise ParameterError(f"{r} blocks of {block} rows do not fit in p={p}")
    B = np.zeros((p, r))
    for k in range(r):
        B[block * k: block * (k + 1), k] = 1.0
    return SyntheticTruth(B, 1.0, np.arange(block * r), DIAGONAL_PATTERN)


def generate_truth(design: str, p: int, s: int, r: int, rng: np.random.Generator) -> SyntheticTruth:
    if design == SIGNED_TWO:
        return gen_signed_two(p, s, r, rng)
    if design == UNIFORM_BAND:
        return gen_uniform_band(p, s, r, rng)
    if design == DIAGONAL_PATTERN:
        return gen_diagonal_pattern()
    raise ParameterError(f"unknown design {design!r}; choose from {DESIGNS}")


def sample_data(truth: SyntheticTruth, n: int, rng: np.random.Generator) -> Dataset:
    """n iid rows of N(0, B B^T + psi I), built as B z + noise."""
    if n < 1:
        raise ParameterError(f"n must be positive, got {n}")
    z = rng.standard_normal((n, truth.r))
    noise = rng.standard_normal((n, truth.p))
    Y = z @ truth.B_star.T + math.sqrt(truth.psi_star) * noise
    return Dataset(Y, truth, {"n": n, "p": truth.p, "design": truth.design})


# ---------------------------------------------------------------------------
# disk format: CSV data + JSON sidecar
# ---------------------------------------------------------------------------


def save_dataset(ds: Dataset, csv_path, header: bool = True) -> Path:
    """Write the data CSV and, next to it, ``<stem>.json`` with truth and metadata."""
    csv_path = Path(csv_path)
    csv_path.parent.mkdir(parents=True, exist_ok=True)
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        if header:
            w.writerow([f"x{j + 1}" for j in range(ds.p)])
        for row in ds.Y:
            w.writerow([repr(float(x)) for x in row])
    sidecar = csv_path.with_suffix(".json")
    payload = {"meta": ds.meta, "truth": ds.truth.to_dict() if ds.truth else None}
    sidecar.write_text(json.dumps(payload, indent=1) + "\n")
    return sidecar


def read_matrix_csv(path, header: bool | None = None) -> np.ndarray:
    """Parse an n x p numeric CSV; ``header=None`` sniffs a non-numeric first row."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(str(path))
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and any(c.strip() for c in r)]
    if not rows:
        raise IngestionError(f"{path}: no data rows")
    if header is None:
        try:
            [float(c) for c in rows[0]]
            header = False
        except ValueError:
            header = True
    start = 1 if header else 0
    body = rows[start:]
    if not body:
        raise IngestionError(f"{path}: no data rows after header")
    width = len(body[0])
    out = np.empty((len(body), width))
    for i, row in enumerate(body):
        line = i + start + 1
        if len(row) != width:
            raise IngestionError(f"{path}: row {line} has {len(row)} fields, expected {width}")
        for j, cell in enumerate(row):
            try:
                out[i, j] = float(cell)
            except ValueError:
                raise IngestionError(f"{path}: non-numeric cell {cell!r} at row {line}, column {j + 1}") from None
    if not np.all(np.isfinite(out)):
        i, j = np.argwhere(~np.isfinite(out))[0]
        raise IngestionError(f"{path}: non-finite value at row {i + start + 1}, column {j + 1}")
    return out


def load_dataset(csv_path, header: bool | None = None) -> Dataset:
    csv_path = Path(csv_path)
    Y = read_matrix_csv(csv_path, header=header)
    sidecar = csv_path.with_suffix(".json")
    truth, meta = None, {}
    if sidecar.is_file():
        payload = json.loads(sidecar.read_text())
        meta = payload.get("meta") or {}
        if payload.get("truth"):
            truth = SyntheticTruth.from_dict(payload["truth"])
    return Dataset(Y, truth, meta)
