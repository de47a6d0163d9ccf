"""Replication harness for the rank, covariance-loss and q-sensitivity studies.

Every replication is keyed by ``(base_seed, stream_id)`` with
``stream_id = cell_index * STREAM_STRIDE + replication``.  Within a
replication, substream 0 generates the truth and data, substream 1 drives
the Gibbs chain and substream 2 the DT estimator, so results do not depend
on which methods are requested or on execution order.
"""

from __future__ import annotations

import csv
import io
import itertools
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .diagnostics import OVER, TRUE, UNDER, classify_estimate, posterior_mode, scaled_spectral_loss
from .errors import ParameterError
from .estimators import DEFAULT_R_MAX, METHODS as FREQ_METHODS, run_estimators, sample_covariance
from .gibbs import ChainSettings, run_chain
from .prior import ModelConfig
from .rand_dists import RngHandle
from .synth import DESIGNS, UNIFORM_BAND, generate_truth, sample_data

ADASS = "AdaSS"
ALL_METHODS = FREQ_METHODS + (ADASS,)
STREAM_STRIDE = 100_000


@dataclass
class ExperimentGrid:
    design: str = UNIFORM_BAND
    n_values: list[int] = field(default_factory=lambda: [100])
    p: int = 200
    s_values: list[int] = field(default_factory=lambda: [10, 30, 50])
    r_values: list[int] = field(default_factory=lambda: [1, 3, 5])
    replications: int = 20
    methods: list[str] = field(default_factory=lambda: list(ALL_METHODS))
    n_iter: int = 3000
    burn_in: int = 500
    thin: int = 5
    base_seed: int = 0
    q: int | None = None
    A: float = 0.1
    r_max: int = DEFAULT_R_MAX
    threads: int = 1

    def __post_init__(self):
        if self.design not in DESIGNS:
            raise ParameterError(f"unknown design {self.design!r}")
        if self.replications < 1:
            raise ParameterError("replications must be >= 1")
        bad = [m for m in self.methods if m not in ALL_METHODS]
        if bad:
            raise ParameterError(f"unknown methods {bad}; choose from {ALL_METHODS}")
        for s, r in itertools.product(self.s_values, self.r_values):
            if not r <= s <= self.p:
                raise ParameterError(f"cell (s={s}, r={r}) violates r <= s <= p={self.p}")
        ChainSettings(self.n_iter, self.burn_in, self.thin)

    @classmethod
    def full_scale(cls, **overrides) -> "ExperimentGrid":
        """The 1000-variable, 100-replication configuration."""
        base = dict(p=1000, replications=100, n_values=[50, 100])
        base.update(overrides)
        return cls(**base)

    def cells(self):
        return list(itertools.product(self.n_values, self.s_values, self.r_values))

    def settings(self) -> ChainSettings:
        return ChainSettings(self.n_iter, self.burn_in, self.thin)


@dataclass
class ReplicationResult:
    cell_index: int
    replication: int
    stream_id: int
    n: int
    s: int
    r: int
    r_hat: dict[str, int]
    adass_loss: float | None = None
    sample_cov_loss: float | None = None
    xi_histogram: dict[int, int] | None = None
    seconds: float = 0.0


def run_replication(grid: ExperimentGrid, cell_index: int, replication: int) -> ReplicationResult:
    n, s, r = grid.cells()[cell_index]
    stream_id = cell_index * STREAM_STRIDE + replication
    handle = RngHandle(grid.base_seed, stream_id)
    t0 = time.perf_counter()
    data_rng = handle.generator(0)
    truth = generate_truth(grid.design, grid.p, s, r, data_rng)
    Y = sample_data(truth, n, data_rng).Y
    freq = [m for m in grid.methods if m != ADASS]
    r_hat = {e.method: e.r_hat for e in run_estimators(Y, freq, grid.r_max, rng=handle.generator(2))}
    result = ReplicationResult(cell_index, replication, stream_id, n, s, r, r_hat)
    if ADASS in grid.methods:
        cfg = ModelConfig(p=truth.p, n=n, q=grid.q, A=grid.A)
        trace = run_chain(Y, cfg, grid.settings(), rng=handle.generator(1))
        result.r_hat[ADASS] = posterior_mode(trace.xi)
        result.xi_histogram = {int(k): int(c) for k, c in zip(*np.unique(trace.xi, return_counts=True))}
        sigma_star = truth.Sigma_star
        result.adass_loss = scaled_spectral_loss(trace.sigma_mean, sigma_star)
        result.sample_cov_loss = scaled_spectral_loss(sample_covariance(Y), sigma_star)
    result.seconds = time.perf_counter() - t0
    return result


def _run_one(args):
    return run_replication(*args)


def run_grid(grid: ExperimentGrid) -> list[ReplicationResult]:
    """All replications of all cells, in (cell, replication) order."""
    jobs = [(grid, c, k) for c in range(len(grid.cells())) for k in range(grid.replications)]
    if grid.threads <= 1:
        return [_run_one(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=grid.threads) as pool:
        return list(pool.map(_run_one, jobs, chunksize=1))


def _lineage(grid: ExperimentGrid, cell_index: int) -> dict:
    first = cell_index * STREAM_STRIDE
    return {"base_seed": grid.base_seed, "streams": f"{first}-{first + grid.replications - 1}"}


def rank_table(grid: ExperimentGrid, results: list[ReplicationResult]) -> list[dict]:
    rows = []
    for c, (n, s, r) in enumerate(grid.cells()):
        cell = [x for x in results if x.cell_index == c]
        for method in grid.methods:
            est = np.array([x.r_hat[method] for x in cell])
            cls = [classify_estimate(int(e), r) for e in est]
            rows.append({
                "n": n, "s": s, "r": r, "method": method,
                "pct_true": 100.0 * cls.count(TRUE) / len(cls),
                "pct_over": 100.0 * cls.count(OVER) / len(cls),
                "pct_under": 100.0 * cls.count(UNDER) / len(cls),
                "ave": float(est.mean()),
                **_lineage(grid, c),
            })
    return rows


def cov_table(grid: ExperimentGrid, results: list[ReplicationResult]) -> list[dict]:
    rows = []
    for c, (n, s, r) in enumerate(grid.cells()):
        cell = [x for x in results if x.cell_index == c and x.adass_loss is not None]
        if not cell:
            continue
        loss = np.array([x.adass_loss for x in cell])
        base = np.array([x.sample_cov_loss for x in cell])
        rows.append({
            "n": n, "s": s, "r": r,
            "mean_loss": float(loss.mean()),
            "se_loss": float(loss.std(ddof=1)) if loss.size > 1 else 0.0,
            "sample_cov_loss": float(base.mean()),
            "pct_below_sample_cov": 100.0 * float(np.mean(loss < base)),
            **_lineage(grid, c),
        })
    return rows


def run_rank_study(grid: ExperimentGrid) -> list[dict]:
    return rank_table(grid, run_grid(grid))


def run_cov_study(grid: ExperimentGrid) -> list[dict]:
    grid = ExperimentGrid(**{**asdict(grid), "methods": [ADASS]})
    return cov_table(grid, run_grid(grid))


@dataclass
class SensitivityResult:
    q: int
    xi_path: np.ndarray
    retained_xi: np.ndarray

    @property
    def xi_mode(self) -> int:
        return posterior_mode(self.retained_xi)


def run_sensitivity_q(q_values, design: str = "signed_two", n: int = 100, p: int = 200, s: int = 30,
                      r: int = 3, settings: ChainSettings | None = None, base_seed: int = 0,
                      A: float = 0.1) -> list[SensitivityResult]:
    """One dataset, one chain per q on identical chain streams."""
    settings = settings or ChainSettings()
    handle = RngHandle(base_seed, 0)
    data_rng = handle.generator(0)
    truth = generate_truth(design, p, s, r, data_rng)
    Y = sample_data(truth, n, data_rng).Y
    out = []
    for q in q_values:
        cfg = ModelConfig(p=p, n=n, q=int(q), A=A)
        trace = run_chain(Y, cfg, settings, rng=handle.generator(1))
        out.append(SensitivityResult(int(q), trace.xi_path, trace.xi))
    return out


# ---------------------------------------------------------------------------
# table output
# ---------------------------------------------------------------------------


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.3f}"
    return str(v)


def table_csv(rows: list[dict]) -> str:
    if not rows:
        return ""
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: _fmt(v) for k, v in row.items()})
    return buf.getvalue()


def table_text(rows: list[dict]) -> str:
    """Right-aligned plain-text rendering of a list of homogeneous dicts."""
    if not rows:
        return ""
    cols = list(rows[0])
    cells = [[_fmt(r[c]) for c in cols] for r in rows]
    widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
    lines = ["  ".join(c.rjust(w) for c, w in zip(cols, widths))]
    lines.append("  ".join("-" * w for w in widths))
    lines += ["  ".join(v.rjust(w) for v, w in zip(row, widths)) for row in cells]
    return "\n".join(lines) + "\n"


def write_table(rows: list[dict], stem) -> tuple[Path, Path]:
    stem = Path(stem)
    stem.parent.mkdir(parents=True, exist_ok=True)
    csv_path, txt_path = stem.with_suffix(".csv"), stem.with_suffix(".txt")
    csv_path.write_text(table_csv(rows))
    txt_path.write_text(table_text(rows))
    return csv_path, txt_path
