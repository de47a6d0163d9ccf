"""Frequentist factor-count estimators: ET, ER, GR, ACT and DT.

Eigenvalues are taken in descending order, ``lam[0]`` being the largest;
"index j" in the docstrings is 1-based as in the usual statements of these
estimators.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import EstimationError, ParameterError

ET_WEIGHT = 2 ** (2 / 3) * (2 ** (2 / 3) - 1)
DEFAULT_R_MAX = 10
METHODS = ("ET", "ER", "GR", "ACT", "DT")
_TIE_RTOL = 1e-10


@dataclass
class RankEstimate:
    method: str
    r_hat: int
    r_max: int
    eigenvalues_used: np.ndarray
    threshold_or_criterion: np.ndarray
    notes: list[str] = field(default_factory=list)


def sample_covariance(Y, center: bool = False) -> np.ndarray:
    """``Y^T Y / n``; the model is zero-mean, so no centering unless asked."""
    Y = np.asarray(Y, dtype=float)
    if center:
        Y = Y - Y.mean(axis=0)
    return Y.T @ Y / Y.shape[0]


def sample_correlation(Y, center: bool = False) -> np.ndarray:
    S = sample_covariance(Y, center=center)
    d = np.sqrt(np.diag(S))
    if np.any(d == 0):
        raise ParameterError("correlation undefined for a zero-variance variable")
    R = S / np.outer(d, d)
    np.fill_diagonal(R, 1.0)
    return R


def descending_eigenvalues(S) -> np.ndarray:
    S = np.asarray(S, dtype=float)
    return np.linalg.eigvalsh(0.5 * (S + S.T))[::-1]


def _check_r_max(r_max: int, p: int, need: int) -> None:
    if r_max < 1:
        raise ParameterError(f"r_max must be positive, got {r_max}")
    if need > p:
        raise ParameterError(f"r_max={r_max} needs at least {need} eigenvalues, have p={p}")


def _first_argmax(crit: np.ndarray) -> int:
    """1-based index of the largest finite criterion; near-ties go to the smallest index."""
    finite = np.isfinite(crit)
    if not finite.any():
        raise EstimationError("no admissible index for the argmax")
    best = np.max(crit[finite])
    tol = _TIE_RTOL * max(abs(best), 1.0)
    return int(np.flatnonzero(finite & (crit >= best - tol))[0]) + 1


def estimate_et(S, r_max: int = DEFAULT_R_MAX, weight: float = ET_WEIGHT) -> RankEstimate:
    lam = descending_eigenvalues(S)
    _check_r_max(r_max, lam.size, 2 * r_max + 1)
    threshold = weight * lam[r_max] + (1 - weight) * lam[2 * r_max]
    r_hat = int(np.count_nonzero(lam > threshold))
    return RankEstimate("ET", min(r_hat, r_max), r_max, lam, np.array([threshold]),
                        [] if r_hat <= r_max else [f"raw count {r_hat} capped at r_max"])


def estimate_er(S, r_max: int = DEFAULT_R_MAX) -> RankEstimate:
    lam = descending_eigenvalues(S)
    _check_r_max(r_max, lam.size, r_max + 1)
    notes = []
    crit = np.full(r_max, np.nan)
    for j in range(r_max):
        if lam[j + 1] > 0:
            crit[j] = lam[j] / lam[j + 1]
        else:
            notes.append(f"j={j + 1}: nonpositive denominator eigenvalue excluded")
    return RankEstimate("ER", _first_argmax(crit), r_max, lam[: r_max + 1], crit, notes)


def estimate_gr(S, r_max: int = DEFAULT_R_MAX) -> RankEstimate:
    lam = descending_eigenvalues(S)
    _check_r_max(r_max, lam.size, r_max + 1)
    lam_pos = np.where(lam > 0, lam, 0.0)
    # tails[j] = sum of eigenvalues beyond the j largest
    tails = np.concatenate([np.cumsum(lam_pos[::-1])[::-1], [0.0]])
    notes = []
    crit = np.full(r_max, np.nan)
    for j in range(1, r_max + 1):
        prev, cur, nxt = tails[j - 1], tails[j], tails[j + 1]
        if nxt <= 0 or cur <= 0:
            notes.append(f"j={j}: zero tail sum, criterion undefined")
            continue
        denom = math.log(cur / nxt)
        if denom == 0:
            notes.append(f"j={j}: flat tail, criterion undefined")
            continue
        crit[j - 1] = math.log(prev / cur) / denom
    return RankEstimate("GR", _first_argmax(crit), r_max, lam[: r_max + 2], crit, notes)


def act_adjusted_eigenvalues(lam_r: np.ndarray, n: int, r_max: int) -> tuple[np.ndarray, list[str]]:
    """Bias-corrected spiked eigenvalues ``lambda_j^dagger`` for j = 1..r_max."""
    p = lam_r.size
    out = np.full(r_max, np.nan)
    notes = []
    for j in range(1, r_max + 1):
        lj = lam_r[j - 1]
        gaps = lam_r[j:] - lj
        if np.any(gaps == 0):
            notes.append(f"j={j}: repeated eigenvalue, excluded")
            continue
        w = (p - j) / (n - 1)
        inner = np.sum(1.0 / gaps) + 4.0 / (lam_r[j] - lj)
        out[j - 1] = 1.0 / ((1 - w) / lj - w / (p - j) * inner)
    return out, notes


def act_threshold(p: int, n: int) -> float:
    return 1 + math.sqrt(p / (n - 1))


def estimate_act(R, n: int, r_max: int = DEFAULT_R_MAX) -> RankEstimate:
    lam = descending_eigenvalues(R)
    _check_r_max(r_max, lam.size, r_max + 1)
    if n < 2:
        raise ParameterError("ACT needs n >= 2")
    adjusted, notes = act_adjusted_eigenvalues(lam, n, r_max)
    thr = act_threshold(lam.size, n)
    hits = np.flatnonzero(np.nan_to_num(adjusted, nan=-np.inf) > thr)
    r_hat = int(hits[-1]) + 1 if hits.size else 0
    return RankEstimate("ACT", r_hat, r_max, lam[: r_max + 1], adjusted, notes + [f"threshold={thr!r}"])


def dt_threshold(size_j: int, n: int, p: int) -> float:
    return 2 * (1 + math.sqrt(size_j / n)
                + math.sqrt((2 * (1 + size_j) * math.log(math.e * p) + 6 * math.log(n)) / n)) ** 2


def estimate_dt(Y, r_max: int = DEFAULT_R_MAX, rng: np.random.Generator | None = None) -> RankEstimate:
    """Diagonal thresholding on the noise-augmented covariance.

    Adds an independent N(0, I) vector to every observation, keeps the
    variables whose augmented variance clears ``2 + 6 sqrt(log p / n)``, then
    counts leading eigenvalues of that sub-block above the spectral threshold.
    """
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ParameterError(f"data must be n x p, got shape {Y.shape}")
    if rng is None:
        rng = np.random.default_rng()
    n, p = Y.shape
    if r_max < 1:
        raise ParameterError(f"r_max must be positive, got {r_max}")
    X = Y + rng.standard_normal(Y.shape)
    S_check = X.T @ X / n
    keep = np.flatnonzero(np.diag(S_check) >= 2 + 6 * math.sqrt(math.log(p) / n))
    if keep.size == 0:
        return RankEstimate("DT", 0, r_max, np.empty(0), np.empty(0), ["selected set J is empty"])
    lam = descending_eigenvalues(S_check[np.ix_(keep, keep)])
    thr = dt_threshold(keep.size, n, p)
    m = min(r_max, lam.size)
    hits = np.flatnonzero(lam[:m] > thr)
    r_hat = int(hits[-1]) + 1 if hits.size else 0
    return RankEstimate("DT", r_hat, r_max, lam[:m], np.array([thr]), [f"|J|={keep.size}"])


def run_estimators(Y, methods=METHODS, r_max: int = DEFAULT_R_MAX, rng=None,
                   center: bool = False, et_weight: float = ET_WEIGHT) -> list[RankEstimate]:
    """Apply the requested estimators to one data matrix."""
    Y = np.asarray(Y, dtype=float)
    S = R = None
    out = []
    for m in methods:
        m = m.upper()
        if m in ("ET", "ER", "GR") and S is None:
            S = sample_covariance(Y, center=center)
        if m == "ET":
            out.append(estimate_et(S, r_max, et_weight))
        elif m == "ER":
            out.append(estimate_er(S, r_max))
        elif m == "GR":
            out.append(estimate_gr(S, r_max))
        elif m == "ACT":
            if R is None:
                R = sample_correlation(Y, center=center)
            out.append(estimate_act(R, Y.shape[0], r_max))
        elif m == "DT":
            out.append(estimate_dt(Y - Y.mean(axis=0) if center else Y, r_max, rng))
        else:
            raise ParameterError(f"unknown estimator {m!r}; choose from {METHODS}")
    return out
