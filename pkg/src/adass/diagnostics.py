"""Posterior summaries, autocorrelation diagnostics, losses and loading alignment."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import DiagnosticsError, ParameterError

TRUE, OVER, UNDER = "True", "Over", "Under"


@dataclass
class PosteriorSummary:
    xi_mode: int
    xi_histogram: dict[int, int]
    support_histogram: dict[int, int]
    sigma_mean: np.ndarray
    psi_mean: float | np.ndarray

    def to_dict(self, include_sigma: bool = False) -> dict:
        out = {
            "xi_mode": self.xi_mode,
            "xi_histogram": {str(k): v for k, v in sorted(self.xi_histogram.items())},
            "support_histogram": {str(k): v for k, v in sorted(self.support_histogram.items())},
            "psi_mean": self.psi_mean.tolist() if isinstance(self.psi_mean, np.ndarray) else self.psi_mean,
        }
        if include_sigma:
            out["sigma_mean"] = self.sigma_mean.tolist()
        return out


def posterior_mode(values) -> int:
    """Most frequent value; ties go to the smallest."""
    counts = Counter(int(x) for x in values)
    if not counts:
        raise DiagnosticsError("mode of an empty trace")
    top = max(counts.values())
    return min(k for k, c in counts.items() if c == top)


def summarize(trace) -> PosteriorSummary:
    psi = np.asarray(trace.psi)
    psi_mean = float(psi.mean()) if psi.ndim == 1 else psi.mean(axis=0)
    return PosteriorSummary(
        xi_mode=posterior_mode(trace.xi),
        xi_histogram=dict(Counter(int(x) for x in trace.xi)),
        support_histogram=dict(Counter(int(x) for x in trace.support_size)),
        sigma_mean=np.asarray(trace.sigma_mean),
        psi_mean=psi_mean,
    )


def acf(series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation at lags 0..max_lag with divisor n."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if max_lag < 0 or max_lag >= n:
        raise ParameterError(f"max_lag must lie in [0, {n - 1}], got {max_lag}")
    x = x - x.mean()
    c0 = float(x @ x) / n
    if c0 == 0:
        raise DiagnosticsError("autocorrelation undefined for a constant series")
    out = np.empty(max_lag + 1)
    for k in range(max_lag + 1):
        out[k] = float(x[: n - k] @ x[k:]) / n / c0
    return out


def pacf(series, max_lag: int) -> np.ndarray:
    """Partial autocorrelation at lags 0..max_lag by the Durbin–Levinson recursion."""
    rho = acf(series, max_lag)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    phi = np.zeros(max_lag + 1)
    for k in range(1, max_lag + 1):
        num = rho[k] - phi[1:k] @ rho[1:k][::-1]
        den = 1.0 - phi[1:k] @ rho[1:k]
        a = num / den
        phi[1:k] = phi[1:k] - a * phi[1:k][::-1]
        phi[k] = a
        out[k] = a
    return out


def spectral_norm(m) -> float:
    m = np.asarray(m, dtype=float)
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (m + m.T)))))


def scaled_spectral_loss(sigma_hat, sigma_star) -> float:
    """‖Σ̂ − Σ*‖₂ / ‖Σ*‖₂ for symmetric matrices."""
    sigma_hat = np.asarray(sigma_hat, dtype=float)
    sigma_star = np.asarray(sigma_star, dtype=float)
    if sigma_hat.shape != sigma_star.shape:
        raise ParameterError(f"shape mismatch {sigma_hat.shape} vs {sigma_star.shape}")
    return spectral_norm(sigma_hat - sigma_star) / spectral_norm(sigma_star)


def classify_estimate(r_hat: int, r_true: int) -> str:
    if r_hat == r_true:
        return TRUE
    return OVER if r_hat > r_true else UNDER


# ---------------------------------------------------------------------------
# signed-permutation alignment of loading draws
# ---------------------------------------------------------------------------


@dataclass
class AlignmentResult:
    aligned: np.ndarray  # (m, p, q)
    consensus: np.ndarray  # (p, q)
    permutations: np.ndarray  # (m, q): aligned[:, :, l] = signs[:, l] * raw[:, :, permutations[:, l]]
    signs: np.ndarray  # (m, q)
    working_columns: np.ndarray
    rounds: int


def signed_match(b: np.ndarray, pivot: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Optimal signed column permutation of ``b`` onto ``pivot`` (Frobenius cost).

    Returns ``(perm, sign)`` such that ``sign * b[:, perm]`` is the aligned matrix.
    """
    bn = np.einsum("jk,jk->k", b, b)
    pn = np.einsum("jl,jl->l", pivot, pivot)
    cross = b.T @ pivot
    plus = bn[:, None] + pn[None, :] - 2 * cross  # ‖b_k - p_l‖²
    minus = bn[:, None] + pn[None, :] + 2 * cross  # ‖b_k + p_l‖²
    cost = np.minimum(plus, minus)
    row, col = linear_sum_assignment(cost)
    perm = np.empty(pivot.shape[1], dtype=np.int64)
    sign = np.empty(pivot.shape[1])
    perm[col] = row
    sign[col] = np.where(minus[row, col] < plus[row, col], -1.0, 1.0)
    return perm, sign


def align_loadings(snapshots, max_rounds: int = 20, active_fraction: float = 0.1,
                   pivot_subsample: int = 50, rng: np.random.Generator | None = None) -> AlignmentResult:
    """Resolve column label switching and sign flips across loading draws.

    Only columns nonzero in at least ``active_fraction`` of the draws take
    part in the matching; the rest stay in place.  The initial pivot is the
    draw closest (in summed Frobenius distance) to a random subsample of
    draws; later rounds use the running consensus mean until no draw's
    permutation or signs change.
    """
    mats = [np.asarray(s, dtype=float) for s in snapshots]
    if not mats:
        raise ParameterError("no snapshots to align")
    shape = mats[0].shape
    if any(m.shape != shape for m in mats):
        raise ParameterError("snapshots have mismatched shapes")
    draws = np.stack(mats)
    m, p, q = draws.shape
    ident = np.tile(np.arange(q), (m, 1))
    ones = np.ones((m, q))
    if m == 1:
        return AlignmentResult(draws.copy(), draws[0].copy(), ident, ones, np.arange(q), 0)

    frac = np.mean(np.any(draws != 0, axis=1), axis=0)
    work = np.flatnonzero(frac >= active_fraction)
    if work.size == 0:
        return AlignmentResult(draws.copy(), draws.mean(axis=0), ident, ones, work, 0)

    rng = rng if rng is not None else np.random.default_rng(0)
    sub = draws[rng.choice(m, size=min(m, pivot_subsample), replace=False)][:, :, work]
    dist = np.array([np.sum((sub - d[:, work]) ** 2) for d in draws])
    pivot = draws[int(np.argmin(dist))][:, work]

    perms = np.tile(np.arange(work.size), (m, 1))
    signs = np.ones((m, work.size))
    rounds = 0
    for rounds in range(1, max_rounds + 1):
        changed = False
        for t in range(m):
            perm, sign = signed_match(draws[t][:, work], pivot)
            if not (np.array_equal(perm, perms[t]) and np.array_equal(sign, signs[t])):
                changed = True
                perms[t], signs[t] = perm, sign
        aligned_work = draws[:, :, work][np.arange(m)[:, None], :, perms].transpose(0, 2, 1) * signs[:, None, :]
        pivot = aligned_work.mean(axis=0)
        if not changed and rounds > 1:
            break

    aligned = draws.copy()
    aligned[:, :, work] = aligned_work
    full_perm = ident.copy()
    full_sign = ones.copy()
    full_perm[:, work] = work[perms]
    full_sign[:, work] = signs
    return AlignmentResult(aligned, aligned.mean(axis=0), full_perm, full_sign, work, rounds)
