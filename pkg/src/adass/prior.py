"""AdaSS prior: the joint indicator mass, its log-ratios, and loading/noise priors.

The indicator mass is kept unnormalized throughout.  Its normalizer over
all nonempty (u, v) pairs cancels in every ratio the sampler uses.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError

HOMOGENEOUS = "homogeneous"
HETEROGENEOUS = "heterogeneous"
IDENTITY = "identity"
INVERSE_WISHART = "inverse_wishart"


def default_q(n: int) -> int:
    return int(math.ceil(math.sqrt(n)))


@dataclass
class ModelConfig:
    """Prior hyperparameters and model variant.

    ``q`` defaults to ``ceil(sqrt(n))``; a default that exceeds ``p - 1`` is
    clamped with a warning, while an explicit out-of-range ``q`` is an error.
    In heterogeneous mode, ``noise_shape``/``noise_rate`` may hold per-variable
    inverse gamma parameters; otherwise ``a1``/``a2`` are broadcast.
    """

    p: int
    n: int
    q: int | None = None
    A: float = 0.1
    a1: float = 0.01
    a2: float = 0.01
    noise_mode: str = HOMOGENEOUS
    factor_cov_mode: str = IDENTITY
    iw_scale: np.ndarray | None = None
    iw_dof: float | None = None
    noise_shape: np.ndarray | None = field(default=None, repr=False)
    noise_rate: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.p < 2:
            raise ParameterError(f"p must be at least 2, got {self.p}")
        if self.n < 1:
            raise ParameterError(f"n must be positive, got {self.n}")
        if self.q is None:
            q = default_q(self.n)
            if q > self.p - 1:
                warnings.warn(f"default q={q} exceeds p-1; clamped to {self.p - 1}", stacklevel=2)
                q = self.p - 1
            self.q = q
        if not 1 <= self.q <= self.p - 1:
            raise ParameterError(f"q must lie in [1, p-1] = [1, {self.p - 1}], got {self.q}")
        if not self.A > 0:
            raise ParameterError(f"A must be positive, got {self.A}")
        if not (self.a1 > 0 and self.a2 > 0):
            raise ParameterError(f"inverse gamma hyperparameters must be positive, got ({self.a1}, {self.a2})")
        if self.noise_mode not in (HOMOGENEOUS, HETEROGENEOUS):
            raise ParameterError(f"unknown noise_mode {self.noise_mode!r}")
        if self.noise_mode == HETEROGENEOUS:
            self.noise_shape = self._per_variable(self.noise_shape, self.a1, "noise_shape")
            self.noise_rate = self._per_variable(self.noise_rate, self.a2, "noise_rate")
        if self.factor_cov_mode == INVERSE_WISHART:
            scale = np.eye(self.q) if self.iw_scale is None else np.asarray(self.iw_scale, dtype=float)
            if scale.shape != (self.q, self.q):
                raise ParameterError(f"iw_scale must be {self.q}x{self.q}, got {scale.shape}")
            if np.linalg.eigvalsh(0.5 * (scale + scale.T)).min() <= 0:
                raise ParameterError("iw_scale must be SPD")
            self.iw_scale = scale
            if self.iw_dof is None:
                self.iw_dof = float(self.q + 2)
            if not self.iw_dof > self.q - 1:
                raise ParameterError(f"iw_dof must exceed q-1, got {self.iw_dof}")
        elif self.factor_cov_mode != IDENTITY:
            raise ParameterError(f"unknown factor_cov_mode {self.factor_cov_mode!r}")

    def _per_variable(self, value, default, name):
        arr = np.full(self.p, float(default)) if value is None else np.asarray(value, dtype=float)
        if arr.shape != (self.p,) or np.any(arr <= 0):
            raise ParameterError(f"{name} must be a positive vector of length p={self.p}")
        return arr

    @property
    def log_pn(self) -> float:
        """log(p ∨ n), the scale of the complexity penalty."""
        return math.log(max(self.p, self.n))

    def to_dict(self) -> dict:
        out = {
            "p": self.p, "n": self.n, "q": self.q, "A": self.A, "a1": self.a1, "a2": self.a2,
            "noise_mode": self.noise_mode, "factor_cov_mode": self.factor_cov_mode,
        }
        if self.factor_cov_mode == INVERSE_WISHART:
            out["iw_scale"] = self.iw_scale.tolist()
            out["iw_dof"] = self.iw_dof
        return out


def _log_binom(n: int, k: int) -> float:
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def log_Q(omega: int, xi: int, cfg: ModelConfig) -> float:
    """Unnormalized log indicator mass at row count ``omega``, column count ``xi``."""
    if not 1 <= omega <= cfg.p:
        raise ParameterError(f"omega must lie in [1, {cfg.p}], got {omega}")
    if not 1 <= xi <= cfg.q:
        raise ParameterError(f"xi must lie in [1, {cfg.q}], got {xi}")
    return -_log_binom(cfg.p, omega) - _log_binom(cfg.q, xi) - cfg.A * omega * xi * cfg.log_pn


def log_prior_ratio_row(s_minus: int, k_active: int, cfg: ModelConfig) -> float:
    """log Q(s+1, k) - log Q(s, k), with s the number of other active rows."""
    if not 0 <= s_minus <= cfg.p - 1:
        raise ParameterError(f"s_minus must lie in [0, {cfg.p - 1}], got {s_minus}")
    if not 1 <= k_active <= cfg.q:
        raise ParameterError(f"k_active must lie in [1, {cfg.q}], got {k_active}")
    return -cfg.A * k_active * cfg.log_pn + math.log(s_minus + 1) - math.log(cfg.p - s_minus)


def log_prior_ratio_col(k_minus: int, s_active: int, cfg: ModelConfig) -> float:
    """log Q(s, k+1) - log Q(s, k), with k the number of other active columns."""
    if not 0 <= k_minus <= cfg.q - 1:
        raise ParameterError(f"k_minus must lie in [0, {cfg.q - 1}], got {k_minus}")
    if not 1 <= s_active <= cfg.p:
        raise ParameterError(f"s_active must lie in [1, {cfg.p}], got {s_active}")
    return -cfg.A * s_active * cfg.log_pn + math.log(k_minus + 1) - math.log(cfg.q - k_minus)


def log_prior_loading(B, u, v) -> float:
    """Log density of B under the Dirac-spike / Laplace(1)-slab prior given (u, v)."""
    B = np.asarray(B, dtype=float)
    active = np.outer(np.asarray(u) != 0, np.asarray(v) != 0)
    if active.shape != B.shape:
        raise ParameterError(f"indicator shapes {active.shape} do not match B {B.shape}")
    if np.any(B[~active] != 0):
        return -math.inf
    return float(np.sum(math.log(0.5) - np.abs(B[active])))


def sample_indicators(cfg: ModelConfig, rng: np.random.Generator):
    """Exact draw of (u, v) from the indicator prior.

    P(omega, xi) ∝ exp(-A omega xi log(p∨n)) once the binomial counts cancel,
    so the pair of sizes is drawn by enumeration and the index sets uniformly.
    """
    omegas = np.arange(1, cfg.p + 1)
    xis = np.arange(1, cfg.q + 1)
    logw = -cfg.A * np.outer(omegas, xis) * cfg.log_pn
    w = np.exp(logw - logw.max()).ravel()
    idx = rng.choice(w.size, p=w / w.sum())
    omega, xi = omegas[idx // cfg.q], xis[idx % cfg.q]
    u = np.zeros(cfg.p, dtype=np.int64)
    v = np.zeros(cfg.q, dtype=np.int64)
    u[rng.permutation(cfg.p)[:omega]] = 1
    v[rng.permutation(cfg.q)[:xi]] = 1
    return u, v
