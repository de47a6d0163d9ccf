"""Gibbs sampler for the sparse factor model under the AdaSS prior.

One sweep updates, in order: loadings, slab scales, row indicators,
column indicators, latent factors, noise variance(s) and, in the
correlated-factor variant, the factor covariance.

Inner loops over loadings run in numba on transposed working copies
(``Yt``/``Rt`` are p x n, ``Zt`` is q x n) so each row of the residual is
contiguous.  The residual ``Rt = Yt - B Zt`` is updated in place whenever a
loading changes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit
from scipy.linalg import cho_solve, solve_triangular

from .errors import DecompositionError, ParameterError, StateError
from .prior import HETEROGENEOUS, INVERSE_WISHART, ModelConfig
from .rand_dists import (
    RngHandle,
    bernoulli_logit_draw,
    gig_draw,
    sample_inverse_gamma,
    sample_inverse_wishart,
)

PSI_FLOOR = 1e-4


@dataclass
class FactorState:
    """Full parameter state of one chain.

    ``psi`` is a float in homogeneous mode and a length-p array otherwise.
    ``Sigma_z`` is the identity unless the factor covariance is sampled.
    """

    B: np.ndarray
    u: np.ndarray
    v: np.ndarray
    tau: np.ndarray
    Z: np.ndarray
    psi: float | np.ndarray
    Sigma_z: np.ndarray

    @property
    def rows(self) -> np.ndarray:
        return np.flatnonzero(self.u)

    @property
    def cols(self) -> np.ndarray:
        return np.flatnonzero(self.v)

    def psi_vector(self) -> np.ndarray:
        p = self.B.shape[0]
        if np.ndim(self.psi) == 0:
            return np.full(p, float(self.psi))
        return np.asarray(self.psi, dtype=float)

    def covariance(self) -> np.ndarray:
        sigma = self.B @ self.B.T
        sigma[np.diag_indices_from(sigma)] += self.psi_vector()
        return sigma

    def xi(self) -> int:
        return int(np.count_nonzero(np.any(self.B != 0, axis=0)))

    def support_size(self) -> int:
        return int(np.count_nonzero(np.any(self.B != 0, axis=1)))

    def check(self) -> None:
        """Raise StateError if the spike or nonempty-indicator invariants fail."""
        if self.u.sum() < 1 or self.v.sum() < 1:
            raise StateError("indicator vectors must be nonzero")
        inactive = np.outer(self.u == 0, np.ones(self.v.size, bool)) | (self.v == 0)[None, :]
        if np.any(self.B[inactive] != 0):
            raise StateError("nonzero loading outside the active block")
        if np.any(self.tau <= 0) or np.any(self.psi_vector() <= 0):
            raise StateError("scales must be positive")

    def copy(self) -> "FactorState":
        return FactorState(
            self.B.copy(), self.u.copy(), self.v.copy(), self.tau.copy(), self.Z.copy(),
            self.psi if np.ndim(self.psi) == 0 else np.array(self.psi), self.Sigma_z.copy(),
        )


@dataclass
class ChainSettings:
    n_iter: int = 3000
    burn_in: int = 500
    thin: int = 5
    snapshot_loadings: bool = False
    seed: int = 0
    strict_reproducible: bool = True

    def __post_init__(self):
        if not 0 <= self.burn_in < self.n_iter:
            raise ParameterError(f"need 0 <= burn_in < n_iter, got burn_in={self.burn_in}, n_iter={self.n_iter}")
        if self.thin < 1:
            raise ParameterError(f"thin must be >= 1, got {self.thin}")

    @property
    def n_retained(self) -> int:
        return (self.n_iter - self.burn_in) // self.thin


@dataclass
class ChainTrace:
    """Retained (post burn-in, thinned) output of one chain."""

    iterations: np.ndarray
    xi: np.ndarray
    support_size: np.ndarray
    psi: np.ndarray  # (m,) homogeneous, (m, p) heterogeneous
    sigma_mean: np.ndarray
    xi_path: np.ndarray  # every iteration, burn-in included
    snapshots: np.ndarray | None = None
    final_state: FactorState | None = field(default=None, repr=False)

    @property
    def n_retained(self) -> int:
        return int(self.iterations.size)

    def psi_scalar(self) -> np.ndarray:
        return self.psi if self.psi.ndim == 1 else self.psi.mean(axis=1)


# ---------------------------------------------------------------------------
# numba kernels
# ---------------------------------------------------------------------------


@njit(cache=True)
def _beta_row(j, Rt, Zt, zz, B, tau, v, inv_psi_j, rng):
    # sequential N(beta_hat, tau_hat) draws across the active columns of row j
    n = Rt.shape[1]
    for k in range(B.shape[1]):
        old = B[j, k]
        if v[k] == 0:
            if old != 0.0:
                for i in range(n):
                    Rt[j, i] += old * Zt[k, i]
                B[j, k] = 0.0
            continue
        zr = zz[k] * old
        for i in range(n):
            zr += Zt[k, i] * Rt[j, i]
        tau_hat = 1.0 / (zz[k] * inv_psi_j + 1.0 / tau[j, k])
        new = tau_hat * zr * inv_psi_j + math.sqrt(tau_hat) * rng.standard_normal()
        delta = new - old
        for i in range(n):
            Rt[j, i] -= delta * Zt[k, i]
        B[j, k] = new


@njit(cache=True)
def _zero_row(j, Rt, Yt, B):
    for i in range(Rt.shape[1]):
        Rt[j, i] = Yt[j, i]
    for k in range(B.shape[1]):
        B[j, k] = 0.0


@njit(cache=True)
def _update_beta(Yt, Rt, Zt, zz, B, tau, u, v, inv_psi, rng):
    for j in range(B.shape[0]):
        if u[j] == 0:
            _zero_row(j, Rt, Yt, B)
        else:
            _beta_row(j, Rt, Zt, zz, B, tau, v, inv_psi[j], rng)


@njit(cache=True)
def _update_tau(B, tau, u, rng):
    for j in range(B.shape[0]):
        for k in range(B.shape[1]):
            if u[j] == 1:
                b = B[j, k]
                tau[j, k] = gig_draw(rng, 1.0, b * b, 0.5)
            else:
                tau[j, k] = 2.0 * rng.standard_exponential()


@njit(cache=True)
def _row_log_odds(j, s_minus, k_active, ZY, zz, tau, v, inv_psi_j, A, log_pn, p):
    # prior ratio plus diagonal marginal-likelihood ratio with row j removed
    lr = -A * k_active * log_pn + math.log(s_minus + 1.0) - math.log(p - s_minus)
    for k in range(v.shape[0]):
        if v[k] == 1:
            th = 1.0 / (zz[k] * inv_psi_j + 1.0 / tau[j, k])
            bh = th * ZY[k, j] * inv_psi_j
            lr += 0.5 * (math.log(th) - math.log(tau[j, k]) + bh * bh / th)
    return lr


@njit(cache=True)
def _update_u(Yt, Rt, Zt, zz, ZY, B, tau, u, v, inv_psi, A, log_pn, rng):
    p = B.shape[0]
    s_count = 0
    for j in range(p):
        s_count += u[j]
    k_active = 0
    for k in range(v.shape[0]):
        k_active += v[k]
    for j in range(p):
        s_minus = s_count - u[j]
        if s_minus == 0:
            new = 1
        else:
            lr = _row_log_odds(j, s_minus, k_active, ZY, zz, tau, v, inv_psi[j], A, log_pn, p)
            new = bernoulli_logit_draw(rng, lr)
        if new == 1:
            _beta_row(j, Rt, Zt, zz, B, tau, v, inv_psi[j], rng)
        else:
            _zero_row(j, Rt, Yt, B)
        s_count += new - u[j]
        u[j] = new


@njit(cache=True)
def _col_stats(k, Rt, Zt, zz, B, tau, u, inv_psi, th, bh):
    # conditional N(bh, th) of each beta_jk with column k removed from the fit
    total = 0.0
    n = Rt.shape[1]
    for j in range(B.shape[0]):
        if u[j] == 0:
            continue
        zr = zz[k] * B[j, k]
        for i in range(n):
            zr += Zt[k, i] * Rt[j, i]
        t = 1.0 / (zz[k] * inv_psi[j] + 1.0 / tau[j, k])
        b = t * zr * inv_psi[j]
        th[j] = t
        bh[j] = b
        total += 0.5 * (math.log(t) - math.log(tau[j, k]) + b * b / t)
    return total


@njit(cache=True)
def _update_v(Rt, Zt, zz, B, tau, u, v, inv_psi, A, log_pn, rng):
    p = B.shape[0]
    q = B.shape[1]
    n = Rt.shape[1]
    s_count = 0
    for j in range(p):
        s_count += u[j]
    k_count = 0
    for k in range(q):
        k_count += v[k]
    th = np.empty(p)
    bh = np.empty(p)
    for k in range(q):
        k_minus = k_count - v[k]
        if k_minus == 0:
            _col_stats(k, Rt, Zt, zz, B, tau, u, inv_psi, th, bh)
            new = 1
        else:
            lr = -A * s_count * log_pn + math.log(k_minus + 1.0) - math.log(q - k_minus)
            lr += _col_stats(k, Rt, Zt, zz, B, tau, u, inv_psi, th, bh)
            new = bernoulli_logit_draw(rng, lr)
        for j in range(p):
            if u[j] == 0:
                continue
            old = B[j, k]
            if new == 1:
                val = bh[j] + math.sqrt(th[j]) * rng.standard_normal()
            else:
                val = 0.0
            delta = val - old
            if delta != 0.0:
                for i in range(n):
                    Rt[j, i] -= delta * Zt[k, i]
            B[j, k] = val
        k_count += new - v[k]
        v[k] = new


# ---------------------------------------------------------------------------
# working copies
# ---------------------------------------------------------------------------


class _Workspace:
    """Transposed data, residual and factor copies shared by the kernels."""

    def __init__(self, state: FactorState, Y: np.ndarray):
        self.Yt = np.ascontiguousarray(Y.T)
        self.refresh_factors(state)

    def refresh_factors(self, state: FactorState) -> None:
        self.Zt = np.ascontiguousarray(state.Z.T)
        self.zz = np.einsum("ki,ki->k", self.Zt, self.Zt)
        self.Rt = self.Yt - state.B @ self.Zt


def _check_data(Y, state: FactorState | None = None) -> np.ndarray:
    Y = np.asarray(Y, dtype=float)
    if Y.ndim != 2:
        raise ParameterError(f"data must be an n x p matrix, got shape {Y.shape}")
    if state is not None:
        n, p = Y.shape
        q = state.B.shape[1]
        if state.B.shape[0] != p or state.Z.shape != (n, q) or state.tau.shape != (p, q):
            raise ParameterError(f"state dimensions do not match data of shape {Y.shape}")
    return Y


def _inv_psi(state: FactorState) -> np.ndarray:
    return 1.0 / state.psi_vector()


# ---------------------------------------------------------------------------
# single-step updates
# ---------------------------------------------------------------------------


def _beta_step(state, ws, rng):
    _update_beta(ws.Yt, ws.Rt, ws.Zt, ws.zz, state.B, state.tau, state.u, state.v, _inv_psi(state), rng)


def _u_step(state, ws, cfg, rng):
    ZY = ws.Zt @ ws.Yt.T
    _update_u(ws.Yt, ws.Rt, ws.Zt, ws.zz, ZY, state.B, state.tau, state.u, state.v,
              _inv_psi(state), cfg.A, cfg.log_pn, rng)


def _v_step(state, ws, cfg, rng):
    _update_v(ws.Rt, ws.Zt, ws.zz, state.B, state.tau, state.u, state.v,
              _inv_psi(state), cfg.A, cfg.log_pn, rng)


def update_beta(state: FactorState, Y, cfg: ModelConfig, rng: np.random.Generator) -> FactorState:
    """Draw each active loading from its normal full conditional, row by row."""
    Y = _check_data(Y, state)
    _beta_step(state, _Workspace(state, Y), rng)
    return state


def update_tau(state: FactorState, rng: np.random.Generator) -> FactorState:
    """Slab scales: GIG(1, beta^2, 1/2) on active rows, Exp with mean 2 elsewhere."""
    _update_tau(state.B, state.tau, state.u, rng)
    return state


def update_u(state: FactorState, Y, cfg: ModelConfig, rng: np.random.Generator) -> FactorState:
    Y = _check_data(Y, state)
    _u_step(state, _Workspace(state, Y), cfg, rng)
    return state


def update_v(state: FactorState, Y, cfg: ModelConfig, rng: np.random.Generator) -> FactorState:
    Y = _check_data(Y, state)
    _v_step(state, _Workspace(state, Y), cfg, rng)
    return state


def row_log_odds(state: FactorState, Y, cfg: ModelConfig, j: int) -> float:
    """log of the row-inclusion odds used by :func:`update_u` for row ``j``."""
    Y = _check_data(Y, state)
    ws = _Workspace(state, Y)
    s_minus = int(state.u.sum() - state.u[j])
    if s_minus == 0:
        return math.inf
    ZY = ws.Zt @ ws.Yt.T
    return float(_row_log_odds(j, s_minus, int(state.v.sum()), ZY, ws.zz, state.tau, state.v,
                               _inv_psi(state)[j], cfg.A, cfg.log_pn, cfg.p))


def col_log_odds(state: FactorState, Y, cfg: ModelConfig, k: int) -> float:
    """log of the column-inclusion odds used by :func:`update_v` for column ``k``."""
    Y = _check_data(Y, state)
    ws = _Workspace(state, Y)
    k_minus = int(state.v.sum() - state.v[k])
    if k_minus == 0:
        return math.inf
    p = state.B.shape[0]
    th, bh = np.empty(p), np.empty(p)
    lr = -cfg.A * state.u.sum() * cfg.log_pn + math.log(k_minus + 1.0) - math.log(cfg.q - k_minus)
    return float(lr + _col_stats(k, ws.Rt, ws.Zt, ws.zz, state.B, state.tau, state.u, _inv_psi(state), th, bh))


def _z_factorization(state: FactorState, Y) -> tuple[np.ndarray, np.ndarray]:
    inv_psi = _inv_psi(state)
    Bw = state.B * inv_psi[:, None]
    prior_prec = np.linalg.inv(state.Sigma_z)
    prec = state.B.T @ Bw + 0.5 * (prior_prec + prior_prec.T)
    try:
        chol = np.linalg.cholesky(prec)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError("latent-factor precision is not SPD") from exc
    mean = cho_solve((chol, True), (np.asarray(Y) @ Bw).T).T
    return mean, chol


def z_conditional(state: FactorState, Y) -> tuple[np.ndarray, np.ndarray]:
    """Mean (n x q) and covariance (q x q) of the latent factors' conditional.

    The precision is ``B^T Psi^{-1} B + Sigma_z^{-1}``.  Inactive columns of
    B are zero, so with an identity factor covariance the inactive
    coordinates are standard normal and independent of the active block.
    """
    mean, chol = _z_factorization(state, Y)
    return mean, cho_solve((chol, True), np.eye(chol.shape[0]))


def update_Z(state: FactorState, Y, cfg: ModelConfig, rng: np.random.Generator) -> FactorState:
    Y = _check_data(Y, state)
    mean, chol = _z_factorization(state, Y)
    noise = rng.standard_normal(mean.shape)
    # x = L^{-T} e has covariance (L L^T)^{-1}
    state.Z = mean + solve_triangular(chol, noise.T, lower=True, trans="T").T
    return state


def _residual_ss(state: FactorState, Y) -> np.ndarray:
    R = Y - state.Z @ state.B.T
    return np.einsum("ij,ij->j", R, R)


def update_psi(state: FactorState, Y, cfg: ModelConfig, rng: np.random.Generator,
               ss: np.ndarray | None = None) -> FactorState:
    """Inverse gamma draw(s) for the noise variance(s).  ``ss`` are per-variable residual sums of squares."""
    Y = _check_data(Y, state)
    n, p = Y.shape
    if ss is None:
        ss = _residual_ss(state, Y)
    if cfg.noise_mode == HETEROGENEOUS:
        shape = cfg.noise_shape + 0.5 * n
        rate = cfg.noise_rate + 0.5 * ss
        state.psi = rate / rng.standard_gamma(shape)
    else:
        state.psi = float(sample_inverse_gamma(cfg.a1 + 0.5 * n * p, cfg.a2 + 0.5 * float(ss.sum()), rng))
    return state


def update_sigma_z(state: FactorState, cfg: ModelConfig, rng: np.random.Generator) -> FactorState:
    if cfg.factor_cov_mode != INVERSE_WISHART:
        raise StateError("factor covariance is only sampled in inverse_wishart mode")
    scatter = state.Z.T @ state.Z
    state.Sigma_z = sample_inverse_wishart(cfg.iw_scale + scatter, cfg.iw_dof + state.Z.shape[0], rng)
    return state


# ---------------------------------------------------------------------------
# chain driver
# ---------------------------------------------------------------------------


def initial_state(Y, cfg: ModelConfig, rng: np.random.Generator) -> FactorState:
    """Spectral start: all rows and columns active, loadings from the top-q eigenpairs."""
    Y = _check_data(Y)
    n, p = Y.shape
    q = cfg.q
    evals, evecs = np.linalg.eigh(Y.T @ Y / n)
    evals, evecs = evals[::-1], evecs[:, ::-1]
    psi0 = max(float(evals[q:].mean()), PSI_FLOOR)
    B = np.ascontiguousarray(evecs[:, :q] * np.sqrt(np.maximum(evals[:q] - psi0, 0.0)))
    psi = np.full(p, psi0) if cfg.noise_mode == HETEROGENEOUS else psi0
    state = FactorState(
        B=B,
        u=np.ones(p, dtype=np.int64),
        v=np.ones(q, dtype=np.int64),
        tau=np.ones((p, q)),
        Z=np.zeros((n, q)),
        psi=psi,
        Sigma_z=np.eye(q),
    )
    return update_Z(state, Y, cfg, rng)


def gibbs_sweep(state: FactorState, Y, cfg: ModelConfig, rng: np.random.Generator,
                ws: _Workspace | None = None) -> FactorState:
    """One full sweep: beta, tau, u, v, Z, psi and (correlated mode) Sigma_z."""
    if ws is None:
        ws = _Workspace(state, Y)
    _beta_step(state, ws, rng)
    _update_tau(state.B, state.tau, state.u, rng)
    _u_step(state, ws, cfg, rng)
    _v_step(state, ws, cfg, rng)
    update_Z(state, Y, cfg, rng)
    ws.refresh_factors(state)
    update_psi(state, Y, cfg, rng, ss=np.einsum("ji,ji->j", ws.Rt, ws.Rt))
    if cfg.factor_cov_mode == INVERSE_WISHART:
        update_sigma_z(state, cfg, rng)
    return state


def run_chain(Y, cfg: ModelConfig, settings: ChainSettings | None = None,
              rng: np.random.Generator | None = None, state: FactorState | None = None) -> ChainTrace:
    """Run one chain and collect the retained draws.

    Iteration ``t`` (1-based) is retained when ``t > burn_in`` and
    ``(t - burn_in) % thin == 0``.  ``rng`` defaults to stream 0 of
    ``settings.seed``.
    """
    settings = settings or ChainSettings()
    Y = _check_data(Y)
    n, p = Y.shape
    if n < 2 or p < 2:
        raise ParameterError(f"need n >= 2 and p >= 2, got n={n}, p={p}")
    if (cfg.n, cfg.p) != (n, p):
        raise ParameterError(f"config is for (n, p)=({cfg.n}, {cfg.p}) but data is {Y.shape}")
    if rng is None:
        rng = RngHandle(settings.seed).generator()
    if state is None:
        state = initial_state(Y, cfg, rng)
    ws = _Workspace(state, Y)

    m = settings.n_retained
    hetero = cfg.noise_mode == HETEROGENEOUS
    iterations = np.empty(m, dtype=np.int64)
    xi = np.empty(m, dtype=np.int64)
    support = np.empty(m, dtype=np.int64)
    psi = np.empty((m, p)) if hetero else np.empty(m)
    snapshots = np.empty((m, p, cfg.q)) if settings.snapshot_loadings else None
    xi_path = np.empty(settings.n_iter, dtype=np.int64)
    sigma_sum = np.zeros((p, p))
    diag = np.diag_indices(p)

    slot = 0
    for t in range(1, settings.n_iter + 1):
        gibbs_sweep(state, Y, cfg, rng, ws)
        xi_path[t - 1] = state.xi()
        if t <= settings.burn_in or (t - settings.burn_in) % settings.thin:
            continue
        iterations[slot] = t
        xi[slot] = xi_path[t - 1]
        support[slot] = state.support_size()
        psi[slot] = state.psi
        if snapshots is not None:
            snapshots[slot] = state.B
        rows = state.rows
        Br = state.B[rows]
        sigma_sum[np.ix_(rows, rows)] += Br @ Br.T
        sigma_sum[diag] += state.psi_vector()
        slot += 1

    return ChainTrace(
        iterations=iterations, xi=xi, support_size=support, psi=psi,
        sigma_mean=sigma_sum / m, xi_path=xi_path, snapshots=snapshots, final_state=state,
    )
