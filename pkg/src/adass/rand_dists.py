"""Seedable samplers and log-densities used by the Gibbs sampler.

All samplers take a :class:`numpy.random.Generator`.  The scalar kernels
(``gig_draw``, ``bernoulli_logit_draw``) are numba-compiled so that the
sampler's inner loops can call them on the same bit-generator stream as
Python code does.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from numba import njit

from .errors import DecompositionError, ParameterError

# b below this is treated as exactly zero (Gamma limit of the GIG)
GIG_B_FLOOR = 1e-300


@dataclass(frozen=True)
class RngHandle:
    """A (seed, stream) pair naming one reproducible random stream.

    Identical handles always yield bit-identical streams; distinct
    ``stream_id`` values are spawned from the same :class:`SeedSequence`
    and are statistically independent.
    """

    seed: int
    stream_id: int = 0

    def generator(self, substream: int | None = None) -> np.random.Generator:
        key = (self.stream_id,) if substream is None else (self.stream_id, substream)
        return np.random.Generator(np.random.PCG64(np.random.SeedSequence(self.seed, spawn_key=key)))


# ---------------------------------------------------------------------------
# Generalized inverse Gaussian
# ---------------------------------------------------------------------------


@njit(cache=True)
def _gig_mode(lam, omega):
    if lam >= 1.0:
        return (math.sqrt((lam - 1.0) * (lam - 1.0) + omega * omega) + (lam - 1.0)) / omega
    return omega / (math.sqrt((1.0 - lam) * (1.0 - lam) + omega * omega) + (1.0 - lam))


@njit(cache=True)
def _gig_rou_shift(rng, lam, omega):
    # ratio-of-uniforms with mode shift; bounded rejection for lam > 2 or omega > 3
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    a = -(2.0 * (lam + 1.0) / omega + xm)
    b = 2.0 * (lam - 1.0) * xm / omega - 1.0
    c = xm
    p = b - a * a / 3.0
    q = (2.0 * a * a * a) / 27.0 - (a * b) / 3.0 + c
    fi = math.acos(-q / (2.0 * math.sqrt(-(p * p * p) / 27.0)))
    fak = 2.0 * math.sqrt(-p / 3.0)
    y1 = fak * math.cos(fi / 3.0) - a / 3.0
    y2 = fak * math.cos(fi / 3.0 + 4.0 / 3.0 * math.pi) - a / 3.0
    uplus = (y1 - xm) * math.exp(t * math.log(y1) - s * (y1 + 1.0 / y1) - nc)
    uminus = (y2 - xm) * math.exp(t * math.log(y2) - s * (y2 + 1.0 / y2) - nc)
    while True:
        u = uminus + rng.random() * (uplus - uminus)
        v = rng.random()
        x = u / v + xm
        if x > 0.0 and math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@njit(cache=True)
def _gig_rou_noshift(rng, lam, omega):
    t = 0.5 * (lam - 1.0)
    s = 0.25 * omega
    xm = _gig_mode(lam, omega)
    nc = t * math.log(xm) - s * (xm + 1.0 / xm)
    ym = ((lam + 1.0) + math.sqrt((lam + 1.0) * (lam + 1.0) + omega * omega)) / omega
    um = math.exp(0.5 * (lam + 1.0) * math.log(ym) - s * (ym + 1.0 / ym) - nc)
    while True:
        u = um * rng.random()
        v = rng.random()
        x = u / v
        if x > 0.0 and math.log(v) <= t * math.log(x) - s * (x + 1.0 / x) - nc:
            return x


@njit(cache=True)
def _gig_concave(rng, lam, omega):
    # rejection from a three-piece hat; used for 0 <= lam < 1 with small omega
    xm = _gig_mode(lam, omega)
    x0 = omega / (1.0 - lam)
    k0 = math.exp((lam - 1.0) * math.log(xm) - 0.5 * omega * (xm + 1.0 / xm))
    a0 = k0 * x0
    if x0 >= 2.0 / omega:
        k1 = 0.0
        a1 = 0.0
        k2 = x0 ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-omega * x0 / 2.0) / omega
    else:
        k1 = math.exp(-omega)
        if lam == 0.0:
            a1 = k1 * math.log(2.0 / (omega * omega))
        else:
            a1 = k1 / lam * ((2.0 / omega) ** lam - x0 ** lam)
        k2 = (2.0 / omega) ** (lam - 1.0)
        a2 = k2 * 2.0 * math.exp(-1.0) / omega
    atot = a0 + a1 + a2
    edge = max(x0, 2.0 / omega)
    while True:
        v = atot * rng.random()
        if v <= a0:
            x = x0 * v / a0
            hx = k0
        else:
            v -= a0
            if v <= a1:
                if lam == 0.0:
                    x = omega * math.exp(math.exp(omega) * v)
                    hx = k1 / x
                else:
                    x = (x0 ** lam + lam / k1 * v) ** (1.0 / lam)
                    hx = k1 * x ** (lam - 1.0)
            else:
                v -= a1
                x = -2.0 / omega * math.log(math.exp(-omega / 2.0 * edge) - omega / (2.0 * k2) * v)
                hx = k2 * math.exp(-omega / 2.0 * x)
        u = rng.random() * hx
        if math.log(u) <= (lam - 1.0) * math.log(x) - omega / 2.0 * (x + 1.0 / x):
            return x


@njit(cache=True)
def gig_draw(rng, a, b, c):
    """One draw from the density proportional to z^(c-1) exp(-(a z + b / z) / 2).

    No argument checking; callers guarantee a > 0, b >= 0 and c > 0 when b
    is (numerically) zero.
    """
    if b < GIG_B_FLOOR:
        return rng.standard_gamma(c) * 2.0 / a
    lam = abs(c)
    omega = math.sqrt(a * b)
    alpha = math.sqrt(b / a)
    if lam > 2.0 or omega > 3.0:
        x = _gig_rou_shift(rng, lam, omega)
    elif lam >= 1.0 - 2.25 * omega * omega or omega > 0.2:
        x = _gig_rou_noshift(rng, lam, omega)
    else:
        x = _gig_concave(rng, lam, omega)
    if c < 0.0:
        return alpha / x
    return alpha * x


@njit(cache=True)
def _gig_fill(rng, a, b, c, out):
    for i in range(out.shape[0]):
        out[i] = gig_draw(rng, a, b, c)


def sample_gig(a: float, b: float, c: float, rng: np.random.Generator, size: int | None = None):
    """Draw from GIG(a, b, c) with density ∝ z^(c-1) exp(-(a z + b/z)/2), z > 0.

    Uses the Hörmann–Leydold rejection schemes (ratio-of-uniforms with and
    without mode shift, and the concave-hat method for small ``sqrt(ab)``).
    When ``b`` is zero (or below 1e-300) the draw comes from the Gamma
    limit, shape ``c`` and rate ``a / 2``.
    """
    a, b, c = float(a), float(b), float(c)
    if not a > 0.0:
        raise ParameterError(f"GIG requires a > 0, got a={a}")
    if b < 0.0 or not math.isfinite(b):
        raise ParameterError(f"GIG requires finite b >= 0, got b={b}")
    if b < GIG_B_FLOOR and not c > 0.0:
        raise ParameterError(f"GIG with b=0 requires c > 0, got c={c}")
    if size is None:
        return float(gig_draw(rng, a, b, c))
    out = np.empty(int(size))
    _gig_fill(rng, a, b, c, out)
    return out


def gig_logpdf_unnormalized(z, a: float, b: float, c: float):
    z = np.asarray(z, dtype=float)
    return (c - 1.0) * np.log(z) - 0.5 * (a * z + b / z)


# ---------------------------------------------------------------------------
# Inverse gamma, exponential, Laplace, Bernoulli
# ---------------------------------------------------------------------------


_LOG_MAX_FLOAT = math.log(np.finfo(float).max)


def sample_inverse_gamma(shape: float, rate: float, rng: np.random.Generator, size=None):
    """Inverse gamma draw as ``rate / G`` with ``G ~ Gamma(shape, 1)``.

    For ``shape < 1``, ``G`` underflows to zero with non-negligible
    probability, so the draw is formed on the log scale with
    ``log G = log G' + log(U) / shape``, ``G' ~ Gamma(shape + 1)``.  Draws
    beyond the largest double are returned as that value.
    """
    if not (shape > 0 and rate > 0):
        raise ParameterError(f"inverse gamma needs shape > 0 and rate > 0, got ({shape}, {rate})")
    if shape >= 1.0:
        return rate / rng.standard_gamma(shape, size=size)
    log_g = np.log(rng.standard_gamma(shape + 1.0, size=size)) + np.log(rng.random(size=size)) / shape
    out = np.exp(np.minimum(math.log(rate) - log_g, _LOG_MAX_FLOAT))
    return float(out) if size is None else out


def inverse_gamma_logpdf(x, shape: float, rate: float):
    if not (shape > 0 and rate > 0):
        raise ParameterError(f"inverse gamma needs shape > 0 and rate > 0, got ({shape}, {rate})")
    x = np.asarray(x, dtype=float)
    return shape * math.log(rate) - math.lgamma(shape) - (shape + 1.0) * np.log(x) - rate / x


def sample_exponential(rate: float, rng: np.random.Generator, size=None):
    if not rate > 0:
        raise ParameterError(f"exponential rate must be positive, got {rate}")
    return rng.standard_exponential(size=size) / rate


def sample_laplace_unit(rng: np.random.Generator, size=None):
    """Laplace(0, 1) draw; density exp(-|x|)/2."""
    return rng.laplace(0.0, 1.0, size=size)


@njit(cache=True)
def logistic(x):
    if x >= 0.0:
        return 1.0 / (1.0 + math.exp(-x))
    e = math.exp(x)
    return e / (1.0 + e)


@njit(cache=True)
def bernoulli_logit_draw(rng, log_odds):
    return 1 if rng.random() < logistic(log_odds) else 0


def sample_bernoulli_logit(log_odds: float, rng: np.random.Generator) -> int:
    return int(bernoulli_logit_draw(rng, float(log_odds)))


# ---------------------------------------------------------------------------
# Multivariate normal, inverse Wishart
# ---------------------------------------------------------------------------


def _cholesky(m: np.ndarray, what: str) -> np.ndarray:
    m = np.asarray(m, dtype=float)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise DecompositionError(f"{what} must be square, got shape {m.shape}")
    if not np.allclose(m, m.T, rtol=1e-10, atol=1e-12):
        raise DecompositionError(f"{what} is not symmetric")
    try:
        return np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise DecompositionError(f"{what} is not positive definite") from exc


def sample_mvn(mean, covariance, rng: np.random.Generator, size=None):
    mean = np.asarray(mean, dtype=float)
    chol = _cholesky(covariance, "covariance")
    shape = mean.shape if size is None else (int(size),) + mean.shape
    return mean + rng.standard_normal(shape) @ chol.T


def sample_inverse_wishart(scale, dof: float, rng: np.random.Generator) -> np.ndarray:
    """Inverse-Wishart draw with density ∝ |X|^{-(dof+d+1)/2} exp(-tr(scale X^{-1})/2).

    Bartlett decomposition of the Wishart(scale^{-1}, dof) precision, then
    inverted through its triangular factor.
    """
    scale = np.asarray(scale, dtype=float)
    d = scale.shape[0]
    if not dof > d - 1:
        raise ParameterError(f"inverse Wishart needs dof > dim - 1, got dof={dof}, dim={d}")
    chol_inv = np.linalg.inv(_cholesky(scale, "inverse Wishart scale"))
    inv_scale = chol_inv.T @ chol_inv
    L = np.linalg.cholesky(0.5 * (inv_scale + inv_scale.T))
    bartlett = np.zeros((d, d))
    for i in range(d):
        bartlett[i, i] = math.sqrt(rng.chisquare(dof - i))
        bartlett[i, :i] = rng.standard_normal(i)
    factor = L @ bartlett  # precision = factor factor^T
    inv_factor = np.linalg.inv(factor)
    out = inv_factor.T @ inv_factor
    return 0.5 * (out + out.T)
