import numpy as np
import pytest
from scipy import integrate


def quad_cdf(logpdf, lo, hi, grid_size=4000):
    """Normalized CDF of an unnormalized log-density by piecewise adaptive quadrature.

    The support is truncated to [lo, hi]; callers pick limits holding
    essentially all of the mass.  Returns a vectorized callable.
    """
    # geometric part resolves integrable singularities at a small lower limit
    grid = np.union1d(np.linspace(lo, hi, grid_size), np.geomspace(max(lo, 1e-300), hi, grid_size)) if lo > 0 \
        else np.linspace(lo, hi, grid_size)
    shift = max(logpdf(x) for x in grid)
    f = lambda x: np.exp(logpdf(x) - shift)
    pieces = [integrate.quad(f, a, b, epsabs=0, epsrel=1e-11)[0] for a, b in zip(grid[:-1], grid[1:])]
    cum = np.concatenate([[0.0], np.cumsum(pieces)])
    cum /= cum[-1]
    return lambda x: np.interp(x, grid, cum)


def quad_moments(logpdf, lo, hi):
    """Mean and variance of an unnormalized log-density on a finite (lo, hi) by quadrature."""
    mode_guess = max(np.linspace(lo, hi, 2001)[1:-1], key=logpdf)
    shift = logpdf(mode_guess)
    f = lambda x: np.exp(logpdf(x) - shift)
    opts = dict(epsabs=0, epsrel=1e-12, limit=400, points=[mode_guess])
    z = integrate.quad(f, lo, hi, **opts)[0]
    m1 = integrate.quad(lambda x: x * f(x), lo, hi, **opts)[0] / z
    m2 = integrate.quad(lambda x: (x - m1) ** 2 * f(x), lo, hi, **opts)[0] / z
    return m1, m2


def within_se(draws, mean, var, k=3.0):
    """|sample mean - mean| within k standard errors."""
    draws = np.asarray(draws)
    return abs(draws.mean() - mean) <= k * np.sqrt(var / draws.size)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
