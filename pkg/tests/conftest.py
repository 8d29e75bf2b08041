"""Shared fixtures and brute-force oracles.

The oracles here evaluate densities straight from their formulas on dense
grids. They deliberately avoid calling the package so they stay independent
of the code they check.
"""

import numpy as np
import pytest
from scipy.special import gammaln
from scipy.stats import norm

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def simplex_grid(J, n):
    """All points ``k / n`` with non-negative integer ``k`` summing to ``n``."""
    if J == 1:
        return np.ones((1, 1))
    if J == 2:
        x = np.linspace(0.0, 1.0, n + 1)
        return np.column_stack([x, 1.0 - x])
    if J == 3:
        i, j = np.meshgrid(np.arange(n + 1), np.arange(n + 1), indexing="ij")
        keep = i + j <= n
        a, b = i[keep] / n, j[keep] / n
        return np.column_stack([a, b, 1.0 - a - b])
    raise NotImplementedError(J)


def grid_log_density(points, means, variances, lam=1.0, alpha=None):
    """Unnormalized log posterior: Dirichlet prior times the Gaussian MGF kernel."""
    means, variances = np.asarray(means, float), np.asarray(variances, float)
    log_kernel = np.zeros(len(points))
    for j in range(points.shape[1]):
        th = points[:, j]
        log_kernel += -lam * th * means[j] + 0.5 * lam**2 * th**2 * variances[j]
    if alpha is not None:
        alpha = np.asarray(alpha, float)
        with np.errstate(divide="ignore", invalid="ignore"):
            terms = np.where(alpha - 1 == 0, 0.0, (alpha - 1) * np.log(points))
        log_kernel += terms.sum(axis=1) + gammaln(alpha.sum()) - gammaln(alpha).sum()
    return log_kernel


def grid_posterior_mean(means, variances, lam=1.0, n=None, alpha=None):
    J = len(means)
    n = n or (2000 if J == 2 else 300)
    pts = simplex_grid(J, n)
    if alpha is not None and np.any(np.asarray(alpha) < 1):
        pts = pts[np.all(pts > 0, axis=1)]
    lw = grid_log_density(pts, means, variances, lam, alpha)
    w = np.exp(lw - lw.max())
    return w @ pts / w.sum()


def grid_filter_2d(sequence, discount, jitter, lam=1.0, n=2000):
    """Exact discretized filter for two experts.

    Tracks ``x = theta_1`` on an ``n``-point grid. Evolution moves
    ``(x, 1 - x)`` by ``N(0, W)`` with ``W = (1 - e) / e * C + jitter * I``
    and projects back to the simplex, which for two experts is
    ``clip(x + (w_1 - w_2) / 2, 0, 1)`` with ``(w_1 - w_2) / 2`` normal with
    variance ``(1 - e) / e * var(x) + jitter / 2``. Mass falling outside
    ``[0, 1]`` lands on the end points.

    Returns the filtering mean of ``theta_1`` after each reweighting.
    """
    x = np.linspace(0.0, 1.0, n)
    p = np.full(n, 1.0 / n)
    edges = np.concatenate([[-np.inf], 0.5 * (x[1:] + x[:-1]), [np.inf]])
    out = []
    for means, variances in sequence:
        lw = -lam * (x * means[0] + (1 - x) * means[1]) + 0.5 * lam**2 * (
            x**2 * variances[0] + (1 - x) ** 2 * variances[1]
        )
        p = p * np.exp(lw - lw.max())
        p /= p.sum()
        mu = p @ x
        out.append(mu)
        var = p @ (x - mu) ** 2
        sd = np.sqrt(var * (1 - discount) / discount + jitter / 2)
        if sd > 0:
            cdf = norm.cdf((edges[None, :] - x[:, None]) / sd)
            p = p @ np.diff(cdf, axis=1)
            p /= p.sum()
    return np.array(out)
