"""Sequential posterior over ensemble weights with a particle filter.

Each period the cloud is reweighted by the period's loss kernel, optionally
resampled, then moved by a Gaussian random walk whose covariance follows the
single discount factor rule ``W_t = (1 - e) / e * C_t + jitter * I`` with
``C_t`` the weighted particle covariance. Moved particles are projected back
onto the simplex.
"""

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp

from .core import project_rows
from .errors import DegenerateEvolutionWarning, DegenerateWeightsError, DimensionError, ValidationError
from .static import LogKernel, PredictiveEnsemble

NORMALIZATION_TOL = 1e-12


@dataclass(frozen=True)
class ParticleCloud:
    particles: np.ndarray
    log_weights: np.ndarray
    t: int = 0

    @property
    def n_particles(self):
        return self.particles.shape[0]

    @property
    def dim(self):
        return self.particles.shape[1]

    @property
    def weights(self):
        return np.exp(self.log_weights - logsumexp(self.log_weights))

    def mean(self):
        m = self.weights @ self.particles
        return m / m.sum()


@dataclass(frozen=True)
class EvolutionConfig:
    discount: float = 0.95
    jitter: float = 1e-6
    resample_threshold: float = 0.5

    def __post_init__(self):
        if not 0 < self.discount <= 1:
            raise ValidationError(f"discount must lie in (0, 1], got {self.discount}")
        if not self.jitter >= 0:
            raise ValidationError(f"jitter must be >= 0, got {self.jitter}")
        if not 0 < self.resample_threshold <= 1:
            raise ValidationError(f"resample_threshold must lie in (0, 1], got {self.resample_threshold}")


@dataclass(frozen=True)
class StepSummary:
    t: int
    mean: np.ndarray
    ess: float
    resampled: bool


def _normalize(log_weights, period):
    lw = np.asarray(log_weights, dtype=float)
    total = logsumexp(lw)
    if not np.isfinite(total):
        raise DegenerateWeightsError(f"all particle weights vanished at period {period}")
    if abs(total) > NORMALIZATION_TOL:
        lw = lw - total
    return lw


def init_particles(J, N, prior_alpha=None, rng=None):
    """``N`` i.i.d. Dirichlet prior draws with uniform weights at ``t = 0``."""
    J, N = int(J), int(N)
    if J < 1 or N < 2:
        raise ValidationError(f"need J >= 1 and N >= 2, got J={J}, N={N}")
    alpha = np.ones(J) if prior_alpha is None else np.asarray(prior_alpha, dtype=float).reshape(-1)
    if alpha.size != J:
        raise DimensionError("prior_alpha", J, alpha.size)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ValidationError(f"prior concentration must be positive, got {alpha}")
    rng = rng if rng is not None else np.random.default_rng()
    particles = np.ones((N, 1)) if J == 1 else rng.dirichlet(alpha, size=N)
    return ParticleCloud(particles, np.full(N, -np.log(N)), 0)


def evolution_covariance(cloud, config):
    w = cloud.weights
    centered = cloud.particles - w @ cloud.particles
    cov = centered.T @ (centered * w[:, None])
    e = config.discount
    return (1.0 - e) / e * cov + config.jitter * np.eye(cloud.dim)


def evolve(cloud, config, rng, project=True):
    """Random-walk step for every particle; weights are untouched.

    ``project=False`` skips the simplex projection (test hook for checking
    the raw covariance inflation).
    """
    if cloud.dim == 1:
        return ParticleCloud(cloud.particles, cloud.log_weights, cloud.t + 1)
    collapsed = config.jitter == 0 and np.all(cloud.particles == cloud.particles[0])
    W = evolution_covariance(cloud, config)
    if collapsed or not np.any(W):
        if config.discount < 1:
            warnings.warn(
                f"evolution covariance is zero at period {cloud.t}: the cloud has collapsed",
                DegenerateEvolutionWarning,
                stacklevel=2,
            )
        return ParticleCloud(cloud.particles, cloud.log_weights, cloud.t + 1)
    vals, vecs = np.linalg.eigh(W)
    root = vecs * np.sqrt(np.clip(vals, 0.0, None))
    moved = cloud.particles + rng.standard_normal(cloud.particles.shape) @ root.T
    if project:
        moved = project_rows(moved)
    return ParticleCloud(moved, cloud.log_weights, cloud.t + 1)


def reweight(cloud, ensemble, lam=1.0, rng=None, mc_draws=2000):
    """Multiply particle weights by the period's loss kernel and renormalize."""
    ensemble = PredictiveEnsemble.coerce(ensemble)
    if len(ensemble) != cloud.dim:
        raise DimensionError("ensemble size vs particle dimension", cloud.dim, len(ensemble))
    inc = LogKernel(ensemble, lam, mc_draws, rng)(cloud.particles)
    top = inc.max()
    if not np.isfinite(top):
        raise DegenerateWeightsError(f"kernel is not finite on the cloud at period {cloud.t + 1}")
    lw = _normalize(cloud.log_weights + (inc - top), cloud.t + 1)
    return ParticleCloud(cloud.particles, lw, cloud.t)


def effective_sample_size(cloud):
    w = cloud.weights
    return float(1.0 / np.sum(w**2))


def systematic_resample(weights, rng, n=None):
    """Indices drawn by systematic resampling with a single uniform offset."""
    w = np.asarray(weights, dtype=float)
    n = w.size if n is None else int(n)
    cdf = np.cumsum(w / w.sum())
    cdf[-1] = 1.0
    positions = (rng.random() + np.arange(n)) / n
    return np.searchsorted(cdf, positions, side="right")


def resample(cloud, rng):
    idx = systematic_resample(cloud.weights, rng)
    N = cloud.n_particles
    return ParticleCloud(cloud.particles[idx], np.full(N, -np.log(N)), cloud.t)


def step(cloud, ensemble, config, rng, lam=1.0, mc_draws=2000):
    """One filtering period: reweight, resample if ESS is low, evolve.

    The summary describes the reweighted cloud before resampling and
    evolution, i.e. the filtering posterior used for this period's decision.
    """
    cloud = reweight(cloud, ensemble, lam, rng, mc_draws)
    ess = effective_sample_size(cloud)
    summary_mean = cloud.mean()
    resampled = ess < config.resample_threshold * cloud.n_particles
    if resampled:
        cloud = resample(cloud, rng)
    cloud = evolve(cloud, config, rng)
    return cloud, StepSummary(cloud.t, summary_mean, ess, resampled)


def run_filter(ensembles, J, config=None, n_particles=5000, prior_alpha=None, lam=1.0, seed=0):
    """Filter a whole sequence of ensembles; returns the per-period summaries."""
    config = config or EvolutionConfig()
    rng = np.random.default_rng(seed)
    cloud = init_particles(J, n_particles, prior_alpha, rng)
    out = []
    for ens in ensembles:
        cloud, summary = step(cloud, ens, config, rng, lam)
        out.append(summary)
    return out
