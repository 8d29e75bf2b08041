"""Static posterior over ensemble weights.

The weights ``theta`` live on the simplex and have (unnormalized) density

    Dirichlet(theta; alpha) * E[exp(-lam * <theta, z>)],   z_j ~ h_j independently,

where ``h_j`` is expert ``j``'s predictive distribution of its own loss. For
Gaussian ``h_j`` the expectation is the Gaussian moment generating function and
has a closed form; otherwise it is estimated by Monte Carlo.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln, logsumexp, xlogy

from .core import as_simplex
from .errors import DegenerateChainWarning, DimensionError, ValidationError
from .experts import GaussianPredictive

MIN_MC_DRAWS = 100


class PredictiveEnsemble:
    """Loss predictives of ``J`` experts.

    Each member is a :class:`GaussianPredictive` or a 1-D array of loss draws
    (an empirical predictive).
    """

    def __init__(self, experts):
        members = []
        for j, h in enumerate(experts):
            if isinstance(h, GaussianPredictive):
                members.append(h)
                continue
            s = np.asarray(h, dtype=float).reshape(-1)
            if s.size == 0:
                raise ValidationError(f"expert {j}: empirical sample set is empty")
            if not np.all(np.isfinite(s)):
                raise ValidationError(f"expert {j}: non-finite loss sample")
            members.append(s)
        if not members:
            raise ValidationError("ensemble needs at least one expert")
        self.members = tuple(members)

    @classmethod
    def coerce(cls, obj):
        return obj if isinstance(obj, cls) else cls(obj)

    @classmethod
    def gaussian(cls, means, variances):
        return cls(GaussianPredictive(m, v) for m, v in zip(means, variances))

    def __len__(self):
        return len(self.members)

    @property
    def is_gaussian(self):
        return all(isinstance(h, GaussianPredictive) for h in self.members)

    @property
    def means(self):
        return np.array([h.mean if isinstance(h, GaussianPredictive) else h.mean() for h in self.members])

    @property
    def variances(self):
        if not self.is_gaussian:
            raise ValidationError("variances are only defined for an all-Gaussian ensemble")
        return np.array([h.variance for h in self.members])

    def draw(self, n, rng):
        """``(n, J)`` matrix of independent loss draws, one column per expert."""
        cols = []
        for h in self.members:
            if isinstance(h, GaussianPredictive):
                cols.append(h.mean + np.sqrt(h.variance) * rng.standard_normal(n))
            else:
                cols.append(h[rng.integers(0, h.size, size=n)])
        return np.column_stack(cols)


def _check_theta(theta, ensemble):
    theta = as_simplex(theta, "theta")
    if theta.size != len(ensemble):
        raise DimensionError("theta vs ensemble size", len(ensemble), theta.size)
    return theta


def _check_lam(lam):
    if not (lam > 0 and np.isfinite(lam)):
        raise ValidationError(f"loss temperature must be positive, got {lam}")


def gaussian_log_weights(thetas, means, variances, lam=1.0):
    """Closed-form log kernel for many ``theta`` rows at once."""
    thetas = np.atleast_2d(thetas)
    return -lam * thetas @ means + 0.5 * lam**2 * (thetas**2) @ variances


def analytic_log_weight(theta, ensemble, lam=1.0):
    """``log E[exp(-lam <theta, z>)]`` for independent Gaussian ``z_j``.

    Equals ``sum_j (-lam theta_j m_j + lam^2 theta_j^2 s_j^2 / 2)``.
    """
    ensemble = PredictiveEnsemble.coerce(ensemble)
    if not ensemble.is_gaussian:
        raise ValidationError("analytic kernel needs every expert to be Gaussian")
    _check_lam(lam)
    theta = _check_theta(theta, ensemble)
    return float(gaussian_log_weights(theta, ensemble.means, ensemble.variances, lam)[0])


def _log_mean_exp(a):
    """Log of the mean of ``exp(a)`` and its delta-method standard error."""
    top = a.max()
    w = np.exp(a - top)
    mean = w.mean()
    se = w.std(ddof=1) / np.sqrt(w.size) / mean
    return float(top + np.log(mean)), float(se)


def mc_log_weight(theta, ensemble, n_draws, rng, lam=1.0):
    """Monte Carlo estimate of the log kernel with a standard error.

    Returns ``(estimate, std_error)``; the error is the delta-method
    standard error of the log of the sample mean.
    """
    ensemble = PredictiveEnsemble.coerce(ensemble)
    _check_lam(lam)
    theta = _check_theta(theta, ensemble)
    if n_draws < MIN_MC_DRAWS:
        raise ValidationError(f"n_draws must be >= {MIN_MC_DRAWS}, got {n_draws}")
    z = ensemble.draw(int(n_draws), rng)
    return _log_mean_exp(-lam * (z @ theta))


class LogKernel:
    """Log kernel evaluated on many ``theta`` rows.

    Gaussian ensembles use the closed form. Otherwise a single set of loss
    draws is fixed at construction and reused for every evaluation (common
    random numbers), which keeps Metropolis ratios and particle weights
    consistent across calls.
    """

    def __init__(self, ensemble, lam=1.0, n_draws=2000, rng=None):
        self.ensemble = PredictiveEnsemble.coerce(ensemble)
        _check_lam(lam)
        self.lam = lam
        if self.ensemble.is_gaussian:
            self._means = self.ensemble.means
            self._vars = self.ensemble.variances
            self._draws = None
        else:
            if n_draws < MIN_MC_DRAWS:
                raise ValidationError(f"n_draws must be >= {MIN_MC_DRAWS}, got {n_draws}")
            rng = rng if rng is not None else np.random.default_rng(0)
            self._draws = self.ensemble.draw(int(n_draws), rng)

    def __call__(self, thetas, chunk=1024):
        thetas = np.atleast_2d(thetas)
        if self._draws is None:
            return gaussian_log_weights(thetas, self._means, self._vars, self.lam)
        out = np.empty(thetas.shape[0])
        n = self._draws.shape[0]
        for lo in range(0, thetas.shape[0], chunk):
            a = -self.lam * self._draws @ thetas[lo : lo + chunk].T
            out[lo : lo + chunk] = logsumexp(a, axis=0) - np.log(n)
        return out


def dirichlet_logpdf(x, alpha):
    return gammaln(alpha.sum()) - gammaln(alpha).sum() + xlogy(alpha - 1.0, x).sum()


@dataclass
class PosteriorSample:
    draws: np.ndarray
    acceptance_rate: float
    seed: int
    kappa: float = float("nan")
    warnings: list = field(default_factory=list)

    def __len__(self):
        return len(self.draws)


def sample_posterior(
    ensemble,
    prior_alpha=None,
    n_samples=5000,
    burn_in=2000,
    seed=0,
    lam=1.0,
    kappa=50.0,
    mc_draws=2000,
    adapt_every=100,
):
    """Random-walk Metropolis–Hastings on the simplex.

    Proposals are ``Dirichlet(1 + kappa * theta)`` around the current point.
    ``kappa`` is tuned during burn-in to keep acceptance between 20% and 40%
    and frozen afterwards. Only post-burn-in draws are returned.
    """
    ensemble = PredictiveEnsemble.coerce(ensemble)
    J = len(ensemble)
    if n_samples < 1 or burn_in < 0:
        raise ValidationError("need n_samples >= 1 and burn_in >= 0")
    alpha = np.ones(J) if prior_alpha is None else np.asarray(prior_alpha, dtype=float).reshape(-1)
    if alpha.size != J:
        raise DimensionError("prior_alpha vs ensemble size", J, alpha.size)
    if np.any(alpha <= 0) or not np.all(np.isfinite(alpha)):
        raise ValidationError(f"prior concentration must be positive, got {alpha}")
    if not kappa > 0:
        raise ValidationError(f"kappa must be positive, got {kappa}")
    rng = np.random.default_rng(seed)
    kernel = LogKernel(ensemble, lam, mc_draws, rng)

    if J == 1:
        return PosteriorSample(np.ones((n_samples, 1)), 1.0, seed, kappa)

    def log_target(x):
        return kernel(x)[0] + dirichlet_logpdf(x, alpha)

    theta = alpha / alpha.sum()
    current = log_target(theta)
    draws = np.empty((n_samples, J))
    accepted = window_accepted = 0
    for it in range(burn_in + n_samples):
        fwd = 1.0 + kappa * theta
        prop = rng.dirichlet(fwd)
        log_u = np.log(rng.random())
        if np.all(prop > 0):
            cand = log_target(prop)
            bwd = 1.0 + kappa * prop
            log_ratio = cand - current + dirichlet_logpdf(theta, bwd) - dirichlet_logpdf(prop, fwd)
            if np.isfinite(cand) and log_u < log_ratio:
                theta, current = prop, cand
                if it >= burn_in:
                    accepted += 1
                else:
                    window_accepted += 1
        if it < burn_in:
            if (it + 1) % adapt_every == 0:
                rate = window_accepted / adapt_every
                if rate < 0.2:
                    kappa = min(kappa * 1.5, 1e8)
                elif rate > 0.4:
                    kappa = max(kappa / 1.5, 1e-2)
                window_accepted = 0
        else:
            draws[it - burn_in] = theta

    result = PosteriorSample(draws, accepted / n_samples, seed, kappa)
    if result.acceptance_rate < 0.01:
        msg = f"degenerate chain: acceptance rate {result.acceptance_rate:.4f}"
        result.warnings.append(msg)
        warnings.warn(msg, DegenerateChainWarning, stacklevel=2)
    return result


def posterior_mean(sample):
    draws = sample.draws if isinstance(sample, PosteriorSample) else np.asarray(sample, dtype=float)
    if draws.size == 0:
        raise ValidationError("posterior sample is empty")
    m = draws.mean(axis=0)
    return as_simplex(m / m.sum(), "posterior mean")


def posterior_summary(sample, quantiles=(0.05, 0.5, 0.95)):
    """Per-component mean, standard deviation and quantiles of the draws."""
    d = sample.draws
    return {
        "mean": posterior_mean(sample),
        "sd": d.std(axis=0, ddof=1) if len(d) > 1 else np.zeros(d.shape[1]),
        "quantiles": {q: np.quantile(d, q, axis=0) for q in quantiles},
    }
