"""Static ensemble of two treatment-policy experts on simulated causal data.

Covariates ``X ~ N(0, I_d)``, a known logging policy assigns one of ``K``
treatments, and the outcome is ``mu(a | X) + noise`` with a linear ``mu``.
Two experts estimate ``mu``: the direct method (per-arm regression) and an
inverse-probability-weighted regression. Each recommends a softmax policy and
reports a bootstrap Gaussian predictive of its own (estimated) loss; the
static posterior then mixes the two.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .errors import ValidationError
from .experts import GaussianPredictive
from .static import PredictiveEnsemble, posterior_mean, sample_posterior

EXPERT_IDS = ("DM", "IPW")


@dataclass(frozen=True)
class EffectSpec:
    """Linear outcome model and logging-policy coefficients.

    ``mu(a | x) = intercepts[a] + slopes[a] @ x``; the logging policy is
    ``softmax(propensity_coef @ x)``.
    """

    intercepts: tuple
    slopes: tuple
    noise_sd: float = 1.0
    propensity_coef: tuple = None

    def __post_init__(self):
        b0 = np.asarray(self.intercepts, dtype=float)
        B = np.atleast_2d(np.asarray(self.slopes, dtype=float))
        if B.shape[0] != b0.size:
            raise ValidationError(f"slopes need one row per treatment ({b0.size}), got {B.shape[0]}")
        G = np.zeros_like(B) if self.propensity_coef is None else np.atleast_2d(
            np.asarray(self.propensity_coef, dtype=float)
        )
        if G.shape != B.shape:
            raise ValidationError(f"propensity_coef shape {G.shape} must match slopes {B.shape}")
        if self.noise_sd < 0:
            raise ValidationError("noise_sd must be >= 0")
        object.__setattr__(self, "intercepts", b0)
        object.__setattr__(self, "slopes", B)
        object.__setattr__(self, "propensity_coef", G)

    @property
    def n_treatments(self):
        return self.intercepts.size

    @property
    def n_features(self):
        return self.slopes.shape[1]

    def mu(self, X):
        return self.intercepts + X @ self.slopes.T

    def propensities(self, X):
        return softmax(X @ self.propensity_coef.T, axis=1)

    @classmethod
    def default(cls, K=3, d=2):
        rng = np.random.default_rng(2024)
        return cls(
            intercepts=tuple(np.linspace(0.0, 0.5, K)),
            slopes=tuple(map(tuple, rng.normal(0.0, 0.5, (K, d)))),
            noise_sd=1.0,
            propensity_coef=tuple(map(tuple, rng.normal(0.0, 0.3, (K, d)))),
        )


@dataclass
class DemoData:
    X: np.ndarray
    A: np.ndarray
    Y: np.ndarray
    propensity: np.ndarray


def simulate(spec, n, rng, min_propensity=0.01):
    X = rng.standard_normal((n, spec.n_features))
    p = spec.propensities(X)
    if p.min() < min_propensity:
        raise ValidationError(
            f"degenerate propensities: smallest arm probability {p.min():.4g} < {min_propensity}"
        )
    cum = p.cumsum(axis=1)
    A = np.minimum((rng.random(n)[:, None] > cum).sum(axis=1), spec.n_treatments - 1)
    Y = spec.mu(X)[np.arange(n), A] + spec.noise_sd * rng.standard_normal(n)
    return DemoData(X, A, Y, p)


def _design(X):
    return np.column_stack([np.ones(len(X)), X])


def fit_direct_method(data, K):
    """Per-arm least squares of ``Y`` on ``[1, X]``; returns a coefficient matrix."""
    Z = _design(data.X)
    coefs = []
    for a in range(K):
        rows = data.A == a
        if rows.sum() < Z.shape[1] + 1:
            raise ValidationError(f"treatment {a} has too few samples for the direct method")
        beta, *_ = np.linalg.lstsq(Z[rows], data.Y[rows], rcond=None)
        coefs.append(beta)
    return np.array(coefs)


def ipw_pseudo_outcomes(data, K):
    """``1[A = a] Y / p(a | X)`` for every sample and arm."""
    n = len(data.Y)
    gamma = np.zeros((n, K))
    idx = np.arange(n)
    gamma[idx, data.A] = data.Y / data.propensity[idx, data.A]
    return gamma


def fit_ipw(data, K):
    """Least squares of the IPW pseudo-outcomes on ``[1, X]``, one fit per arm."""
    beta, *_ = np.linalg.lstsq(_design(data.X), ipw_pseudo_outcomes(data, K), rcond=None)
    return beta.T


def _values(coefs, X):
    return _design(X) @ coefs.T


def _expert_loss(kind, data, spec, temperature, oracle):
    """Fit one expert on ``data``; return its policy coefficients and estimated loss."""
    K = spec.n_treatments
    if oracle:
        coefs = np.column_stack([spec.intercepts, spec.slopes])
    elif kind == "DM":
        coefs = fit_direct_method(data, K)
    else:
        coefs = fit_ipw(data, K)
    policy = softmax(_values(coefs, data.X) / temperature, axis=1)
    if oracle:
        value = np.mean(np.sum(policy * spec.mu(data.X), axis=1))
    elif kind == "DM":
        value = np.mean(np.sum(policy * _values(coefs, data.X), axis=1))
    else:
        value = np.mean(np.sum(policy * ipw_pseudo_outcomes(data, K), axis=1))
    return coefs, -float(value)


def _subset(data, idx):
    return DemoData(data.X[idx], data.A[idx], data.Y[idx], data.propensity[idx])


def _true_value(policy, mu):
    v = np.sum(policy * mu, axis=1)
    return float(v.mean()), float(v.std(ddof=1) / np.sqrt(v.size))


@dataclass
class DemoReport:
    expert_ids: tuple
    theta: np.ndarray
    ensemble: PredictiveEnsemble
    posterior: object
    values: dict
    lam: float
    policies: dict = field(repr=False, default_factory=dict)


def policy_learning_demo(
    K=3,
    n=2000,
    effect_spec=None,
    seed=42,
    lam=10.0,
    temperature=0.25,
    n_bootstrap=200,
    loss_bias=(0.0, 0.0),
    oracle_experts=False,
    n_eval=20000,
    n_samples=5000,
    burn_in=2000,
):
    """Run the two-expert policy-learning example end to end.

    Parameters
    ----------
    loss_bias : pair of float
        Added to the DM and IPW loss predictives (used to sabotage an expert).
    oracle_experts : bool
        Give both experts the true outcome model, so they coincide.

    Returns
    -------
    DemoReport
        Posterior-mean weights and the true expected outcome, with Monte Carlo
        standard error, of the ensemble policy, each expert's policy and the
        uniform policy.
    """
    spec = effect_spec or EffectSpec.default(K)
    if spec.n_treatments != K or K < 2:
        raise ValidationError(f"need K >= 2 treatments matching the effect spec, got K={K}")
    if n < 100:
        raise ValidationError(f"need n >= 100 samples, got {n}")
    if len(loss_bias) != 2:
        raise ValidationError("loss_bias needs one entry per expert")
    rng = np.random.default_rng(seed)
    data = simulate(spec, n, rng)

    coefs, predictives = {}, []
    for kind, bias in zip(EXPERT_IDS, loss_bias):
        coefs[kind], _ = _expert_loss(kind, data, spec, temperature, oracle_experts)
        boot = np.empty(n_bootstrap)
        for b in range(n_bootstrap):
            idx = rng.integers(0, n, n)
            _, boot[b] = _expert_loss(kind, _subset(data, idx), spec, temperature, oracle_experts)
        predictives.append(GaussianPredictive(boot.mean() + bias, boot.var(ddof=1)))
    ensemble = PredictiveEnsemble(predictives)
    post = sample_posterior(ensemble, n_samples=n_samples, burn_in=burn_in, seed=seed, lam=lam)
    theta = posterior_mean(post)

    X_eval = rng.standard_normal((n_eval, spec.n_features))
    mu = spec.mu(X_eval)
    policies = {k: softmax(_values(c, X_eval) / temperature, axis=1) for k, c in coefs.items()}
    stacked = np.stack([policies[k] for k in EXPERT_IDS], axis=1)
    mixed = np.einsum("j,njk->nk", theta, stacked)
    policies["ensemble"] = mixed / mixed.sum(axis=1, keepdims=True)
    policies["uniform"] = np.full((n_eval, K), 1.0 / K)
    values = {k: _true_value(p, mu) for k, p in policies.items()}
    return DemoReport(EXPERT_IDS, theta, ensemble, post, values, lam, policies)
