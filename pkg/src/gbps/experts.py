"""Forecasting experts for the portfolio application.

Each expert forecasts every asset's next-month return with a Gaussian
predictive, turns the forecast means into a long-only allocation with a
softmax, and reports a Gaussian predictive of its own loss (the negative
portfolio return).
"""

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import softmax

from .core import as_simplex
from .errors import DimensionError, InsufficientDataError, SingularDesignError, ValidationError
from .market_data import window


@dataclass(frozen=True)
class GaussianPredictive:
    mean: float
    variance: float

    def __post_init__(self):
        if not math.isfinite(self.mean):
            raise ValidationError(f"predictive mean must be finite, got {self.mean}")
        if not math.isfinite(self.variance) or self.variance < 0:
            raise ValidationError(f"predictive variance must be finite and >= 0, got {self.variance}")
        object.__setattr__(self, "mean", float(self.mean))
        object.__setattr__(self, "variance", float(self.variance))


@dataclass(frozen=True)
class ExpertForecast:
    expert_id: str
    policy: np.ndarray
    loss_predictive: GaussianPredictive
    return_predictives: tuple = field(default=(), repr=False)

    def __post_init__(self):
        object.__setattr__(self, "policy", as_simplex(self.policy, f"policy of {self.expert_id}"))


@dataclass(frozen=True)
class ArModel:
    order: int
    intercept: float
    coefficients: tuple
    residual_variance: float

    def __post_init__(self):
        if self.order < 1 or len(self.coefficients) != self.order:
            raise ValidationError(
                f"AR order {self.order} needs {self.order} coefficients, got {len(self.coefficients)}"
            )


def ar_design(series, p):
    """Regression matrix ``[1, y_{t-1}, ..., y_{t-p}]`` and targets ``y_t``."""
    y = np.asarray(series, dtype=float)
    n = y.size
    lags = [y[p - i : n - i] for i in range(1, p + 1)]
    X = np.column_stack([np.ones(n - p), *lags])
    return X, y[p:]


def fit_ar(series, p):
    """Least-squares AR(p) fit with intercept.

    ``coefficients[i]`` multiplies the lag-``i+1`` value. The residual
    variance divides the residual sum of squares by ``n - p - (p + 1)``.
    """
    y = np.asarray(series, dtype=float).reshape(-1)
    p = int(p)
    if p < 1:
        raise ValidationError(f"AR order must be >= 1, got {p}")
    n = y.size
    if n - p < p + 2:
        raise InsufficientDataError(f"AR({p}) needs at least {2 * p + 2} observations, got {n}")
    if not np.all(np.isfinite(y)):
        raise ValidationError("series contains non-finite values")
    X, target = ar_design(y, p)
    if np.linalg.matrix_rank(X) < p + 1:
        raise SingularDesignError(f"AR({p}) design matrix is rank deficient")
    beta, *_ = np.linalg.lstsq(X, target, rcond=None)
    resid = target - X @ beta
    dof = n - p - (p + 1)
    return ArModel(p, float(beta[0]), tuple(float(b) for b in beta[1:]), float(resid @ resid / dof))


def forecast_ar(model, recent):
    """One-step Gaussian forecast from the last ``p`` values (oldest first)."""
    lags = np.asarray(recent, dtype=float).reshape(-1)
    if lags.size != model.order:
        raise DimensionError(f"AR({model.order}) lags", model.order, lags.size)
    mean = model.intercept + float(np.dot(model.coefficients, lags[::-1]))
    return GaussianPredictive(mean, model.residual_variance)


def sample_mean_forecast(series, window):
    y = np.asarray(series, dtype=float).reshape(-1)
    window = int(window)
    if window < 2:
        raise ValidationError(f"sample-mean window must be >= 2, got {window}")
    if y.size < window:
        raise InsufficientDataError(f"sample-mean window {window} exceeds series length {y.size}")
    tail = y[-window:]
    return GaussianPredictive(float(tail.mean()), float(tail.var(ddof=1)))


def returns_to_policy(forecast_means, temperature):
    """Softmax allocation: ``w(a)`` proportional to ``exp(mean_a / temperature)``."""
    m = np.asarray(forecast_means, dtype=float).reshape(-1)
    if m.size == 0:
        raise ValidationError("need at least one forecast mean")
    if not np.all(np.isfinite(m)):
        raise ValidationError("forecast means must be finite")
    if not (temperature > 0 and math.isfinite(temperature)):
        raise ValidationError(f"temperature must be positive, got {temperature}")
    w = softmax((m - m.max()) / temperature)
    return w / w.sum()


def expert_loss_predictive(policy, per_asset):
    """Gaussian predictive of ``-sum_a w(a) r(a)`` with independent assets."""
    w = as_simplex(policy, "policy")
    if len(per_asset) != w.size:
        raise DimensionError("return predictives vs policy", w.size, len(per_asset))
    means = np.array([g.mean for g in per_asset])
    variances = np.array([g.variance for g in per_asset])
    return GaussianPredictive(-float(w @ means), float((w**2) @ variances))


@dataclass(frozen=True)
class ExpertSpec:
    """``kind`` is ``"mean"`` (windowed sample mean) or ``"ar"`` (AR(order) on the window)."""

    name: str
    kind: str
    window: int
    order: int = 0

    def __post_init__(self):
        if self.kind not in ("mean", "ar"):
            raise ValidationError(f"unknown expert kind {self.kind!r}")
        if self.kind == "ar" and self.order < 1:
            raise ValidationError(f"AR expert {self.name} needs order >= 1")
        if self.window < 2:
            raise ValidationError(f"expert {self.name}: window must be >= 2")

    @classmethod
    def parse(cls, token):
        """Parse ``mean:12`` or ``ar:2:36`` (order, window), optionally ``label=``-prefixed."""
        label, _, body = token.strip().rpartition("=")
        parts = body.strip().split(":")
        try:
            if parts[0] == "mean" and len(parts) == 2:
                w = int(parts[1])
                auto = f"Mean[{w // 12}]" if w % 12 == 0 else f"Mean[{w}m]"
                return cls(label.strip() or auto, "mean", w)
            if parts[0] == "ar" and len(parts) == 3:
                p, w = int(parts[1]), int(parts[2])
                auto = f"AR({p})" if w == 36 else f"AR({p})[{w}m]"
                return cls(label.strip() or auto, "ar", w, p)
        except ValueError:
            pass
        raise ValidationError(f"bad expert token {token!r}; want mean:<window> or ar:<order>:<window>")

    def token(self):
        body = f"mean:{self.window}" if self.kind == "mean" else f"ar:{self.order}:{self.window}"
        return f"{self.name}={body}"


DEFAULT_EXPERTS = (
    ExpertSpec("Mean[1]", "mean", 12),
    ExpertSpec("Mean[3]", "mean", 36),
    ExpertSpec("AR(1)", "ar", 36, 1),
    ExpertSpec("AR(2)", "ar", 36, 2),
    ExpertSpec("AR(3)", "ar", 36, 3),
)


@dataclass(frozen=True)
class ExpertConfig:
    experts: tuple = DEFAULT_EXPERTS
    temperature: float = 0.02
    # fall back to the windowed sample mean when an AR design is singular
    singular_fallback: bool = False

    def __post_init__(self):
        object.__setattr__(self, "experts", tuple(self.experts))
        if not self.experts:
            raise ValidationError("expert list is empty")
        names = [e.name for e in self.experts]
        if len(set(names)) != len(names):
            raise ValidationError(f"expert names must be unique: {names}")
        if not self.temperature > 0:
            raise ValidationError(f"temperature must be positive, got {self.temperature}")

    @property
    def longest_window(self):
        return max(e.window for e in self.experts)


def _forecast_asset(spec, series, fallback):
    if spec.kind == "mean":
        return sample_mean_forecast(series, spec.window)
    try:
        model = fit_ar(series, spec.order)
    except SingularDesignError:
        if not fallback:
            raise
        return sample_mean_forecast(series, spec.window)
    return forecast_ar(model, series[-spec.order :])


def build_expert_bank(returns, t, config=None):
    """Forecasts of every configured expert for month ``t``.

    Only rows strictly before ``t`` are used. Any expert that cannot be fit
    aborts the whole bank with an error naming it.
    """
    config = config or ExpertConfig()
    bank = []
    for spec in config.experts:
        try:
            hist = window(returns, t, spec.window).returns
            per_asset = tuple(
                _forecast_asset(spec, hist[:, k], config.singular_fallback)
                for k in range(returns.n_assets)
            )
        except (InsufficientDataError, SingularDesignError) as exc:
            raise type(exc)(f"expert {spec.name} at {t}: {exc}") from exc
        policy = returns_to_policy([g.mean for g in per_asset], config.temperature)
        bank.append(ExpertForecast(spec.name, policy, expert_loss_predictive(policy, per_asset), per_asset))
    return bank
