"""Ensembling expert policies with a general-Bayes posterior over simplex weights."""

__version__ = "0.1.0"

from .core import (
    as_simplex,
    ensemble_loss,
    ensemble_policy,
    project_to_simplex,
    sample_dirichlet,
)
from .dynamic import (
    EvolutionConfig,
    ParticleCloud,
    effective_sample_size,
    evolve,
    init_particles,
    resample,
    reweight,
    step,
)
from .experts import (
    ArModel,
    ExpertConfig,
    ExpertForecast,
    ExpertSpec,
    GaussianPredictive,
    build_expert_bank,
    fit_ar,
    forecast_ar,
)
from .static import (
    PosteriorSample,
    PredictiveEnsemble,
    analytic_log_weight,
    mc_log_weight,
    posterior_mean,
    sample_posterior,
)

__all__ = [
    "ArModel",
    "EvolutionConfig",
    "ExpertConfig",
    "ExpertForecast",
    "ExpertSpec",
    "GaussianPredictive",
    "ParticleCloud",
    "PosteriorSample",
    "PredictiveEnsemble",
    "analytic_log_weight",
    "as_simplex",
    "build_expert_bank",
    "effective_sample_size",
    "ensemble_loss",
    "ensemble_policy",
    "evolve",
    "fit_ar",
    "forecast_ar",
    "init_particles",
    "mc_log_weight",
    "posterior_mean",
    "project_to_simplex",
    "resample",
    "reweight",
    "sample_dirichlet",
    "sample_posterior",
    "step",
]
