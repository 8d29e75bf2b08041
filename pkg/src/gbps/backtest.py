"""Monthly rebalancing backtest driven by the dynamic ensemble posterior.

For every test month the expert bank is refit on data strictly before the
month, the filter absorbs the experts' loss predictives, and the filtering
mean of the ensemble weights mixes the expert allocations. Realized returns
only score the decision; they never feed the weights directly.
"""

import csv
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from .core import ensemble_policy
from .dynamic import EvolutionConfig, init_particles, step
from .errors import GBPSError, InsufficientDataError, ValidationError
from .experts import ExpertConfig, build_expert_bank
from .static import PredictiveEnsemble

log = logging.getLogger(__name__)

GBPS = "GBPS"
EQUAL_WEIGHT = "EqualWeight"
UNIFORM_ASSETS = "UniformAssets"


def _fmt(x):
    return format(float(x), ".12g")


@dataclass(frozen=True)
class BacktestConfig:
    """Training months feed the first expert fits; test months are traded.

    Defaults mirror a 3-year training window (2009-01..2011-12) followed by
    an 8-year test period.
    """

    train_start: str = "2009-01"
    train_end: str = "2011-12"
    test_end: str = "2019-12"
    experts: ExpertConfig = field(default_factory=lambda: ExpertConfig(singular_fallback=True))
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    n_particles: int = 5000
    lam: float = 1.0
    seed: int = 42
    prior_alpha: tuple = None
    baselines: bool = True

    def __post_init__(self):
        start, end, stop = (pd.Period(x, freq="M") for x in (self.train_start, self.train_end, self.test_end))
        if not start < end < stop:
            raise ValidationError(
                f"need train_start < train_end < test_end, got {start}, {end}, {stop}"
            )
        train_len = (end - start).n + 1
        if train_len < self.experts.longest_window:
            raise ValidationError(
                f"training window of {train_len} months is shorter than the longest expert "
                f"window ({self.experts.longest_window})"
            )
        if self.n_particles < 2:
            raise ValidationError("need at least 2 particles")
        if not self.lam > 0:
            raise ValidationError(f"lambda must be positive, got {self.lam}")

    def test_months(self):
        return pd.period_range(
            pd.Period(self.train_end, freq="M") + 1, pd.Period(self.test_end, freq="M"), freq="M"
        )


@dataclass(frozen=True)
class PeriodRecord:
    date: pd.Period
    theta: np.ndarray
    allocation: np.ndarray
    predicted_loss: np.ndarray
    realized_loss: np.ndarray
    returns: dict
    ess: float
    resampled: bool


@dataclass
class BacktestReport:
    expert_ids: tuple
    assets: tuple
    strategies: tuple
    records: list
    n_particles: int
    seed: int

    @property
    def dates(self):
        return [r.date for r in self.records]

    def period_returns(self, strategy):
        return np.array([r.returns[strategy] for r in self.records])

    def cumulative(self, strategy):
        return np.cumprod(1.0 + self.period_returns(strategy)) - 1.0

    @property
    def thetas(self):
        return np.array([r.theta for r in self.records])

    def best_expert(self):
        """Expert with the highest cumulative return over the test window."""
        finals = {e: self.cumulative(e)[-1] for e in self.expert_ids}
        return max(finals, key=finals.get)


def run_backtest(returns, config=None):
    config = config or BacktestConfig()
    months = config.test_months()
    first_needed = pd.Period(config.train_start, freq="M")
    if returns.dates[0] > first_needed or returns.dates[-1] < months[-1]:
        raise InsufficientDataError(
            f"return table covers {returns.dates[0]}..{returns.dates[-1]}, "
            f"backtest needs {first_needed}..{months[-1]}"
        )
    table = returns.rows(0, returns.position(months[-1]) + 1)
    expert_ids = tuple(e.name for e in config.experts.experts)
    J = len(expert_ids)
    strategies = (GBPS, *expert_ids, EQUAL_WEIGHT, UNIFORM_ASSETS) if config.baselines else (GBPS,)

    rng = np.random.default_rng(config.seed)
    cloud = init_particles(J, config.n_particles, config.prior_alpha, rng)
    records = []
    for month in months:
        pos = table.position(month)
        try:
            bank = build_expert_bank(table, pos, config.experts)
            ensemble = PredictiveEnsemble([f.loss_predictive for f in bank])
            cloud, summary = step(cloud, ensemble, config.evolution, rng, config.lam)
        except GBPSError as exc:
            exc.args = (f"{month}: {exc}",)
            raise
        theta = summary.mean
        W = np.vstack([f.policy for f in bank])
        alloc = ensemble_policy(theta, W)
        r = table.returns[pos]
        realized = -(W @ r)
        rets = {GBPS: float(alloc @ r)}
        if config.baselines:
            rets.update({e: float(-z) for e, z in zip(expert_ids, realized)})
            rets[EQUAL_WEIGHT] = float(W.mean(axis=0) @ r)
            rets[UNIFORM_ASSETS] = float(r.mean())
        records.append(
            PeriodRecord(
                month,
                theta,
                alloc,
                np.array([f.loss_predictive.mean for f in bank]),
                realized,
                rets,
                summary.ess,
                summary.resampled,
            )
        )
        log.debug("%s theta=%s ess=%.1f", month, np.round(theta, 4), summary.ess)
    return BacktestReport(expert_ids, table.assets, strategies, records, config.n_particles, config.seed)


def _write_rows(path, header, rows):
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def emit_report(report, out_dir):
    """Write ``cumulative.csv``, ``weights.csv`` and ``diagnostics.csv``."""
    if not report.records:
        raise ValidationError("report has no periods")
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create report directory {out}: {exc}") from exc
    dates = [str(d) for d in report.dates]

    cum = np.column_stack([report.cumulative(s) for s in report.strategies])
    _write_rows(
        out / "cumulative.csv",
        ["date", *report.strategies],
        ([d, *map(_fmt, row)] for d, row in zip(dates, cum)),
    )
    _write_rows(
        out / "weights.csv",
        ["date", *report.expert_ids],
        ([d, *map(_fmt, rec.theta)] for d, rec in zip(dates, report.records)),
    )
    header = (
        ["date", "ess", "ess_fraction", "resampled"]
        + [f"predicted_loss:{e}" for e in report.expert_ids]
        + [f"realized_loss:{e}" for e in report.expert_ids]
        + [f"allocation:{a}" for a in report.assets]
    )
    rows = (
        [
            d,
            _fmt(rec.ess),
            _fmt(rec.ess / report.n_particles),
            str(int(rec.resampled)),
            *map(_fmt, rec.predicted_loss),
            *map(_fmt, rec.realized_loss),
            *map(_fmt, rec.allocation),
        ]
        for d, rec in zip(dates, report.records)
    )
    _write_rows(out / "diagnostics.csv", header, rows)
    return [out / "cumulative.csv", out / "weights.csv", out / "diagnostics.csv"]
