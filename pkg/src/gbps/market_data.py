"""Monthly price/return tables, CSV ingestion, windowing and synthetic markets.

Dates are monthly ``pandas.Period`` values. Returns are simple (arithmetic)
returns, so a portfolio's period return is the allocation-weighted sum of the
asset returns and cumulative performance compounds as ``prod(1 + r) - 1``.
"""

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from .errors import DataFormatError, InsufficientDataError, ValidationError


def _check_calendar(dates):
    if len(dates) > 1:
        steps = np.diff(dates.asi8)
        if np.any(steps <= 0):
            bad = int(np.argmax(steps <= 0)) + 1
            kind = "duplicate" if steps[bad - 1] == 0 else "non-monotone"
            raise DataFormatError(f"{kind} dates at {dates[bad]}")
        if np.any(steps != 1):
            bad = int(np.argmax(steps != 1)) + 1
            raise DataFormatError(f"gap in monthly sequence before {dates[bad]}")


def _as_months(dates):
    idx = pd.PeriodIndex(dates, freq="M")
    _check_calendar(idx)
    return idx


@dataclass(frozen=True)
class PriceTable:
    dates: pd.PeriodIndex
    assets: tuple
    prices: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_months(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))
        p = np.asarray(self.prices, dtype=float)
        if p.shape != (len(self.dates), len(self.assets)):
            raise ValidationError(
                f"price matrix shape {p.shape} does not match "
                f"{len(self.dates)} dates x {len(self.assets)} assets"
            )
        if not np.all(np.isfinite(p)) or np.any(p <= 0):
            raise ValidationError("prices must be finite and positive")
        object.__setattr__(self, "prices", p)


@dataclass(frozen=True)
class ReturnTable:
    dates: pd.PeriodIndex
    assets: tuple
    returns: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "dates", _as_months(self.dates))
        object.__setattr__(self, "assets", tuple(self.assets))
        r = np.asarray(self.returns, dtype=float)
        if r.shape != (len(self.dates), len(self.assets)):
            raise ValidationError(
                f"return matrix shape {r.shape} does not match "
                f"{len(self.dates)} dates x {len(self.assets)} assets"
            )
        if not np.all(np.isfinite(r)) or np.any(r <= -1):
            raise ValidationError("returns must be finite and greater than -1")
        object.__setattr__(self, "returns", r)

    def __len__(self):
        return len(self.dates)

    @property
    def n_assets(self):
        return len(self.assets)

    def position(self, when):
        """Row index of ``when``.

        Accepts an integer row index, a ``Period`` or a ``YYYY-MM`` string.
        The month right after the last row maps to ``len(self)`` so that
        forecasts for the next, not yet observed, month can be windowed.
        """
        if isinstance(when, (int, np.integer)):
            i = int(when)
        else:
            p = pd.Period(when, freq="M")
            i = (p - self.dates[0]).n
        if not 0 <= i <= len(self):
            raise InsufficientDataError(f"date {when} outside table range")
        return i

    def rows(self, start, stop):
        return ReturnTable(self.dates[start:stop], self.assets, self.returns[start:stop])

    def to_frame(self):
        return pd.DataFrame(self.returns, index=self.dates, columns=list(self.assets))


def load_prices_csv(path):
    """Read a ``date,<asset1>,...`` monthly price file.

    Dates are ``YYYY-MM``; prices are plain decimals. Shuffled, duplicate or
    gapped months are rejected, never repaired.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise DataFormatError("empty file", line=1) from None
        if len(header) < 2 or header[0].strip() != "date":
            raise DataFormatError("header must be 'date,<asset1>,...'", line=1)
        assets = tuple(h.strip() for h in header[1:])
        if len(set(assets)) != len(assets) or any(not a for a in assets):
            raise DataFormatError("asset labels must be non-empty and unique", line=1)
        dates, rows = [], []
        for line_no, rec in enumerate(reader, start=2):
            if not rec or all(not c.strip() for c in rec):
                continue
            if len(rec) != len(header):
                raise DataFormatError(
                    f"expected {len(header)} fields, got {len(rec)}", line=line_no
                )
            stamp = rec[0].strip()
            if len(stamp) != 7 or stamp[4] != "-":
                raise DataFormatError(f"bad date {stamp!r}, want YYYY-MM", line=line_no, column="date")
            try:
                dates.append(pd.Period(stamp, freq="M"))
            except ValueError:
                raise DataFormatError(f"bad date {stamp!r}", line=line_no, column="date") from None
            row = []
            for name, cell in zip(assets, rec[1:]):
                cell = cell.strip()
                if not cell:
                    raise DataFormatError("missing price", line=line_no, column=name)
                try:
                    price = float(cell)
                except ValueError:
                    raise DataFormatError(f"unparseable price {cell!r}", line=line_no, column=name) from None
                if not np.isfinite(price) or price <= 0:
                    raise DataFormatError(f"non-positive price {cell!r}", line=line_no, column=name)
                row.append(price)
            rows.append(row)
    if not rows:
        raise DataFormatError("no data rows", line=2)
    idx = pd.PeriodIndex(dates, freq="M")
    _check_calendar(idx)
    return PriceTable(idx, assets, np.array(rows))


def to_returns(prices):
    """Simple monthly returns; the output has one row fewer than the input."""
    if len(prices.dates) < 2:
        raise InsufficientDataError("need at least two price rows to form returns")
    p = prices.prices
    return ReturnTable(prices.dates[1:], prices.assets, p[1:] / p[:-1] - 1.0)


def window(table, end, months):
    """The ``months`` rows strictly before ``end`` (no lookahead)."""
    months = int(months)
    if months < 1:
        raise ValidationError(f"window length must be >= 1, got {months}")
    stop = table.position(end)
    start = stop - months
    if start < 0:
        raise InsufficientDataError(
            f"window of {months} months before {end} needs {months} rows, only {stop} available"
        )
    return table.rows(start, stop)


@dataclass(frozen=True)
class Regime:
    """One segment of a synthetic market. ``start``/``end`` are 1-based, inclusive."""

    start: int
    mean: tuple
    vol: tuple
    end: int = None


def generate_synthetic(n_assets, n_months, regimes, seed, start="2000-01", assets=None):
    """I.i.d. Gaussian monthly returns, piecewise constant in mean and volatility.

    Returns are truncated below at -0.99 so they stay valid simple returns.
    """
    K, T = int(n_assets), int(n_months)
    if K < 1 or T < 1:
        raise ValidationError("need at least one asset and one month")
    if not regimes:
        raise ValidationError("regime list is empty")
    regimes = sorted(regimes, key=lambda r: r.start)
    if regimes[0].start != 1:
        raise ValidationError(f"regimes leave a gap: first segment starts at {regimes[0].start}")
    bounds = []
    for i, reg in enumerate(regimes):
        nxt = regimes[i + 1].start if i + 1 < len(regimes) else T + 1
        if nxt == reg.start:
            raise ValidationError(f"overlapping regimes starting at {reg.start}")
        stop = nxt - 1
        if reg.end is not None and reg.end != stop:
            kind = "gap" if reg.end < stop else "overlap"
            raise ValidationError(f"regime {reg.start}..{reg.end}: {kind} before next segment")
        if stop > T or reg.start > T:
            raise ValidationError(f"regime starting at {reg.start} lies beyond {T} months")
        mu = np.asarray(reg.mean, dtype=float)
        sd = np.asarray(reg.vol, dtype=float)
        if mu.shape != (K,) or sd.shape != (K,) or np.any(sd < 0):
            raise ValidationError(f"regime at {reg.start}: need {K} means and {K} non-negative vols")
        bounds.append((reg.start - 1, stop, mu, sd))

    rng = np.random.default_rng(seed)
    out = np.empty((T, K))
    for lo, hi, mu, sd in bounds:
        out[lo:hi] = mu + sd * rng.standard_normal((hi - lo, K))
    np.maximum(out, -0.99, out=out)
    dates = pd.period_range(start=pd.Period(start, freq="M"), periods=T, freq="M")
    labels = tuple(assets) if assets is not None else tuple(f"A{k + 1}" for k in range(K))
    return ReturnTable(dates, labels, out)


def returns_to_prices(table, initial=100.0):
    """Price path (with a base row one month before the first return)."""
    levels = initial * np.vstack([np.ones(table.n_assets), np.cumprod(1.0 + table.returns, axis=0)])
    dates = pd.period_range(end=table.dates[-1], periods=len(table) + 1, freq="M")
    return PriceTable(dates, table.assets, levels)


def write_table_csv(path, dates, assets, values):
    with Path(path).open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["date", *assets])
        for d, row in zip(dates, values):
            w.writerow([str(d), *(format(float(x), ".12g") for x in row)])
