"""OHLCV bars, per-stock frames, CSV ingestion, and synthetic markets.

CSV layout (ISO-8601 dates):

    date,open,high,low,close,adj_close[,volume]

either one file per stock (stock id = file stem; pass a directory to load
them all) or a single long-format file with an extra leading ``symbol``
column. Rows may arrive out of order (sorted with a warning); duplicate or
non-positive prices and high/low violations are hard errors naming the file,
line, and field.
"""

from __future__ import annotations

import csv
import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or inconsistent market data."""


@dataclass(frozen=True)
class Bar:
    """One OHLCV observation. Prices positive, low <= open/close <= high."""

    date: dt.date
    open: float
    high: float
    low: float
    close: float
    adj_close: float
    volume: float | None = None


def validate_bar(bar: Bar, where: str = "") -> None:
    prefix = f"{where}: " if where else ""
    for field in ("open", "high", "low", "close", "adj_close"):
        value = getattr(bar, field)
        if not np.isfinite(value) or value <= 0.0:
            raise DataError(f"{prefix}non-positive or non-finite {field}={value} on {bar.date}")
    body_low = min(bar.open, bar.close)
    body_high = max(bar.open, bar.close)
    if not (bar.low <= body_low and body_high <= bar.high):
        raise DataError(
            f"{prefix}price bounds violated on {bar.date}: "
            f"low={bar.low} open={bar.open} close={bar.close} high={bar.high}"
        )


class MarketFrame:
    """Chronologically sorted bars per stock on a shared trading calendar.

    The calendar is the sorted union of all dates; a stock simply lacks an
    entry on days it did not trade (missing days are never filled in).
    """

    def __init__(self, stocks: dict[str, list[Bar]]):
        if not stocks:
            raise DataError("market frame holds no stocks")
        self.stocks: dict[str, list[Bar]] = {}
        for sid in sorted(stocks):
            bars = sorted(stocks[sid], key=lambda b: b.date)
            for i in range(1, len(bars)):
                if bars[i].date == bars[i - 1].date:
                    raise DataError(f"stock {sid}: duplicate date {bars[i].date}")
            for bar in bars:
                validate_bar(bar, where=f"stock {sid}")
            self.stocks[sid] = bars
        dates: set[dt.date] = set()
        for bars in self.stocks.values():
            dates.update(b.date for b in bars)
        self.calendar: tuple[dt.date, ...] = tuple(sorted(dates))

    @property
    def stock_ids(self) -> list[str]:
        return list(self.stocks)

    def n_days(self) -> int:
        return len(self.calendar)


_CSV_FIELDS = ("date", "open", "high", "low", "close", "adj_close")


def _parse_row(row: dict[str, str], file: str, line: int) -> tuple[str | None, Bar]:
    symbol = row.get("symbol")

    def num(field: str) -> float:
        raw = row.get(field)
        if raw is None or raw.strip() == "":
            raise DataError(f"{file}:{line}: missing field '{field}'")
        try:
            return float(raw)
        except ValueError:
            raise DataError(f"{file}:{line}: field '{field}' is not a number: {raw!r}") from None

    raw_date = row.get("date")
    if raw_date is None:
        raise DataError(f"{file}:{line}: missing field 'date'")
    try:
        date = dt.date.fromisoformat(raw_date.strip())
    except ValueError:
        raise DataError(f"{file}:{line}: field 'date' is not ISO-8601: {raw_date!r}") from None

    volume = None
    if row.get("volume") not in (None, ""):
        volume = num("volume")
    bar = Bar(date, num("open"), num("high"), num("low"), num("close"),
              num("adj_close"), volume)
    try:
        validate_bar(bar)
    except DataError as err:
        raise DataError(f"{file}:{line}: {err}") from None
    return symbol, bar


def _load_one_csv(path: Path, stocks: dict[str, list[Bar]]) -> None:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None:
            raise DataError(f"{path}: empty file")
        header = [h.strip() for h in reader.fieldnames]
        missing = [f for f in _CSV_FIELDS if f not in header]
        if missing:
            raise DataError(f"{path}: header missing fields {missing}")
        long_format = "symbol" in header
        prev_date: dt.date | None = None
        out_of_order = False
        for line, row in enumerate(reader, start=2):
            symbol, bar = _parse_row(row, str(path), line)
            if long_format:
                if not symbol or not symbol.strip():
                    raise DataError(f"{path}:{line}: missing field 'symbol'")
                sid = symbol.strip()
            else:
                sid = path.stem
            if prev_date is not None and bar.date < prev_date:
                out_of_order = True
            prev_date = bar.date
            stocks.setdefault(sid, []).append(bar)
        if out_of_order:
            log.warning("%s: rows were out of order by date; sorted", path)


def load_csv(path: str | Path) -> MarketFrame:
    """Load a CSV file or a directory of per-stock CSV files."""
    path = Path(path)
    stocks: dict[str, list[Bar]] = {}
    if path.is_dir():
        files = sorted(path.glob("*.csv"))
        if not files:
            raise DataError(f"{path}: no .csv files found")
        for f in files:
            _load_one_csv(f, stocks)
    else:
        _load_one_csv(path, stocks)
    return MarketFrame(stocks)


REGIMES = ("trend", "meanrevert", "noise")


def synth_market(seed: int, n_stocks: int, n_days: int, regime: str = "trend") -> MarketFrame:
    """Deterministic synthetic market of geometric random walks.

    Regimes shape the daily log-return process:

    * ``trend``      -- per-stock drift (positive on average, dispersed across
      stocks) plus AR(1) momentum that switches between calm stretches and
      high-persistence, low-noise bursts, so recent returns carry signal and
      part of the market is far more predictable than the rest.
    * ``meanrevert`` -- log price pulled back toward its slow anchor, so
      price-vs-moving-average features carry signal.
    * ``noise``      -- zero-drift i.i.d. returns; movement labels land near
      a 50/50 split.
    """
    if n_days < 60:
        raise DataError(f"synthetic market needs n_days >= 60, got {n_days}")
    if regime not in REGIMES:
        raise DataError(f"unknown regime {regime!r}; expected one of {REGIMES}")
    rng = np.random.default_rng(np.random.SeedSequence([int(seed), 0x5A17]))

    # Weekday calendar starting on a Monday.
    calendar: list[dt.date] = []
    day = dt.date(2000, 1, 3)
    while len(calendar) < n_days:
        if day.weekday() < 5:
            calendar.append(day)
        day += dt.timedelta(days=1)

    stocks: dict[str, list[Bar]] = {}
    for s in range(n_stocks):
        sid = f"S{s:03d}"
        base = rng.uniform(20.0, 200.0)
        if regime == "trend":
            sigma = rng.uniform(0.015, 0.03)
            drift = rng.normal(0.0008, 0.0015)
        else:
            sigma = rng.uniform(0.012, 0.022)
            drift = 0.0
            kappa = rng.uniform(0.04, 0.10)

        log_price = np.log(base)
        anchor = log_price
        prev_ret = 0.0
        in_burst = False
        closes = np.empty(n_days)
        for t in range(n_days):
            if regime == "trend":
                # two-state momentum: pure-noise calm stretches and sticky
                # bursts of strong, low-noise persistence
                stay = 0.92 if in_burst else 0.94
                if rng.uniform() > stay:
                    in_burst = not in_burst
                if in_burst:
                    ret = drift + 0.75 * prev_ret + rng.normal(0.0, 0.25 * sigma)
                else:
                    ret = drift + rng.normal(0.0, sigma)
            elif regime == "meanrevert":
                ret = kappa * (anchor - log_price) + rng.normal(0.0, sigma)
            else:
                ret = rng.normal(0.0, sigma)
            log_price += ret
            prev_ret = ret
            closes[t] = np.exp(log_price)

        bars = []
        for t in range(n_days):
            close = closes[t]
            ref = closes[t - 1] if t > 0 else close
            open_ = ref * (1.0 + rng.normal(0.0, 0.004))
            body_high = max(open_, close)
            body_low = min(open_, close)
            high = body_high * (1.0 + abs(rng.normal(0.0, 0.004)))
            low = body_low * (1.0 - abs(rng.normal(0.0, 0.004)))
            volume = float(np.round(rng.lognormal(11.0, 0.5)))
            bars.append(Bar(calendar[t], open_, high, low, close, close, volume))
        stocks[sid] = bars
    return MarketFrame(stocks)
