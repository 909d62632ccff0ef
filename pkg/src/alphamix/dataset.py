"""Feature computation, labeling, windowing, and chronological splits.

Eleven features per stock-day, in this fixed order:

    z_open       open_t / close_t - 1
    z_high       high_t / close_t - 1
    z_low        low_t / close_t - 1
    z_close      close_t / close_{t-1} - 1
    z_adj_close  adj_close_t / adj_close_{t-1} - 1
    z_d_k        mean(adj_close over last k bars incl. t) / adj_close_t - 1
                 for k in {5, 10, 15, 20, 25, 30}

Features are undefined on a stock's first 30 bars and are skipped there, never
zero-filled. A sample anchored at bar t packs the feature rows of bars
t-k .. t plus a movement label y (1 iff close rises over the next tau bars)
and the return rate r over the same horizon. Windows and labels index each
stock's own bar sequence, so a stock missing calendar days simply contributes
no samples anchored on those days.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alphamix.marketdata import Bar, MarketFrame

FEATURE_NAMES = (
    "z_open", "z_high", "z_low", "z_close", "z_adj_close",
    "z_d_5", "z_d_10", "z_d_15", "z_d_20", "z_d_25", "z_d_30",
)
N_FEATURES = len(FEATURE_NAMES)
MA_WINDOWS = (5, 10, 15, 20, 25, 30)
MIN_HISTORY = 30  # first bar index with a defined feature row


class ConfigError(ValueError):
    """A split or windowing request that cannot produce data."""


def compute_features(bars: list[Bar], t: int) -> np.ndarray | None:
    """Feature row for bar index t, or None when history is insufficient."""
    if t < MIN_HISTORY or t >= len(bars):
        return None
    bar = bars[t]
    prev = bars[t - 1]
    row = np.empty(N_FEATURES)
    row[0] = bar.open / bar.close - 1.0
    row[1] = bar.high / bar.close - 1.0
    row[2] = bar.low / bar.close - 1.0
    row[3] = bar.close / prev.close - 1.0
    row[4] = bar.adj_close / prev.adj_close - 1.0
    for i, k in enumerate(MA_WINDOWS):
        mean = sum(bars[t - j].adj_close for j in range(k)) / k
        row[5 + i] = mean / bar.adj_close - 1.0
    return row


def make_labels(bars: list[Bar], t: int, tau: int = 1) -> tuple[int, float] | None:
    """(movement, return) over the next tau bars, or None past the series end.

    Movement is 1 only for a strict close-price rise; an unchanged price
    labels 0.
    """
    if t + tau >= len(bars) or t < 0:
        return None
    p_now = bars[t].close
    p_fwd = bars[t + tau].close
    y = 1 if p_fwd > p_now else 0
    r = (p_fwd - p_now) / p_now
    return y, r


@dataclass(frozen=True)
class Sample:
    """One windowed training/evaluation instance for a stock-day."""

    stock: str
    date: dt.date
    window: np.ndarray  # (k+1, N_FEATURES) raw feature rows, oldest first
    y: int
    r: float


@dataclass(frozen=True)
class SplitSpec:
    """Chronological train/valid/test boundaries (all ends inclusive).

    train: [start, train_end], valid: (train_end, valid_end],
    test: (valid_end, test_end]. A sample belongs to the split containing its
    anchor date, and its label date must fall inside the same split, so no
    split ever uses another split's future prices.
    """

    train_end: dt.date
    valid_end: dt.date
    start: dt.date | None = None
    test_end: dt.date | None = None

    def __post_init__(self):
        if self.start is not None and self.start > self.train_end:
            raise ConfigError(f"split start {self.start} after train_end {self.train_end}")
        if not (self.train_end < self.valid_end):
            raise ConfigError(f"train_end {self.train_end} must precede valid_end {self.valid_end}")
        if self.test_end is not None and not (self.valid_end < self.test_end):
            raise ConfigError(f"valid_end {self.valid_end} must precede test_end {self.test_end}")

    @classmethod
    def from_fractions(cls, calendar: tuple[dt.date, ...],
                       train_frac: float, valid_frac: float) -> "SplitSpec":
        """Carve the calendar by fractions (remainder is the test split)."""
        if not (0 < train_frac < 1 and 0 < valid_frac < 1 and train_frac + valid_frac < 1):
            raise ConfigError(f"bad split fractions train={train_frac} valid={valid_frac}")
        n = len(calendar)
        i_train = int(n * train_frac) - 1
        i_valid = int(n * (train_frac + valid_frac)) - 1
        if i_train < 0 or i_valid <= i_train or i_valid >= n - 1:
            raise ConfigError(f"calendar of {n} days too short for fractions")
        return cls(train_end=calendar[i_train], valid_end=calendar[i_valid],
                   start=calendar[0], test_end=calendar[-1])

    def split_of(self, anchor: dt.date, label_day: dt.date) -> str | None:
        """Split name for a sample, or None if it straddles a boundary."""
        lo = self.start or dt.date.min
        hi = self.test_end or dt.date.max
        if not (lo <= anchor and label_day <= hi):
            return None
        if label_day <= self.train_end:
            return "train"
        if anchor > self.train_end and label_day <= self.valid_end:
            return "valid"
        if anchor > self.valid_end:
            return "test"
        return None


@dataclass
class FeatureStats:
    """Per-feature standardization statistics from the training split only."""

    mean: np.ndarray  # (N_FEATURES,)
    std: np.ndarray   # (N_FEATURES,), zero-variance features pinned to 1.0

    @classmethod
    def fit(cls, samples: list[Sample]) -> "FeatureStats":
        rows = np.concatenate([s.window for s in samples], axis=0)
        mean = rows.mean(axis=0)
        std = rows.std(axis=0)
        std[std == 0.0] = 1.0
        return cls(mean, std)

    def apply(self, window: np.ndarray) -> np.ndarray:
        return (window - self.mean) / self.std


class SplitData:
    """The three sample collections plus train-fitted normalization.

    Split access is recorded in ``access_log`` so leakage audits can assert
    that a selection procedure never touched the test split; ``mark()`` drops
    named markers into the same log.
    """

    def __init__(self, train: list[Sample], valid: list[Sample], test: list[Sample],
                 stats: FeatureStats, k: int, tau: int, split: SplitSpec):
        self._train = train
        self._valid = valid
        self._test = test
        self.stats = stats
        self.k = k
        self.tau = tau
        self.split = split
        self.access_log: list[str] = []

    @property
    def train(self) -> list[Sample]:
        self.access_log.append("train")
        return self._train

    @property
    def valid(self) -> list[Sample]:
        self.access_log.append("valid")
        return self._valid

    @property
    def test(self) -> list[Sample]:
        self.access_log.append("test")
        return self._test

    def mark(self, label: str) -> None:
        self.access_log.append(f"mark:{label}")

    @property
    def input_dim(self) -> int:
        return N_FEATURES * (self.k + 1)

    def matrix(self, samples: list[Sample]) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Standardized flattened inputs X (N, input_dim), labels y, returns r."""
        n = len(samples)
        x = np.empty((n, self.input_dim))
        y = np.empty(n, dtype=np.intp)
        r = np.empty(n)
        for i, s in enumerate(samples):
            x[i] = self.stats.apply(s.window).reshape(-1)
            y[i] = s.y
            r[i] = s.r
        return x, y, r


def build_dataset(frame: MarketFrame, k: int, tau: int, split: SplitSpec) -> SplitData:
    """Assemble windowed samples per stock and divide them chronologically.

    A valid anchor t needs feature rows for bars t-k..t (so t >= 30+k) and a
    label tau bars ahead inside the same split.
    """
    if k < 0 or tau < 1:
        raise ConfigError(f"window length k={k} must be >= 0 and horizon tau={tau} >= 1")
    buckets: dict[str, list[Sample]] = {"train": [], "valid": [], "test": []}
    for sid, bars in frame.stocks.items():
        feats: list[np.ndarray | None] = [compute_features(bars, t) for t in range(len(bars))]
        for t in range(MIN_HISTORY + k, len(bars) - tau):
            labeled = make_labels(bars, t, tau)
            if labeled is None:
                continue
            name = split.split_of(bars[t].date, bars[t + tau].date)
            if name is None:
                continue
            window_rows = feats[t - k : t + 1]
            if any(row is None for row in window_rows):
                continue
            y, r = labeled
            buckets[name].append(Sample(sid, bars[t].date, np.stack(window_rows), y, r))
    for name in ("train", "valid", "test"):
        if not buckets[name]:
            raise ConfigError(
                f"the {name} split produced no samples; widen its date range "
                f"(each stock needs {MIN_HISTORY + k} bars of history plus a {tau}-bar horizon)"
            )
    for bucket in buckets.values():
        bucket.sort(key=lambda s: (s.date, s.stock))
    stats = FeatureStats.fit(buckets["train"])
    return SplitData(buckets["train"], buckets["valid"], buckets["test"],
                     stats, k, tau, split)


def write_manifest(path: str | Path, data: SplitData) -> None:
    """Record split boundaries, windowing, and normalization as key = value text."""
    lines = [
        f"k = {data.k}",
        f"tau = {data.tau}",
        f"split.start = {data.split.start}",
        f"split.train_end = {data.split.train_end}",
        f"split.valid_end = {data.split.valid_end}",
        f"split.test_end = {data.split.test_end}",
        f"n_train = {len(data._train)}",
        f"n_valid = {len(data._valid)}",
        f"n_test = {len(data._test)}",
    ]
    for i, name in enumerate(FEATURE_NAMES):
        lines.append(f"feature_mean.{name} = {float(data.stats.mean[i])!r}")
    for i, name in enumerate(FEATURE_NAMES):
        lines.append(f"feature_std.{name} = {float(data.stats.std[i])!r}")
    Path(path).write_text("\n".join(lines) + "\n")
