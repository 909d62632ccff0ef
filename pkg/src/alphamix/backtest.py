"""Daily top-k buy & hold strategy with a certainty filter, plus risk metrics.

Signals for trading day t+1 are computed from windows ending at day t (the
sample's anchor); the realized portfolio return is the anchor sample's own
next-bar return, so positions never see information past the previous close.

A stock is "certain" when its aggregated movement and return predictions
agree in direction: rising (p_up >= 0.5, with 0.5 counting as up) with a
non-negative return estimate, or falling with a negative one. Each day the
strategy keeps the certain stocks predicted to rise, ranks them by p_up
(ties: higher return estimate, then stock id), buys the top k equal-weighted,
and sits in cash when nothing qualifies.

Metrics over the resulting equity curve / daily returns:

    TR   (final - initial) / initial
    SR   mean / population std of daily returns (NaN when std is zero)
    MDD  worst peak-to-trough fraction of the curve
    CR   mean daily return / MDD (+inf when the curve never draws down)
    SoR  mean daily return / downside deviation, where the downside deviation
         is the population std of the negative returns only (+inf when there
         is no negative return or they are all identical); a variance mode
         divides by their variance instead.
"""

from __future__ import annotations

import datetime as dt
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from alphamix.dataset import Sample, SplitData
from alphamix.moe import MoEModel
from alphamix.router import RouterBank, route_inference

log = logging.getLogger(__name__)


class CalendarMismatch(ValueError):
    """Signals and realized returns disagree on the trading calendar."""


@dataclass(frozen=True)
class StockSignal:
    stock: str
    p_up: float
    r_hat: float
    experts_used: int
    certain: bool


DaySignals = dict[str, StockSignal]


def certainty(p_up: float, r_hat: float) -> bool:
    """Consistent direction on both tasks; p_up = 0.5 counts as rising and
    r_hat = 0 as positive."""
    rising = p_up >= 0.5
    positive = r_hat >= 0.0
    return rising == positive


def signals_from_model(model: MoEModel, bank: RouterBank | None,
                       data: SplitData, samples: list[Sample]) -> dict[dt.date, DaySignals]:
    """Aggregated per stock-day signals via sequential routing (full ensemble
    when bank is None). Stocks without a sample on a day are simply absent."""
    x, _, _ = data.matrix(samples)
    m, p_mean, r_mean = route_inference(bank, model, x)
    signals: dict[dt.date, DaySignals] = {}
    for i, s in enumerate(samples):
        signals.setdefault(s.date, {})[s.stock] = StockSignal(
            s.stock, float(p_mean[i]), float(r_mean[i]), int(m[i]),
            certainty(float(p_mean[i]), float(r_mean[i])))
    return signals


def realized_returns(samples: list[Sample]) -> dict[dt.date, dict[str, float]]:
    """Next-bar return per stock-day, keyed like the signals."""
    out: dict[dt.date, dict[str, float]] = {}
    for s in samples:
        out.setdefault(s.date, {})[s.stock] = s.r
    return out


@dataclass(frozen=True)
class Position:
    date: dt.date
    held: tuple[str, ...]
    weight: float  # per held stock; 0 when in cash
    day_return: float
    experts_used_mean: float


@dataclass
class BacktestReport:
    dates: list[dt.date]
    equity: np.ndarray         # len(dates)+1 values, starts at 1.0
    daily_returns: np.ndarray  # len(dates)
    positions: list[Position]
    metrics: dict[str, float]
    top_k: int

    def write_metrics(self, path: str | Path) -> None:
        lines = [f"{name} = {float(value)!r}" for name, value in self.metrics.items()]
        Path(path).write_text("\n".join(lines) + "\n")

    def write_equity_csv(self, path: str | Path) -> None:
        lines = ["date,net_value,daily_return,n_held,experts_used_mean"]
        for i, date in enumerate(self.dates):
            p = self.positions[i]
            lines.append(f"{date},{float(self.equity[i + 1])!r},"
                         f"{float(self.daily_returns[i])!r},"
                         f"{len(p.held)},{float(p.experts_used_mean)!r}")
        Path(path).write_text("\n".join(lines) + "\n")

    def write_positions_csv(self, path: str | Path) -> None:
        lines = ["date,stocks,weight,day_return"]
        for p in self.positions:
            held = ";".join(p.held)
            lines.append(f"{p.date},{held},{float(p.weight)!r},{float(p.day_return)!r}")
        Path(path).write_text("\n".join(lines) + "\n")


def run_strategy(signals: dict[dt.date, DaySignals],
                 realized: dict[dt.date, dict[str, float]],
                 top_k: int,
                 use_certainty: bool = True,
                 cost_per_trade: float = 0.0,
                 annualize: bool = False,
                 sor_variance_mode: bool = False) -> BacktestReport:
    """Simulate the daily strategy and compute the metric set.

    cost_per_trade is a proportional per-side cost; a held day pays it twice
    (buy at open, sell at close).
    """
    if top_k < 1:
        raise ValueError(f"top_k must be >= 1, got {top_k}")
    sig_days = sorted(signals)
    real_days = sorted(realized)
    for a, b in zip(sig_days, real_days):
        if a != b:
            raise CalendarMismatch(f"signals and realized returns diverge at {min(a, b)}")
    if len(sig_days) != len(real_days):
        extra = sig_days[len(real_days):] if len(sig_days) > len(real_days) else real_days[len(sig_days):]
        raise CalendarMismatch(f"signals and realized returns diverge at {extra[0]}")

    positions: list[Position] = []
    daily = np.zeros(len(sig_days))
    for i, day in enumerate(sig_days):
        day_real = realized[day]
        candidates = [s for s in signals[day].values()
                      if s.stock in day_real and s.p_up >= 0.5
                      and (s.certain or not use_certainty)]
        candidates.sort(key=lambda s: (-s.p_up, -s.r_hat, s.stock))
        chosen = candidates[:top_k]
        if chosen:
            gross = float(np.mean([day_real[s.stock] for s in chosen]))
            ret = gross - 2.0 * cost_per_trade
            weight = 1.0 / len(chosen)
            experts_mean = float(np.mean([s.experts_used for s in chosen]))
        else:
            ret = 0.0
            weight = 0.0
            experts_mean = 0.0
        daily[i] = ret
        positions.append(Position(day, tuple(s.stock for s in chosen), weight,
                                  ret, experts_mean))

    equity = np.empty(len(daily) + 1)
    equity[0] = 1.0
    for i, r in enumerate(daily):
        equity[i + 1] = equity[i] * (1.0 + r)

    mdd, cr = metric_mdd_cr(equity, daily)
    if len(daily) >= 2:
        sr = metric_sr(daily, annualize=annualize)
    else:
        log.warning("Sharpe ratio undefined on a single-day backtest")
        sr = float("nan")
    metrics = {
        "tr": metric_tr(equity),
        "sr": sr,
        "cr": cr,
        "sor": metric_sor(daily, variance_mode=sor_variance_mode),
        "mdd": mdd,
        "n_days": float(len(daily)),
        "days_traded": float(sum(1 for p in positions if p.held)),
    }
    return BacktestReport(sig_days, equity, daily, positions, metrics, top_k)


# ---------------------------------------------------------------------------
# Metrics
# ---------------------------------------------------------------------------


def metric_tr(curve: np.ndarray) -> float:
    """Total return (final - initial) / initial of the net-value curve."""
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size < 2:
        raise ValueError("total return needs a curve of length >= 2")
    return float((curve[-1] - curve[0]) / curve[0])


def metric_sr(returns: np.ndarray, annualize: bool = False) -> float:
    """Sharpe ratio mean/std of daily returns (population std).

    Zero dispersion has no defined ratio; returns NaN with a warning.
    Annualization multiplies by sqrt(252) and is off by default.
    """
    returns = np.asarray(returns, dtype=np.float64)
    if returns.size < 2:
        raise ValueError("Sharpe ratio needs >= 2 returns")
    std = float(returns.std())
    # identical returns have zero dispersion by definition, independent of
    # rounding in the mean
    if std == 0.0 or returns.max() == returns.min():
        log.warning("Sharpe ratio undefined: zero standard deviation")
        return float("nan")
    sr = float(returns.mean()) / std
    return sr * float(np.sqrt(252.0)) if annualize else sr


def metric_mdd_cr(curve: np.ndarray, returns: np.ndarray) -> tuple[float, float]:
    """(maximum drawdown of the curve, mean return / MDD).

    A curve that never falls below a running peak has MDD 0 and an infinite
    Calmar ratio (flagged).
    """
    curve = np.asarray(curve, dtype=np.float64)
    if curve.size < 2:
        raise ValueError("drawdown needs a curve of length >= 2")
    peaks = np.maximum.accumulate(curve)
    mdd = float(((peaks - curve) / peaks).max())
    if mdd == 0.0:
        log.warning("Calmar ratio undefined: curve has no drawdown")
        return 0.0, float("inf")
    return mdd, float(np.mean(returns)) / mdd


def metric_sor(returns: np.ndarray, variance_mode: bool = False) -> float:
    """Sortino ratio: mean of all returns over the downside deviation.

    The downside deviation is the population std of the negative returns
    (their variance in variance_mode). No negative returns, or negatives with
    zero dispersion, make the ratio infinite (flagged).
    """
    returns = np.asarray(returns, dtype=np.float64)
    negatives = returns[returns < 0.0]
    if negatives.size == 0:
        log.warning("Sortino ratio undefined: no negative returns")
        return float("inf")
    dd = float(negatives.std())
    if variance_mode:
        dd = dd * dd
    if dd == 0.0 or negatives.max() == negatives.min():
        log.warning("Sortino ratio undefined: negative returns have zero dispersion")
        return float("inf")
    return float(returns.mean()) / dd


def render_equity_svg(dates: list[dt.date], equity: np.ndarray,
                      path: str | Path, title: str = "equity curve") -> None:
    """Render a net-value curve to SVG with deterministic bytes (fixed hash
    salt, no embedded date metadata)."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    with matplotlib.rc_context({"svg.hashsalt": "alphamix"}):
        fig, ax = plt.subplots(figsize=(8, 4))
        days = [dates[0] - dt.timedelta(days=1)] + list(dates)
        ax.plot(days, equity, lw=1.2)
        ax.set_xlabel("trading day")
        ax.set_ylabel("net value")
        ax.set_title(title)
        ax.grid(True, alpha=0.3)
        fig.autofmt_xdate()
        fig.savefig(path, format="svg", metadata={"Date": None})
        plt.close(fig)
