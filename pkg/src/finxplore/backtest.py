"""Deterministic strategy evaluation over a trade panel plus the six report metrics.

Percent-valued metrics (cumulative/annualized return, volatility) are returned
as percent; max drawdown is a fraction in [0, 1); Sharpe and Calmar are ratios.
Annualization uses 252 trading days and sample (ddof=1) standard deviations.
"""

from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field

import numpy as np

from .data import DEFAULT_WARMUP, PricePanel
from .environment import (
    INITIAL_CAPITAL,
    REWARD_WINDOW,
    TRANSACTION_COST,
    PortfolioEnv,
)
from .errors import EmptyCurveError, TooShortError, ZeroDispersionError
from .indicators import COV_WINDOW

TRADING_DAYS_PER_YEAR = 252

CONVENTIONS = {
    "trading_days_per_year": TRADING_DAYS_PER_YEAR,
    "sharpe": "sqrt(252) * mean(daily_return - rf) / std(daily_return, ddof=1)",
    "annualized_return": "(wealth_end / wealth_start) ** (252 / n_periods) - 1",
    "annual_volatility": "sqrt(252) * std(daily_return, ddof=1)",
    "calmar": "annualized_return / max_drawdown (both as fractions)",
    "max_drawdown": "max over t of (running_peak - wealth_t) / running_peak",
}


@dataclass(frozen=True)
class EquityCurve:
    """Wealth series over trading dates; per-period returns derive from ratios."""

    dates: tuple[dt.date, ...]
    wealth: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "wealth", np.asarray(self.wealth, dtype=np.float64))
        if len(self.dates) != self.wealth.shape[0]:
            raise ValueError("dates and wealth lengths differ")
        if self.wealth.size and np.any(self.wealth <= 0):
            raise ValueError("wealth must stay positive")

    def __len__(self) -> int:
        return self.wealth.shape[0]

    @property
    def returns(self) -> np.ndarray:
        return self.wealth[1:] / self.wealth[:-1] - 1.0

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(("date", "wealth"))
            for date, w in zip(self.dates, self.wealth):
                writer.writerow((date.isoformat(), repr(float(w))))

    @classmethod
    def read_csv(cls, path) -> "EquityCurve":
        dates, wealth = [], []
        with open(path, newline="") as fh:
            reader = csv.reader(fh)
            next(reader)
            for row in reader:
                dates.append(dt.date.fromisoformat(row[0]))
                wealth.append(float(row[1]))
        return cls(tuple(dates), np.array(wealth))


def cumulative_return(curve: EquityCurve) -> float:
    """Total return over the curve, in percent."""
    if len(curve) == 0:
        raise EmptyCurveError("empty equity curve")
    return float((curve.wealth[-1] / curve.wealth[0] - 1.0) * 100.0)


def annualized_return(curve: EquityCurve) -> float:
    """Geometric annualization over 252 trading days, in percent."""
    if len(curve) < 2:
        raise TooShortError("annualized return needs >= 2 points")
    periods = len(curve) - 1
    growth = curve.wealth[-1] / curve.wealth[0]
    return float((growth ** (TRADING_DAYS_PER_YEAR / periods) - 1.0) * 100.0)


def sharpe_annual(curve: EquityCurve, risk_free: float = 0.0) -> float:
    """Annualized Sharpe ratio of daily returns."""
    r = curve.returns
    if r.size < 2:
        raise TooShortError("Sharpe needs >= 2 returns")
    sigma = r.std(ddof=1)
    if sigma < 1e-12:
        raise ZeroDispersionError("returns have zero dispersion")
    return float(math.sqrt(TRADING_DAYS_PER_YEAR) * (r.mean() - risk_free) / sigma)


def max_drawdown(curve: EquityCurve) -> float:
    """Largest peak-to-trough fractional loss, in [0, 1)."""
    if len(curve) == 0:
        raise EmptyCurveError("empty equity curve")
    peaks = np.maximum.accumulate(curve.wealth)
    return float(((peaks - curve.wealth) / peaks).max())


def annual_volatility(curve: EquityCurve) -> float:
    """Annualized dispersion of daily returns, in percent."""
    r = curve.returns
    if r.size < 2:
        raise TooShortError("volatility needs >= 2 returns")
    return float(math.sqrt(TRADING_DAYS_PER_YEAR) * r.std(ddof=1) * 100.0)


def calmar(curve: EquityCurve) -> float:
    """Annualized return over max drawdown; +/-inf sentinel when drawdown is 0."""
    dd = max_drawdown(curve)
    ann = annualized_return(curve) / 100.0
    if dd == 0.0:
        if ann == 0.0:
            return 0.0
        return math.inf if ann > 0 else -math.inf
    return float(ann / dd)


@dataclass(frozen=True)
class MetricsReport:
    """The six performance metrics with degenerate-case flags."""

    cumulative_return: float  # percent
    annualized_return: float  # percent
    sharpe: float | None  # annualized ratio; None when dispersion is zero
    calmar: float  # ratio; +/-inf when drawdown is zero
    annual_volatility: float  # percent
    max_drawdown: float  # fraction in [0, 1)
    zero_drawdown: bool
    zero_dispersion: bool
    trading_days_per_year: int = TRADING_DAYS_PER_YEAR

    def to_dict(self) -> dict:
        return {
            "cumulative_return_pct": self.cumulative_return,
            "annualized_return_pct": self.annualized_return,
            "sharpe": self.sharpe,
            "calmar": self.calmar if math.isfinite(self.calmar) else None,
            "annual_volatility_pct": self.annual_volatility,
            "max_drawdown": self.max_drawdown,
            "flags": {
                "zero_drawdown": self.zero_drawdown,
                "zero_dispersion": self.zero_dispersion,
            },
            "conventions": CONVENTIONS,
        }

    def csv_row(self) -> dict:
        return {
            "cumulative_return_pct": self.cumulative_return,
            "annualized_return_pct": self.annualized_return,
            "sharpe": "" if self.sharpe is None else self.sharpe,
            "calmar": self.calmar,
            "annual_volatility_pct": self.annual_volatility,
            "max_drawdown": self.max_drawdown,
        }


def compute_metrics(curve: EquityCurve) -> MetricsReport:
    dd = max_drawdown(curve)
    try:
        sharpe = sharpe_annual(curve)
        zero_dispersion = False
    except ZeroDispersionError:
        sharpe = None
        zero_dispersion = True
    return MetricsReport(
        cumulative_return=cumulative_return(curve),
        annualized_return=annualized_return(curve),
        sharpe=sharpe,
        calmar=calmar(curve),
        annual_volatility=annual_volatility(curve),
        max_drawdown=dd,
        zero_drawdown=dd == 0.0,
        zero_dispersion=zero_dispersion,
    )


def quarterly_returns(curve: EquityCurve) -> list[tuple[str, float]]:
    """Compounded return per calendar quarter (keyed by each return's end date)."""
    out: list[tuple[str, float]] = []
    growth = {}
    order = []
    for date, r in zip(curve.dates[1:], curve.returns):
        key = f"{date.year}Q{(date.month - 1) // 3 + 1}"
        if key not in growth:
            growth[key] = 1.0
            order.append(key)
        growth[key] *= 1.0 + r
    for key in order:
        out.append((key, growth[key] - 1.0))
    return out


@dataclass
class BacktestResult:
    curve: EquityCurve
    trace: list[dict] = field(default_factory=list)
    metrics: MetricsReport | None = None


def run_backtest(
    strategy,
    panel: PricePanel,
    extended_panel: PricePanel | None = None,
    *,
    start_index: int = DEFAULT_WARMUP,
    transaction_cost: float = TRANSACTION_COST,
    reward_window: int = REWARD_WINDOW,
    initial_capital: float = INITIAL_CAPITAL,
    cov_window: int = COV_WINDOW,
) -> BacktestResult:
    """Step a strategy through the environment in evaluation mode.

    All weight-producing strategies pay the same turnover cost; the strategy
    sees each state and returns a decision, the environment executes it.
    """
    env = PortfolioEnv(
        panel,
        extended_panel,
        normalizer=strategy.state_normalizer(),
        transaction_cost=transaction_cost,
        reward_window=reward_window,
        initial_capital=initial_capital,
        cov_window=cov_window,
        start_index=start_index,
    )
    strategy.prepare(env)
    state = env.reset()
    trace: list[dict] = []
    while True:
        decision = strategy.decide(state)
        state, _, done, info = env.step(decision.executed_weights, decision.candidate)
        record = decision.to_record()
        record.update(info.to_record())
        record["wealth"] = env.account.wealth
        trace.append(record)
        if done:
            break
    dates = tuple(entry[0] for entry in env.account.history)
    wealth = np.array([entry[1] for entry in env.account.history])
    curve = EquityCurve(dates, wealth)
    return BacktestResult(curve=curve, trace=trace, metrics=compute_metrics(curve))


def write_trace_jsonl(trace: list[dict], path) -> None:
    with open(path, "w") as fh:
        for record in trace:
            fh.write(json.dumps(record, sort_keys=True))
            fh.write("\n")
