"""Technical indicators and the rolling return covariance for the state vector.

Conventions (standard textbook settings): MACD 12/26 with seeded EMAs,
Bollinger 20-day +/- 2 population sigma, RSI 14 Wilder, CCI 20 with 0.015,
ADX 14 Wilder, covariance over a 60-day window of simple returns.
Undefined warm-up entries are NaN; flat-window conventions (RSI 50, CCI 0,
DX 0) keep defined entries finite.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .data import PricePanel, ReturnPanel
from .errors import TooShortError

SMA_SHORT = 30
SMA_LONG = 60
COV_WINDOW = 60


def _require_length(series, minimum, what):
    if len(series) < minimum:
        raise TooShortError(f"{what} needs >= {minimum} points, got {len(series)}")


def sma(close, window: int):
    """Simple moving average; first window-1 entries are NaN."""
    if window < 1:
        raise ValueError("window must be >= 1")
    close = np.asarray(close, dtype=np.float64)
    _require_length(close, window, f"sma({window})")
    out = np.full(close.shape[0], np.nan)
    out[window - 1 :] = sliding_window_view(close, window).mean(axis=-1)
    return out


def ema(close, span: int):
    """Exponential moving average seeded with the first value, alpha=2/(span+1)."""
    close = np.asarray(close, dtype=np.float64)
    _require_length(close, 1, "ema")
    alpha = 2.0 / (span + 1.0)
    out = np.empty_like(close)
    out[0] = close[0]
    for t in range(1, close.shape[0]):
        out[t] = alpha * close[t] + (1.0 - alpha) * out[t - 1]
    return out


def macd(close, fast: int = 12, slow: int = 26):
    """MACD line: EMA(fast) - EMA(slow)."""
    close = np.asarray(close, dtype=np.float64)
    _require_length(close, slow, "macd")
    return ema(close, fast) - ema(close, slow)


def bollinger(close, window: int = 20, k: float = 2.0):
    """Bollinger bands: SMA(window) +/- k * rolling population sigma."""
    if window < 2:
        raise ValueError("window must be >= 2")
    close = np.asarray(close, dtype=np.float64)
    _require_length(close, window, f"bollinger({window})")
    mid = sma(close, window)
    sigma = np.full(close.shape[0], np.nan)
    sigma[window - 1 :] = sliding_window_view(close, window).std(axis=-1)
    return mid + k * sigma, mid - k * sigma


def rsi(close, window: int = 14):
    """Wilder-smoothed RSI in [0, 100]; flat window maps to 50."""
    close = np.asarray(close, dtype=np.float64)
    _require_length(close, window + 1, f"rsi({window})")
    delta = np.diff(close)
    gains = np.where(delta > 0, delta, 0.0)
    losses = np.where(delta < 0, -delta, 0.0)
    out = np.full(close.shape[0], np.nan)
    avg_gain = gains[:window].mean()
    avg_loss = losses[:window].mean()
    out[window] = _rsi_value(avg_gain, avg_loss)
    for t in range(window + 1, close.shape[0]):
        avg_gain = (avg_gain * (window - 1) + gains[t - 1]) / window
        avg_loss = (avg_loss * (window - 1) + losses[t - 1]) / window
        out[t] = _rsi_value(avg_gain, avg_loss)
    return out


def _rsi_value(avg_gain: float, avg_loss: float) -> float:
    if avg_loss == 0.0 and avg_gain == 0.0:
        return 50.0
    if avg_loss == 0.0:
        return 100.0
    if avg_gain == 0.0:
        return 0.0
    rs = avg_gain / avg_loss
    return 100.0 - 100.0 / (1.0 + rs)


def cci(high, low, close, window: int = 20):
    """Commodity channel index; flat window (zero deviation) maps to 0."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    close = np.asarray(close, dtype=np.float64)
    _require_length(close, window, f"cci({window})")
    tp = (high + low + close) / 3.0
    windows = sliding_window_view(tp, window)
    means = windows.mean(axis=-1)
    mad = np.abs(windows - means[:, None]).mean(axis=-1)
    out = np.full(tp.shape[0], np.nan)
    body = np.zeros_like(means)
    nonzero = mad > 0.0
    body[nonzero] = (tp[window - 1 :][nonzero] - means[nonzero]) / (0.015 * mad[nonzero])
    out[window - 1 :] = body
    return out


def adx(high, low, close, window: int = 14):
    """Wilder's average directional index in [0, 100]; DI+ + DI- = 0 gives DX = 0."""
    high = np.asarray(high, dtype=np.float64)
    low = np.asarray(low, dtype=np.float64)
    close = np.asarray(close, dtype=np.float64)
    n = close.shape[0]
    _require_length(close, 2 * window, f"adx({window})")

    up_move = high[1:] - high[:-1]
    down_move = low[:-1] - low[1:]
    plus_dm = np.where((up_move > down_move) & (up_move > 0), up_move, 0.0)
    minus_dm = np.where((down_move > up_move) & (down_move > 0), down_move, 0.0)
    tr = np.maximum.reduce(
        [high[1:] - low[1:], np.abs(high[1:] - close[:-1]), np.abs(low[1:] - close[:-1])]
    )

    # Wilder smoothed sums, seeded with the plain sum of the first `window`
    # directional moves (offsets are into the length n-1 diff arrays).
    s_plus = plus_dm[:window].sum()
    s_minus = minus_dm[:window].sum()
    s_tr = tr[:window].sum()
    dx = np.full(n, np.nan)
    dx[window] = _dx_value(s_plus, s_minus, s_tr)
    for t in range(window + 1, n):
        s_plus += -s_plus / window + plus_dm[t - 1]
        s_minus += -s_minus / window + minus_dm[t - 1]
        s_tr += -s_tr / window + tr[t - 1]
        dx[t] = _dx_value(s_plus, s_minus, s_tr)

    out = np.full(n, np.nan)
    first = 2 * window - 1
    out[first] = dx[window : first + 1].mean()
    for t in range(first + 1, n):
        out[t] = (out[t - 1] * (window - 1) + dx[t]) / window
    return out


def _dx_value(s_plus: float, s_minus: float, s_tr: float) -> float:
    if s_tr <= 0.0:
        return 0.0
    di_plus = 100.0 * s_plus / s_tr
    di_minus = 100.0 * s_minus / s_tr
    denom = di_plus + di_minus
    if denom == 0.0:
        return 0.0
    return 100.0 * abs(di_plus - di_minus) / denom


@dataclass(frozen=True)
class CovarianceWindow:
    """Sample covariance of the trailing return window (symmetric, PSD)."""

    matrix: np.ndarray
    window: int


def rolling_covariance(returns, window: int = COV_WINDOW, t: int | None = None) -> CovarianceWindow:
    """Sample covariance (divisor window-1) of the `window` return rows before `t`.

    ``t`` counts return rows: the window covers rows [t - window, t), i.e. the
    most recent returns known at bar ``t``. Requires t >= window.
    """
    if isinstance(returns, ReturnPanel):
        returns = returns.simple_returns
    returns = np.asarray(returns, dtype=np.float64)
    if t is None:
        t = returns.shape[0]
    if window < 2:
        raise ValueError("window must be >= 2")
    if t < window:
        raise TooShortError(f"covariance window {window} needs t >= {window}, got t={t}")
    block = returns[t - window : t]
    centered = block - block.mean(axis=0)
    return CovarianceWindow(matrix=centered.T @ centered / (window - 1), window=window)


@dataclass(frozen=True)
class IndicatorBlock:
    """The eight per-asset indicator series, each [T, n_assets], plus defined_from."""

    sma30: np.ndarray
    sma60: np.ndarray
    macd: np.ndarray
    boll_upper: np.ndarray
    boll_lower: np.ndarray
    rsi: np.ndarray
    cci: np.ndarray
    adx: np.ndarray
    defined_from: int

    def stacked(self) -> np.ndarray:
        """[T, n_assets, 8] array in field order."""
        return np.stack(
            [
                self.sma30,
                self.sma60,
                self.macd,
                self.boll_upper,
                self.boll_lower,
                self.rsi,
                self.cci,
                self.adx,
            ],
            axis=-1,
        )

    @classmethod
    def from_panel(cls, panel: PricePanel) -> "IndicatorBlock":
        T, n = panel.close.shape
        fields = {
            name: np.empty((T, n)) for name in
            ("sma30", "sma60", "macd", "boll_upper", "boll_lower", "rsi", "cci", "adx")
        }
        for j in range(n):
            c = panel.close[:, j]
            h = panel.high[:, j]
            low = panel.low[:, j]
            fields["sma30"][:, j] = sma(c, SMA_SHORT)
            fields["sma60"][:, j] = sma(c, SMA_LONG)
            fields["macd"][:, j] = macd(c)
            upper, lower = bollinger(c)
            fields["boll_upper"][:, j] = upper
            fields["boll_lower"][:, j] = lower
            fields["rsi"][:, j] = rsi(c)
            fields["cci"][:, j] = cci(h, low, c)
            fields["adx"][:, j] = adx(h, low, c)
        all_defined = np.all(
            np.isfinite(np.concatenate([m.reshape(T, -1) for m in fields.values()], axis=1)),
            axis=1,
        )
        defined_from = int(np.argmax(all_defined)) if all_defined.any() else T
        return cls(defined_from=defined_from, **fields)
