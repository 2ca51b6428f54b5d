"""Synthetic OHLCV generators for demos and self-contained evaluation.

Prices follow seeded random walks in simple-return space; an optional common
factor correlates the existing universe. The exploration market places one
dominant high-Sharpe, uncorrelated asset in the extended universe so the
benefit of adopting it is unambiguous.
"""

from __future__ import annotations

import datetime as dt

import numpy as np

from .data import DateRange, PricePanel, UniverseSpec, save_panel


def business_dates(start: dt.date, count: int) -> tuple[dt.date, ...]:
    """`count` consecutive weekdays starting at (or after) `start`."""
    out = []
    day = start
    while len(out) < count:
        if day.weekday() < 5:
            out.append(day)
        day += dt.timedelta(days=1)
    return tuple(out)


def panel_from_returns(
    assets,
    returns: np.ndarray,
    rng: np.random.Generator,
    *,
    start: dt.date = dt.date(2015, 1, 5),
    start_price: float = 100.0,
) -> PricePanel:
    """Build a valid OHLCV panel whose close-to-close returns equal `returns`."""
    n_rows = returns.shape[0] + 1
    growth = np.vstack([np.ones(returns.shape[1]), 1.0 + returns])
    close = start_price * np.cumprod(growth, axis=0)
    open_ = np.vstack([close[0] * (1.0 - 1e-4), close[:-1]])
    spread = np.abs(rng.normal(0.0, 0.002, size=close.shape))
    high = np.maximum(open_, close) * (1.0 + spread)
    low = np.minimum(open_, close) * (1.0 - spread)
    volume = rng.integers(100_000, 1_000_000, size=close.shape).astype(np.float64)
    return PricePanel(
        dates=business_dates(start, n_rows),
        assets=tuple(assets),
        open=open_,
        high=high,
        low=low,
        close=close,
        volume=volume,
    ).validate()


def random_walk_panel(
    assets,
    n_rows: int,
    *,
    seed: int = 0,
    drift=0.0,
    vol=0.01,
    common_factor_vol: float = 0.0,
    start: dt.date = dt.date(2015, 1, 5),
    start_price: float = 100.0,
) -> PricePanel:
    rng = np.random.default_rng(seed)
    n = len(assets)
    drift = np.broadcast_to(np.asarray(drift, dtype=np.float64), (n,))
    vol = np.broadcast_to(np.asarray(vol, dtype=np.float64), (n,))
    eps = rng.normal(0.0, 1.0, size=(n_rows - 1, n))
    returns = drift + vol * eps
    if common_factor_vol > 0.0:
        factor = rng.normal(0.0, common_factor_vol, size=(n_rows - 1, 1))
        returns = returns + factor
    returns = np.clip(returns, -0.5, None)
    return panel_from_returns(assets, returns, rng, start=start, start_price=start_price)


def exploration_market(
    seed: int,
    n_rows: int,
    *,
    n_existing: int = 18,
    n_extended: int = 5,
    dominant_drift: float = 0.006,
    dominant_vol: float = 0.006,
    junk_drift: float = -0.002,
) -> tuple[PricePanel, PricePanel, int]:
    """Correlated zero-drift existing universe plus one dominant extended asset.

    The dominant asset sits at the last extended index (so greedy tie-breaking
    works against it, not for it) and is uncorrelated with everything else;
    the other extended assets drift slightly down, so proposing them is
    clearly unhelpful. Returns (existing_panel, extended_panel, dominant_index).
    """
    rng = np.random.default_rng(seed)
    existing_assets = tuple(f"STK{i:02d}" for i in range(n_existing))
    extended_assets = tuple(f"ALT{i}" for i in range(n_extended))
    dominant = n_extended - 1

    factor = rng.normal(0.0, 0.006, size=(n_rows - 1, 1))
    existing_returns = factor + rng.normal(0.0, 0.01, size=(n_rows - 1, n_existing))

    extended_returns = rng.normal(junk_drift, 0.015, size=(n_rows - 1, n_extended))
    extended_returns[:, dominant] = rng.normal(
        dominant_drift, dominant_vol, size=n_rows - 1
    )
    existing_returns = np.clip(existing_returns, -0.5, None)
    extended_returns = np.clip(extended_returns, -0.5, None)

    existing = panel_from_returns(existing_assets, existing_returns, rng)
    extended = panel_from_returns(extended_assets, extended_returns, rng)
    return existing, extended, dominant


def spec_for_row_split(
    existing_panel: PricePanel, extended_panel: PricePanel, train_rows: int
) -> UniverseSpec:
    """UniverseSpec whose train range covers the first `train_rows` dates."""
    dates = existing_panel.dates
    return UniverseSpec(
        existing=existing_panel.assets,
        extended=extended_panel.assets,
        train_range=DateRange(dates[0], dates[train_rows - 1]),
        trade_range=DateRange(dates[train_rows], dates[-1]),
    )


def write_universe(directory, *panels: PricePanel) -> None:
    """Write every panel's per-asset CSVs into one data directory."""
    for panel in panels:
        save_panel(panel, directory)
