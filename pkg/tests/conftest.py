import datetime as dt

import numpy as np
import pytest

from finxplore.data import PricePanel
from finxplore.synthetic import business_dates, random_walk_panel


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def make_panel(n_rows=120, assets=("AAA", "BBB", "CCC"), seed=0, drift=0.0, vol=0.01):
    return random_walk_panel(assets, n_rows, seed=seed, drift=drift, vol=vol)


def flat_panel(n_rows=80, assets=("AAA", "BBB"), price=100.0):
    """Constant-price panel: zero returns everywhere."""
    n = len(assets)
    ones = np.full((n_rows, n), price)
    return PricePanel(
        dates=business_dates(dt.date(2015, 1, 5), n_rows),
        assets=tuple(assets),
        open=ones.copy(),
        high=ones.copy(),
        low=ones.copy(),
        close=ones.copy(),
        volume=np.full((n_rows, n), 1000.0),
    ).validate()


def panel_from_closes(closes, assets=None, start=dt.date(2015, 1, 5)):
    """Panel whose OHLC all equal the given close matrix (valid bounds)."""
    closes = np.asarray(closes, dtype=np.float64)
    if closes.ndim == 1:
        closes = closes[:, None]
    n_rows, n = closes.shape
    if assets is None:
        assets = tuple(f"A{i}" for i in range(n))
    return PricePanel(
        dates=business_dates(start, n_rows),
        assets=tuple(assets),
        open=closes.copy(),
        high=closes.copy(),
        low=closes.copy(),
        close=closes.copy(),
        volume=np.full((n_rows, n), 500.0),
    ).validate()
