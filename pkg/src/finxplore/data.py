"""OHLCV ingestion, alignment, returns, and train/trade splitting.

CSV contract (one file per asset, named ``<asset>.csv``):
header ``date,open,high,low,close,volume``, ISO-8601 dates, ``.`` decimals.
Rows with any empty field are dropped per asset; alignment then inner-joins
the surviving dates across every asset in the universe, so a date survives
only if every asset has a complete row for it.
"""

from __future__ import annotations

import csv
import datetime as dt
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (
    EmptyIntersectionError,
    EmptySliceError,
    InvariantViolationError,
    MalformedRowError,
    MissingAssetError,
    TooShortError,
)

CSV_HEADER = ("date", "open", "high", "low", "close", "volume")

# Largest lookback among the state features (60-day moving average /
# 60-day return covariance); used as the default warm-up prefix length.
DEFAULT_WARMUP = 60


@dataclass(frozen=True)
class DateRange:
    """Closed date interval [start, end]."""

    start: dt.date
    end: dt.date

    def __post_init__(self):
        if self.end < self.start:
            raise ValueError(f"date range ends before it starts: {self}")

    def contains(self, date: dt.date) -> bool:
        return self.start <= date <= self.end


@dataclass(frozen=True)
class UniverseSpec:
    """Existing/extended asset lists plus the train and trade date ranges."""

    existing: tuple[str, ...]
    extended: tuple[str, ...]
    train_range: DateRange
    trade_range: DateRange

    def __post_init__(self):
        object.__setattr__(self, "existing", tuple(self.existing))
        object.__setattr__(self, "extended", tuple(self.extended))
        overlap = set(self.existing) & set(self.extended)
        if overlap:
            raise ValueError(f"existing and extended universes overlap: {sorted(overlap)}")
        if self.train_range.end >= self.trade_range.start:
            raise ValueError("train range must end strictly before trade range begins")


@dataclass(frozen=True)
class PricePanel:
    """Aligned per-asset OHLCV matrices with a shared trading-date index.

    All five matrices are float64 of shape [T, n_assets]; rows correspond to
    ``dates`` (strictly increasing) and columns to ``assets``.
    """

    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    open: np.ndarray
    high: np.ndarray
    low: np.ndarray
    close: np.ndarray
    volume: np.ndarray

    @property
    def n_rows(self) -> int:
        return len(self.dates)

    @property
    def n_assets(self) -> int:
        return len(self.assets)

    def validate(self) -> "PricePanel":
        mats = (self.open, self.high, self.low, self.close, self.volume)
        shape = (self.n_rows, self.n_assets)
        for name, m in zip(("open", "high", "low", "close", "volume"), mats):
            if m.shape != shape:
                raise InvariantViolationError(f"{name} has shape {m.shape}, expected {shape}")
            if not np.all(np.isfinite(m)):
                raise InvariantViolationError(f"{name} contains non-finite values")
        for i in range(1, self.n_rows):
            if self.dates[i] <= self.dates[i - 1]:
                raise InvariantViolationError(f"dates not strictly increasing at {self.dates[i]}")
        bad = (self.low > np.minimum(self.open, self.close)) | (
            self.high < np.maximum(self.open, self.close)
        )
        if np.any(bad):
            t, j = map(int, np.argwhere(bad)[0])
            raise InvariantViolationError(
                f"OHLC bounds violated for {self.assets[j]} on {self.dates[t]}"
            )
        if np.any(np.stack([self.open, self.high, self.low, self.close]) <= 0):
            raise InvariantViolationError("non-positive price encountered")
        if np.any(self.volume < 0):
            raise InvariantViolationError("negative volume encountered")
        return self

    def slice_rows(self, start: int, stop: int) -> "PricePanel":
        return PricePanel(
            dates=self.dates[start:stop],
            assets=self.assets,
            open=self.open[start:stop],
            high=self.high[start:stop],
            low=self.low[start:stop],
            close=self.close[start:stop],
            volume=self.volume[start:stop],
        )

    def take_rows(self, idx) -> "PricePanel":
        idx = np.asarray(idx, dtype=int)
        return PricePanel(
            dates=tuple(self.dates[i] for i in idx),
            assets=self.assets,
            open=self.open[idx],
            high=self.high[idx],
            low=self.low[idx],
            close=self.close[idx],
            volume=self.volume[idx],
        )


@dataclass(frozen=True)
class ReturnPanel:
    """Per-period simple returns; ``dates[i]`` is the later date of each pair."""

    dates: tuple[dt.date, ...]
    assets: tuple[str, ...]
    simple_returns: np.ndarray  # [T-1, n_assets]


def read_asset_csv(path) -> dict[dt.date, tuple[float, float, float, float, float]]:
    """Parse one asset CSV into {date: (open, high, low, close, volume)}."""
    return _read_asset_csv(Path(path))


def _read_asset_csv(path: Path) -> dict[dt.date, tuple[float, float, float, float, float]]:
    rows: dict[dt.date, tuple[float, float, float, float, float]] = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise MalformedRowError(path, 1, "empty file") from None
        if tuple(h.strip().lower() for h in header) != CSV_HEADER:
            raise MalformedRowError(path, 1, f"unexpected header {header!r}")
        for line_no, row in enumerate(reader, start=2):
            if len(row) != 6:
                raise MalformedRowError(path, line_no, f"expected 6 fields, got {len(row)}")
            if any(field.strip() == "" for field in row):
                continue  # incomplete row: dropped, alignment removes the date everywhere
            try:
                date = dt.date.fromisoformat(row[0].strip())
            except ValueError:
                raise MalformedRowError(path, line_no, f"bad date {row[0]!r}") from None
            try:
                values = tuple(float(field) for field in row[1:])
            except ValueError:
                raise MalformedRowError(path, line_no, f"bad numeric field in {row!r}") from None
            if date in rows:
                raise MalformedRowError(path, line_no, f"duplicate date {date}")
            rows[date] = values
    return rows


def _assemble(
    per_asset: dict[str, dict[dt.date, tuple]], assets: tuple[str, ...], dates: list[dt.date]
) -> PricePanel:
    mats = np.empty((5, len(dates), len(assets)), dtype=np.float64)
    for j, asset in enumerate(assets):
        series = per_asset[asset]
        for t, date in enumerate(dates):
            mats[:, t, j] = series[date]
    return PricePanel(
        dates=tuple(dates),
        assets=assets,
        open=mats[0],
        high=mats[1],
        low=mats[2],
        close=mats[3],
        volume=mats[4],
    ).validate()


def load_panel(directory, spec: UniverseSpec) -> tuple[PricePanel, PricePanel]:
    """Load and align one CSV per asset; returns (existing, extended) panels.

    Both panels share a single date grid: the intersection of complete rows
    across every asset in both universes, sorted ascending.
    """
    directory = Path(directory)
    per_asset: dict[str, dict[dt.date, tuple]] = {}
    for asset in spec.existing + spec.extended:
        path = directory / f"{asset}.csv"
        if not path.is_file():
            raise MissingAssetError(f"no data file for asset {asset!r}: {path}")
        per_asset[asset] = _read_asset_csv(path)

    common: set[dt.date] | None = None
    for series in per_asset.values():
        common = set(series) if common is None else common & set(series)
    if not common:
        raise EmptyIntersectionError("assets share no common trading dates")
    dates = sorted(common)

    existing = _assemble(per_asset, spec.existing, dates)
    extended = _assemble(per_asset, spec.extended, dates) if spec.extended else PricePanel(
        dates=tuple(dates),
        assets=(),
        open=np.empty((len(dates), 0)),
        high=np.empty((len(dates), 0)),
        low=np.empty((len(dates), 0)),
        close=np.empty((len(dates), 0)),
        volume=np.empty((len(dates), 0)),
    )
    return existing, extended


def save_panel(panel: PricePanel, directory) -> None:
    """Write one CSV per asset using repr() floats so reloading is bit-exact."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for j, asset in enumerate(panel.assets):
        with open(directory / f"{asset}.csv", "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(CSV_HEADER)
            for t, date in enumerate(panel.dates):
                writer.writerow(
                    [date.isoformat()]
                    + [
                        repr(float(mat[t, j]))
                        for mat in (panel.open, panel.high, panel.low, panel.close, panel.volume)
                    ]
                )


def compute_returns(panel: PricePanel) -> ReturnPanel:
    """Simple close-to-close returns: r[t] = close[t+1]/close[t] - 1."""
    if panel.n_rows < 2:
        raise TooShortError(f"need at least 2 rows to compute returns, got {panel.n_rows}")
    returns = panel.close[1:] / panel.close[:-1] - 1.0
    return ReturnPanel(dates=panel.dates[1:], assets=panel.assets, simple_returns=returns)


def split_panel(
    panel: PricePanel, spec: UniverseSpec, warmup: int = DEFAULT_WARMUP
) -> tuple[PricePanel, PricePanel]:
    """Partition rows by date range into (train, trade) panels.

    The trade panel is prefixed with the last ``warmup`` rows of the train
    slice so every feature is defined from the first measured trading day;
    the prefix rows are context only and excluded from performance
    measurement (callers start stepping at index ``warmup``).
    """
    train_idx = [i for i, d in enumerate(panel.dates) if spec.train_range.contains(d)]
    trade_idx = [i for i, d in enumerate(panel.dates) if spec.trade_range.contains(d)]
    if not train_idx:
        raise EmptySliceError(f"train range {spec.train_range} selects zero rows")
    if not trade_idx:
        raise EmptySliceError(f"trade range {spec.trade_range} selects zero rows")
    prefix = train_idx[-warmup:] if warmup > 0 else []
    train = panel.take_rows(train_idx)
    trade = panel.take_rows(prefix + trade_idx)
    return train, trade
