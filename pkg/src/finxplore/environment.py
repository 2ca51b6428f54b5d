"""Portfolio MDP: state assembly, weight execution, cost accounting, Sharpe reward.

State at bar t (per existing asset): OHLCV, the return realized into t, and the
eight indicators; plus the flattened upper triangle of the trailing return
covariance. Only information available at t enters the state, and a step at t
consumes the return from t to t+1 and nothing later.

The account tracks holdings as (weights over existing assets, one optional
explored slot tied to a specific extended asset). Turnover is the L1 distance
between the drifted holdings and the target on the union of both slots'
assets, so swapping the explored asset pays for both the exit and the entry.
"""

from __future__ import annotations

import datetime as dt
import json
from collections import deque
from dataclasses import dataclass, field

import numpy as np
from sklearn.base import BaseEstimator

from .data import PricePanel, compute_returns
from .errors import (
    EpisodeDoneError,
    InsufficientHistoryError,
    StatsNotFittedError,
    WarmupIncompleteError,
)
from .indicators import COV_WINDOW, IndicatorBlock, rolling_covariance
from .validation import check_simplex

FEATURES_PER_ASSET = 14  # OHLCV (5) + daily return (1) + eight indicators

TRANSACTION_COST = 5e-4  # cost per unit turnover
REWARD_WINDOW = 60
INITIAL_CAPITAL = 1_000_000.0


@dataclass(frozen=True)
class MarketState:
    """Observation at bar t: base feature vector plus extended-universe returns."""

    t: int
    features: np.ndarray
    extended_returns: np.ndarray

    def augmented(self) -> np.ndarray:
        """The exploration agent's view: base features with extended returns appended."""
        return np.concatenate([self.features, self.extended_returns])


@dataclass(frozen=True)
class StateFeatures:
    """Precomputed per-bar feature matrices for a panel pair."""

    dates: tuple[dt.date, ...]
    base: np.ndarray  # [T, n*14 + n(n+1)/2]; rows before defined_from are NaN
    extended: np.ndarray  # [T, m] returns known at each bar
    defined_from: int
    n_assets: int

    @classmethod
    def build(
        cls,
        panel: PricePanel,
        extended_panel: PricePanel | None = None,
        cov_window: int = COV_WINDOW,
    ) -> "StateFeatures":
        T, n = panel.close.shape
        block = IndicatorBlock.from_panel(panel)
        returns = compute_returns(panel).simple_returns  # [T-1, n]

        per_asset = np.full((T, n, FEATURES_PER_ASSET), np.nan)
        per_asset[:, :, 0] = panel.open
        per_asset[:, :, 1] = panel.high
        per_asset[:, :, 2] = panel.low
        per_asset[:, :, 3] = panel.close
        per_asset[:, :, 4] = panel.volume
        per_asset[1:, :, 5] = returns
        per_asset[:, :, 6:] = block.stacked()

        iu = np.triu_indices(n)
        cov_flat = np.full((T, n * (n + 1) // 2), np.nan)
        for t in range(cov_window, T):
            cov_flat[t] = rolling_covariance(returns, cov_window, t).matrix[iu]

        base = np.concatenate([per_asset.reshape(T, n * FEATURES_PER_ASSET), cov_flat], axis=1)

        if extended_panel is not None and extended_panel.n_assets > 0:
            ext_returns = compute_returns(extended_panel).simple_returns
            extended = np.zeros((T, extended_panel.n_assets))
            extended[1:] = ext_returns
        else:
            extended = np.zeros((T, 0))

        defined_from = max(block.defined_from, cov_window, 1)
        return cls(
            dates=panel.dates,
            base=base,
            extended=extended,
            defined_from=defined_from,
            n_assets=n,
        )

    @property
    def base_dim(self) -> int:
        return self.base.shape[1]


class NormStats(BaseEstimator):
    """Per-feature z-scoring fit on the training range only.

    Features with sigma < 1e-12 map to 0; outputs are clipped to [-clip, clip].
    """

    def __init__(self, clip: float = 10.0):
        self.clip = clip

    def fit(self, X):
        X = np.asarray(X, dtype=np.float64)
        self.mean_ = X.mean(axis=0)
        self.std_ = X.std(axis=0)
        return self

    def transform(self, X):
        if not hasattr(self, "mean_"):
            raise StatsNotFittedError("NormStats.transform called before fit")
        X = np.asarray(X, dtype=np.float64)
        safe = np.where(self.std_ < 1e-12, 1.0, self.std_)
        z = (X - self.mean_) / safe
        z = np.where(self.std_ < 1e-12, 0.0, z)
        return np.clip(z, -self.clip, self.clip)


def normalize_state(raw: MarketState, stats: NormStats) -> MarketState:
    """z-score a raw state (base and extended parts jointly)."""
    z = stats.transform(raw.augmented())
    d = raw.features.shape[0]
    return MarketState(t=raw.t, features=z[:d], extended_returns=z[d:])


class RewardWindow:
    """Ring buffer of the most recent portfolio returns with a Sharpe readout."""

    def __init__(self, capacity: int = REWARD_WINDOW, risk_free: float = 0.0):
        self.capacity = capacity
        self.risk_free = risk_free
        self._buf: deque[float] = deque(maxlen=capacity)

    def push(self, value: float) -> None:
        self._buf.append(float(value))

    def __len__(self) -> int:
        return len(self._buf)

    def values(self) -> np.ndarray:
        return np.array(self._buf, dtype=np.float64)

    def sharpe(self) -> float:
        """(mean - rf) / sample sigma over the buffer; 0 when dispersion < 1e-12."""
        if len(self._buf) < 2:
            raise InsufficientHistoryError("Sharpe needs at least 2 returns")
        r = self.values()
        sigma = r.std(ddof=1)
        if sigma < 1e-12:
            return 0.0
        return float((r.mean() - self.risk_free) / sigma)

    def sharpe_or_zero(self) -> float:
        try:
            return self.sharpe()
        except InsufficientHistoryError:
            return 0.0


def sharpe_window(window: RewardWindow) -> float:
    return window.sharpe()


@dataclass
class PortfolioAccount:
    """Wealth, holdings and the transaction-cost ledger."""

    wealth: float
    weights: np.ndarray  # over existing assets
    explored_weight: float = 0.0
    explored_asset: int | None = None
    cost_paid: float = 0.0
    history: list = field(default_factory=list)  # (date, wealth, weights incl. explored slot)

    def full_weights(self) -> np.ndarray:
        return np.append(self.weights, self.explored_weight)


@dataclass(frozen=True)
class StepInfo:
    """Per-step accounting record, serializable as one JSON line."""

    date: dt.date
    r_p: float
    turnover: float
    cost: float
    reward: float

    def to_record(self) -> dict:
        return {
            "date": self.date.isoformat(),
            "r_p": self.r_p,
            "turnover": self.turnover,
            "cost": self.cost,
            "reward": self.reward,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_record(), sort_keys=True)


class PortfolioEnv:
    """Single-episode trading environment over an aligned panel pair.

    One instance owns its mutable state; run independent instances for
    parallel seeds.
    """

    def __init__(
        self,
        panel: PricePanel,
        extended_panel: PricePanel | None = None,
        *,
        features: StateFeatures | None = None,
        normalizer: NormStats | None = None,
        transaction_cost: float = TRANSACTION_COST,
        reward_window: int = REWARD_WINDOW,
        initial_capital: float = INITIAL_CAPITAL,
        cov_window: int = COV_WINDOW,
        start_index: int | None = None,
        risk_free: float = 0.0,
    ):
        self.panel = panel
        self.extended_panel = extended_panel
        self.features = features if features is not None else StateFeatures.build(
            panel, extended_panel, cov_window
        )
        self.normalizer = normalizer
        self.transaction_cost = transaction_cost
        self.reward_window_size = reward_window
        self.initial_capital = initial_capital
        self.risk_free = risk_free
        self.start_index = self.features.defined_from if start_index is None else start_index

        self.existing_returns = compute_returns(panel).simple_returns
        if extended_panel is not None and extended_panel.n_assets > 0:
            self.extended_returns = compute_returns(extended_panel).simple_returns
        else:
            self.extended_returns = np.zeros((panel.n_rows - 1, 0))

        self.n_assets = panel.n_assets
        self.n_extended = self.extended_returns.shape[1]
        self._t: int | None = None
        self._done = True
        self.account: PortfolioAccount | None = None
        self.window: RewardWindow | None = None

    @property
    def t(self) -> int:
        if self._t is None:
            raise EpisodeDoneError("environment not reset")
        return self._t

    @property
    def n_rows(self) -> int:
        return self.panel.n_rows

    def state(self, t: int) -> MarketState:
        raw = MarketState(
            t=t, features=self.features.base[t], extended_returns=self.features.extended[t]
        )
        if self.normalizer is not None:
            return normalize_state(raw, self.normalizer)
        return raw

    def reset(self) -> MarketState:
        if self.start_index < self.features.defined_from:
            raise WarmupIncompleteError(
                f"start index {self.start_index} precedes first fully defined bar "
                f"{self.features.defined_from}"
            )
        if self.start_index >= self.n_rows - 1:
            raise WarmupIncompleteError("panel too short: no step possible after warm-up")
        self._t = self.start_index
        self._done = False
        self.window = RewardWindow(self.reward_window_size, self.risk_free)
        weights = np.full(self.n_assets, 1.0 / self.n_assets)
        self.account = PortfolioAccount(wealth=self.initial_capital, weights=weights)
        self.account.history.append(
            (self.panel.dates[self._t], self.account.wealth, self.account.full_weights())
        )
        return self.state(self._t)

    def step(self, action_weights, explored_asset: int | None = None):
        """Apply target weights at bar t, realize the return into t+1.

        ``action_weights`` has either n components (existing universe only) or
        n+1 where the last is the explored slot; a positive explored slot
        requires ``explored_asset``. Returns (next_state, reward, done, info).
        """
        if self._done or self._t is None:
            raise EpisodeDoneError("episode is finished; call reset()")
        w = check_simplex(action_weights, name="action_weights")
        if w.shape[0] == self.n_assets:
            target, target_explored = w, 0.0
        elif w.shape[0] == self.n_assets + 1:
            target, target_explored = w[:-1], float(w[-1])
        else:
            raise ValueError(
                f"action has {w.shape[0]} components, expected {self.n_assets} or "
                f"{self.n_assets + 1}"
            )
        if target_explored > 0.0:
            if explored_asset is None:
                raise ValueError("positive explored weight requires an explored_asset index")
            if not 0 <= explored_asset < self.n_extended:
                raise ValueError(f"explored_asset {explored_asset} out of range")
        else:
            explored_asset = None

        acct = self.account
        t = self._t
        turnover = float(np.abs(target - acct.weights).sum())
        if acct.explored_asset == explored_asset:
            turnover += abs(target_explored - acct.explored_weight)
        else:
            turnover += acct.explored_weight + target_explored

        cost_fraction = self.transaction_cost * turnover
        ret_row = self.existing_returns[t]
        explored_ret = self.extended_returns[t, explored_asset] if explored_asset is not None else 0.0
        r_p = float(target @ ret_row) + target_explored * explored_ret - cost_fraction

        cost_currency = cost_fraction * acct.wealth
        acct.wealth *= 1.0 + r_p
        acct.cost_paid += cost_currency

        grown = target * (1.0 + ret_row)
        grown_explored = target_explored * (1.0 + explored_ret)
        total = grown.sum() + grown_explored
        acct.weights = grown / total
        acct.explored_weight = grown_explored / total
        acct.explored_asset = explored_asset if acct.explored_weight > 0.0 else None

        self.window.push(r_p)
        reward = self.window.sharpe_or_zero()

        self._t = t + 1
        self._done = self._t >= self.n_rows - 1
        date = self.panel.dates[self._t]
        acct.history.append((date, acct.wealth, acct.full_weights()))
        info = StepInfo(date=date, r_p=r_p, turnover=turnover, cost=cost_currency, reward=reward)
        return self.state(self._t), reward, self._done, info
