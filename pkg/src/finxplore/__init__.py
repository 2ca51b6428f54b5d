"""Dual-agent deep-RL portfolio allocation with extended-universe exploration.

One agent (clipped-surrogate actor-critic) allocates across the existing
universe; a second (deep Q-learning) proposes assets from an extended
universe, and a proposal is adopted only when carving out a fixed exploration
slot for it strictly improves the portfolio's trailing Sharpe ratio.
"""

__version__ = "0.1.0"

from .backtest import EquityCurve, MetricsReport, compute_metrics, run_backtest
from .coordinator import Coordinator, CoordinatorConfig, StepDecision
from .data import DateRange, PricePanel, ReturnPanel, UniverseSpec, load_panel, split_panel
from .environment import MarketState, NormStats, PortfolioEnv
from .strategies import (
    AllocationStrategy,
    DrlTrader,
    FollowLoserStrategy,
    FollowWinnerStrategy,
    MeanVarianceStrategy,
)

__all__ = [
    "AllocationStrategy",
    "Coordinator",
    "CoordinatorConfig",
    "DateRange",
    "DrlTrader",
    "EquityCurve",
    "FollowLoserStrategy",
    "FollowWinnerStrategy",
    "MarketState",
    "MeanVarianceStrategy",
    "MetricsReport",
    "NormStats",
    "PortfolioEnv",
    "PricePanel",
    "ReturnPanel",
    "StepDecision",
    "UniverseSpec",
    "compute_metrics",
    "load_panel",
    "run_backtest",
    "split_panel",
    "__version__",
]
