"""Strategy estimators: fit on a training panel, then allocate step by step.

Every strategy follows the scikit-learn estimator convention (constructor
stores hyperparameters verbatim, ``fit`` learns state into trailing-underscore
attributes, ``get_params``/``set_params`` come from ``BaseEstimator``) so
strategies can be cloned, grid-searched and composed like any estimator.

The backtester binds a strategy to an environment via ``prepare`` and then
calls ``decide(state)`` once per bar; decisions must be causal and, in this
evaluation path, deterministic.
"""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator

from .coordinator import Coordinator, CoordinatorConfig, StepDecision, EVAL_WINDOW
from .baselines import follow_loser, follow_winner, mvo_weights
from .data import PricePanel
from .dqn import DqnAgent
from .environment import MarketState, NormStats, PortfolioEnv, StateFeatures
from .errors import InsufficientHistoryError
from .indicators import COV_WINDOW
from .nn import load_checkpoint, save_checkpoint
from .ppo import PpoAgent


class AllocationStrategy(BaseEstimator):
    """Base class: a weight-producing strategy the backtester can step."""

    requires_training = False

    @property
    def uses_extended(self) -> bool:
        """Whether the backtest environment should carry the extended universe."""
        return False

    def fit(self, panel: PricePanel, extended_panel: PricePanel | None = None):
        return self

    def state_normalizer(self) -> NormStats | None:
        return None

    def prepare(self, env: PortfolioEnv) -> None:
        self.env_ = env

    def decide(self, state: MarketState) -> StepDecision:
        raise NotImplementedError


def _weights_only_decision(env: PortfolioEnv, t: int, weights: np.ndarray) -> StepDecision:
    return StepDecision(
        t=t, date=env.panel.dates[t], base_weights=weights, executed_weights=weights
    )


class MeanVarianceStrategy(AllocationStrategy):
    """Long-only mean-variance optimizer on a trailing estimation window."""

    def __init__(self, window: int = 60, risk_aversion: float = 1.0):
        self.window = window
        self.risk_aversion = risk_aversion

    def decide(self, state: MarketState) -> StepDecision:
        t = state.t
        if t < self.window:
            raise InsufficientHistoryError(f"need {self.window} return rows before t={t}")
        rows = self.env_.existing_returns[t - self.window : t]
        mu = rows.mean(axis=0)
        centered = rows - mu
        cov = centered.T @ centered / (self.window - 1)
        result = mvo_weights(mu, cov, self.risk_aversion)
        return _weights_only_decision(self.env_, t, result.weights)


class FollowWinnerStrategy(AllocationStrategy):
    """One-hot on the best prior-period asset."""

    def decide(self, state: MarketState) -> StepDecision:
        prev = self.env_.existing_returns[state.t - 1]
        return _weights_only_decision(self.env_, state.t, follow_winner(prev))


class FollowLoserStrategy(AllocationStrategy):
    """One-hot on the worst prior-period asset."""

    def decide(self, state: MarketState) -> StepDecision:
        prev = self.env_.existing_returns[state.t - 1]
        return _weights_only_decision(self.env_, state.t, follow_loser(prev))


class DrlTrader(AllocationStrategy):
    """The dual-agent trader; with ``explore=False`` it runs the allocator alone.

    ``fit`` trains on the training panel pair (features and normalization
    statistics are computed on that range only); the trader then acts with the
    final policy, while the best-train-Sharpe parameters stay available as a
    separate snapshot (``save_checkpoint(..., which="best")``). At decision
    time the allocator acts deterministically and the proposer greedily.
    """

    requires_training = True

    @property
    def uses_extended(self) -> bool:
        return self.explore

    def __init__(
        self,
        explore: bool = True,
        kappa: float = 0.10,
        episodes: int = 100,
        seed: int = 0,
        eval_window: int = EVAL_WINDOW,
        cov_window: int = COV_WINDOW,
        reward_window: int = 60,
        transaction_cost: float = 5e-4,
        initial_capital: float = 1_000_000.0,
        ppo_hidden_layers: int = 2,
        ppo_hidden_dim: int = 64,
        ppo_activation: str = "tanh",
        ppo_learning_rate: float = 3e-4,
        ppo_discount: float = 0.99,
        gae_lambda: float = 0.95,
        clip_ratio: float = 0.2,
        entropy_coef: float = 0.01,
        value_coef: float = 0.5,
        ppo_epochs: int = 10,
        ppo_minibatch: int = 64,
        ppo_dropout: float = 0.0,
        dqn_hidden_layers: int = 2,
        dqn_hidden_dim: int = 64,
        dqn_activation: str = "relu",
        dqn_learning_rate: float = 1e-3,
        dqn_discount: float = 0.99,
        dqn_batch_size: int = 64,
        replay_capacity: int = 50_000,
        target_sync_interval: int = 200,
        epsilon_start: float = 1.0,
        epsilon_end: float = 0.05,
        epsilon_decay_frac: float = 0.3,
        dqn_dropout: float = 0.0,
    ):
        self.explore = explore
        self.kappa = kappa
        self.episodes = episodes
        self.seed = seed
        self.eval_window = eval_window
        self.cov_window = cov_window
        self.reward_window = reward_window
        self.transaction_cost = transaction_cost
        self.initial_capital = initial_capital
        self.ppo_hidden_layers = ppo_hidden_layers
        self.ppo_hidden_dim = ppo_hidden_dim
        self.ppo_activation = ppo_activation
        self.ppo_learning_rate = ppo_learning_rate
        self.ppo_discount = ppo_discount
        self.gae_lambda = gae_lambda
        self.clip_ratio = clip_ratio
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.ppo_epochs = ppo_epochs
        self.ppo_minibatch = ppo_minibatch
        self.ppo_dropout = ppo_dropout
        self.dqn_hidden_layers = dqn_hidden_layers
        self.dqn_hidden_dim = dqn_hidden_dim
        self.dqn_activation = dqn_activation
        self.dqn_learning_rate = dqn_learning_rate
        self.dqn_discount = dqn_discount
        self.dqn_batch_size = dqn_batch_size
        self.replay_capacity = replay_capacity
        self.target_sync_interval = target_sync_interval
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_frac = epsilon_decay_frac
        self.dqn_dropout = dqn_dropout

    # -- construction helpers --------------------------------------------------

    def _build_agents(self, base_dim: int, n_assets: int, n_extended: int):
        ppo_seed, dqn_seed = np.random.SeedSequence(self.seed).spawn(2)
        ppo = PpoAgent(
            state_dim=base_dim,
            n_assets=n_assets,
            hidden_layers=self.ppo_hidden_layers,
            hidden_dim=self.ppo_hidden_dim,
            activation=self.ppo_activation,
            learning_rate=self.ppo_learning_rate,
            discount=self.ppo_discount,
            gae_lambda=self.gae_lambda,
            clip_ratio=self.clip_ratio,
            entropy_coef=self.entropy_coef,
            value_coef=self.value_coef,
            epochs=self.ppo_epochs,
            minibatch_size=self.ppo_minibatch,
            dropout=self.ppo_dropout,
            rng=np.random.default_rng(ppo_seed),
        )
        dqn = None
        if self.explore:
            steps_per_episode = max(1, self._steps_per_episode)
            decay = max(1, int(self.epsilon_decay_frac * self.episodes * steps_per_episode))
            dqn = DqnAgent(
                state_dim=base_dim + n_extended,
                n_actions=n_extended + 1,
                hidden_layers=self.dqn_hidden_layers,
                hidden_dim=self.dqn_hidden_dim,
                activation=self.dqn_activation,
                learning_rate=self.dqn_learning_rate,
                discount=self.dqn_discount,
                batch_size=self.dqn_batch_size,
                replay_capacity=self.replay_capacity,
                target_sync_interval=self.target_sync_interval,
                epsilon_start=self.epsilon_start,
                epsilon_end=self.epsilon_end,
                epsilon_decay_steps=decay,
                dropout=self.dqn_dropout,
                rng=np.random.default_rng(dqn_seed),
            )
        return ppo, dqn

    def fit(self, panel: PricePanel, extended_panel: PricePanel | None = None):
        if self.explore and (extended_panel is None or extended_panel.n_assets == 0):
            raise ValueError("explore=True requires an extended panel")
        features = StateFeatures.build(panel, extended_panel, self.cov_window)
        start = max(features.defined_from, self.eval_window)
        rows = np.concatenate(
            [features.base[start:], features.extended[start:]], axis=1
        )
        norm = NormStats().fit(rows)
        env = PortfolioEnv(
            panel,
            extended_panel,
            features=features,
            normalizer=norm,
            transaction_cost=self.transaction_cost,
            reward_window=self.reward_window,
            initial_capital=self.initial_capital,
            cov_window=self.cov_window,
            start_index=start,
        )
        self._steps_per_episode = panel.n_rows - 1 - start
        ppo, dqn = self._build_agents(features.base_dim, panel.n_assets, env.n_extended)
        coordinator = Coordinator(
            env, ppo, dqn, CoordinatorConfig(kappa=self.kappa, eval_window=self.eval_window)
        )
        self.report_ = coordinator.train(self.episodes)
        # The trader acts with the final policy; the best-train-Sharpe snapshot
        # is kept as a separate artifact (early Sharpe peaks under high
        # exploration noise would otherwise resurrect an untrained proposer).
        self.best_snapshot_ = coordinator.best_snapshot
        self.ppo_ = ppo
        self.dqn_ = dqn
        self.norm_ = norm
        self.n_assets_ = panel.n_assets
        self.n_extended_ = env.n_extended
        self.base_dim_ = features.base_dim
        self.assets_ = panel.assets
        self.extended_assets_ = extended_panel.assets if extended_panel is not None else ()
        return self

    def state_normalizer(self) -> NormStats | None:
        return getattr(self, "norm_", None)

    def prepare(self, env: PortfolioEnv) -> None:
        self.env_ = env
        self.coordinator_ = Coordinator(
            env,
            self.ppo_,
            self.dqn_ if self.explore else None,
            CoordinatorConfig(kappa=self.kappa, eval_window=self.eval_window),
        )

    def decide(self, state: MarketState) -> StepDecision:
        decision, _ = self.coordinator_.coordinate_step(state, train=False)
        return decision

    # -- persistence -------------------------------------------------------------

    def save_checkpoint(self, path, which: str = "final") -> None:
        """Write the final policy, or the best-train-Sharpe snapshot with which='best'."""
        if which not in ("final", "best"):
            raise ValueError(f"unknown checkpoint kind {which!r}")
        if which == "best":
            if getattr(self, "best_snapshot_", None) is None:
                raise ValueError("no best snapshot was recorded during training")
            current = (
                self.ppo_.parameter_snapshot(),
                self.dqn_.parameter_snapshot() if self.dqn_ is not None else None,
            )
            ppo_best, dqn_best = self.best_snapshot_
            self.ppo_.load_parameter_snapshot(ppo_best)
            if dqn_best is not None:
                self.dqn_.load_parameter_snapshot(dqn_best)
            try:
                self.save_checkpoint(path, which="final")
            finally:
                self.ppo_.load_parameter_snapshot(current[0])
                if current[1] is not None:
                    self.dqn_.load_parameter_snapshot(current[1])
            return
        nets = {"actor": self.ppo_.actor, "critic": self.ppo_.critic}
        if self.dqn_ is not None:
            nets["q_net"] = self.dqn_.q_net
        arrays = {
            "log_sigma": self.ppo_.log_sigma,
            "norm_mean": self.norm_.mean_,
            "norm_std": self.norm_.std_,
        }
        meta = {
            "explore": self.explore,
            "kappa": self.kappa,
            "n_assets": self.n_assets_,
            "n_extended": self.n_extended_,
            "base_dim": self.base_dim_,
            "assets": list(self.assets_),
            "extended_assets": list(self.extended_assets_),
        }
        save_checkpoint(path, nets, arrays, meta)

    def load_checkpoint(self, path):
        """Restore fitted state; network shapes must match this trader's config."""
        nets, arrays, meta = load_checkpoint(path)
        self.n_assets_ = int(meta["n_assets"])
        self.n_extended_ = int(meta["n_extended"])
        self.base_dim_ = int(meta["base_dim"])
        self.assets_ = tuple(meta["assets"])
        self.extended_assets_ = tuple(meta["extended_assets"])
        self._steps_per_episode = 1  # irrelevant after training
        ppo, dqn = self._build_agents(self.base_dim_, self.n_assets_, self.n_extended_)
        ppo.actor.load_parameters_from(nets["actor"])
        ppo.critic.load_parameters_from(nets["critic"])
        ppo.log_sigma[...] = arrays["log_sigma"]
        if self.explore:
            if "q_net" not in nets:
                raise ValueError("checkpoint has no exploration agent but explore=True")
            dqn.q_net.load_parameters_from(nets["q_net"])
            dqn.sync_target()
        norm = NormStats()
        norm.mean_ = arrays["norm_mean"]
        norm.std_ = arrays["norm_std"]
        self.ppo_ = ppo
        self.dqn_ = dqn
        self.norm_ = norm
        return self
