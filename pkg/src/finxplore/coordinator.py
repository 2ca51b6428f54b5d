"""Dual-agent orchestration: propose, evaluate, accept/reject, route rewards.

Each period the allocation agent emits base weights over the existing
universe; its counterfactual lookback Sharpe (holding those weights fixed over
the trailing realized-return window, costs excluded) is the acceptance
yardstick. The exploration agent proposes one extended asset (or abstains);
the proposal is adopted only when carving out the kappa slot for it strictly
improves that Sharpe. Rewards: the allocation agent receives the current
portfolio Sharpe, the exploration agent the Sharpe improvement (0 on abstain).
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np

from .dqn import ABSTAIN, DqnAgent, Transition
from .environment import MarketState, PortfolioEnv
from .errors import InsufficientHistoryError
from .ppo import ActResult, PpoAgent, Rollout
from .validation import check_simplex

DEFAULT_KAPPA = 0.10
EVAL_WINDOW = 60


@dataclass(frozen=True)
class CoordinatorConfig:
    """Exploration budget and the acceptance evaluation window."""

    kappa: float = DEFAULT_KAPPA
    eval_window: int = EVAL_WINDOW

    def __post_init__(self):
        if not 0.0 <= self.kappa < 1.0:
            raise ValueError(f"kappa must lie in [0, 1), got {self.kappa}")
        if self.eval_window < 2:
            raise ValueError("eval_window must be >= 2")


def evaluate_sharpe(weights, returns: np.ndarray, t: int, window: int = EVAL_WINDOW) -> float:
    """Sharpe of holding `weights` fixed over return rows [t - window, t).

    Mean over sample standard deviation, risk-free 0; returns 0 when the
    dispersion is below 1e-12. Costs are excluded: this is a counterfactual
    lookback, not an execution.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if t < window:
        raise InsufficientHistoryError(f"need {window} return rows before t={t}")
    if t > returns.shape[0]:
        raise InsufficientHistoryError(f"t={t} beyond available returns ({returns.shape[0]})")
    window_returns = returns[t - window : t] @ weights
    sigma = window_returns.std(ddof=1)
    if sigma < 1e-12:
        return 0.0
    return float(window_returns.mean() / sigma)


def reoptimize(base_weights, candidate: int, kappa: float) -> np.ndarray:
    """Scale base weights by (1 - kappa) and append the kappa slot.

    ``candidate`` names the extended asset the slot will hold; it travels
    alongside the weights and does not enter the arithmetic.
    """
    w = check_simplex(base_weights, name="base_weights")
    return np.append((1.0 - kappa) * w, kappa)


@dataclass(frozen=True)
class StepDecision:
    """One period's full decision record.

    Baseline strategies fill only the weight fields; the dual-agent path also
    records the proposal, the two Sharpe evaluations and the routed rewards.
    """

    t: int
    date: dt.date
    base_weights: np.ndarray
    executed_weights: np.ndarray
    action: int | None = None  # raw exploration-agent action (0 = abstain)
    candidate: int | None = None  # extended-asset index, None on abstain
    adopted: bool = False
    sr_current: float | None = None
    sr_new: float | None = None
    delta_sr: float = 0.0
    r_ppo: float | None = None
    r_dqn: float | None = None

    def to_record(self) -> dict:
        return {
            "t": self.t,
            "date": self.date.isoformat(),
            "base_weights": [float(x) for x in self.base_weights],
            "candidate": self.candidate,
            "adopted": self.adopted,
            "sr_current": self.sr_current,
            "sr_new": self.sr_new,
            "delta_sr": self.delta_sr,
            "executed_weights": [float(x) for x in self.executed_weights],
        }


@dataclass
class TrainingReport:
    """Per-episode statistics plus the best-checkpoint bookkeeping."""

    episodes: list[dict] = field(default_factory=list)
    best_episode: int | None = None
    best_train_sharpe: float = float("-inf")

    def to_json(self) -> str:
        payload = {
            "episodes": self.episodes,
            "best_episode": self.best_episode,
            "best_train_sharpe": self.best_train_sharpe
            if np.isfinite(self.best_train_sharpe)
            else None,
        }
        return json.dumps(payload, sort_keys=True, indent=2)


class Coordinator:
    """Runs the per-period protocol and the training loop over both agents."""

    def __init__(
        self,
        env: PortfolioEnv,
        ppo: PpoAgent,
        dqn: DqnAgent | None = None,
        config: CoordinatorConfig | None = None,
    ):
        self.env = env
        self.ppo = ppo
        self.dqn = dqn
        self.config = config if config is not None else CoordinatorConfig()
        self.best_snapshot = None
        if dqn is not None and env.n_extended + 1 != dqn.n_actions:
            raise ValueError(
                f"exploration agent has {dqn.n_actions} actions but the extended "
                f"universe holds {env.n_extended} assets"
            )

    def coordinate_step(self, state: MarketState, train: bool = False):
        """One period's decision; returns (StepDecision, ActResult)."""
        act = self.ppo.act(state.features, train=train)
        base = act.weights
        sr_current = evaluate_sharpe(
            base, self.env.existing_returns, state.t, self.config.eval_window
        )

        if self.dqn is None:
            decision = StepDecision(
                t=state.t,
                date=self.env.panel.dates[state.t],
                base_weights=base,
                action=None,
                candidate=None,
                adopted=False,
                sr_current=sr_current,
                sr_new=None,
                delta_sr=0.0,
                executed_weights=base,
                r_ppo=sr_current,
                r_dqn=None,
            )
            return decision, act

        action = self.dqn.act(state.augmented(), explore=train)
        if action == ABSTAIN:
            candidate = None
            sr_new = None
            delta_sr = 0.0
            adopted = False
            executed = np.append(base, 0.0)
        else:
            candidate = action - 1
            extended_weights = reoptimize(base, candidate, self.config.kappa)
            with_candidate = np.column_stack(
                [self.env.existing_returns, self.env.extended_returns[:, candidate]]
            )
            sr_new = evaluate_sharpe(
                extended_weights, with_candidate, state.t, self.config.eval_window
            )
            adopted = sr_new > sr_current
            delta_sr = sr_new - sr_current
            executed = extended_weights if adopted else np.append(base, 0.0)

        decision = StepDecision(
            t=state.t,
            date=self.env.panel.dates[state.t],
            base_weights=base,
            action=action,
            candidate=candidate,
            adopted=adopted,
            sr_current=sr_current,
            sr_new=sr_new,
            delta_sr=delta_sr,
            executed_weights=executed,
            r_ppo=sr_current,
            r_dqn=delta_sr,
        )
        return decision, act

    def run_episode(self, train: bool = True):
        """One full pass over the panel; returns (episode stats, step decisions)."""
        env = self.env
        state = env.reset()
        rollout = Rollout()
        decisions: list[StepDecision] = []
        dqn_losses: list[float] = []
        portfolio_returns: list[float] = []
        env_rewards: list[float] = []
        n_adopted = 0
        n_proposals = 0

        while True:
            decision, act = self.coordinate_step(state, train=train)
            value = self.ppo.value(state.features)
            next_state, env_reward, done, info = env.step(
                decision.executed_weights, decision.candidate
            )
            decisions.append(decision)
            portfolio_returns.append(info.r_p)
            env_rewards.append(env_reward)
            n_proposals += decision.candidate is not None
            n_adopted += decision.adopted

            if train:
                rollout.add(
                    state.features, act.logits, act.log_density, decision.r_ppo, value, done
                )
                if self.dqn is not None:
                    self.dqn.remember(
                        Transition(
                            state=state.augmented(),
                            action=decision.action,
                            reward=decision.r_dqn,
                            next_state=next_state.augmented(),
                            done=done,
                        )
                    )
                    if len(self.dqn.replay) >= self.dqn.batch_size:
                        dqn_losses.append(self.dqn.update())

            state = next_state
            if done:
                break

        stats = {
            "steps": len(decisions),
            "mean_reward": float(np.mean([d.r_ppo for d in decisions])),
            "mean_env_reward": float(np.mean(env_rewards)),
            "acceptance_rate": n_adopted / len(decisions),
            "proposal_rate": n_proposals / len(decisions),
            "dqn_loss": float(np.mean(dqn_losses)) if dqn_losses else None,
            "train_sharpe": _sample_sharpe(portfolio_returns),
            "final_wealth": env.account.wealth,
        }
        if train:
            self.ppo.compute_advantages(rollout, bootstrap_value=0.0)
            ppo_stats = self.ppo.update(rollout)
            stats.update(ppo_stats)
        return stats, decisions

    def train(self, episodes: int) -> TrainingReport:
        """Run `episodes` training passes, checkpointing the best train Sharpe."""
        report = TrainingReport()
        for episode in range(episodes):
            stats, _ = self.run_episode(train=True)
            stats["episode"] = episode
            report.episodes.append(stats)
            if stats["train_sharpe"] > report.best_train_sharpe:
                report.best_train_sharpe = stats["train_sharpe"]
                report.best_episode = episode
                self.best_snapshot = (
                    self.ppo.parameter_snapshot(),
                    self.dqn.parameter_snapshot() if self.dqn is not None else None,
                )
        return report

    def load_best(self) -> None:
        """Restore the best-by-training-Sharpe parameters, if any were recorded."""
        if self.best_snapshot is None:
            return
        ppo_snap, dqn_snap = self.best_snapshot
        self.ppo.load_parameter_snapshot(ppo_snap)
        if dqn_snap is not None and self.dqn is not None:
            self.dqn.load_parameter_snapshot(dqn_snap)


def _sample_sharpe(values: list[float]) -> float:
    arr = np.asarray(values, dtype=np.float64)
    if arr.size < 2:
        return 0.0
    sigma = arr.std(ddof=1)
    if sigma < 1e-12:
        return 0.0
    return float(arr.mean() / sigma)
