"""Deep Q-learning over the extended universe: which asset to propose, or none.

Action 0 abstains (propose nothing); action k in 1..m proposes extended asset
k-1. Standard machinery: uniform experience replay, a frozen target network
hard-synced every ``target_sync_interval`` updates, and linear epsilon decay.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatchError, NonFiniteLossError, ReplayTooSmallError
from .nn import AdamState, DenseNet, adam_step, backward, forward

ABSTAIN = 0  # action index that proposes no asset


@dataclass(frozen=True)
class Transition:
    state: np.ndarray  # augmented view: base features + extended returns
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


class ReplayBuffer:
    """Fixed-capacity ring buffer with uniform sampling (with replacement)."""

    def __init__(self, capacity: int, rng: np.random.Generator):
        self.capacity = capacity
        self.rng = rng
        self._storage: list[Transition] = []
        self._cursor = 0

    def push(self, transition: Transition) -> None:
        if len(self._storage) < self.capacity:
            self._storage.append(transition)
        else:
            self._storage[self._cursor] = transition
            self._cursor = (self._cursor + 1) % self.capacity

    def __len__(self) -> int:
        return len(self._storage)

    def sample(self, batch_size: int) -> list[Transition]:
        """Uniform draw with replacement; any batch size from a non-empty buffer."""
        if not self._storage:
            raise ReplayTooSmallError("replay buffer is empty")
        idx = self.rng.integers(0, len(self._storage), size=batch_size)
        return [self._storage[i] for i in idx]


class DqnAgent:
    """Value-based proposal agent with m+1 discrete actions (0 = abstain)."""

    def __init__(
        self,
        state_dim: int,
        n_actions: int,
        *,
        hidden_layers: int = 2,
        hidden_dim: int = 64,
        activation: str = "relu",
        learning_rate: float = 1e-3,
        discount: float = 0.99,
        batch_size: int = 64,
        replay_capacity: int = 50_000,
        target_sync_interval: int = 200,
        epsilon_start: float = 1.0,
        epsilon_end: float = 0.05,
        epsilon_decay_steps: int = 10_000,
        dropout: float = 0.0,
        rng: np.random.Generator | None = None,
    ):
        if replay_capacity < batch_size:
            raise ValueError("replay capacity must be >= batch size")
        self.state_dim = state_dim
        self.n_actions = n_actions
        self.discount = discount
        self.batch_size = batch_size
        self.target_sync_interval = target_sync_interval
        self.epsilon_start = epsilon_start
        self.epsilon_end = epsilon_end
        self.epsilon_decay_steps = max(1, epsilon_decay_steps)
        self.dropout = dropout
        self.rng = rng if rng is not None else np.random.default_rng()

        sizes = [state_dim] + [hidden_dim] * hidden_layers + [n_actions]
        self.q_net = DenseNet.create(sizes, activation, "linear", self.rng)
        self.target_net = self.q_net.copy()
        self.optimizer = AdamState.for_params(self.q_net.parameters(), learning_rate)
        self.replay = ReplayBuffer(replay_capacity, self.rng)
        self.update_count = 0
        self.act_count = 0

    @property
    def epsilon(self) -> float:
        frac = min(1.0, self.act_count / self.epsilon_decay_steps)
        return self.epsilon_start + frac * (self.epsilon_end - self.epsilon_start)

    def q_values(self, state, net: DenseNet | None = None) -> np.ndarray:
        state = np.asarray(state, dtype=np.float64)
        if state.shape[-1] != self.state_dim:
            raise DimensionMismatchError(
                f"state dim {state.shape[-1]} != expected {self.state_dim}"
            )
        out, _ = forward(net if net is not None else self.q_net, state)
        return out

    def act(self, state, explore: bool = False) -> int:
        """Epsilon-greedy when exploring, else greedy argmax (ties: lowest index)."""
        if explore:
            eps = self.epsilon
            self.act_count += 1
            if self.rng.random() < eps:
                return int(self.rng.integers(0, self.n_actions))
        return int(np.argmax(self.q_values(state)))

    def remember(self, transition: Transition) -> None:
        self.replay.push(transition)

    def sync_target(self) -> None:
        self.target_net.load_parameters_from(self.q_net)

    def update(self, batch: list[Transition] | None = None) -> float:
        """One TD step on a sampled (or given) batch; returns the MSE loss."""
        if batch is None:
            if len(self.replay) < self.batch_size:
                raise ReplayTooSmallError(
                    f"replay holds {len(self.replay)} transitions, batch needs "
                    f"{self.batch_size}"
                )
            batch = self.replay.sample(self.batch_size)
        states = np.stack([tr.state for tr in batch])
        next_states = np.stack([tr.next_state for tr in batch])
        actions = np.array([tr.action for tr in batch], dtype=int)
        rewards = np.array([tr.reward for tr in batch])
        not_done = 1.0 - np.array([tr.done for tr in batch], dtype=np.float64)

        next_q, _ = forward(self.target_net, next_states)
        targets = rewards + self.discount * not_done * next_q.max(axis=1)

        q_all, tape = forward(self.q_net, states, train=True, dropout=self.dropout, rng=self.rng)
        rows = np.arange(len(batch))
        td_err = q_all[rows, actions] - targets
        loss = float((td_err**2).mean())
        if not np.isfinite(loss):
            raise NonFiniteLossError(f"non-finite TD loss {loss!r}")

        dq = np.zeros_like(q_all)
        dq[rows, actions] = 2.0 * td_err / len(batch)
        grads = backward(self.q_net, tape, dq)
        adam_step(self.q_net.parameters(), grads.parameters(), self.optimizer)

        self.update_count += 1
        if self.update_count % self.target_sync_interval == 0:
            self.sync_target()
        return loss

    # -- persistence ----------------------------------------------------------

    def parameter_snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self.q_net.parameters()]

    def load_parameter_snapshot(self, snapshot) -> None:
        for p, saved in zip(self.q_net.parameters(), snapshot):
            p[...] = saved
        self.sync_target()
