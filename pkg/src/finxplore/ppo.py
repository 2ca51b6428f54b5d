"""Clipped-surrogate actor-critic over the existing universe.

The continuous action (a weight vector on the simplex) is parameterized as a
diagonal Gaussian in logit space followed by softmax: the actor outputs mean
logits, a learned per-component log-sigma scales exploration noise, and the
log-density is recorded for the sampled logits. This keeps an exact,
differentiable density while every emitted action stays on the simplex.
Advantages use GAE(lambda); updates take several epochs of minibatch Adam
steps on the clipped surrogate plus value-MSE and entropy terms.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EmptyRolloutError, NonFiniteLossError
from .nn import AdamState, DenseNet, adam_step, backward, forward, softmax

LOG_2PI = float(np.log(2.0 * np.pi))


def gaussian_log_density(sampled, mean, log_sigma) -> np.ndarray:
    """Log-density of a diagonal Gaussian, summed over components.

    Accepts [n] vectors or [B, n] batches; returns a scalar or [B] vector.
    """
    sampled = np.asarray(sampled, dtype=np.float64)
    mean = np.asarray(mean, dtype=np.float64)
    inv_var = np.exp(-2.0 * log_sigma)
    quad = ((sampled - mean) ** 2 * inv_var).sum(axis=-1)
    return -0.5 * quad - log_sigma.sum() - 0.5 * sampled.shape[-1] * LOG_2PI


@dataclass(frozen=True)
class ActResult:
    weights: np.ndarray
    log_density: float
    logits: np.ndarray  # sampled (or mean, in evaluation mode) logits


@dataclass
class Rollout:
    """Per-step arrays collected over one episode."""

    states: list = field(default_factory=list)
    logits: list = field(default_factory=list)
    log_densities: list = field(default_factory=list)
    rewards: list = field(default_factory=list)
    values: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    advantages: np.ndarray | None = None
    returns: np.ndarray | None = None

    def add(self, state, logits, log_density, reward, value, done):
        self.states.append(np.asarray(state, dtype=np.float64))
        self.logits.append(np.asarray(logits, dtype=np.float64))
        self.log_densities.append(float(log_density))
        self.rewards.append(float(reward))
        self.values.append(float(value))
        self.dones.append(bool(done))

    def __len__(self) -> int:
        return len(self.states)


def compute_advantages(rollout: Rollout, gamma: float, lam: float, bootstrap_value: float = 0.0):
    """GAE(lambda) estimates and return targets, written back onto the rollout.

    With lam=0 this reduces to one-step TD residuals; with lam=1, gamma=1 and a
    terminal final step, to Monte-Carlo returns minus the value baseline.
    """
    n = len(rollout)
    if n == 0:
        raise EmptyRolloutError("cannot compute advantages on an empty rollout")
    rewards = np.asarray(rollout.rewards)
    values = np.asarray(rollout.values)
    dones = np.asarray(rollout.dones, dtype=np.float64)
    adv = np.empty(n)
    last = 0.0
    for t in range(n - 1, -1, -1):
        next_value = bootstrap_value if t == n - 1 else values[t + 1]
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_value * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    rollout.advantages = adv
    rollout.returns = adv + values
    return rollout


class PpoAgent:
    """Actor-critic agent emitting portfolio weight vectors over n assets."""

    def __init__(
        self,
        state_dim: int,
        n_assets: int,
        *,
        hidden_layers: int = 2,
        hidden_dim: int = 64,
        activation: str = "tanh",
        learning_rate: float = 3e-4,
        discount: float = 0.99,
        gae_lambda: float = 0.95,
        clip_ratio: float = 0.2,
        entropy_coef: float = 0.01,
        value_coef: float = 0.5,
        epochs: int = 10,
        minibatch_size: int = 64,
        dropout: float = 0.0,
        init_log_sigma: float = -0.5,
        rng: np.random.Generator | None = None,
    ):
        if not 0.0 < clip_ratio < 1.0:
            raise ValueError("clip_ratio must lie in (0, 1)")
        if not 0.0 <= discount <= 1.0:
            raise ValueError("discount must lie in [0, 1]")
        self.state_dim = state_dim
        self.n_assets = n_assets
        self.discount = discount
        self.gae_lambda = gae_lambda
        self.clip_ratio = clip_ratio
        self.entropy_coef = entropy_coef
        self.value_coef = value_coef
        self.epochs = epochs
        self.minibatch_size = minibatch_size
        self.dropout = dropout
        self.rng = rng if rng is not None else np.random.default_rng()

        sizes = [state_dim] + [hidden_dim] * hidden_layers
        self.actor = DenseNet.create(sizes + [n_assets], activation, "linear", self.rng)
        self.critic = DenseNet.create(sizes + [1], activation, "linear", self.rng)
        self.log_sigma = np.full(n_assets, float(init_log_sigma))
        self._params = self.actor.parameters() + [self.log_sigma] + self.critic.parameters()
        self.optimizer = AdamState.for_params(self._params, learning_rate)

    # -- acting --------------------------------------------------------------

    def act(self, state, train: bool = False) -> ActResult:
        """Sample (train) or take the deterministic softmax of mean logits (eval)."""
        mean, _ = forward(self.actor, state)
        if train:
            noise = self.rng.standard_normal(self.n_assets)
            logits = mean + np.exp(self.log_sigma) * noise
        else:
            logits = mean
        log_density = float(gaussian_log_density(logits, mean, self.log_sigma))
        return ActResult(weights=softmax(logits), log_density=log_density, logits=logits)

    def value(self, state) -> float:
        v, _ = forward(self.critic, state)
        return float(v[0])

    def compute_advantages(self, rollout: Rollout, bootstrap_value: float = 0.0) -> Rollout:
        return compute_advantages(rollout, self.discount, self.gae_lambda, bootstrap_value)

    # -- learning -------------------------------------------------------------

    def _batch_arrays(self, rollout: Rollout):
        states = np.stack(rollout.states)
        logits = np.stack(rollout.logits)
        logp_old = np.asarray(rollout.log_densities)
        adv = rollout.advantages
        if adv is None:
            raise EmptyRolloutError("advantages not computed; call compute_advantages first")
        if not np.all(np.isfinite(adv)):
            raise NonFiniteLossError("rollout advantages contain non-finite values")
        norm_adv = (adv - adv.mean()) / (adv.std() + 1e-8)
        return states, logits, logp_old, norm_adv, rollout.returns

    def surrogate_stats(self, rollout: Rollout, clip_ratio: float | None = None) -> dict:
        """Loss components at current parameters, without taking a step."""
        states, logits, logp_old, adv, returns = self._batch_arrays(rollout)
        eps = self.clip_ratio if clip_ratio is None else clip_ratio
        mean, _ = forward(self.actor, states)
        logp_new = gaussian_log_density(logits, mean, self.log_sigma)
        ratio = np.exp(logp_new - logp_old)
        clipped = np.clip(ratio, 1.0 - eps, 1.0 + eps)
        surr = np.minimum(ratio * adv, clipped * adv)
        values, _ = forward(self.critic, states)
        value_err = values[:, 0] - returns
        return {
            "policy_loss": float(-surr.mean()),
            "value_loss": float((value_err**2).mean()),
            "entropy": float(self.log_sigma.sum() + 0.5 * self.n_assets * (1.0 + LOG_2PI)),
            "clip_fraction": float((np.abs(ratio - 1.0) > eps).mean()),
        }

    def _minibatch_grads(self, states, logits, logp_old, adv, returns):
        """Loss components plus gradients for every parameter, one minibatch."""
        batch = states.shape[0]
        sigma2 = np.exp(2.0 * self.log_sigma)

        mean, actor_tape = forward(
            self.actor, states, train=True, dropout=self.dropout, rng=self.rng
        )
        logp_new = gaussian_log_density(logits, mean, self.log_sigma)
        ratio = np.exp(logp_new - logp_old)
        clipped = np.clip(ratio, 1.0 - self.clip_ratio, 1.0 + self.clip_ratio)
        unclipped_term = ratio * adv
        clipped_term = clipped * adv
        surr = np.minimum(unclipped_term, clipped_term)
        policy_loss = -surr.mean()

        # d(policy_loss)/d(logp_new): gradient flows through the ratio only when
        # the unclipped branch attains the min.
        flow = (unclipped_term <= clipped_term).astype(np.float64)
        dlogp = -(flow * adv * ratio) / batch

        diff = logits - mean
        dmean = dlogp[:, None] * diff / sigma2  # dlogp/dmean = (z - mean)/sigma^2
        actor_grads = backward(self.actor, actor_tape, dmean)

        dlog_sigma = (dlogp[:, None] * (diff**2 / sigma2 - 1.0)).sum(axis=0)
        dlog_sigma -= self.entropy_coef  # entropy term: -c_e * sum(log_sigma)
        entropy = float(self.log_sigma.sum() + 0.5 * self.n_assets * (1.0 + LOG_2PI))

        values, critic_tape = forward(
            self.critic, states, train=True, dropout=self.dropout, rng=self.rng
        )
        value_err = values[:, 0] - returns
        value_loss = float((value_err**2).mean())
        dvalues = (self.value_coef * 2.0 * value_err / batch)[:, None]
        critic_grads = backward(self.critic, critic_tape, dvalues)

        grads = actor_grads.parameters() + [dlog_sigma] + critic_grads.parameters()
        stats = {
            "policy_loss": float(policy_loss),
            "value_loss": value_loss,
            "entropy": entropy,
            "clip_fraction": float((np.abs(ratio - 1.0) > self.clip_ratio).mean()),
        }
        total = policy_loss + self.value_coef * value_loss - self.entropy_coef * entropy
        return total, grads, stats

    def update(self, rollout: Rollout) -> dict:
        """Several epochs of minibatch steps; rolls back and raises on non-finite loss."""
        states, logits, logp_old, adv, returns = self._batch_arrays(rollout)
        snapshot = [p.copy() for p in self._params]
        n = states.shape[0]
        agg = {"policy_loss": 0.0, "value_loss": 0.0, "entropy": 0.0, "clip_fraction": 0.0}
        batches = 0
        for _ in range(self.epochs):
            order = self.rng.permutation(n)
            for start in range(0, n, self.minibatch_size):
                idx = order[start : start + self.minibatch_size]
                total, grads, stats = self._minibatch_grads(
                    states[idx], logits[idx], logp_old[idx], adv[idx], returns[idx]
                )
                if not np.isfinite(total) or any(
                    not np.all(np.isfinite(g)) for g in grads
                ):
                    for p, saved in zip(self._params, snapshot):
                        p[...] = saved
                    raise NonFiniteLossError(f"non-finite loss {total!r} during update")
                adam_step(self._params, grads, self.optimizer)
                for key in agg:
                    agg[key] += stats[key]
                batches += 1
        return {key: value / batches for key, value in agg.items()}

    # -- persistence ----------------------------------------------------------

    def parameter_snapshot(self) -> list[np.ndarray]:
        return [p.copy() for p in self._params]

    def load_parameter_snapshot(self, snapshot) -> None:
        for p, saved in zip(self._params, snapshot):
            p[...] = saved
