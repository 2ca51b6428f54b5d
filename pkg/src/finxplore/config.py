"""Run configuration: TOML schema, range validation, and the random search space.

Hyperparameter bounds follow the experiment grid this artifact targets
(hidden layers 1-8, hidden width 2-512, learning rate 1e-8..1e-1 log-uniform,
discount 0..1, activation in {relu, sigmoid, tanh}, dropout 0..0.5, entropy
coefficient 0.01..0.1, value coefficient 0.5..1, policy epochs 5..50, Q batch
32..256). Point settings (clip ratio 0.2, kappa 10%, 500 episodes) are
defaults, overridable within their library-level bounds.
"""

from __future__ import annotations

import dataclasses
import datetime as dt
import os
import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .data import DateRange, UniverseSpec
from .errors import ConfigError

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

ENV_DATA_DIR = "FINX_DATA_DIR"

ACTIVATION_CHOICES = ("relu", "sigmoid", "tanh")


@dataclass(frozen=True)
class DataConfig:
    existing: tuple[str, ...]
    extended: tuple[str, ...]
    train_start: dt.date
    train_end: dt.date
    trade_start: dt.date
    trade_end: dt.date
    directory: str = ""
    index: str = ""

    def resolved_directory(self) -> Path:
        if self.directory:
            return Path(self.directory)
        return Path(os.environ.get(ENV_DATA_DIR, "."))

    def universe_spec(self) -> UniverseSpec:
        return UniverseSpec(
            existing=tuple(self.existing),
            extended=tuple(self.extended),
            train_range=DateRange(self.train_start, self.train_end),
            trade_range=DateRange(self.trade_start, self.trade_end),
        )


@dataclass(frozen=True)
class EnvConfig:
    transaction_cost: float = 5e-4
    reward_window: int = 60
    covariance_window: int = 60
    warmup: int = 60
    initial_capital: float = 1_000_000.0


@dataclass(frozen=True)
class PpoConfig:
    hidden_layers: int = 2
    hidden_dim: int = 64
    activation: str = "tanh"
    learning_rate: float = 3e-4
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip_ratio: float = 0.2
    entropy_coef: float = 0.01
    value_coef: float = 0.5
    epochs: int = 10
    minibatch_size: int = 64
    dropout: float = 0.0


@dataclass(frozen=True)
class DqnConfig:
    hidden_layers: int = 2
    hidden_dim: int = 64
    activation: str = "relu"
    learning_rate: float = 1e-3
    discount: float = 0.99
    batch_size: int = 64
    replay_capacity: int = 50_000
    target_sync_interval: int = 200
    epsilon_start: float = 1.0
    epsilon_end: float = 0.05
    epsilon_decay_frac: float = 0.3
    dropout: float = 0.0


@dataclass(frozen=True)
class BaselinesConfig:
    mvo_window: int = 60
    mvo_risk_aversion: float = 1.0


@dataclass(frozen=True)
class RunSettings:
    kappa: float = 0.10
    episodes: int = 500
    seed: int = 0
    eval_window: int = 60
    output_dir: str = "runs/out"


@dataclass(frozen=True)
class RunConfig:
    data: DataConfig
    environment: EnvConfig = field(default_factory=EnvConfig)
    ppo: PpoConfig = field(default_factory=PpoConfig)
    dqn: DqnConfig = field(default_factory=DqnConfig)
    baselines: BaselinesConfig = field(default_factory=BaselinesConfig)
    run: RunSettings = field(default_factory=RunSettings)


_SECTIONS = {
    "data": DataConfig,
    "environment": EnvConfig,
    "ppo": PpoConfig,
    "dqn": DqnConfig,
    "baselines": BaselinesConfig,
    "run": RunSettings,
}


def _coerce(value, target_type, path: str):
    if target_type is dt.date:
        if isinstance(value, dt.date) and not isinstance(value, dt.datetime):
            return value
        if isinstance(value, str):
            try:
                return dt.date.fromisoformat(value)
            except ValueError:
                raise ConfigError(f"{path}: bad date {value!r}") from None
        raise ConfigError(f"{path}: expected a date, got {type(value).__name__}")
    if target_type is float and isinstance(value, (int, float)) and not isinstance(value, bool):
        return float(value)
    if target_type is int:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{path}: expected an integer, got {value!r}")
        return value
    if target_type is str:
        if not isinstance(value, str):
            raise ConfigError(f"{path}: expected a string, got {value!r}")
        return value
    if target_type is tuple:
        if not isinstance(value, (list, tuple)) or not all(isinstance(v, str) for v in value):
            raise ConfigError(f"{path}: expected a list of strings")
        return tuple(value)
    return value


def _build_section(cls, table: dict, path: str):
    allowed = {f.name: f for f in fields(cls)}
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{path}.{key}: unknown key")
    kwargs = {}
    for name, f in allowed.items():
        if name not in table:
            continue
        raw = f.type if isinstance(f.type, str) else f.type.__name__
        if raw.startswith("tuple"):
            target = tuple
        elif "date" in raw:
            target = dt.date
        elif raw == "float":
            target = float
        elif raw == "int":
            target = int
        else:
            target = str
        kwargs[name] = _coerce(table[name], target, f"{path}.{name}")
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from None


def load_config(path) -> RunConfig:
    with open(path, "rb") as fh:
        try:
            raw = tomllib.load(fh)
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
    return config_from_dict(raw)


def config_from_dict(raw: dict) -> RunConfig:
    for key in raw:
        if key not in _SECTIONS:
            raise ConfigError(f"{key}: unknown section")
    if "data" not in raw:
        raise ConfigError("data: section is required")
    sections = {
        name: _build_section(cls, raw.get(name, {}), name) for name, cls in _SECTIONS.items()
    }
    config = RunConfig(**sections)
    validate_config(config)
    return config


def _check(condition: bool, path: str, message: str):
    if not condition:
        raise ConfigError(f"{path}: {message}")


def _validate_agent(section, path: str):
    _check(1 <= section.hidden_layers <= 8, f"{path}.hidden_layers", "must be in [1, 8]")
    _check(2 <= section.hidden_dim <= 512, f"{path}.hidden_dim", "must be in [2, 512]")
    _check(
        1e-8 <= section.learning_rate <= 1e-1,
        f"{path}.learning_rate",
        "must be in [1e-08, 0.1]",
    )
    _check(0.0 <= section.discount <= 1.0, f"{path}.discount", "must be in [0, 1]")
    _check(
        section.activation in ACTIVATION_CHOICES,
        f"{path}.activation",
        f"must be one of {ACTIVATION_CHOICES}",
    )
    _check(0.0 <= section.dropout <= 0.5, f"{path}.dropout", "must be in [0, 0.5]")


def validate_config(config: RunConfig) -> None:
    data = config.data
    _check(len(data.existing) >= 1, "data.existing", "must list at least one asset")
    _check(
        not set(data.existing) & set(data.extended),
        "data.extended",
        "must be disjoint from data.existing",
    )
    _check(data.train_start <= data.train_end, "data.train_end", "range ends before it starts")
    _check(data.trade_start <= data.trade_end, "data.trade_end", "range ends before it starts")
    _check(
        data.train_end < data.trade_start,
        "data.trade_start",
        "trade range must start after the train range ends",
    )

    env = config.environment
    _check(env.transaction_cost >= 0.0, "environment.transaction_cost", "must be >= 0")
    _check(env.reward_window >= 2, "environment.reward_window", "must be >= 2")
    _check(env.covariance_window >= 2, "environment.covariance_window", "must be >= 2")
    _check(
        env.warmup >= env.covariance_window,
        "environment.warmup",
        "must cover the covariance window",
    )
    _check(env.initial_capital > 0.0, "environment.initial_capital", "must be positive")

    _validate_agent(config.ppo, "ppo")
    _check(0.0 <= config.ppo.gae_lambda <= 1.0, "ppo.gae_lambda", "must be in [0, 1]")
    _check(0.0 < config.ppo.clip_ratio < 1.0, "ppo.clip_ratio", "must be in (0, 1)")
    _check(
        0.01 <= config.ppo.entropy_coef <= 0.1, "ppo.entropy_coef", "must be in [0.01, 0.1]"
    )
    _check(0.5 <= config.ppo.value_coef <= 1.0, "ppo.value_coef", "must be in [0.5, 1]")
    _check(5 <= config.ppo.epochs <= 50, "ppo.epochs", "must be in [5, 50]")
    _check(config.ppo.minibatch_size >= 1, "ppo.minibatch_size", "must be >= 1")

    _validate_agent(config.dqn, "dqn")
    _check(32 <= config.dqn.batch_size <= 256, "dqn.batch_size", "must be in [32, 256]")
    _check(
        config.dqn.replay_capacity >= config.dqn.batch_size,
        "dqn.replay_capacity",
        "must be >= dqn.batch_size",
    )
    _check(config.dqn.target_sync_interval >= 1, "dqn.target_sync_interval", "must be >= 1")
    _check(
        0.0 <= config.dqn.epsilon_end <= config.dqn.epsilon_start <= 1.0,
        "dqn.epsilon_end",
        "need 0 <= epsilon_end <= epsilon_start <= 1",
    )
    _check(
        0.0 < config.dqn.epsilon_decay_frac <= 1.0,
        "dqn.epsilon_decay_frac",
        "must be in (0, 1]",
    )

    _check(config.baselines.mvo_window >= 2, "baselines.mvo_window", "must be >= 2")
    _check(
        config.baselines.mvo_risk_aversion > 0.0,
        "baselines.mvo_risk_aversion",
        "must be positive",
    )

    run = config.run
    _check(0.0 <= run.kappa < 1.0, "run.kappa", "must be in [0, 1)")
    _check(run.episodes >= 0, "run.episodes", "must be >= 0")
    _check(run.eval_window >= 2, "run.eval_window", "must be >= 2")


# -- serialization -----------------------------------------------------------------


def _toml_scalar(value) -> str:
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, (int, float)):
        return repr(value)
    if isinstance(value, dt.date):
        return value.isoformat()
    if isinstance(value, str):
        escaped = value.replace("\\", "\\\\").replace('"', '\\"')
        return f'"{escaped}"'
    if isinstance(value, (list, tuple)):
        return "[" + ", ".join(_toml_scalar(v) for v in value) + "]"
    raise TypeError(f"cannot serialize {value!r}")


def dump_config(config: RunConfig) -> str:
    lines = []
    for section_name, cls in _SECTIONS.items():
        section = getattr(config, section_name)
        lines.append(f"[{section_name}]")
        for f in fields(cls):
            lines.append(f"{f.name} = {_toml_scalar(getattr(section, f.name))}")
        lines.append("")
    return "\n".join(lines)


def save_config(config: RunConfig, path) -> None:
    Path(path).write_text(dump_config(config))


def trader_kwargs(config: RunConfig) -> dict:
    """Map a RunConfig onto DrlTrader constructor arguments (minus `explore`)."""
    env, ppo, dqn, run = config.environment, config.ppo, config.dqn, config.run
    return {
        "kappa": run.kappa,
        "episodes": run.episodes,
        "seed": run.seed,
        "eval_window": run.eval_window,
        "cov_window": env.covariance_window,
        "reward_window": env.reward_window,
        "transaction_cost": env.transaction_cost,
        "initial_capital": env.initial_capital,
        "ppo_hidden_layers": ppo.hidden_layers,
        "ppo_hidden_dim": ppo.hidden_dim,
        "ppo_activation": ppo.activation,
        "ppo_learning_rate": ppo.learning_rate,
        "ppo_discount": ppo.discount,
        "gae_lambda": ppo.gae_lambda,
        "clip_ratio": ppo.clip_ratio,
        "entropy_coef": ppo.entropy_coef,
        "value_coef": ppo.value_coef,
        "ppo_epochs": ppo.epochs,
        "ppo_minibatch": ppo.minibatch_size,
        "ppo_dropout": ppo.dropout,
        "dqn_hidden_layers": dqn.hidden_layers,
        "dqn_hidden_dim": dqn.hidden_dim,
        "dqn_activation": dqn.activation,
        "dqn_learning_rate": dqn.learning_rate,
        "dqn_discount": dqn.discount,
        "dqn_batch_size": dqn.batch_size,
        "replay_capacity": dqn.replay_capacity,
        "target_sync_interval": dqn.target_sync_interval,
        "epsilon_start": dqn.epsilon_start,
        "epsilon_end": dqn.epsilon_end,
        "epsilon_decay_frac": dqn.epsilon_decay_frac,
        "dqn_dropout": dqn.dropout,
    }


# -- random search over the hyperparameter grid -----------------------------------


def _replace_field(config: RunConfig, dotted: str, value) -> RunConfig:
    section_name, field_name = dotted.split(".", 1)
    section = getattr(config, section_name)
    new_section = dataclasses.replace(section, **{field_name: value})
    return dataclasses.replace(config, **{section_name: new_section})


def apply_overrides(config: RunConfig, overrides: dict) -> RunConfig:
    for dotted, value in overrides.items():
        config = _replace_field(config, dotted, value)
    validate_config(config)
    return config


class SearchSpace:
    """Seeded random sampler over the hyperparameter grid.

    Learning rates are log-uniform; integer ranges are uniform inclusive;
    activations are categorical. Point settings (clip ratio, kappa, episode
    count) are never varied and come from the base config.
    """

    def sample(self, rng: np.random.Generator) -> dict:
        def log_uniform(lo, hi):
            return float(10 ** rng.uniform(np.log10(lo), np.log10(hi)))

        overrides = {}
        for agent in ("ppo", "dqn"):
            overrides[f"{agent}.hidden_layers"] = int(rng.integers(1, 9))
            overrides[f"{agent}.hidden_dim"] = int(rng.integers(2, 513))
            overrides[f"{agent}.learning_rate"] = log_uniform(1e-8, 1e-1)
            overrides[f"{agent}.discount"] = float(rng.uniform(0.0, 1.0))
            overrides[f"{agent}.activation"] = str(rng.choice(ACTIVATION_CHOICES))
            overrides[f"{agent}.dropout"] = float(rng.uniform(0.0, 0.5))
        overrides["ppo.entropy_coef"] = float(rng.uniform(0.01, 0.1))
        overrides["ppo.value_coef"] = float(rng.uniform(0.5, 1.0))
        overrides["ppo.epochs"] = int(rng.integers(5, 51))
        overrides["dqn.batch_size"] = int(rng.integers(32, 257))
        return overrides
