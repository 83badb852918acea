"""Configuration dataclasses and JSON (de)serialization.

A run configuration file is a JSON object with optional ``world``, ``net``
and ``train`` sections; missing fields fall back to the defaults below.
Unknown keys are rejected so typos fail loudly.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    """Raised for invalid or malformed configuration."""


@dataclass
class OrcaParams:
    time_horizon: float = 5.0
    neighbor_dist: float = 10.0
    responsibility: float = 0.5

    def validate(self) -> None:
        if not self.time_horizon > 0:
            raise ConfigError("orca.time_horizon must be > 0")
        if not 0.0 < self.responsibility <= 1.0:
            raise ConfigError("orca.responsibility must lie in (0, 1]")
        if not self.neighbor_dist > 0:
            raise ConfigError("orca.neighbor_dist must be > 0")


@dataclass
class SfParams:
    relaxation_time: float = 0.5
    repulsion_strength: float = 2.0
    repulsion_range: float = 0.3

    def validate(self) -> None:
        for name in ("relaxation_time", "repulsion_strength", "repulsion_range"):
            if not getattr(self, name) > 0:
                raise ConfigError(f"sf.{name} must be > 0")


@dataclass
class RewardConfig:
    r_success: float = 10.0
    r_collision: float = -20.0
    w_potential: float = 2.0
    goal_tolerance: float = 0.1

    def validate(self) -> None:
        if not self.goal_tolerance >= 0:
            raise ConfigError("reward.goal_tolerance must be >= 0")


@dataclass
class DtaciConfig:
    """Multi-expert online quantile tracker settings."""

    alpha: float = 0.1
    learning_rates: tuple[float, ...] = (0.05, 0.1, 0.2)
    sigma: float = 0.05
    eta: float = 10.0
    initial_errors: tuple[float, ...] = (0.1, 0.2, 0.3, 0.4, 0.5)

    def validate(self) -> None:
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError("dtaci.alpha must lie in (0, 1)")
        if len(self.learning_rates) < 1 or any(g <= 0 for g in self.learning_rates):
            raise ConfigError("dtaci.learning_rates must be a nonempty list of positives")
        if not 0.0 <= self.sigma <= 1.0:
            raise ConfigError("dtaci.sigma must lie in [0, 1]")
        if not self.eta > 0:
            raise ConfigError("dtaci.eta must be > 0")
        if any(e < 0 for e in self.initial_errors):
            raise ConfigError("dtaci.initial_errors must be nonnegative")


@dataclass
class BufferSpec:
    """Spatial buffer geometry and cost scale."""

    r_disc: float = 0.25
    k_prime: int = 2
    mu: float = 1.0

    def validate(self) -> None:
        if self.r_disc < 0:
            raise ConfigError("buffer.r_disc must be >= 0")
        if self.k_prime < 1:
            raise ConfigError("buffer.k_prime must be >= 1")
        if not self.mu > 0:
            raise ConfigError("buffer.mu must be > 0")


@dataclass
class WorldConfig:
    arena_half_extent: float = 6.0
    n_humans: int = 20
    robot_radius: float = 0.2
    human_radius_range: tuple[float, float] = (0.3, 0.5)
    human_vmax_range: tuple[float, float] = (0.5, 1.5)
    robot_vmax: float = 1.0
    dt: float = 0.25
    max_steps: int = 200
    goal_min_distance: float = 8.0
    goal_resample_prob: float = 0.5
    goal_resample_period: int = 5
    rushing_fraction: float = 0.0
    rushing_vmax: float = 2.0
    pedestrian_model: str = "orca"
    prediction_steps: int = 5
    orca: OrcaParams = field(default_factory=OrcaParams)
    sf: SfParams = field(default_factory=SfParams)
    reward: RewardConfig = field(default_factory=RewardConfig)
    dtaci: DtaciConfig = field(default_factory=DtaciConfig)
    buffer: BufferSpec = field(default_factory=BufferSpec)

    def validate(self) -> None:
        if not self.arena_half_extent > 0:
            raise ConfigError("arena_half_extent must be > 0")
        if self.n_humans < 1:
            raise ConfigError("n_humans must be >= 1")
        if not self.dt > 0:
            raise ConfigError("dt must be > 0")
        if self.max_steps < 1:
            raise ConfigError("max_steps must be >= 1")
        for name in ("human_radius_range", "human_vmax_range"):
            lo, hi = getattr(self, name)
            if not (0 < lo <= hi):
                raise ConfigError(f"{name} must be ordered and positive")
        for name in ("goal_resample_prob", "rushing_fraction"):
            p = getattr(self, name)
            if not 0.0 <= p <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1]")
        if self.goal_resample_period < 1:
            raise ConfigError("goal_resample_period must be >= 1")
        if self.pedestrian_model not in ("orca", "sf"):
            raise ConfigError("pedestrian_model must be 'orca' or 'sf'")
        if self.prediction_steps < 1:
            raise ConfigError("prediction_steps must be >= 1")
        if len(self.dtaci.initial_errors) < self.prediction_steps:
            raise ConfigError("dtaci.initial_errors must cover every prediction step")
        if self.buffer.k_prime > self.prediction_steps:
            raise ConfigError("buffer.k_prime must not exceed prediction_steps")
        for sub in (self.orca, self.sf, self.reward, self.dtaci, self.buffer):
            sub.validate()


@dataclass
class NetConfig:
    embed_dim: int = 32
    attn_dim: int = 32
    trunk_dims: tuple[int, ...] = (64, 64)
    input_scale: float = 0.2
    fixed_action_std: float = 0.2

    def validate(self) -> None:
        if self.embed_dim < 1 or self.attn_dim < 1 or any(d < 1 for d in self.trunk_dims):
            raise ConfigError("network layer sizes must be positive")
        if not self.fixed_action_std > 0:
            raise ConfigError("fixed_action_std must be > 0")
        if not self.input_scale > 0:
            raise ConfigError("input_scale must be > 0")


@dataclass
class TrainConfig:
    discount: float = 0.99
    gae_lambda: float = 0.95
    clip: float = 0.08
    epochs: int = 4
    minibatch: int = 32
    c1: float = 0.5
    c2: float = 0.5
    lr: float = 3e-4
    lr_lambda: float = 5e-2
    cost_limit: float = 0.16
    cost_window: int = 20
    lambda_init: float = 0.0
    freeze_lambda: bool = False
    total_steps: int = 2_000_000
    rollout_steps: int = 4096
    n_parallel_envs: int = 8
    early_stop_sr: float | None = None
    early_stop_cost: float | None = None
    early_stop_min_episodes: int = 100

    def validate(self) -> None:
        if not self.clip > 0:
            raise ConfigError("clip must be > 0")
        for name in ("discount", "gae_lambda"):
            v = getattr(self, name)
            if not 0.0 < v <= 1.0:
                raise ConfigError(f"{name} must lie in (0, 1]")
        if self.minibatch < 1 or self.epochs < 1:
            raise ConfigError("epochs and minibatch must be >= 1")
        if self.rollout_steps % self.n_parallel_envs != 0:
            raise ConfigError("rollout_steps must be divisible by n_parallel_envs")
        if self.cost_window < 1:
            raise ConfigError("cost_window must be >= 1")
        if self.lambda_init < 0:
            raise ConfigError("lambda_init must be >= 0")


@dataclass
class RunConfig:
    world: WorldConfig = field(default_factory=WorldConfig)
    net: NetConfig = field(default_factory=NetConfig)
    train: TrainConfig = field(default_factory=TrainConfig)

    def validate(self) -> None:
        self.world.validate()
        self.net.validate()
        self.train.validate()


_TUPLE_FIELDS = {
    "human_radius_range",
    "human_vmax_range",
    "learning_rates",
    "initial_errors",
    "trunk_dims",
}


def _from_dict(cls: type, data: dict[str, Any]) -> Any:
    """Build a (possibly nested) config dataclass, rejecting unknown keys."""
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {sorted(unknown)}")
    kwargs: dict[str, Any] = {}
    for name, value in data.items():
        ftype = fields[name].type
        if isinstance(value, dict):
            sub_cls = _NESTED.get(name)
            if sub_cls is None:
                raise ConfigError(f"{cls.__name__}.{name} does not accept an object")
            kwargs[name] = _from_dict(sub_cls, value)
        elif name in _TUPLE_FIELDS and isinstance(value, (list, tuple)):
            kwargs[name] = tuple(value)
        else:
            kwargs[name] = value
        del ftype
    return cls(**kwargs)


_NESTED = {
    "orca": OrcaParams,
    "sf": SfParams,
    "reward": RewardConfig,
    "dtaci": DtaciConfig,
    "buffer": BufferSpec,
    "world": WorldConfig,
    "net": NetConfig,
    "train": TrainConfig,
}


def world_config_from_dict(data: dict[str, Any]) -> WorldConfig:
    cfg = _from_dict(WorldConfig, data)
    cfg.validate()
    return cfg


def run_config_from_dict(data: dict[str, Any]) -> RunConfig:
    cfg = _from_dict(RunConfig, data)
    cfg.validate()
    return cfg


def load_run_config(path: str | Path) -> RunConfig:
    with open(path, "r", encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path} must contain a JSON object")
    return run_config_from_dict(data)


def config_to_dict(cfg: Any) -> dict[str, Any]:
    return dataclasses.asdict(cfg)


def save_run_config(cfg: RunConfig, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(config_to_dict(cfg), fh, indent=2, sort_keys=True)
        fh.write("\n")


def config_hash(cfg: Any) -> str:
    """Stable digest of a config dataclass, for checkpoint headers."""
    blob = json.dumps(config_to_dict(cfg), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()
