"""Glue between the crowd environment and the trainer's rollout protocol."""

from __future__ import annotations

from typing import Callable

import numpy as np

from .config import NetConfig, WorldConfig
from .env import CrowdEnv, Outcome
from .policy import encode_observation


class CrowdRolloutEnv:
    """Featurized view of a CrowdEnv: reset/step exchange the policy's
    (human, ego) feature arrays instead of Observation objects."""

    def __init__(self, world: WorldConfig, net: NetConfig, seed: int) -> None:
        self.env = CrowdEnv(world, seed=seed)
        self.k_steps = world.prediction_steps
        self.input_scale = net.input_scale

    def reset(self) -> tuple[np.ndarray, np.ndarray]:
        obs = self.env.reset()
        return encode_observation(obs, self.k_steps, self.input_scale)

    def step(self, action: np.ndarray):
        result = self.env.step(action)
        features = encode_observation(result.observation, self.k_steps, self.input_scale)
        info = {
            "outcome": result.outcome.value,
            "success": result.outcome is Outcome.SUCCESS,
        }
        return features, result.reward, result.cost, result.done, info


def make_crowd_env_fns(
    world: WorldConfig, net: NetConfig, base_seed: int, n_envs: int
) -> list[Callable[[], CrowdRolloutEnv]]:
    """One factory per parallel environment, each with an independent
    seed stream derived from ``base_seed``."""
    seeds = [int(s.generate_state(1)[0]) for s in np.random.SeedSequence(base_seed).spawn(n_envs)]

    def make(seed: int) -> Callable[[], CrowdRolloutEnv]:
        return lambda: CrowdRolloutEnv(world, net, seed)

    return [make(s) for s in seeds]
