"""Evaluation harness: deterministic policy rollouts, rule-based robot
baselines, coverage reports for the error estimators, and trajectory
dumps with replay verification.
"""

from __future__ import annotations

import copy
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .agents import AgentState, vec2
from .buffers import NO_INTRUSION
from .config import WorldConfig, config_to_dict
from .env import CrowdEnv, Observation, Outcome
from .metrics import BatchReport, EpisodeMetrics, aggregate
from .pedestrians import orca_velocity, sf_velocity
from .policy import (
    AttentionPolicy,
    encode_observation,
    load_checkpoint,
    policy_from_meta,
    verify_compatible,
)

# A robot controller maps the current observation to a velocity command.
RobotPolicy = Callable[[Observation], np.ndarray]


def apply_ood_preset(world: WorldConfig, preset: str) -> WorldConfig:
    """Evaluation-time distribution shifts: fast pedestrians or a swapped
    pedestrian model."""
    world = copy.deepcopy(world)
    if preset in ("none", ""):
        return world
    if preset == "rushing":
        world.rushing_fraction = 0.2
        world.rushing_vmax = 2.0
    elif preset == "sf":
        world.pedestrian_model = "sf"
    else:
        raise ValueError(f"unknown OOD preset {preset!r} (use none, rushing or sf)")
    world.validate()
    return world


def checkpoint_policy(ckpt_path: str | Path, world: WorldConfig) -> tuple[AttentionPolicy, RobotPolicy]:
    """Deterministic (mean-action) controller from a checkpoint file."""
    params, meta = load_checkpoint(ckpt_path)
    verify_compatible(meta, world.prediction_steps)
    model = policy_from_meta(meta)

    def act(obs: Observation) -> np.ndarray:
        humans, ego = encode_observation(obs, model.k_steps, model.net.input_scale)
        mean, _, _ = model.forward(params, humans, ego)
        return mean

    return model, act


def orca_robot_policy(world: WorldConfig) -> RobotPolicy:
    def act(obs: Observation) -> np.ndarray:
        return orca_velocity(obs.ego, obs.humans, world.orca, world.dt)

    return act


def sf_robot_policy(world: WorldConfig) -> RobotPolicy:
    def act(obs: Observation) -> np.ndarray:
        return sf_velocity(obs.ego, obs.humans, world.sf, world.dt)

    return act


def baseline_policy(world: WorldConfig, name: str) -> RobotPolicy:
    if name == "orca":
        return orca_robot_policy(world)
    if name == "sf":
        return sf_robot_policy(world)
    raise ValueError(f"unknown baseline {name!r} (use orca or sf)")


# -- episode execution ---------------------------------------------------------


def run_episode(
    env: CrowdEnv,
    policy: RobotPolicy,
    record: list[dict] | None = None,
) -> EpisodeMetrics:
    """Run one episode to termination, optionally recording per-step JSON
    payloads for trajectory dumps."""
    obs = env.reset()
    if record is not None:
        record.append(_snapshot(env, obs, None, None, None))
    path_length = 0.0
    intrusion_steps = 0
    distances: list[float] = []
    steps = 0
    prev = env.robot.position.copy()
    while True:
        action = np.asarray(policy(obs), dtype=np.float64)
        result = env.step(action)
        steps += 1
        obs = result.observation
        path_length += float(np.linalg.norm(env.robot.position - prev))
        prev = env.robot.position.copy()
        if env.last_intrusion.depth > 0.0:
            intrusion_steps += 1
            distances.append(env.min_human_separation())
        if record is not None:
            record.append(_snapshot(env, obs, action, result.reward, result.cost))
        if result.done:
            return EpisodeMetrics(
                outcome=result.outcome,
                nav_time=steps * env.config.dt,
                path_length=path_length,
                intrusion_steps=intrusion_steps,
                total_steps=steps,
                intrusion_distances=distances,
            )


def _agent_dict(agent: AgentState) -> dict:
    return {
        "position": agent.position.tolist(),
        "velocity": agent.velocity.tolist(),
        "radius": agent.radius,
        "goal": agent.goal.tolist(),
        "v_max": agent.v_max,
    }


def _snapshot(env: CrowdEnv, obs: Observation, action, reward, cost_value) -> dict:
    report = env.last_intrusion if action is not None else NO_INTRUSION
    return {
        "t": env.t,
        "robot": _agent_dict(obs.ego),
        "humans": [_agent_dict(h) for h in obs.humans],
        "predictions": [p.points.tolist() for p in obs.model],
        "radii": [p.radii.tolist() for p in obs.model],
        "action": None if action is None else [float(action[0]), float(action[1])],
        "reward": reward,
        "cost": cost_value,
        "intrusion": {
            "depth": report.depth,
            "source": report.source,
            "human": report.human,
            "step": report.step,
        },
    }


# -- batch evaluation -----------------------------------------------------------


def _split_episodes(n_episodes: int, n_seeds: int) -> list[int]:
    base = n_episodes // n_seeds
    counts = [base] * n_seeds
    for i in range(n_episodes - base * n_seeds):
        counts[i] += 1
    return counts


def run_eval(
    world: WorldConfig,
    policy_factory: Callable[[WorldConfig], RobotPolicy],
    n_episodes: int,
    seeds: Sequence[int],
) -> BatchReport:
    """Evaluate a deterministic controller over episodes split across the
    given seeds."""
    if n_episodes < 1 or not seeds:
        raise ValueError("need at least one episode and one seed")
    episodes: list[EpisodeMetrics] = []
    policy = policy_factory(world)
    for seed, count in zip(seeds, _split_episodes(n_episodes, len(seeds))):
        env = CrowdEnv(world, seed=seed)
        for _ in range(count):
            episodes.append(run_episode(env, policy))
    return aggregate(episodes, seeds)


def run_eval_checkpoint(
    ckpt_path: str | Path,
    world: WorldConfig,
    n_episodes: int,
    seeds: Sequence[int],
) -> BatchReport:
    _, act = checkpoint_policy(ckpt_path, world)
    return run_eval(world, lambda _w: act, n_episodes, seeds)


# -- coverage report -------------------------------------------------------------


@dataclass
class CoverageRow:
    step: int
    h: int
    k: int
    actual: float
    sampled_radius: float
    covered: bool


def run_coverage(
    world: WorldConfig,
    n_episodes: int,
    seed: int,
    robot: str = "orca",
) -> list[CoverageRow]:
    """Roll episodes with a rule-based robot and log, for every realized
    error, the radius that was attached to that prediction when it was
    made."""
    env = CrowdEnv(world, seed=seed)
    policy = baseline_policy(world, robot)
    rows: list[CoverageRow] = []
    step_counter = 0
    for _ in range(n_episodes):
        obs = env.reset()
        # (points, radii) per past step, newest last; mirrors the env's lag
        # structure so each error is matched with its own interval.
        history: list[tuple[np.ndarray, np.ndarray]] = [
            (np.stack([p.points for p in obs.model]), np.stack([p.radii for p in obs.model]))
        ]
        done = False
        while not done:
            result = env.step(policy(obs))
            obs = result.observation
            step_counter += 1
            positions = np.stack([h.position for h in obs.humans])
            K = world.prediction_steps
            for k in range(1, min(len(history), K) + 1):
                points, radii = history[-k]
                diff = positions - points[:, k - 1, :]
                actual = np.hypot(diff[:, 0], diff[:, 1])
                for h in range(world.n_humans):
                    rows.append(
                        CoverageRow(
                            step=step_counter,
                            h=h,
                            k=k,
                            actual=float(actual[h]),
                            sampled_radius=float(radii[h, k - 1]),
                            covered=bool(radii[h, k - 1] >= actual[h]),
                        )
                    )
            history.append(
                (np.stack([p.points for p in obs.model]), np.stack([p.radii for p in obs.model]))
            )
            if len(history) > K:
                history.pop(0)
            done = result.done
    return rows


def coverage_csv(rows: Sequence[CoverageRow]) -> str:
    lines = ["step,h,k,actual,sampled_radius,covered_flag"]
    for r in rows:
        lines.append(f"{r.step},{r.h},{r.k},{r.actual!r},{r.sampled_radius!r},{int(r.covered)}")
    return "\n".join(lines) + "\n"


def coverage_fraction(rows: Sequence[CoverageRow]) -> float:
    if not rows:
        raise ValueError("no coverage rows")
    return sum(r.covered for r in rows) / len(rows)


# -- trajectory dumps -------------------------------------------------------------


def dump_trajectory(
    world: WorldConfig,
    policy: RobotPolicy,
    seed: int,
    out_path: str | Path,
    header_extra: dict | None = None,
) -> EpisodeMetrics:
    """Write one episode as JSON Lines: a header record then one record
    per step."""
    env = CrowdEnv(world, seed=seed)
    record: list[dict] = []
    metrics = run_episode(env, policy, record=record)
    header = {
        "kind": "trajectory",
        "seed": seed,
        "world": config_to_dict(world),
        "outcome": metrics.outcome.value,
        "steps": metrics.total_steps,
    }
    if header_extra:
        header.update(header_extra)
    with open(out_path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header, sort_keys=True) + "\n")
        for row in record[1:]:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    return metrics


def replay_matches(dump_path: str | Path, policy: RobotPolicy, atol: float = 0.0) -> bool:
    """Re-run the dumped episode and compare every record field-by-field."""
    with open(dump_path, "r", encoding="utf-8") as fh:
        lines = [json.loads(line) for line in fh]
    header, records = lines[0], lines[1:]
    from .config import world_config_from_dict

    world = world_config_from_dict(header["world"])
    env = CrowdEnv(world, seed=header["seed"])
    obs = env.reset()
    for row in records:
        result = env.step(np.asarray(row["action"]))
        obs = result.observation
        robot = obs.ego
        if not _close(robot.position.tolist(), row["robot"]["position"], atol):
            return False
        for human, dumped in zip(obs.humans, row["humans"]):
            if not _close(human.position.tolist(), dumped["position"], atol):
                return False
        if not math.isclose(result.reward, row["reward"], abs_tol=atol, rel_tol=0.0):
            return False
        if not math.isclose(result.cost, row["cost"], abs_tol=atol, rel_tol=0.0):
            return False
    return True


def _close(a: list[float], b: list[float], atol: float) -> bool:
    return all(math.isclose(x, y, abs_tol=atol, rel_tol=0.0) for x, y in zip(a, b))
