"""Seedable 2D crowd-navigation environment.

The robot is holonomic and controlled by a velocity command; humans
follow a rule-based controller (reciprocal avoidance or social force)
toward goals that are occasionally resampled, and they never react to
the robot.  Each step the environment measures realized prediction
errors, feeds them to the conformal estimator bank, produces fresh
predictions with sampled error radii, and prices the robot's intrusion
into the resulting buffers as the step cost.
"""

from __future__ import annotations

import enum
import math
from collections import deque
from dataclasses import dataclass

import numpy as np

from .agents import AgentState, Vec2, vec2
from .buffers import IntrusionReport, NO_INTRUSION, cost as buffer_cost, max_intrusion
from .config import WorldConfig
from .conformal import EstimatorBank
from .pedestrians import orca_velocity, sf_velocity
from .prediction import PredictionSet, predict_cv


class Outcome(enum.Enum):
    RUNNING = "running"
    SUCCESS = "success"
    COLLISION = "collision"
    TIMEOUT = "timeout"


class ScenarioGenerationError(RuntimeError):
    """Rejection sampling could not place all agents."""


class EpisodeFinishedError(RuntimeError):
    """step() called on a finished episode."""


@dataclass
class Observation:
    """Full state exposed to a policy: robot, humans, and the model part
    (predicted points plus sampled error radii per human).

    Human ordering is stable within an episode.
    """

    ego: AgentState
    humans: list[AgentState]
    model: list[PredictionSet]


@dataclass
class StepResult:
    observation: Observation
    reward: float
    cost: float
    done: bool
    outcome: Outcome


def check_goal(robot: AgentState, goal_tolerance: float) -> bool:
    """True iff the robot center is strictly within radius + tolerance of
    its goal."""
    return robot.distance_to_goal() < robot.radius + goal_tolerance


def _place_agents(config: WorldConfig, rng: np.random.Generator) -> tuple[list[AgentState], AgentState]:
    """Rejection-sample non-overlapping starts, goals and speed limits."""
    half = config.arena_half_extent
    max_attempts = 1000

    def draw_point(margin: float) -> Vec2:
        lo, hi = -half + margin, half - margin
        return rng.uniform(lo, hi, size=2)

    # Robot start and far-enough goal first.
    for _ in range(max_attempts):
        start = draw_point(config.robot_radius)
        goal = draw_point(config.robot_radius)
        if float(np.linalg.norm(start - goal)) >= config.goal_min_distance:
            break
    else:
        raise ScenarioGenerationError(
            f"could not draw a robot start/goal pair at distance >= {config.goal_min_distance}"
        )
    robot = AgentState(start, vec2(0.0, 0.0), config.robot_radius, goal, config.robot_vmax)

    n_rushing = int(round(config.rushing_fraction * config.n_humans))
    rushing = set(rng.choice(config.n_humans, size=n_rushing, replace=False).tolist()) if n_rushing else set()

    humans: list[AgentState] = []
    for i in range(config.n_humans):
        radius = float(rng.uniform(*config.human_radius_range))
        if i in rushing:
            v_max = config.rushing_vmax
        else:
            v_max = float(rng.uniform(*config.human_vmax_range))
        for _ in range(max_attempts):
            pos = draw_point(radius)
            clear = float(np.linalg.norm(pos - robot.position)) > radius + robot.radius
            for other in humans:
                if float(np.linalg.norm(pos - other.position)) <= radius + other.radius:
                    clear = False
                    break
            if clear:
                break
        else:
            raise ScenarioGenerationError(f"could not place human {i} without overlap")
        goal_h = draw_point(radius)
        humans.append(AgentState(pos, vec2(0.0, 0.0), radius, goal_h, v_max))
    return humans, robot


def sample_scenario(config: WorldConfig, seed: int) -> tuple[list[AgentState], AgentState]:
    """Deterministic scenario draw: same (config, seed) gives identical
    agents bit-for-bit."""
    config.validate()
    return _place_agents(config, np.random.default_rng(seed))


class CrowdEnv:
    """One episodic crowd-navigation world.

    A single instance is single-threaded; run several instances (each with
    its own seed) for parallel rollout collection.
    """

    def __init__(self, config: WorldConfig, seed: int) -> None:
        config.validate()
        self.config = config
        ss = np.random.SeedSequence(seed)
        s_scenario, s_goal, s_bank = ss.spawn(3)
        self._scenario_rng = np.random.default_rng(s_scenario)
        self._goal_rng = np.random.default_rng(s_goal)
        self.bank = EstimatorBank(
            config.dtaci, config.n_humans, config.prediction_steps, seed=s_bank
        )
        self.robot: AgentState | None = None
        self.humans: list[AgentState] = []
        self.t = 0
        self.done = True
        self.outcome = Outcome.RUNNING
        self.last_intrusion: IntrusionReport = NO_INTRUSION
        # Ring of the last K (points, radii) snapshots, newest last; entry
        # age k steps holds the prediction whose k-th point targets "now".
        self._history: deque[tuple[np.ndarray, np.ndarray]] = deque(maxlen=config.prediction_steps)
        self._current_model: list[PredictionSet] = []
        self._last_goal_dist = 0.0

    # -- episode control ----------------------------------------------------

    def reset(self) -> Observation:
        self.humans, self.robot = _place_agents(self.config, self._scenario_rng)
        self.t = 0
        self.done = False
        self.outcome = Outcome.RUNNING
        self.last_intrusion = NO_INTRUSION
        self.bank.reset()
        self._history.clear()
        self._refresh_model()
        self._last_goal_dist = self.robot.distance_to_goal()
        return self.build_observation()

    def step(self, action: Vec2) -> StepResult:
        if self.done:
            raise EpisodeFinishedError("episode is finished; call reset()")
        ax, ay = float(action[0]), float(action[1])
        if not (math.isfinite(ax) and math.isfinite(ay)):
            raise ValueError("action must be finite")
        speed = math.hypot(ax, ay)
        if speed > self.config.robot_vmax:
            scale = self.config.robot_vmax / speed
            ax, ay = ax * scale, ay * scale

        robot = self.robot
        assert robot is not None
        robot.position = robot.position + vec2(ax, ay) * self.config.dt
        robot.velocity = vec2(ax, ay)

        self._advance_humans()
        self.t += 1
        self._maybe_resample_goals()
        self._update_error_estimates()
        self._refresh_model()

        reward, outcome = self._reward_and_outcome()
        self.last_intrusion = max_intrusion(
            robot.position,
            self.humans,
            self._current_model,
            self.config.buffer,
            robot.radius,
        )
        step_cost = buffer_cost(self.last_intrusion, self.config.buffer)

        self.outcome = outcome
        self.done = outcome is not Outcome.RUNNING
        self._last_goal_dist = robot.distance_to_goal()
        return StepResult(self.build_observation(), reward, step_cost, self.done, outcome)

    def build_observation(self) -> Observation:
        assert self.robot is not None
        return Observation(ego=self.robot, humans=self.humans, model=self._current_model)

    # -- internals ----------------------------------------------------------

    def _advance_humans(self) -> None:
        cfg = self.config
        snapshot = [h.copy() for h in self.humans]
        for i, human in enumerate(self.humans):
            neighbors = [snapshot[j] for j in range(len(snapshot)) if j != i]
            # Humans never see the robot.
            if cfg.pedestrian_model == "orca":
                v = orca_velocity(snapshot[i], neighbors, cfg.orca, cfg.dt)
            else:
                v = sf_velocity(snapshot[i], neighbors, cfg.sf, cfg.dt)
            human.position = human.position + v * cfg.dt
            human.velocity = v

    def _maybe_resample_goals(self) -> None:
        cfg = self.config
        if self.t % cfg.goal_resample_period != 0:
            return
        half = cfg.arena_half_extent
        for human in self.humans:
            if self._goal_rng.random() < cfg.goal_resample_prob:
                margin = human.radius
                human.goal = self._goal_rng.uniform(-half + margin, half - margin, size=2)

    def _update_error_estimates(self) -> None:
        """Compare realized positions with the k-step-old predictions and
        feed the errors to the estimator bank."""
        K = self.config.prediction_steps
        H = self.config.n_humans
        n_hist = len(self._history)
        if n_hist == 0:
            return
        actuals = np.zeros((H, K), dtype=np.float64)
        valid = np.zeros((H, K), dtype=bool)
        positions = np.stack([h.position for h in self.humans])
        for k in range(1, min(n_hist, K) + 1):
            points, _ = self._history[-k]
            diff = positions - points[:, k - 1, :]
            actuals[:, k - 1] = np.hypot(diff[:, 0], diff[:, 1])
            valid[:, k - 1] = True
        self.bank.observe_all(actuals, valid)

    def _refresh_model(self) -> None:
        cfg = self.config
        points = np.stack([predict_cv(h, cfg.prediction_steps, cfg.dt) for h in self.humans])
        radii = self.bank.sample_all()
        self._history.append((points, radii))
        self._current_model = [
            PredictionSet(points[h], radii[h]) for h in range(cfg.n_humans)
        ]

    def _reward_and_outcome(self) -> tuple[float, Outcome]:
        """Exactly one reward case fires per step; collision dominates a
        simultaneous goal reach."""
        cfg = self.config
        robot = self.robot
        assert robot is not None
        for human in self.humans:
            d = robot.position - human.position
            if math.hypot(float(d[0]), float(d[1])) < robot.radius + human.radius:
                return cfg.reward.r_collision, Outcome.COLLISION
        if check_goal(robot, cfg.reward.goal_tolerance):
            return cfg.reward.r_success, Outcome.SUCCESS
        progress = self._last_goal_dist - robot.distance_to_goal()
        reward = cfg.reward.w_potential * progress
        if self.t >= cfg.max_steps:
            return reward, Outcome.TIMEOUT
        return reward, Outcome.RUNNING

    # -- conveniences used by evaluation ------------------------------------

    def min_human_separation(self) -> float:
        """Smallest robot-human surface separation (can be negative)."""
        robot = self.robot
        assert robot is not None
        best = math.inf
        for human in self.humans:
            d = robot.position - human.position
            sep = math.hypot(float(d[0]), float(d[1])) - robot.radius - human.radius
            best = min(best, sep)
        return best
