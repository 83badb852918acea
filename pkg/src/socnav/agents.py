"""Agent state containers shared by the simulator and the controllers."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# A point or velocity in the plane, float64, shape (2,).
Vec2 = np.ndarray


def vec2(x: float, y: float) -> Vec2:
    return np.array([float(x), float(y)], dtype=np.float64)


@dataclass
class AgentState:
    """Physical state of one agent: a disc with a goal and a speed limit."""

    position: Vec2
    velocity: Vec2
    radius: float
    goal: Vec2
    v_max: float

    def __post_init__(self) -> None:
        self.position = np.asarray(self.position, dtype=np.float64)
        self.velocity = np.asarray(self.velocity, dtype=np.float64)
        self.goal = np.asarray(self.goal, dtype=np.float64)
        if not (self.radius > 0.0):
            raise ValueError(f"radius must be positive, got {self.radius}")
        if not (self.v_max > 0.0):
            raise ValueError(f"v_max must be positive, got {self.v_max}")
        if not np.all(np.isfinite(self.position)) or not np.all(np.isfinite(self.velocity)):
            raise ValueError("agent position/velocity must be finite")

    def speed(self) -> float:
        return float(np.hypot(self.velocity[0], self.velocity[1]))

    def distance_to_goal(self) -> float:
        d = self.goal - self.position
        return float(np.hypot(d[0], d[1]))

    def copy(self) -> "AgentState":
        return AgentState(
            position=self.position.copy(),
            velocity=self.velocity.copy(),
            radius=self.radius,
            goal=self.goal.copy(),
            v_max=self.v_max,
        )
