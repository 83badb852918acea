"""Multi-step pedestrian position prediction.

Only a constant-velocity extrapolator ships; the interface is a plain
function returning an array of future points so a learned predictor can
be dropped in later.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agents import AgentState, Vec2


@dataclass
class PredictionSet:
    """K predicted future points for one human plus one estimated error
    radius per point."""

    points: np.ndarray  # (K, 2)
    radii: np.ndarray  # (K,)

    def __post_init__(self) -> None:
        self.points = np.asarray(self.points, dtype=np.float64)
        self.radii = np.asarray(self.radii, dtype=np.float64)
        if self.points.ndim != 2 or self.points.shape[1] != 2:
            raise ValueError("points must have shape (K, 2)")
        if self.radii.shape != (self.points.shape[0],):
            raise ValueError("radii must have shape (K,)")
        if self.horizon < 1:
            raise ValueError("need at least one prediction step")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("predicted points must be finite")
        if np.any(self.radii < 0):
            raise ValueError("error radii must be nonnegative")

    @property
    def horizon(self) -> int:
        return self.points.shape[0]


def predict_cv(human: AgentState, k_steps: int, dt: float) -> np.ndarray:
    """Constant-velocity extrapolation: point k is position + velocity*k*dt.

    Returns an array of shape (k_steps, 2).
    """
    if k_steps < 1:
        raise ValueError("k_steps must be >= 1")
    ks = np.arange(1, k_steps + 1, dtype=np.float64)[:, None]
    return human.position[None, :] + human.velocity[None, :] * ks * dt


def prediction_error(predicted: Vec2, actual: Vec2) -> float:
    """Euclidean distance between a predicted and a realized position."""
    dx = float(predicted[0]) - float(actual[0])
    dy = float(predicted[1]) - float(actual[1])
    return math.sqrt(dx * dx + dy * dy)
