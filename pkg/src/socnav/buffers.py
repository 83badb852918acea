"""Spatial buffers around humans and the intrusion-depth cost.

Every human contributes one disc around its current position (radius
``r_ego + r_h + r_disc``) and one disc per constrained prediction step
(radius ``r_ego + r_h + sampled error radius``).  The per-step cost is
``mu`` times the deepest penetration of the robot center into any of
these discs.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .agents import AgentState, Vec2
from .config import BufferSpec
from .prediction import PredictionSet

# Intrusion source markers.
SOURCE_NONE = "none"
SOURCE_CURRENT = "current"
SOURCE_PREDICTION = "prediction"


@dataclass(frozen=True)
class IntrusionReport:
    """Deepest buffer penetration and which buffer produced it.

    ``human`` is the index of the offending human, ``step`` the 0-based
    prediction-step index for prediction buffers (None for current-position
    buffers).  Depth 0 means the robot is outside every buffer.
    """

    depth: float
    source: str = SOURCE_NONE
    human: int | None = None
    step: int | None = None

    def __post_init__(self) -> None:
        if (self.depth == 0.0) != (self.source == SOURCE_NONE):
            raise ValueError("zero depth must pair with an empty source")


NO_INTRUSION = IntrusionReport(0.0)


def buffer_radii(
    r_ego: float,
    r_h: float,
    spec: BufferSpec,
    radii: Sequence[float] | np.ndarray,
) -> tuple[float, np.ndarray]:
    """Distance thresholds: one for the current-position disc, one per
    constrained prediction step."""
    radii = np.asarray(radii, dtype=np.float64)
    if r_ego < 0 or r_h < 0 or np.any(radii < 0):
        raise ValueError("radii must be nonnegative")
    r1 = r_ego + r_h + spec.r_disc
    r2 = r_ego + r_h + radii
    return r1, r2


def max_intrusion(
    robot_pos: Vec2,
    humans: Sequence[AgentState],
    predictions: Sequence[PredictionSet],
    spec: BufferSpec,
    r_ego: float,
) -> IntrusionReport:
    """Deepest penetration of ``robot_pos`` into any buffer of any human.

    ``predictions`` are truncated to the first ``spec.k_prime`` steps.
    """
    rx, ry = float(robot_pos[0]), float(robot_pos[1])
    best = 0.0
    best_source = SOURCE_NONE
    best_human: int | None = None
    best_step: int | None = None

    for h, (human, pred) in enumerate(zip(humans, predictions)):
        r1, r2 = buffer_radii(r_ego, human.radius, spec, pred.radii[: spec.k_prime])
        dx = rx - float(human.position[0])
        dy = ry - float(human.position[1])
        depth = r1 - math.sqrt(dx * dx + dy * dy)
        if depth > best:
            best, best_source, best_human, best_step = depth, SOURCE_CURRENT, h, None
        points = pred.points[: spec.k_prime]
        for k in range(points.shape[0]):
            dx = rx - float(points[k, 0])
            dy = ry - float(points[k, 1])
            depth = float(r2[k]) - math.sqrt(dx * dx + dy * dy)
            if depth > best:
                best, best_source, best_human, best_step = depth, SOURCE_PREDICTION, h, k

    if best <= 0.0:
        return NO_INTRUSION
    return IntrusionReport(best, best_source, best_human, best_step)


def cost(report: IntrusionReport, spec: BufferSpec) -> float:
    """Per-step cost: mu times the maximum intrusion depth."""
    return spec.mu * report.depth
