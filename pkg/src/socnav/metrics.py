"""Episode and batch evaluation metrics."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .env import Outcome


@dataclass
class EpisodeMetrics:
    """Accumulators for one episode.

    ``intrusion_distances`` holds the robot's smallest surface separation
    from any human at each step spent inside a buffer.
    """

    outcome: Outcome
    nav_time: float
    path_length: float
    intrusion_steps: int
    total_steps: int
    intrusion_distances: list[float] = field(default_factory=list)

    def __post_init__(self) -> None:
        if self.intrusion_steps > self.total_steps:
            raise ValueError("intrusion_steps cannot exceed total_steps")
        if self.path_length < 0:
            raise ValueError("path_length must be >= 0")

    @property
    def itr(self) -> float:
        return self.intrusion_steps / self.total_steps if self.total_steps else 0.0


@dataclass
class BatchReport:
    """Aggregate over an evaluation batch.

    Navigation time and path length average successful episodes only;
    the social distance averages over all intrusion steps pooled across
    episodes (episodes without intrusions contribute nothing).
    """

    sr: float
    cr: float
    tr: float
    nt: float
    pl: float
    itr: float
    sd: float
    n_episodes: int
    seeds: tuple[int, ...]

    def to_csv(self) -> str:
        header = "metric,value"
        rows = [
            ("sr", self.sr),
            ("cr", self.cr),
            ("tr", self.tr),
            ("nt", self.nt),
            ("pl", self.pl),
            ("itr", self.itr),
            ("sd", self.sd),
            ("n_episodes", self.n_episodes),
        ]
        lines = [header] + [f"{k},{v!r}" for k, v in rows]
        lines.append(f"seeds,{';'.join(str(s) for s in self.seeds)}")
        return "\n".join(lines) + "\n"


def aggregate(episodes: Sequence[EpisodeMetrics], seeds: Sequence[int]) -> BatchReport:
    if not episodes:
        raise ValueError("cannot aggregate zero episodes")
    n = len(episodes)
    outcomes = [e.outcome for e in episodes]
    sr = outcomes.count(Outcome.SUCCESS) / n
    cr = outcomes.count(Outcome.COLLISION) / n
    tr = outcomes.count(Outcome.TIMEOUT) / n
    successes = [e for e in episodes if e.outcome is Outcome.SUCCESS]
    nt = float(np.mean([e.nav_time for e in successes])) if successes else float("nan")
    pl = float(np.mean([e.path_length for e in successes])) if successes else float("nan")
    itr = float(np.mean([e.itr for e in episodes]))
    pooled = [d for e in episodes for d in e.intrusion_distances]
    sd = float(np.mean(pooled)) if pooled else float("nan")
    return BatchReport(
        sr=sr, cr=cr, tr=tr, nt=nt, pl=pl, itr=itr, sd=sd,
        n_episodes=n, seeds=tuple(seeds),
    )
