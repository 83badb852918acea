"""Crowd navigation with online conformal uncertainty buffers and
constrained policy-gradient training.

The package provides a deterministic 2D crowd simulator with rule-based
pedestrians, constant-velocity trajectory prediction wrapped in online
multi-expert error-quantile tracking, spatial buffers whose intrusion
depth is priced as a constraint cost, a permutation-invariant
actor-critic trained with a clipped surrogate plus a Lagrangian
multiplier, and an evaluation/reporting toolchain.
"""

from .agents import AgentState, Vec2, vec2
from .buffers import IntrusionReport, buffer_radii, cost, max_intrusion
from .config import (
    BufferSpec,
    ConfigError,
    DtaciConfig,
    NetConfig,
    OrcaParams,
    RunConfig,
    SfParams,
    TrainConfig,
    WorldConfig,
    load_run_config,
)
from .conformal import EstimatorBank, pinball_loss, update_expert
from .env import CrowdEnv, Observation, Outcome, StepResult, check_goal, sample_scenario
from .metrics import BatchReport, EpisodeMetrics, aggregate
from .pedestrians import orca_velocity, sf_velocity
from .policy import AttentionPolicy, encode_observation, load_checkpoint, save_checkpoint
from .prediction import PredictionSet, predict_cv, prediction_error
from .training import (
    LagrangeState,
    Trainer,
    combined_advantage,
    compute_gae,
    critic_losses,
    lambda_update,
    policy_loss,
)

__version__ = "0.1.0"

__all__ = [
    "AgentState",
    "AttentionPolicy",
    "BatchReport",
    "BufferSpec",
    "ConfigError",
    "CrowdEnv",
    "DtaciConfig",
    "EpisodeMetrics",
    "EstimatorBank",
    "IntrusionReport",
    "LagrangeState",
    "NetConfig",
    "Observation",
    "OrcaParams",
    "Outcome",
    "PredictionSet",
    "RunConfig",
    "SfParams",
    "StepResult",
    "Trainer",
    "TrainConfig",
    "Vec2",
    "WorldConfig",
    "aggregate",
    "buffer_radii",
    "check_goal",
    "combined_advantage",
    "compute_gae",
    "cost",
    "critic_losses",
    "encode_observation",
    "lambda_update",
    "load_checkpoint",
    "load_run_config",
    "max_intrusion",
    "orca_velocity",
    "pinball_loss",
    "policy_loss",
    "predict_cv",
    "prediction_error",
    "sample_scenario",
    "save_checkpoint",
    "sf_velocity",
    "update_expert",
    "vec2",
]
