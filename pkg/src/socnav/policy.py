"""Permutation-invariant actor-critic over crowds.

Per-human features pass through a shared embedding, one self-attention
layer over humans, and an attention pool queried by the robot embedding.
The pooled crowd feature and the robot embedding feed a trunk that ends
in a squashed action mean and the reward value head; the actor and the
reward critic share all of these layers.  The cost critic is a second,
independently parameterized copy of the same architecture.

Action noise is an isotropic Gaussian with a fixed standard deviation,
so the policy entropy is constant throughout training.
"""

from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Iterator

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import NetConfig, config_hash
from .env import Observation


class CheckpointError(RuntimeError):
    """Checkpoint file malformed or incompatible with the configuration."""


def encode_observation(obs: Observation, k_steps: int, input_scale: float) -> tuple[np.ndarray, np.ndarray]:
    """Robot-centric feature arrays: (humans (H, 5 + 3K), ego (6,)).

    Per human: relative position, relative velocity, radius, K predicted
    points relative to the robot, K sampled error radii.  Everything is
    multiplied by ``input_scale`` to keep activations in a sane range.
    """
    robot = obs.ego
    p = robot.position
    v = robot.velocity
    ego = np.concatenate(
        [v, robot.goal - p, [robot.v_max, robot.radius]]
    ).astype(np.float64)

    rows = []
    for human, pred in zip(obs.humans, obs.model):
        points = pred.points[:k_steps]
        rel_points = (points - p[None, :]).reshape(-1)
        rows.append(
            np.concatenate(
                [
                    human.position - p,
                    human.velocity - v,
                    [human.radius],
                    rel_points,
                    pred.radii[:k_steps],
                ]
            )
        )
    humans = np.stack(rows).astype(np.float64)
    return humans * input_scale, ego * input_scale


def human_feature_dim(k_steps: int) -> int:
    return 5 + 3 * k_steps


EGO_FEATURE_DIM = 6
ACTION_DIM = 2


def gaussian_log_prob(actions: np.ndarray, means: np.ndarray, std: float) -> np.ndarray:
    """Exact log density of an isotropic Gaussian, per batch row."""
    d = actions.shape[-1]
    sq = np.sum((actions - means) ** 2, axis=-1)
    return -sq / (2.0 * std * std) - d * math.log(std * math.sqrt(2.0 * math.pi))


class AttentionPolicy:
    """Actor + reward critic (shared parameters) and a separate cost critic."""

    def __init__(self, net: NetConfig, k_steps: int, v_max: float) -> None:
        net.validate()
        self.net = net
        self.k_steps = k_steps
        self.v_max = v_max
        self.human_dim = human_feature_dim(k_steps)
        self.ego_dim = EGO_FEATURE_DIM
        self.action_dim = ACTION_DIM
        self.fixed_std = net.fixed_action_std

    # -- parameters ---------------------------------------------------------

    def _layer_shapes(self) -> Iterator[tuple[str, tuple[int, ...], float]]:
        d, a = self.net.embed_dim, self.net.attn_dim
        t1, t2 = self.net.trunk_dims
        for prefix in ("main", "cost"):
            yield f"{prefix}.emb.W", (self.human_dim, d), math.sqrt(2.0 / self.human_dim)
            yield f"{prefix}.emb.b", (d,), 0.0
            for name in ("q", "k", "v"):
                yield f"{prefix}.attn.{name}", (d, a), math.sqrt(1.0 / d)
            yield f"{prefix}.attn.out.W", (a, d), math.sqrt(2.0 / a)
            yield f"{prefix}.attn.out.b", (d,), 0.0
            yield f"{prefix}.ego.W", (self.ego_dim, d), math.sqrt(2.0 / self.ego_dim)
            yield f"{prefix}.ego.b", (d,), 0.0
            for name in ("q", "k", "v"):
                yield f"{prefix}.pool.{name}", (d, a), math.sqrt(1.0 / d)
            yield f"{prefix}.trunk.0.W", (a + d, t1), math.sqrt(2.0 / (a + d))
            yield f"{prefix}.trunk.0.b", (t1,), 0.0
            yield f"{prefix}.trunk.1.W", (t1, t2), math.sqrt(2.0 / t1)
            yield f"{prefix}.trunk.1.b", (t2,), 0.0
            if prefix == "main":
                yield "main.head.action.W", (t2, self.action_dim), 1e-2
                yield "main.head.action.b", (self.action_dim,), 0.0
            yield f"{prefix}.head.value.W", (t2, 1), math.sqrt(1.0 / t2)
            yield f"{prefix}.head.value.b", (1,), 0.0

    def init_params(self, seed) -> dict[str, np.ndarray]:
        rng = np.random.default_rng(seed)
        params: dict[str, np.ndarray] = {}
        for name, shape, scale in self._layer_shapes():
            if scale == 0.0:
                params[name] = np.zeros(shape, dtype=np.float64)
            else:
                params[name] = rng.normal(0.0, scale, size=shape)
        return params

    # -- forward ------------------------------------------------------------

    def _branch(
        self,
        P: dict[str, Tensor],
        prefix: str,
        humans: Tensor,
        ego: Tensor,
    ) -> Tensor:
        """Shared encoder/attention/trunk; returns the trunk output."""
        inv_sqrt_a = 1.0 / math.sqrt(self.net.attn_dim)

        e1 = ad.relu(humans @ P[f"{prefix}.emb.W"] + P[f"{prefix}.emb.b"])
        q = e1 @ P[f"{prefix}.attn.q"]
        k = e1 @ P[f"{prefix}.attn.k"]
        v = e1 @ P[f"{prefix}.attn.v"]
        scores = ad.mul(q @ ad.swapaxes(k, -1, -2), inv_sqrt_a)
        mixed = ad.softmax(scores, axis=-1) @ v
        crowd = ad.relu(mixed @ P[f"{prefix}.attn.out.W"] + P[f"{prefix}.attn.out.b"])

        ego_e = ad.relu(ego @ P[f"{prefix}.ego.W"] + P[f"{prefix}.ego.b"])
        B = ego_e.shape[0]
        query = ad.reshape(ego_e @ P[f"{prefix}.pool.q"], (B, 1, self.net.attn_dim))
        keys = crowd @ P[f"{prefix}.pool.k"]
        vals = crowd @ P[f"{prefix}.pool.v"]
        pool_scores = ad.mul(query @ ad.swapaxes(keys, -1, -2), inv_sqrt_a)
        pooled = ad.reshape(ad.softmax(pool_scores, axis=-1) @ vals, (B, self.net.attn_dim))

        t = ad.concat([pooled, ego_e], axis=-1)
        t = ad.relu(t @ P[f"{prefix}.trunk.0.W"] + P[f"{prefix}.trunk.0.b"])
        t = ad.relu(t @ P[f"{prefix}.trunk.1.W"] + P[f"{prefix}.trunk.1.b"])
        return t

    def forward_tensors(
        self, P: dict[str, Tensor], humans: Tensor, ego: Tensor
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Batched forward pass: (action mean (B, 2), V_R (B,), V_C (B,))."""
        trunk = self._branch(P, "main", humans, ego)
        mean = ad.mul(ad.tanh(trunk @ P["main.head.action.W"] + P["main.head.action.b"]), self.v_max)
        v_r = ad.reshape(trunk @ P["main.head.value.W"] + P["main.head.value.b"], (mean.shape[0],))
        cost_trunk = self._branch(P, "cost", humans, ego)
        v_c = ad.reshape(
            cost_trunk @ P["cost.head.value.W"] + P["cost.head.value.b"], (mean.shape[0],)
        )
        return mean, v_r, v_c

    def forward(
        self, params: dict[str, np.ndarray], humans: np.ndarray, ego: np.ndarray
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Plain-array forward; accepts a single observation or a batch."""
        single = humans.ndim == 2
        if single:
            humans, ego = humans[None], ego[None]
        P = {k: Tensor(v) for k, v in params.items()}
        mean, v_r, v_c = self.forward_tensors(P, Tensor(humans), Tensor(ego))
        for value, what in ((mean.data, "action mean"), (v_r.data, "reward value"), (v_c.data, "cost value")):
            if not np.all(np.isfinite(value)):
                norms = {k: float(np.linalg.norm(v)) for k, v in params.items()}
                worst = max(norms, key=norms.get)
                raise FloatingPointError(
                    f"non-finite {what}; largest parameter norm {worst}={norms[worst]:.3e}"
                )
        if single:
            return mean.data[0], float(v_r.data[0]), float(v_c.data[0])
        return mean.data, v_r.data, v_c.data

    # -- acting -------------------------------------------------------------

    def act(
        self,
        params: dict[str, np.ndarray],
        humans: np.ndarray,
        ego: np.ndarray,
        rng: np.random.Generator | None = None,
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Sample actions (or return means when ``rng`` is None).

        Returns (actions, log_probs, V_R, V_C) for a batch.
        """
        mean, v_r, v_c = self.forward(params, humans, ego)
        mean = np.atleast_2d(mean)
        if rng is None:
            actions = mean.copy()
        else:
            actions = mean + self.fixed_std * rng.standard_normal(mean.shape)
        logp = gaussian_log_prob(actions, mean, self.fixed_std)
        return actions, logp, np.atleast_1d(v_r), np.atleast_1d(v_c)

    def evaluate(
        self,
        P: dict[str, Tensor],
        features: tuple[np.ndarray, ...],
        actions: np.ndarray,
    ) -> tuple[Tensor, Tensor, Tensor]:
        """Differentiable (log_prob, V_R, V_C) for stored transitions."""
        humans, ego = features
        mean, v_r, v_c = self.forward_tensors(P, Tensor(humans), Tensor(ego))
        diff = Tensor(actions) - mean
        const = -self.action_dim * math.log(self.fixed_std * math.sqrt(2.0 * math.pi))
        logp = ad.add(
            ad.mul(ad.tsum(ad.square(diff), axis=1), -1.0 / (2.0 * self.fixed_std**2)),
            const,
        )
        return logp, v_r, v_c


# -- checkpoints --------------------------------------------------------------

_MAGIC = "socnav-checkpoint"


def save_checkpoint(path: str | Path, params: dict[str, np.ndarray], meta: dict) -> None:
    """Single-file checkpoint: one JSON header line, then the raw float64
    parameter data concatenated in header order."""
    names = sorted(params)
    header = {
        "magic": _MAGIC,
        "version": 1,
        "dtype": "<f8",
        "arrays": [{"name": n, "shape": list(params[n].shape)} for n in names],
        "meta": meta,
    }
    with open(path, "wb") as fh:
        fh.write(json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8"))
        fh.write(b"\n")
        for n in names:
            fh.write(np.ascontiguousarray(params[n], dtype="<f8").tobytes())


def load_checkpoint(path: str | Path) -> tuple[dict[str, np.ndarray], dict]:
    with open(path, "rb") as fh:
        header_line = fh.readline()
        payload = fh.read()
    try:
        header = json.loads(header_line.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"unreadable checkpoint header in {path}") from exc
    if header.get("magic") != _MAGIC:
        raise CheckpointError(f"{path} is not a policy checkpoint")
    params: dict[str, np.ndarray] = {}
    offset = 0
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape)) if shape else 1
        nbytes = count * 8
        chunk = payload[offset : offset + nbytes]
        if len(chunk) != nbytes:
            raise CheckpointError(f"truncated checkpoint payload in {path}")
        params[entry["name"]] = np.frombuffer(chunk, dtype="<f8").reshape(shape).copy()
        offset += nbytes
    if offset != len(payload):
        raise CheckpointError(f"trailing bytes in checkpoint {path}")
    return params, header["meta"]


def checkpoint_meta(net: NetConfig, k_steps: int, v_max: float, world_dict: dict, seed: int) -> dict:
    return {
        "net": {
            "embed_dim": net.embed_dim,
            "attn_dim": net.attn_dim,
            "trunk_dims": list(net.trunk_dims),
            "input_scale": net.input_scale,
            "fixed_action_std": net.fixed_action_std,
        },
        "k_steps": k_steps,
        "v_max": v_max,
        "human_dim": human_feature_dim(k_steps),
        "ego_dim": EGO_FEATURE_DIM,
        "world": world_dict,
        "seed": seed,
        "config_hash": config_hash(net),
    }


def policy_from_meta(meta: dict) -> AttentionPolicy:
    net_meta = meta["net"]
    net = NetConfig(
        embed_dim=int(net_meta["embed_dim"]),
        attn_dim=int(net_meta["attn_dim"]),
        trunk_dims=tuple(net_meta["trunk_dims"]),
        input_scale=float(net_meta["input_scale"]),
        fixed_action_std=float(net_meta["fixed_action_std"]),
    )
    return AttentionPolicy(net, int(meta["k_steps"]), float(meta["v_max"]))


def verify_compatible(meta: dict, k_steps: int) -> None:
    expected = human_feature_dim(k_steps)
    if int(meta["human_dim"]) != expected:
        raise CheckpointError(
            f"checkpoint expects per-human feature dim {meta['human_dim']}, "
            f"world produces {expected} (prediction steps mismatch)"
        )
