"""Clipped-surrogate constrained policy optimization with a dual multiplier.

The trainer collects rollouts from a set of lockstepped environments,
estimates advantages for the reward and the cost streams with the same
generalized-advantage recursion, runs several clipped-surrogate epochs on
the combined advantage (reward advantage minus lambda times cost
advantage, each normalized per minibatch), and then takes one projected
ascent step on the multiplier so the mean episode cost is driven toward
the configured limit.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field
from typing import Any, Callable, Protocol, Sequence

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .config import TrainConfig


class TrainingDivergedError(RuntimeError):
    """Loss or parameters became non-finite."""


# -- advantage machinery -------------------------------------------------------


def compute_gae(
    rewards: np.ndarray,
    values: np.ndarray,
    dones: np.ndarray,
    discount: float,
    gae_lambda: float,
    bootstrap_value: float = 0.0,
) -> tuple[np.ndarray, np.ndarray]:
    """Generalized advantage estimation over one trajectory stream.

    ``dones[t]`` marks a terminal transition: the value beyond it is 0.
    ``bootstrap_value`` estimates the value after the final step when the
    stream was truncated mid-episode.  Returns (advantages, value targets);
    the identical routine serves the reward stream and the cost stream.
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    T = rewards.shape[0]
    advantages = np.zeros(T, dtype=np.float64)
    next_value = float(bootstrap_value)
    carry = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + discount * next_value * nonterminal - values[t]
        carry = delta + discount * gae_lambda * nonterminal * carry
        advantages[t] = carry
        next_value = values[t]
    return advantages, advantages + values


def combined_advantage(a_r: np.ndarray, a_c: np.ndarray, lam: float) -> np.ndarray:
    """Reward advantage discounted by lambda times the cost advantage."""
    return np.asarray(a_r) - lam * np.asarray(a_c)


def normalize(x: np.ndarray, eps: float = 1e-8) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean()) / (x.std() + eps)


def policy_loss(ratio: np.ndarray, a_combined: np.ndarray, clip: float) -> np.ndarray:
    """Elementwise clipped-surrogate objective (to be maximized)."""
    ratio = np.asarray(ratio, dtype=np.float64)
    clipped = np.clip(ratio, 1.0 - clip, 1.0 + clip)
    return np.minimum(ratio * a_combined, clipped * a_combined)


def critic_losses(
    v_r: np.ndarray,
    v_c: np.ndarray,
    target_r: np.ndarray,
    target_c: np.ndarray,
    c1: float,
    c2: float,
) -> tuple[float, float]:
    """Batch-averaged quadratic value losses for the two critics."""
    l_r = c1 * float(np.mean((np.asarray(v_r) - np.asarray(target_r)) ** 2))
    l_c = c2 * float(np.mean((np.asarray(v_c) - np.asarray(target_c)) ** 2))
    return l_r, l_c


# -- dual variable -------------------------------------------------------------


@dataclass
class LagrangeState:
    """Multiplier state plus the window of recent episode cost sums."""

    lam: float = 0.0
    lr: float = 5e-2
    cost_limit: float = 0.16
    window: deque = field(default_factory=lambda: deque(maxlen=20))

    def record_episode(self, episode_cost: float) -> None:
        self.window.append(float(episode_cost))

    def mean_cost(self) -> float:
        if not self.window:
            raise ValueError("no completed episodes in the cost window")
        return float(np.mean(self.window))


def lambda_update(state: LagrangeState) -> float:
    """One projected ascent step: lambda grows while the recent mean
    episode cost exceeds the limit, and never goes negative."""
    state.lam = max(0.0, state.lam + state.lr * (state.mean_cost() - state.cost_limit))
    return state.lam


# -- optimizer -----------------------------------------------------------------


class Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8) -> None:
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params: dict[str, np.ndarray], grads: dict[str, np.ndarray]) -> None:
        self.t += 1
        b1c = 1.0 - self.beta1**self.t
        b2c = 1.0 - self.beta2**self.t
        for k, g in grads.items():
            m = self.m[k]
            v = self.v[k]
            m *= self.beta1
            m += (1 - self.beta1) * g
            v *= self.beta2
            v += (1 - self.beta2) * g * g
            params[k] -= self.lr * (m / b1c) / (np.sqrt(v / b2c) + self.eps)


# -- rollout storage -----------------------------------------------------------


@dataclass
class RolloutBuffer:
    """Fixed-horizon trajectory storage: (T, E, ...) arrays plus computed
    advantages and value targets for both streams."""

    features: tuple[np.ndarray, ...]
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    costs: np.ndarray
    values_r: np.ndarray
    values_c: np.ndarray
    dones: np.ndarray
    adv_r: np.ndarray | None = None
    adv_c: np.ndarray | None = None
    target_r: np.ndarray | None = None
    target_c: np.ndarray | None = None

    def compute_targets(
        self,
        bootstrap_r: np.ndarray,
        bootstrap_c: np.ndarray,
        discount: float,
        gae_lambda: float,
    ) -> None:
        T, E = self.rewards.shape
        self.adv_r = np.zeros((T, E))
        self.adv_c = np.zeros((T, E))
        self.target_r = np.zeros((T, E))
        self.target_c = np.zeros((T, E))
        for e in range(E):
            self.adv_r[:, e], self.target_r[:, e] = compute_gae(
                self.rewards[:, e], self.values_r[:, e], self.dones[:, e],
                discount, gae_lambda, bootstrap_r[e],
            )
            self.adv_c[:, e], self.target_c[:, e] = compute_gae(
                self.costs[:, e], self.values_c[:, e], self.dones[:, e],
                discount, gae_lambda, bootstrap_c[e],
            )

    def flat(self) -> dict[str, Any]:
        T, E = self.rewards.shape
        n = T * E
        return {
            "features": tuple(f.reshape(n, *f.shape[2:]) for f in self.features),
            "actions": self.actions.reshape(n, -1),
            "log_probs": self.log_probs.reshape(n),
            "adv_r": self.adv_r.reshape(n),
            "adv_c": self.adv_c.reshape(n),
            "target_r": self.target_r.reshape(n),
            "target_c": self.target_c.reshape(n),
        }


# -- environment / model protocols ---------------------------------------------


class RolloutEnv(Protocol):
    """Episodic environment exposing policy-ready feature tuples."""

    def reset(self) -> tuple[np.ndarray, ...]: ...

    def step(self, action: np.ndarray) -> tuple[tuple[np.ndarray, ...], float, float, bool, dict]: ...


class PolicyModel(Protocol):
    """Stochastic policy with two value heads and a differentiable
    evaluation path (see AttentionPolicy for the crowd instantiation)."""

    action_dim: int
    fixed_std: float

    def act(self, params, *features, rng): ...

    def evaluate(self, P, features, actions): ...


# -- trainer ---------------------------------------------------------------------


@dataclass
class IterationStats:
    iteration: int
    env_steps: int
    mean_reward: float
    mean_cost: float
    lam: float
    sr_recent: float
    loss_pi: float
    loss_vr: float
    loss_vc: float


class Trainer:
    """PPO with a Lagrangian cost constraint over lockstepped environments."""

    def __init__(
        self,
        env_fns: Sequence[Callable[[], RolloutEnv]],
        model: PolicyModel,
        params: dict[str, np.ndarray],
        config: TrainConfig,
        seed: int,
    ) -> None:
        config.validate()
        if len(env_fns) != config.n_parallel_envs:
            raise ValueError("need one environment factory per parallel environment")
        self.config = config
        self.model = model
        self.params = params
        self.envs = [fn() for fn in env_fns]
        ss = np.random.SeedSequence(seed)
        s_noise, s_shuffle = ss.spawn(2)
        self._noise_rng = np.random.default_rng(s_noise)
        self._shuffle_rng = np.random.default_rng(s_shuffle)
        self.optimizer = Adam(params, config.lr)
        self.lagrange = LagrangeState(
            lam=config.lambda_init,
            lr=config.lr_lambda,
            cost_limit=config.cost_limit,
            window=deque(maxlen=config.cost_window),
        )
        n = config.cost_window
        self._ep_rewards: deque = deque(maxlen=n)
        self._ep_success: deque = deque(maxlen=n)
        self._episodes_done = 0
        self.env_steps = 0
        self._features = [env.reset() for env in self.envs]
        self._ep_reward_acc = np.zeros(len(self.envs))
        self._ep_cost_acc = np.zeros(len(self.envs))

    # -- rollout -------------------------------------------------------------

    def _stack(self, features: list[tuple[np.ndarray, ...]]) -> tuple[np.ndarray, ...]:
        n_parts = len(features[0])
        return tuple(np.stack([f[i] for f in features]) for i in range(n_parts))

    def collect(self) -> RolloutBuffer:
        cfg = self.config
        E = len(self.envs)
        T = cfg.rollout_steps // cfg.n_parallel_envs
        feats_t: list[tuple[np.ndarray, ...]] = []
        actions = np.zeros((T, E, self.model.action_dim))
        log_probs = np.zeros((T, E))
        rewards = np.zeros((T, E))
        costs = np.zeros((T, E))
        values_r = np.zeros((T, E))
        values_c = np.zeros((T, E))
        dones = np.zeros((T, E))

        for t in range(T):
            stacked = self._stack(self._features)
            feats_t.append(stacked)
            acts, logp, v_r, v_c = self.model.act(self.params, *stacked, rng=self._noise_rng)
            actions[t] = acts
            log_probs[t] = logp
            values_r[t] = v_r
            values_c[t] = v_c
            for e, env in enumerate(self.envs):
                features, reward, cost_value, done, info = env.step(acts[e])
                rewards[t, e] = reward
                costs[t, e] = cost_value
                dones[t, e] = float(done)
                self._ep_reward_acc[e] += reward
                self._ep_cost_acc[e] += cost_value
                if done:
                    self.lagrange.record_episode(self._ep_cost_acc[e])
                    self._ep_rewards.append(self._ep_reward_acc[e])
                    self._ep_success.append(1.0 if info.get("success") else 0.0)
                    self._ep_reward_acc[e] = 0.0
                    self._ep_cost_acc[e] = 0.0
                    self._episodes_done += 1
                    features = env.reset()
                self._features[e] = features
            self.env_steps += E

        # Bootstrap values for streams truncated mid-episode.
        stacked = self._stack(self._features)
        _, _, boot_r, boot_c = self.model.act(self.params, *stacked, rng=None)
        boot_r = np.where(dones[-1] > 0.5, 0.0, boot_r)
        boot_c = np.where(dones[-1] > 0.5, 0.0, boot_c)

        stacked_features = tuple(
            np.stack([feats_t[t][i] for t in range(T)]) for i in range(len(feats_t[0]))
        )
        buffer = RolloutBuffer(
            features=stacked_features,
            actions=actions,
            log_probs=log_probs,
            rewards=rewards,
            costs=costs,
            values_r=values_r,
            values_c=values_c,
            dones=dones,
        )
        buffer.compute_targets(boot_r, boot_c, cfg.discount, cfg.gae_lambda)
        return buffer

    # -- update --------------------------------------------------------------

    def _minibatch_loss(
        self,
        flat: dict[str, Any],
        idx: np.ndarray,
        lam: float,
    ) -> tuple[Tensor, float, float, float]:
        cfg = self.config
        feats = tuple(part[idx] for part in flat["features"])
        acts = flat["actions"][idx]
        logp_old = flat["log_probs"][idx]
        adv = combined_advantage(
            normalize(flat["adv_r"][idx]), normalize(flat["adv_c"][idx]), lam
        )
        target_r = flat["target_r"][idx]
        target_c = flat["target_c"][idx]

        P = {k: Tensor(v) for k, v in self.params.items()}
        logp, v_r, v_c = self.model.evaluate(P, feats, acts)
        ratio = ad.exp(logp - Tensor(logp_old))
        adv_t = Tensor(adv)
        surrogate = ad.minimum(
            ad.mul(ratio, adv_t), ad.mul(ad.clip(ratio, 1.0 - cfg.clip, 1.0 + cfg.clip), adv_t)
        )
        loss_pi = ad.mul(ad.tmean(surrogate), -1.0)
        loss_vr = ad.mul(ad.tmean(ad.square(v_r - Tensor(target_r))), cfg.c1)
        loss_vc = ad.mul(ad.tmean(ad.square(v_c - Tensor(target_c))), cfg.c2)
        total = loss_pi + loss_vr + loss_vc

        total.backward()
        grads = {k: t.grad for k, t in P.items() if t.grad is not None}
        for k in self.params:
            if k not in grads:
                grads[k] = np.zeros_like(self.params[k])
        self.optimizer.step(self.params, grads)
        return total, loss_pi.item(), loss_vr.item(), loss_vc.item()

    def update(self, buffer: RolloutBuffer) -> tuple[float, float, float]:
        cfg = self.config
        flat = buffer.flat()
        n = flat["log_probs"].shape[0]
        lam = self.lagrange.lam
        last = (0.0, 0.0, 0.0)
        for _ in range(cfg.epochs):
            order = self._shuffle_rng.permutation(n)
            for start in range(0, n, cfg.minibatch):
                idx = order[start : start + cfg.minibatch]
                total, l_pi, l_vr, l_vc = self._minibatch_loss(flat, idx, lam)
                if not math.isfinite(total.item()):
                    raise TrainingDivergedError(f"non-finite loss {total.item()}")
                last = (l_pi, l_vr, l_vc)
        for k, v in self.params.items():
            if not np.all(np.isfinite(v)):
                raise TrainingDivergedError(f"non-finite parameter {k}")
        return last

    # -- main loop -------------------------------------------------------------

    def train(
        self,
        on_iteration: Callable[[IterationStats], None] | None = None,
    ) -> list[IterationStats]:
        cfg = self.config
        log: list[IterationStats] = []
        iteration = 0
        while self.env_steps < cfg.total_steps:
            iteration += 1
            buffer = self.collect()
            l_pi, l_vr, l_vc = self.update(buffer)
            if self.lagrange.window and not cfg.freeze_lambda:
                lambda_update(self.lagrange)
            stats = IterationStats(
                iteration=iteration,
                env_steps=self.env_steps,
                mean_reward=float(np.mean(self._ep_rewards)) if self._ep_rewards else math.nan,
                mean_cost=self.lagrange.mean_cost() if self.lagrange.window else math.nan,
                lam=self.lagrange.lam,
                sr_recent=float(np.mean(self._ep_success)) if self._ep_success else math.nan,
                loss_pi=l_pi,
                loss_vr=l_vr,
                loss_vc=l_vc,
            )
            log.append(stats)
            if on_iteration is not None:
                on_iteration(stats)
            if self._should_stop_early(stats):
                break
        return log

    def _should_stop_early(self, stats: IterationStats) -> bool:
        cfg = self.config
        if cfg.early_stop_sr is None:
            return False
        if self._episodes_done < cfg.early_stop_min_episodes:
            return False
        if math.isnan(stats.sr_recent) or stats.sr_recent < cfg.early_stop_sr:
            return False
        if cfg.early_stop_cost is not None and stats.mean_cost > cfg.early_stop_cost:
            return False
        return True


def training_log_csv(log: Sequence[IterationStats]) -> str:
    """Render iteration statistics in the training-log CSV layout."""
    lines = ["iteration,mean_reward,mean_cost,lambda,sr_recent"]
    for row in log:
        lines.append(
            f"{row.iteration},{row.mean_reward!r},{row.mean_cost!r},{row.lam!r},{row.sr_recent!r}"
        )
    return "\n".join(lines) + "\n"
