"""Online quantile tracking of prediction errors with a bank of experts.

Each (human, horizon) pair owns M experts that track the (1 - alpha)
quantile of the observed error stream with different learning rates.
After every observation the experts' estimates move up or down by an
asymmetric step, and a weight distribution over experts is refreshed from
their recent pinball-loss performance.  The radius reported to the rest
of the system is the estimate of one expert sampled from that
distribution.
"""

from __future__ import annotations

import numpy as np

from .config import DtaciConfig


def pinball_loss(actual: float | np.ndarray, estimate: float | np.ndarray, alpha: float) -> float | np.ndarray:
    """Asymmetric quantile loss; zero only when estimate equals actual."""
    diff = np.asarray(actual, dtype=np.float64) - np.asarray(estimate, dtype=np.float64)
    out = np.where(diff >= 0.0, alpha * diff, (alpha - 1.0) * diff)
    if out.ndim == 0:
        return float(out)
    return out


def update_expert(delta_hat: float, learning_rate: float, actual: float, alpha: float) -> float:
    """One quantile-tracking step for a single expert.

    The estimate grows by (1 - alpha) * lr when it failed to cover the
    observed error and shrinks by alpha * lr otherwise; it is floored at
    zero because a negative radius is meaningless.
    """
    err = 1.0 if delta_hat < actual else 0.0
    return max(0.0, delta_hat - learning_rate * (alpha - err))


class EstimatorBank:
    """Grid of multi-expert error estimators, one per (human, horizon).

    All state lives in (H, K, M) arrays.  ``observe`` ingests one realized
    error; ``sample_radius``/``sample_all`` draw the reported radii using
    the bank's own seeded generator so runs stay reproducible.
    """

    def __init__(self, config: DtaciConfig, n_humans: int, horizon: int, seed) -> None:
        config.validate()
        if len(config.initial_errors) < horizon:
            raise ValueError("initial_errors must cover every horizon step")
        self.config = config
        self.n_humans = n_humans
        self.horizon = horizon
        self.learning_rates = np.asarray(config.learning_rates, dtype=np.float64)
        self.n_experts = len(config.learning_rates)
        self._rng = np.random.default_rng(seed)
        self.delta_hat = np.empty((n_humans, horizon, self.n_experts), dtype=np.float64)
        self.weights = np.empty_like(self.delta_hat)
        self.probs = np.empty_like(self.delta_hat)
        self.reset()

    def reset(self) -> None:
        """Restore initial estimates and uniform expert weights."""
        init = np.asarray(self.config.initial_errors[: self.horizon], dtype=np.float64)
        self.delta_hat[:] = init[None, :, None]
        self.weights[:] = 1.0 / self.n_experts
        self.probs[:] = 1.0 / self.n_experts

    # -- updates ----------------------------------------------------------

    def observe(self, h: int, k: int, actual: float) -> None:
        """Ingest the realized error for human ``h`` at horizon index ``k``
        (0-based): update every expert's estimate, then refresh the expert
        weights with the pinball loss of the updated estimates."""
        if actual < 0:
            raise ValueError("errors are distances and must be >= 0")
        d = self.delta_hat[h, k]
        err = (d < actual).astype(np.float64)
        np.maximum(d - self.learning_rates * (self.config.alpha - err), 0.0, out=d)
        self._reweigh(self.weights[h, k], self.probs[h, k], d, actual)

    def observe_all(self, actuals: np.ndarray, valid: np.ndarray) -> None:
        """Vectorized ``observe`` over an (H, K) error array; entries where
        ``valid`` is False are skipped (no old prediction to compare)."""
        a = np.asarray(actuals, dtype=np.float64)[:, :, None]
        v = np.asarray(valid, dtype=bool)[:, :, None]
        err = (self.delta_hat < a).astype(np.float64)
        stepped = np.maximum(self.delta_hat - self.learning_rates * (self.config.alpha - err), 0.0)
        np.copyto(self.delta_hat, stepped, where=v)

        losses = pinball_loss(a, self.delta_hat, self.config.alpha)
        scaled = self.weights * np.exp(-self.config.eta * (losses - losses.min(axis=2, keepdims=True)))
        total = scaled.sum(axis=2, keepdims=True)
        sigma = self.config.sigma
        new_w = (1.0 - sigma) * scaled / total + sigma / self.n_experts
        np.copyto(self.weights, new_w, where=v)
        np.copyto(self.probs, self.weights / self.weights.sum(axis=2, keepdims=True), where=v)

    def _reweigh(self, w: np.ndarray, p: np.ndarray, estimates: np.ndarray, actual: float) -> None:
        losses = pinball_loss(actual, estimates, self.config.alpha)
        # Shift by the smallest loss before exponentiating; the shared
        # factor cancels in the normalization.
        scaled = w * np.exp(-self.config.eta * (losses - losses.min()))
        total = scaled.sum()
        if total <= 0.0:
            raise RuntimeError("expert weights collapsed to zero")
        sigma = self.config.sigma
        w[:] = (1.0 - sigma) * scaled / total + sigma / self.n_experts
        p[:] = w / w.sum()

    # -- sampling ---------------------------------------------------------

    def sample_radius(self, h: int, k: int) -> float:
        """Draw one expert index from the (h, k) weight distribution and
        return that expert's current estimate."""
        m = int(self._rng.choice(self.n_experts, p=self.probs[h, k] / self.probs[h, k].sum()))
        return float(self.delta_hat[h, k, m])

    def sample_all(self) -> np.ndarray:
        """Sampled radii for every (human, horizon) pair, shape (H, K)."""
        p = self.probs / self.probs.sum(axis=2, keepdims=True)
        cum = np.cumsum(p, axis=2)
        u = self._rng.random((self.n_humans, self.horizon, 1))
        idx = np.sum(u > cum, axis=2)
        idx = np.minimum(idx, self.n_experts - 1)
        return np.take_along_axis(self.delta_hat, idx[:, :, None], axis=2)[:, :, 0]
