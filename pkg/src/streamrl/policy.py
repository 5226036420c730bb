"""Policy heads over a network trunk: diagonal Gaussian and softmax.

Heads are stateless.  They read distribution parameters straight off the
trunk's output vector, sample actions, and convert distribution-space
gradients (of log-probability plus an optional signed entropy bonus) into a
seed vector for the trunk's backward pass, so the whole policy gradient costs
one backward sweep.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .net import GradientBuffer, Network, Tape

LOG_2PI = float(np.log(2.0 * np.pi))
SOFTPLUS_LINEAR_THRESHOLD = 20.0
SIGMA_FLOOR = 1e-6


def softplus(x: np.ndarray) -> np.ndarray:
    """log(1 + e^x), switching to the identity above the stability threshold."""
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > SOFTPLUS_LINEAR_THRESHOLD, x, np.log1p(np.exp(np.minimum(x, SOFTPLUS_LINEAR_THRESHOLD))))


def softplus_grad(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    return np.where(x > SOFTPLUS_LINEAR_THRESHOLD, 1.0,
                    1.0 / (1.0 + np.exp(-np.minimum(x, SOFTPLUS_LINEAR_THRESHOLD))))


@dataclass(frozen=True)
class ActionSample:
    """An action plus the pieces needed to differentiate its log-probability.

    For Gaussian heads `action` is clamped to [-1, 1] while `raw` is the
    pre-clamp draw at which log_prob (and its gradient) is evaluated.  For
    softmax heads both are the same integer index.
    """

    action: np.ndarray | int
    log_prob: float
    raw: np.ndarray | int


class GaussianHead:
    """Diagonal Gaussian over continuous actions in [-1, 1]^d.

    The trunk output holds the means in its first `action_dim` entries and the
    standard-deviation pre-activations in the rest; the std is produced by a
    SoftPlus with a floor to keep densities finite.
    """

    def __init__(self, action_dim: int):
        if action_dim < 1:
            raise ValueError("action_dim must be >= 1")
        self.action_dim = int(action_dim)

    @property
    def trunk_output_width(self) -> int:
        return 2 * self.action_dim

    @property
    def mean_output_indices(self) -> slice:
        return slice(0, self.action_dim)

    @property
    def std_output_indices(self) -> slice:
        return slice(self.action_dim, 2 * self.action_dim)

    def distribution(self, trunk_output: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        mean = trunk_output[self.mean_output_indices]
        std = np.maximum(softplus(trunk_output[self.std_output_indices]), SIGMA_FLOOR)
        return mean, std

    def sample(self, trunk_output: np.ndarray, rng: np.random.Generator) -> ActionSample:
        if not np.all(np.isfinite(trunk_output)):
            raise ValueError("non-finite trunk output")
        mean, std = self.distribution(trunk_output)
        raw = mean + std * rng.standard_normal(self.action_dim)
        log_prob = float(np.sum(-0.5 * ((raw - mean) / std) ** 2 - np.log(std)
                                - 0.5 * LOG_2PI))
        return ActionSample(action=np.clip(raw, -1.0, 1.0), log_prob=log_prob, raw=raw)

    def log_prob(self, trunk_output: np.ndarray, raw_action: np.ndarray) -> float:
        mean, std = self.distribution(trunk_output)
        return float(np.sum(-0.5 * ((raw_action - mean) / std) ** 2 - np.log(std)
                            - 0.5 * LOG_2PI))

    def entropy(self, trunk_output: np.ndarray) -> float:
        _, std = self.distribution(trunk_output)
        return float(np.sum(0.5 * (LOG_2PI + 1.0) + np.log(std)))

    def output_grad(self, trunk_output: np.ndarray, raw_action: np.ndarray,
                    tau: float, delta_sign: float) -> np.ndarray:
        """d/d(trunk output) of [log pi(raw) + tau * delta_sign * entropy]."""
        mean, std = self.distribution(trunk_output)
        pre = trunk_output[self.std_output_indices]
        dstd_dpre = np.where(softplus(pre) < SIGMA_FLOOR, 0.0, softplus_grad(pre))
        centered = raw_action - mean
        dy = np.zeros_like(trunk_output)
        dy[self.mean_output_indices] = centered / std ** 2
        dlogp_dstd = centered ** 2 / std ** 3 - 1.0 / std
        dy[self.std_output_indices] = dlogp_dstd * dstd_dpre
        if tau != 0.0 and delta_sign != 0.0:
            dy[self.std_output_indices] += (tau * delta_sign) * dstd_dpre / std
        return dy


class SoftmaxHead:
    """Categorical policy over `action_count` discrete actions."""

    def __init__(self, action_count: int):
        if action_count < 1:
            raise ValueError("action_count must be >= 1")
        self.action_count = int(action_count)

    @property
    def trunk_output_width(self) -> int:
        return self.action_count

    def probabilities(self, trunk_output: np.ndarray) -> np.ndarray:
        shifted = trunk_output - trunk_output.max()
        e = np.exp(shifted)
        return e / e.sum()

    def sample(self, trunk_output: np.ndarray, rng: np.random.Generator) -> ActionSample:
        if not np.all(np.isfinite(trunk_output)):
            raise ValueError("non-finite trunk output")
        p = self.probabilities(trunk_output)
        u = rng.random()
        action = int(np.searchsorted(np.cumsum(p), u, side="right"))
        action = min(action, self.action_count - 1)  # cumsum roundoff guard
        return ActionSample(action=action, log_prob=float(np.log(p[action])), raw=action)

    def log_prob(self, trunk_output: np.ndarray, action: int) -> float:
        return float(np.log(self.probabilities(trunk_output)[action]))

    def entropy(self, trunk_output: np.ndarray) -> float:
        p = self.probabilities(trunk_output)
        return float(-np.sum(p * np.log(p)))

    def output_grad(self, trunk_output: np.ndarray, action: int,
                    tau: float, delta_sign: float) -> np.ndarray:
        p = self.probabilities(trunk_output)
        dy = -p.copy()
        dy[int(action)] += 1.0
        if tau != 0.0 and delta_sign != 0.0:
            logp = np.log(p)
            entropy = -float(np.sum(p * logp))
            dy += (tau * delta_sign) * (-p * (logp + entropy))
        return dy


def sample_action(head, trunk_output: np.ndarray, rng: np.random.Generator) -> ActionSample:
    """Draw an action from whichever head is supplied."""
    return head.sample(np.asarray(trunk_output, dtype=np.float64), rng)


def logprob_and_entropy_grad(head, net: Network, tape: Tape, action,
                             tau: float = 0.0, delta_sign: float = 0.0) -> GradientBuffer:
    """Parameter gradient of log pi(action) + tau * delta_sign * H, one backward pass.

    `action` must be the value the distribution actually produced (the
    pre-clamp draw for Gaussian heads, the index for softmax heads).
    """
    dy = head.output_grad(tape.output, action, tau, delta_sign)
    return net.backward(tape, dy)
