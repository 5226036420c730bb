"""Online data scaling: running moments, observation normalization, reward scaling.

The single-pass mean/variance update is the classic incremental scheme: the
mean moves by (x - mu)/n and the squared-deviation statistic p accumulates
(x - mu)(x - mu_new), giving the sample variance p/(n - 1).  While fewer than
two samples have been seen the variance reports 1 so downstream divisions are
well behaved from the very first step.
"""

from __future__ import annotations

import numpy as np


def welford_update(mu, p, n: int, x):
    """One incremental mean/variance step.

    Returns (mu_new, p_new, sigma2, n_new).  Works elementwise on vectors and
    on plain scalars alike.
    """
    n = n + 1
    mu_new = mu + (x - mu) / n
    p_new = p + (x - mu) * (x - mu_new)
    if n >= 2:
        sigma2 = p_new / (n - 1)
    else:
        sigma2 = np.ones_like(np.asarray(x, dtype=np.float64)) if np.ndim(x) else 1.0
    return mu_new, p_new, sigma2, n


class RunningMoments:
    """Incremental mean and sample variance of a scalar or vector stream."""

    def __init__(self, shape: int | tuple[int, ...] | None = None):
        if shape is None:
            self.mu = 0.0
            self.p = 0.0
        else:
            self.mu = np.zeros(shape, dtype=np.float64)
            self.p = np.zeros(shape, dtype=np.float64)
        self.n = 0

    def update(self, x):
        """Consume one sample; returns the current sigma^2."""
        self.mu, self.p, sigma2, self.n = welford_update(self.mu, self.p, self.n, x)
        return sigma2

    def variance(self):
        if self.n >= 2:
            return self.p / (self.n - 1)
        return np.ones_like(self.mu) if np.ndim(self.mu) else 1.0


class ObservationNormalizer:
    """Center and scale observations by their running statistics.

    `normalize` updates the statistics with the incoming observation and
    scales using the *updated* values, so the first observation of a run maps
    to zero.  `apply` scales without updating (for evaluation).
    """

    def __init__(self, dim: int, eps: float = 1e-8):
        self.moments = RunningMoments(dim)
        self.dim = int(dim)
        self.eps = float(eps)

    def normalize(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.dim,):
            raise ValueError(f"observation shape {obs.shape} != ({self.dim},)")
        sigma2 = self.moments.update(obs)
        return (obs - self.moments.mu) / np.sqrt(sigma2 + self.eps)

    def apply(self, obs: np.ndarray) -> np.ndarray:
        obs = np.asarray(obs, dtype=np.float64)
        if obs.shape != (self.dim,):
            raise ValueError(f"observation shape {obs.shape} != ({self.dim},)")
        return (obs - self.moments.mu) / np.sqrt(self.moments.variance() + self.eps)


class RewardScaler:
    """Scale rewards by the spread of the discounted reward accumulator.

    u tracks a running discounted sum of rewards, reset toward zero by the
    gamma*(1 - T) factor whenever the environment terminates (time-limit
    truncation does not reset it).  The variance statistic is fed u with the
    mean pinned at zero and the updated mean discarded, mirroring how the
    accumulator is meant to hover around zero rather than be re-centered.
    """

    def __init__(self, eps: float = 1e-8):
        self.u = 0.0
        self.p = 0.0
        self.n = 0
        self.eps = float(eps)

    def scale(self, r: float, gamma: float, terminated: bool) -> float:
        self.u = gamma * (0.0 if terminated else 1.0) * self.u + r
        _, self.p, sigma2, self.n = welford_update(0.0, self.p, self.n, self.u)
        return r / np.sqrt(sigma2 + self.eps)

    def denominator(self) -> float:
        """Current scale factor; multiply predictions by this to undo scaling."""
        sigma2 = self.p / (self.n - 1) if self.n >= 2 else 1.0
        return float(np.sqrt(sigma2 + self.eps))
