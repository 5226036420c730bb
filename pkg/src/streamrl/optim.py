"""Step-size control for streaming semi-gradient updates.

The central idea: an update overshoots when it flips the sign of the error it
was correcting.  The fraction of error removed by an update,

    xi = (delta - delta_after) / delta,

stays below 1 for a linear model whenever the step size is small enough, and
the overshoot-bounded optimizer enforces a conservative proxy of that bound
without any extra forward passes: it rescales the step so that
alpha * kappa * max(|delta|, 1) * ||z||_1 never exceeds 1.

Also here: an adaptive (second-moment preconditioned) variant, the idealized
backtracking search that measures xi exactly (kept as a verification oracle),
plain SGD and a bias-corrected adaptive-moments baseline for ablations, and
closed-form xi expressions for linear models.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np


def _check_finite(delta: float, z: np.ndarray):
    if not np.isfinite(delta):
        raise ValueError("non-finite error signal")
    if not np.all(np.isfinite(z)):
        raise ValueError("non-finite trace")


@dataclass
class ObGD:
    """Overshoot-bounded gradient descent on a flat parameter vector."""

    alpha: float = 1.0
    kappa: float = 2.0

    def __post_init__(self):
        if self.alpha <= 0.0:
            raise ValueError("alpha must be positive")
        if self.kappa <= 1.0:
            raise ValueError("kappa must exceed 1")

    def step(self, w: np.ndarray, z: np.ndarray, delta: float) -> tuple[np.ndarray, float]:
        """Returns (updated params, effective step size actually used)."""
        _check_finite(delta, z)
        delta_bar = max(abs(delta), 1.0)
        M = self.alpha * self.kappa * delta_bar * float(np.abs(z).sum())
        alpha_eff = min(self.alpha / M, self.alpha) if M > 0.0 else self.alpha
        return w + (alpha_eff * delta) * z, alpha_eff


@dataclass
class AdaptiveObGD:
    """ObGD preconditioned by a second-moment estimate of delta*z.

    v starts at zero with no bias correction; the bound is applied to the
    preconditioned trace z/sqrt(v + eps).
    """

    alpha: float = 1.0
    kappa: float = 2.0
    beta2: float = 0.999
    eps: float = 1e-8
    v: np.ndarray | None = None

    def step(self, w: np.ndarray, z: np.ndarray, delta: float) -> tuple[np.ndarray, float]:
        _check_finite(delta, z)
        if self.v is None:
            self.v = np.zeros_like(z)
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * (delta * z) ** 2
        zp = z / np.sqrt(self.v + self.eps)
        delta_bar = max(abs(delta), 1.0)
        M = self.alpha * self.kappa * delta_bar * float(np.abs(zp).sum())
        alpha_eff = min(self.alpha / M, self.alpha) if M > 0.0 else self.alpha
        return w + (alpha_eff * delta) * zp, alpha_eff


@dataclass
class SGD:
    """Unprotected baseline: w <- w + alpha * delta * z."""

    alpha: float = 1.0

    def step(self, w: np.ndarray, z: np.ndarray, delta: float) -> tuple[np.ndarray, float]:
        return w + (self.alpha * delta) * z, self.alpha


@dataclass
class AdaptiveMoments:
    """Bias-corrected first/second-moment baseline on the semi-gradient delta*z.

    Ascent form: the update direction is the corrected mean of delta*z divided
    by the corrected root second moment.
    """

    alpha: float = 1e-5
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-4
    m: np.ndarray | None = None
    v: np.ndarray | None = None
    t: int = 0

    def step(self, w: np.ndarray, z: np.ndarray, delta: float) -> tuple[np.ndarray, float]:
        g = delta * z
        if self.m is None:
            self.m = np.zeros_like(z)
            self.v = np.zeros_like(z)
        self.t += 1
        self.m = self.beta1 * self.m + (1.0 - self.beta1) * g
        self.v = self.beta2 * self.v + (1.0 - self.beta2) * g * g
        m_hat = self.m / (1.0 - self.beta1 ** self.t)
        v_hat = self.v / (1.0 - self.beta2 ** self.t)
        return w + self.alpha * m_hat / (np.sqrt(v_hat) + self.eps), self.alpha


@dataclass
class BacktrackState:
    """Settings for the exact (forward-pass heavy) step-size search."""

    xi_max: float = 0.05
    shrink: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.xi_max <= 1.0:
            raise ValueError("xi_max must be in (0, 1]")
        if not 0.0 < self.shrink < 1.0:
            raise ValueError("shrink must be in (0, 1)")


def backtracking_step(st: BacktrackState, w: np.ndarray, z: np.ndarray, delta: float,
                      delta_fn: Callable[[np.ndarray], float], alpha0: float,
                      max_iters: int = 60) -> tuple[np.ndarray, float]:
    """Shrink the step size until the measured error reduction is <= xi_max.

    `delta_fn` re-evaluates the same sample's error at candidate weights; the
    loop halts at the first alpha in (alpha0, shrink*alpha0, ...) whose
    measured xi = (delta - delta_fn(w')) / delta passes the bound.
    """
    if delta == 0.0:
        return w, 0.0
    alpha = float(alpha0)
    for _ in range(max_iters):
        w_new = w + (alpha * delta) * z
        xi = (delta - delta_fn(w_new)) / delta
        if xi <= st.xi_max:
            return w_new, alpha
        alpha *= st.shrink
    raise RuntimeError(f"backtracking failed to satisfy xi <= {st.xi_max} "
                       f"within {max_iters} shrinks")


def xi_linear_regression(alpha: float, x: np.ndarray) -> float:
    """Exact error-reduction fraction for linear squared-error regression."""
    x = np.asarray(x, dtype=np.float64)
    return alpha * float(np.dot(x, x))


def xi_linear_td(alpha: float, z: np.ndarray, x: np.ndarray, x_next: np.ndarray,
                 gamma: float) -> float:
    """Exact error-reduction fraction for linear semi-gradient TD.

    With error r + gamma*w.x_next - w.x and update w + alpha*error*z, the
    measured (error - error_after)/error works out to alpha * z.(x - gamma *
    x_next): the bootstrapped target moves with the weights, so the next
    feature vector re-enters with a minus sign, and a terminal next state
    contributes nothing.
    """
    z = np.asarray(z, dtype=np.float64)
    return alpha * float(np.dot(z, np.asarray(x, dtype=np.float64)
                                - gamma * np.asarray(x_next, dtype=np.float64)))


OPTIMIZERS = {
    "obgd": ObGD,
    "adaptive_obgd": AdaptiveObGD,
    "sgd": SGD,
    "adaptive_moments": AdaptiveMoments,
}


def make_optimizer(kind: str, alpha: float, kappa: float) -> ObGD | AdaptiveObGD | SGD | AdaptiveMoments:
    """Instantiate an optimizer by string id, as used by agent configs."""
    if kind == "obgd":
        return ObGD(alpha=alpha, kappa=kappa)
    if kind == "adaptive_obgd":
        return AdaptiveObGD(alpha=alpha, kappa=kappa)
    if kind == "sgd":
        return SGD(alpha=alpha)
    if kind == "adaptive_moments":
        return AdaptiveMoments(alpha=alpha)
    raise ValueError(f"unknown optimizer {kind!r}; expected one of {sorted(OPTIMIZERS)}")
