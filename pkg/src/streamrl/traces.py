"""Accumulating eligibility traces over flat parameter vectors."""

from __future__ import annotations

import numpy as np


class TraceSet:
    """One decaying gradient accumulator, matched to one parameter vector.

    z decays by gamma * lam on every accumulation and is zeroed at episode
    boundaries (and, for Watkins-style control, on exploratory actions).
    """

    def __init__(self, size: int, gamma: float, lam: float):
        if not 0.0 <= gamma <= 1.0 or not 0.0 <= lam <= 1.0:
            raise ValueError("gamma and lambda must be in [0, 1]")
        self.z = np.zeros(size, dtype=np.float64)
        self.gamma = float(gamma)
        self.lam = float(lam)

    def accumulate(self, g: np.ndarray) -> np.ndarray:
        """z <- gamma*lam*z + g, elementwise; returns the updated z."""
        if g.shape != self.z.shape:
            raise ValueError(f"gradient shape {g.shape} != trace shape {self.z.shape}")
        self.z *= self.gamma * self.lam
        self.z += g
        return self.z

    def reset(self):
        self.z[:] = 0.0

    def l1_norm(self) -> float:
        return float(np.abs(self.z).sum())
