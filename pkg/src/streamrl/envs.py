"""Desk-scale environments behind one small interaction interface.

The roster covers every algorithmic demand of the agents: a random-walk chain
for prediction, a gridworld for discrete control, cart-pole balancing for
harder discrete control, a point-mass reacher for continuous control, and a
CSV-backed time-series stream for discounted-cumulant (general value
function) prediction.  Random-walk and gridworld come with dynamic-programming
oracles so learned values can be checked against ground truth.

Episode ends distinguish termination (environment dynamics; bootstrap value is
zero) from truncation (time limit or end of data; bootstrapping continues).
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


@dataclass(frozen=True)
class EnvStep:
    observation: np.ndarray
    reward: float
    terminated: bool
    truncated: bool


@dataclass(frozen=True)
class Discrete:
    n: int


@dataclass(frozen=True)
class Continuous:
    dim: int  # bounds are always [-1, 1] per dimension


@dataclass(frozen=True)
class EnvSpec:
    observation_dim: int
    action_space: Discrete | Continuous
    max_episode_steps: int | None = None


class Environment:
    """Minimal episodic interface: reset(seed) -> obs, step(action) -> EnvStep."""

    spec: EnvSpec

    def reset(self, seed: int | None = None) -> np.ndarray:
        raise NotImplementedError

    def step(self, action) -> EnvStep:
        raise NotImplementedError


class RandomWalk(Environment):
    """Symmetric random walk over `n` states, one-hot observations.

    Starts at the center.  The walk itself is the transition noise; actions
    are ignored.  Exiting on the right pays 1, on the left 0, all other
    rewards are 0.  The terminal observation is the zero vector.
    """

    def __init__(self, n: int = 5):
        if n < 2:
            raise ValueError("need at least 2 states")
        self.n = int(n)
        self.spec = EnvSpec(observation_dim=self.n, action_space=Discrete(1))
        self._rng = np.random.default_rng()
        self._pos = self.n // 2
        self._done = True

    def _obs(self) -> np.ndarray:
        v = np.zeros(self.n, dtype=np.float64)
        if 0 <= self._pos < self.n:
            v[self._pos] = 1.0
        return v

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._pos = self.n // 2
        self._done = False
        return self._obs()

    def step(self, action=None) -> EnvStep:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        self._pos += 1 if self._rng.random() < 0.5 else -1
        if self._pos < 0:
            self._done = True
            return EnvStep(self._obs(), 0.0, True, False)
        if self._pos >= self.n:
            self._done = True
            return EnvStep(self._obs(), 1.0, True, False)
        return EnvStep(self._obs(), 0.0, False, False)


def random_walk_true_values(n: int = 5, gamma: float = 1.0, tol: float = 1e-13) -> np.ndarray:
    """State values of the random walk by iterative policy evaluation."""
    v = np.zeros(n, dtype=np.float64)
    while True:
        left = np.concatenate(([0.0], gamma * v[:-1]))          # exit left pays 0
        right = np.concatenate((gamma * v[1:], [1.0]))          # exit right pays 1
        v_new = 0.5 * (left + right)
        if np.max(np.abs(v_new - v)) < tol:
            return v_new
        v = v_new


class Gridworld(Environment):
    """Deterministic grid: start in one corner, goal in the opposite one.

    Four moves (up, down, left, right); bumping a wall stays in place.
    Entering the goal pays 1 and terminates; everything else pays 0.
    Observations are one-hot over cells.
    """

    MOVES = ((-1, 0), (1, 0), (0, -1), (0, 1))

    def __init__(self, size: int = 5):
        if size < 2:
            raise ValueError("grid must be at least 2x2")
        self.size = int(size)
        self.spec = EnvSpec(observation_dim=size * size, action_space=Discrete(4))
        self._pos = (0, 0)
        self._done = True

    def _obs(self) -> np.ndarray:
        v = np.zeros(self.size * self.size, dtype=np.float64)
        v[self._pos[0] * self.size + self._pos[1]] = 1.0
        return v

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._pos = (0, 0)
        self._done = False
        return self._obs()

    def step(self, action) -> EnvStep:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        a = int(action)
        if not 0 <= a < 4:
            raise ValueError(f"invalid action {action!r}")
        dr, dc = self.MOVES[a]
        r = min(max(self._pos[0] + dr, 0), self.size - 1)
        c = min(max(self._pos[1] + dc, 0), self.size - 1)
        self._pos = (r, c)
        goal = (self.size - 1, self.size - 1)
        if self._pos == goal:
            self._done = True
            return EnvStep(self._obs(), 1.0, True, False)
        return EnvStep(self._obs(), 0.0, False, False)


def gridworld_optimal_values(size: int = 5, gamma: float = 0.99,
                             tol: float = 1e-12) -> tuple[np.ndarray, np.ndarray]:
    """(v*, q*) of the gridworld by value iteration; goal cell has value 0."""
    n = size * size
    goal = n - 1
    v = np.zeros(n, dtype=np.float64)
    q = np.zeros((n, 4), dtype=np.float64)
    while True:
        for s in range(n):
            if s == goal:
                q[s, :] = 0.0
                continue
            r0, c0 = divmod(s, size)
            for a, (dr, dc) in enumerate(Gridworld.MOVES):
                r = min(max(r0 + dr, 0), size - 1)
                c = min(max(c0 + dc, 0), size - 1)
                s2 = r * size + c
                q[s, a] = (1.0 if s2 == goal else 0.0) + (0.0 if s2 == goal else gamma * v[s2])
        v_new = q.max(axis=1)
        v_new[goal] = 0.0
        if np.max(np.abs(v_new - v)) < tol:
            return v_new, q
        v = v_new


class PoleBalance(Environment):
    """Cart-pole balancing with two push actions and reward 1 per step.

    Standard parameters: 1 kg cart, 0.1 kg pole of half-length 0.5 m, 10 N
    push force, 0.02 s Euler steps.  The episode terminates when the pole
    leans past 12 degrees or the cart leaves +/-2.4 m.
    """

    GRAVITY = 9.8
    CART_MASS = 1.0
    POLE_MASS = 0.1
    HALF_LENGTH = 0.5
    FORCE_MAG = 10.0
    DT = 0.02
    THETA_LIMIT = 12.0 * np.pi / 180.0
    X_LIMIT = 2.4

    def __init__(self):
        self.spec = EnvSpec(observation_dim=4, action_space=Discrete(2))
        self._rng = np.random.default_rng()
        self._state = np.zeros(4, dtype=np.float64)
        self._done = True

    @classmethod
    def dynamics_step(cls, state: np.ndarray, force: float) -> np.ndarray:
        """One explicit-Euler step of the cart-pole equations of motion."""
        x, x_dot, theta, theta_dot = state
        total_mass = cls.CART_MASS + cls.POLE_MASS
        pole_ml = cls.POLE_MASS * cls.HALF_LENGTH
        cos_t = np.cos(theta)
        sin_t = np.sin(theta)
        temp = (force + pole_ml * theta_dot ** 2 * sin_t) / total_mass
        theta_acc = (cls.GRAVITY * sin_t - cos_t * temp) / (
            cls.HALF_LENGTH * (4.0 / 3.0 - cls.POLE_MASS * cos_t ** 2 / total_mass))
        x_acc = temp - pole_ml * theta_acc * cos_t / total_mass
        return np.array([
            x + cls.DT * x_dot,
            x_dot + cls.DT * x_acc,
            theta + cls.DT * theta_dot,
            theta_dot + cls.DT * theta_acc,
        ])

    @classmethod
    def energy(cls, state: np.ndarray) -> float:
        """Mechanical energy of the cart-pole (uniform-rod pole model)."""
        _, x_dot, theta, theta_dot = state
        l = cls.HALF_LENGTH
        v_cm_sq = (x_dot + l * theta_dot * np.cos(theta)) ** 2 \
            + (l * theta_dot * np.sin(theta)) ** 2
        kinetic = 0.5 * cls.CART_MASS * x_dot ** 2 \
            + 0.5 * cls.POLE_MASS * v_cm_sq \
            + 0.5 * (cls.POLE_MASS * l ** 2 / 3.0) * theta_dot ** 2
        potential = cls.POLE_MASS * cls.GRAVITY * l * np.cos(theta)
        return float(kinetic + potential)

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._state = self._rng.uniform(-0.05, 0.05, size=4)
        self._done = False
        return self._state.copy()

    def step(self, action) -> EnvStep:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        a = int(action)
        if a not in (0, 1):
            raise ValueError(f"invalid action {action!r}")
        force = self.FORCE_MAG if a == 1 else -self.FORCE_MAG
        self._state = self.dynamics_step(self._state, force)
        x, _, theta, _ = self._state
        terminated = bool(abs(x) > self.X_LIMIT or abs(theta) > self.THETA_LIMIT)
        if terminated:
            self._done = True
        return EnvStep(self._state.copy(), 1.0, terminated, False)


class PointMassReacher(Environment):
    """Continuous control: drive a damped point mass to the origin.

    The two-dimensional action in [-1, 1]^2 commands velocity through a
    first-order lag; reward is the negative distance to the target.  Episodes
    never terminate (use a time limit).
    """

    DT = 0.1
    LAG = 0.8

    def __init__(self):
        self.spec = EnvSpec(observation_dim=4, action_space=Continuous(2))
        self._rng = np.random.default_rng()
        self._pos = np.zeros(2)
        self._vel = np.zeros(2)
        self._done = True

    def reset(self, seed: int | None = None) -> np.ndarray:
        if seed is not None:
            self._rng = np.random.default_rng(seed)
        self._pos = self._rng.uniform(-1.0, 1.0, size=2)
        self._vel = np.zeros(2)
        self._done = False
        return np.concatenate([self._pos, self._vel])

    def step(self, action) -> EnvStep:
        if self._done:
            raise RuntimeError("step() called on a finished episode; call reset()")
        a = np.clip(np.asarray(action, dtype=np.float64), -1.0, 1.0)
        if a.shape != (2,):
            raise ValueError(f"invalid action shape {a.shape}")
        self._vel = self.LAG * self._vel + (1.0 - self.LAG) * a
        self._pos = self._pos + self.DT * self._vel
        reward = -float(np.linalg.norm(self._pos))
        return EnvStep(np.concatenate([self._pos, self._vel]), reward, False, False)


class TimeLimit(Environment):
    """Append a normalized clock feature and truncate at `max_steps`.

    The extra feature runs linearly from -1/2 at episode start to +1/2 at the
    limit.  Hitting the limit sets truncated, never terminated, so value
    bootstrapping continues through timeouts.
    """

    def __init__(self, env: Environment, max_steps: int):
        if max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        self.env = env
        self.max_steps = int(max_steps)
        self._t = 0
        self.spec = EnvSpec(
            observation_dim=env.spec.observation_dim + 1,
            action_space=env.spec.action_space,
            max_episode_steps=self.max_steps,
        )

    def _augment(self, obs: np.ndarray) -> np.ndarray:
        return np.concatenate([obs, [self._t / self.max_steps - 0.5]])

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._t = 0
        return self._augment(self.env.reset(seed))

    def step(self, action) -> EnvStep:
        inner = self.env.step(action)
        self._t += 1
        truncated = inner.truncated or (self._t >= self.max_steps and not inner.terminated)
        return EnvStep(self._augment(inner.observation), inner.reward,
                       inner.terminated, truncated)


class MemoryTrace:
    """Exponential moving average of observation entries: S <- b*S + (1-b)*O."""

    def __init__(self, dim: int, beta: float):
        if not 0.0 <= beta < 1.0:
            raise ValueError("beta must be in [0, 1)")
        self.beta = float(beta)
        self.traces = np.zeros(dim, dtype=np.float64)

    def update(self, obs: np.ndarray) -> np.ndarray:
        self.traces = self.beta * self.traces + (1.0 - self.beta) * obs
        return self.traces

    def reset(self):
        self.traces[:] = 0.0


TIMESTAMP_COLUMNS = ("date", "timestamp", "time")


def load_timeseries_csv(path, cumulant_column: str) -> tuple[np.ndarray, np.ndarray, list[str]]:
    """Read (features, cumulants, feature_names) from a headered CSV.

    A leading timestamp column (named date/timestamp/time) is ignored; every
    other cell must parse as a float.  Errors report the offending data row.
    """
    path = Path(path)
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        keep = [i for i, h in enumerate(header) if h.lower() not in TIMESTAMP_COLUMNS]
        kept_names = [header[i] for i in keep]
        if cumulant_column not in kept_names:
            raise ValueError(f"{path}: cumulant column {cumulant_column!r} not in header {kept_names}")
        cum_idx = kept_names.index(cumulant_column)
        rows = []
        for row_idx, row in enumerate(reader):
            values = []
            for i in keep:
                try:
                    values.append(float(row[i]))
                except (ValueError, IndexError):
                    cell = row[i] if i < len(row) else "<missing>"
                    raise ValueError(
                        f"{path}: non-numeric cell {cell!r} in column "
                        f"{header[i]!r} at data row {row_idx}") from None
            rows.append(values)
    if len(rows) < 2:
        raise ValueError(f"{path}: need at least 2 data rows")
    data = np.asarray(rows, dtype=np.float64)
    cumulants = data[:, cum_idx]
    features = np.delete(data, cum_idx, axis=1)
    feature_names = [n for n in kept_names if n != cumulant_column]
    return features, cumulants, feature_names


class TimeSeriesGVF(Environment):
    """Stream a time series as a prediction task with memory-trace state.

    Raw observation entries at row t are the feature columns plus the already
    observed cumulant; the agent state is their exponential memory trace.  The
    reward of a step is the next cumulant value.  The stream never terminates;
    it truncates at the end of the data.
    """

    def __init__(self, features: np.ndarray, cumulants: np.ndarray,
                 beta: float = 0.999, gamma: float = 0.99):
        features = np.asarray(features, dtype=np.float64)
        cumulants = np.asarray(cumulants, dtype=np.float64)
        if features.ndim != 2 or features.shape[0] != cumulants.shape[0]:
            raise ValueError("features and cumulants must share the row count")
        self.features = features
        self.cumulants = cumulants
        self.gamma = float(gamma)
        dim = features.shape[1] + 1
        self.spec = EnvSpec(observation_dim=dim, action_space=Discrete(1))
        self.memory = MemoryTrace(dim, beta)
        self._t = 0
        self._done = True

    @classmethod
    def from_csv(cls, path, cumulant_column: str, beta: float = 0.999,
                 gamma: float = 0.99) -> "TimeSeriesGVF":
        features, cumulants, _ = load_timeseries_csv(path, cumulant_column)
        return cls(features, cumulants, beta=beta, gamma=gamma)

    def _raw_obs(self, t: int) -> np.ndarray:
        return np.concatenate([self.features[t], [self.cumulants[t]]])

    def reset(self, seed: int | None = None) -> np.ndarray:
        self._t = 0
        self._done = False
        self.memory.reset()
        return self.memory.update(self._raw_obs(0)).copy()

    def step(self, action=None) -> EnvStep:
        if self._done:
            raise RuntimeError("step() called on a finished stream; call reset()")
        self._t += 1
        reward = float(self.cumulants[self._t])
        obs = self.memory.update(self._raw_obs(self._t)).copy()
        truncated = self._t >= len(self.cumulants) - 1
        if truncated:
            self._done = True
        return EnvStep(obs, reward, False, truncated)


def true_discounted_returns(cumulants: np.ndarray, gamma: float) -> np.ndarray:
    """Backward-accumulated G_t = c_{t+1} + gamma * G_{t+1} over the series.

    Returns one entry per stream state (rows 0 .. N-2); the final return is
    just the last cumulant because the series ends there.
    """
    c = np.asarray(cumulants, dtype=np.float64)
    g = np.zeros(len(c) - 1, dtype=np.float64)
    g[-1] = c[-1]
    for t in range(len(g) - 2, -1, -1):
        g[t] = c[t + 1] + gamma * g[t + 1]
    return g


def synthetic_series(n_rows: int = 70080, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Seeded synthetic load series mirroring the shape of a 2-year 15-minute log.

    Six feature columns lead the target by varying phase shifts, so memory
    traces of the features are genuinely predictive of the future cumulant.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(n_rows, dtype=np.float64)
    daily = 2.0 * np.pi * t / 96.0
    weekly = 2.0 * np.pi * t / 672.0
    seasonal = 2.0 * np.pi * t / 17520.0
    base = 10.0 + 3.0 * np.sin(daily) + 1.5 * np.sin(weekly) \
        + 2.0 * np.sin(seasonal) + 3.0 * t / n_rows
    cumulants = base + 0.2 * rng.standard_normal(n_rows)
    features = np.empty((n_rows, 6), dtype=np.float64)
    shifts = (30.0, 60.0, 120.0, 240.0, 48.0, 96.0)
    gains = (1.0, 0.8, 0.6, 0.5, 1.2, 0.9)
    for i, (shift, gain) in enumerate(zip(shifts, gains)):
        lead = 2.0 * np.pi * (t + shift)
        features[:, i] = gain * (3.0 * np.sin(lead / 96.0) + 1.5 * np.sin(lead / 672.0)) \
            + 0.3 * rng.standard_normal(n_rows)
    return features, cumulants


def write_series_csv(path, features: np.ndarray, cumulants: np.ndarray):
    """Write the ETT-style layout: date column, feature columns, target last."""
    path = Path(path)
    n, f = features.shape
    start = np.datetime64("2020-01-01T00:00")
    stamps = start + np.arange(n) * np.timedelta64(15, "m")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["date"] + [f"load{i}" for i in range(f)] + ["target"])
        for i in range(n):
            writer.writerow([str(stamps[i])]
                            + [f"{features[i, j]:.6f}" for j in range(f)]
                            + [f"{cumulants[i]:.6f}"])


def make_env(env_id: str, **params) -> Environment:
    """Environment factory used by configs and the command line."""
    if env_id == "random_walk":
        return RandomWalk(n=int(params.get("n", 5)))
    if env_id == "gridworld":
        return Gridworld(size=int(params.get("size", 5)))
    if env_id == "pole_balance":
        return TimeLimit(PoleBalance(), int(params.get("max_steps", 500)))
    if env_id == "point_mass_reacher":
        return TimeLimit(PointMassReacher(), int(params.get("max_steps", 200)))
    if env_id == "timeseries_gvf":
        beta = float(params.get("beta", 0.999))
        gamma = float(params.get("gamma", 0.99))
        if "csv" in params and params["csv"]:
            return TimeSeriesGVF.from_csv(params["csv"],
                                          params.get("cumulant_col", "target"),
                                          beta=beta, gamma=gamma)
        features, cumulants = synthetic_series(
            n_rows=int(params.get("n_rows", 70080)),
            seed=int(params.get("series_seed", 0)))
        return TimeSeriesGVF(features, cumulants, beta=beta, gamma=gamma)
    raise ValueError(f"unknown environment {env_id!r}")
