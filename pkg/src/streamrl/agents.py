"""The streaming learners: TD, Q, SARSA, and actor-critic with eligibility traces.

Every agent follows the same per-step discipline: normalize the incoming
observation, scale the reward, compute the one-step bootstrapped error, fold
the current gradient into a decaying trace, and hand (trace, error) to an
overshoot-bounded optimizer.  No replay buffer, no batch, no target network;
each sample is consumed once, the moment it arrives.

Update order within a step deliberately mirrors the per-episode loops the
algorithms are defined by, so a straight-line transcription of those loops
produces bit-identical state (the golden-trace tests rely on this).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .envs import Continuous, Discrete, Environment, EnvSpec
from .net import Network, make_mlp, sparse_init
from .optim import AdaptiveObGD, ObGD, make_optimizer
from .policy import GaussianHead, SoftmaxHead, logprob_and_entropy_grad, sample_action
from .scaling import ObservationNormalizer, RewardScaler
from .traces import TraceSet

GREEDY_TIE_TOLERANCE = 1e-9


@dataclass
class AgentConfig:
    """Hyperparameters shared by all stream agents.

    The defaults are one fixed working set used across every task: discount
    0.99, trace decay 0.8, unit base step size with bounding factors 2 (value)
    and 3 (policy), 90% sparse init, both data scalers on.
    """

    gamma: float = 0.99
    lam: float = 0.8
    alpha: float = 1.0
    kappa: float = 2.0        # value-network step-size scaling factor
    kappa_pi: float = 3.0     # policy-network step-size scaling factor
    tau: float = 0.01         # entropy bonus coefficient (actor-critic)
    sparsity: float = 0.9
    hidden: tuple[int, ...] = (128, 128)
    epsilon_start: float = 1.0
    epsilon_end: float = 0.01
    epsilon_end_fraction: float = 0.05
    optimizer: str = "obgd"   # obgd | adaptive_obgd | sgd | adaptive_moments
    use_layernorm: bool = True
    use_sparse_init: bool = True
    normalize_obs: bool = True
    scale_reward: bool = True


@dataclass
class StepResult:
    """Diagnostics from one learning update (value-network numbers for AC)."""

    delta: float
    z_l1: float
    M: float
    alpha_eff: float
    clipped: bool
    xi: float | None = None   # measured effective step size, audit mode only


class _IdentityNormalizer:
    def normalize(self, obs):
        return np.asarray(obs, dtype=np.float64)

    def apply(self, obs):
        return np.asarray(obs, dtype=np.float64)


class _IdentityRewardScaler:
    u = 0.0

    def scale(self, r, gamma, terminated):
        return float(r)

    def denominator(self):
        return 1.0


def epsilon_at(cfg: AgentConfig, step: int, total_steps: int) -> float:
    """Linear anneal from epsilon_start to epsilon_end over the first
    epsilon_end_fraction of the run; constant afterwards."""
    anneal = max(1, int(round(cfg.epsilon_end_fraction * total_steps)))
    if step >= anneal:
        return cfg.epsilon_end
    return cfg.epsilon_start + (cfg.epsilon_end - cfg.epsilon_start) * (step / anneal)


def epsilon_greedy(q_values: np.ndarray, epsilon: float,
                   rng: np.random.Generator) -> tuple[int, bool]:
    """Pick an action; report whether its value ties the greedy maximum."""
    if rng.random() < epsilon:
        action = int(rng.integers(len(q_values)))
    else:
        action = int(np.argmax(q_values))
    greedy = q_values[action] >= q_values.max() - GREEDY_TIE_TOLERANCE
    return action, greedy


def _init_network(input_dim: int, output_dim: int, cfg: AgentConfig,
                  rng: np.random.Generator) -> Network:
    net = make_mlp(input_dim, cfg.hidden, output_dim, layernorm=cfg.use_layernorm)
    s = cfg.sparsity if cfg.use_sparse_init else 0.0
    sparse_init(net, s, rng)
    return net


class StreamAgent:
    """Common plumbing: scalers, rngs, step counting, divergence checks."""

    def __init__(self, cfg: AgentConfig, env_spec: EnvSpec, seed: int):
        self.cfg = cfg
        self.env_spec = env_spec
        ss = np.random.SeedSequence(seed)
        init_ss, action_ss = ss.spawn(2)
        self.init_rng = np.random.default_rng(init_ss)
        self.action_rng = np.random.default_rng(action_ss)
        if cfg.normalize_obs:
            self.obs_norm = ObservationNormalizer(env_spec.observation_dim)
        else:
            self.obs_norm = _IdentityNormalizer()
        self.reward_scaler = RewardScaler() if cfg.scale_reward else _IdentityRewardScaler()
        self.total_steps = 0       # set by run_stream before stepping
        self.steps_done = 0
        self._s = None             # current normalized observation

    def prepare(self, total_steps: int):
        self.total_steps = int(total_steps)

    def begin_episode(self, raw_obs: np.ndarray):
        raise NotImplementedError

    def act(self, step: int):
        raise NotImplementedError

    def transition(self, raw_next_obs, reward, terminated, truncated,
                   audit: bool = False) -> StepResult:
        raise NotImplementedError

    def state_is_finite(self) -> bool:
        """True while parameters, traces, and scaler state are all finite.

        Sums are one-pass and propagate any NaN/inf; an overflowing sum of
        finite entries only happens once parameters are astronomically large,
        which is flagged as divergence just the same.
        """
        for net in self.networks():
            if not math.isfinite(float(net.params.sum())):
                return False
        for tr in self.trace_sets():
            if not math.isfinite(float(tr.z.sum())):
                return False
        if isinstance(self.reward_scaler, RewardScaler):
            if not (math.isfinite(self.reward_scaler.u) and math.isfinite(self.reward_scaler.p)):
                return False
        if isinstance(self.obs_norm, ObservationNormalizer):
            m = self.obs_norm.moments
            if not (math.isfinite(float(np.sum(m.mu))) and math.isfinite(float(np.sum(m.p)))):
                return False
        return True

    def networks(self) -> list[Network]:
        raise NotImplementedError

    def trace_sets(self) -> list[TraceSet]:
        raise NotImplementedError

    def _optimizer_diag(self, opt, z_l1: float, delta: float, alpha_eff: float):
        if isinstance(opt, (ObGD, AdaptiveObGD)):
            M = opt.alpha * opt.kappa * max(abs(delta), 1.0) * z_l1
        else:
            M = float("nan")
        return M, alpha_eff < opt.alpha


class StreamTD(StreamAgent):
    """Streaming value prediction with traces (action-free environments)."""

    def __init__(self, cfg: AgentConfig, env_spec: EnvSpec, seed: int):
        super().__init__(cfg, env_spec, seed)
        self.net = _init_network(env_spec.observation_dim, 1, cfg, self.init_rng)
        self.z = TraceSet(self.net.param_count, cfg.gamma, cfg.lam)
        self.opt = make_optimizer(cfg.optimizer, cfg.alpha, cfg.kappa)
        self._dy = np.ones(1, dtype=np.float64)

    def networks(self):
        return [self.net]

    def trace_sets(self):
        return [self.z]

    def begin_episode(self, raw_obs):
        self.z.reset()
        self._s = self.obs_norm.normalize(raw_obs)

    def act(self, step: int):
        return None

    def transition(self, raw_next_obs, reward, terminated, truncated,
                   audit: bool = False) -> StepResult:
        cfg = self.cfg
        s = self._s
        s_next = self.obs_norm.normalize(raw_next_obs)
        r_hat = self.reward_scaler.scale(reward, cfg.gamma, terminated)
        v, tape = self.net.forward(s)
        v_next = 0.0 if terminated else float(self.net.value(s_next)[0])
        delta = r_hat + cfg.gamma * v_next - float(v[0])
        self.z.accumulate(self.net.backward(tape, self._dy))
        z_l1 = self.z.l1_norm()
        w_new, alpha_eff = self.opt.step(self.net.params, self.z.z, delta)
        self.net.params = w_new
        xi = None
        if audit:
            v_after = float(self.net.value(s)[0])
            v_next_after = 0.0 if terminated else float(self.net.value(s_next)[0])
            delta_after = r_hat + cfg.gamma * v_next_after - v_after
            xi = (delta - delta_after) / delta if delta != 0.0 else 0.0
        self._s = s_next
        self.steps_done += 1
        M, clipped = self._optimizer_diag(self.opt, z_l1, delta, alpha_eff)
        return StepResult(delta, z_l1, M, alpha_eff, clipped, xi)

    def predict_value(self, raw_obs) -> float:
        """Value estimate in raw-reward units (normalization applied, scaling undone)."""
        s = self.obs_norm.apply(raw_obs)
        return float(self.net.value(s)[0]) * self.reward_scaler.denominator()


class StreamQ(StreamAgent):
    """Off-policy streaming control: greedy bootstrap with a Watkins trace cut."""

    def __init__(self, cfg: AgentConfig, env_spec: EnvSpec, seed: int):
        super().__init__(cfg, env_spec, seed)
        if not isinstance(env_spec.action_space, Discrete):
            raise ValueError("stream Q needs a discrete action space")
        self.n_actions = env_spec.action_space.n
        self.net = _init_network(env_spec.observation_dim, self.n_actions, cfg, self.init_rng)
        self.z = TraceSet(self.net.param_count, cfg.gamma, cfg.lam)
        self.opt = make_optimizer(cfg.optimizer, cfg.alpha, cfg.kappa)
        self._pending = None  # (tape, q_values, action)

    def networks(self):
        return [self.net]

    def trace_sets(self):
        return [self.z]

    def begin_episode(self, raw_obs):
        self.z.reset()
        self._s = self.obs_norm.normalize(raw_obs)
        self._pending = None

    def act(self, step: int):
        q, tape = self.net.forward(self._s)
        eps = epsilon_at(self.cfg, step, self.total_steps)
        action, greedy = epsilon_greedy(q, eps, self.action_rng)
        if not greedy:
            self.z.reset()  # off-policy step: cut credit before accumulating
        self._pending = (tape, q, action)
        return action

    def transition(self, raw_next_obs, reward, terminated, truncated,
                   audit: bool = False) -> StepResult:
        cfg = self.cfg
        tape, q, action = self._pending
        s = self._s
        s_next = self.obs_norm.normalize(raw_next_obs)
        r_hat = self.reward_scaler.scale(reward, cfg.gamma, terminated)
        q_next_max = 0.0 if terminated else float(self.net.value(s_next).max())
        delta = r_hat + cfg.gamma * q_next_max - float(q[action])
        dy = np.zeros(self.n_actions, dtype=np.float64)
        dy[action] = 1.0
        self.z.accumulate(self.net.backward(tape, dy))
        z_l1 = self.z.l1_norm()
        w_new, alpha_eff = self.opt.step(self.net.params, self.z.z, delta)
        self.net.params = w_new
        xi = None
        if audit:
            q_after = float(self.net.value(s)[action])
            q_next_after = 0.0 if terminated else float(self.net.value(s_next).max())
            delta_after = r_hat + cfg.gamma * q_next_after - q_after
            xi = (delta - delta_after) / delta if delta != 0.0 else 0.0
        self._s = s_next
        self._pending = None
        self.steps_done += 1
        M, clipped = self._optimizer_diag(self.opt, z_l1, delta, alpha_eff)
        return StepResult(delta, z_l1, M, alpha_eff, clipped, xi)

    def predict_action_values(self, raw_obs) -> np.ndarray:
        s = self.obs_norm.apply(raw_obs)
        return self.net.value(s) * self.reward_scaler.denominator()


class StreamSarsa(StreamQ):
    """On-policy streaming control: bootstrap on the action actually chosen next.

    Only the committed next action survives a step boundary; q-values and the
    gradient tape are re-evaluated at the current weights every step, because
    each update moves the network the previous step's forward pass saw.
    """

    def begin_episode(self, raw_obs):
        super().begin_episode(raw_obs)
        self._committed_action = None

    def act(self, step: int):
        if self._committed_action is None:
            q, _ = self.net.forward(self._s)
            eps = epsilon_at(self.cfg, step, self.total_steps)
            self._committed_action, _ = epsilon_greedy(q, eps, self.action_rng)
        return self._committed_action

    def transition(self, raw_next_obs, reward, terminated, truncated,
                   audit: bool = False) -> StepResult:
        cfg = self.cfg
        action = self._committed_action
        s = self._s
        q, tape = self.net.forward(s)
        s_next = self.obs_norm.normalize(raw_next_obs)
        r_hat = self.reward_scaler.scale(reward, cfg.gamma, terminated)
        episode_over = terminated or truncated
        next_action = None
        if terminated:
            q_next = 0.0
        else:
            q_next_vec = self.net.value(s_next)
            eps = epsilon_at(self.cfg, self.steps_done + 1, self.total_steps)
            next_action, _ = epsilon_greedy(q_next_vec, eps, self.action_rng)
            q_next = float(q_next_vec[next_action])
        delta = r_hat + cfg.gamma * q_next - float(q[action])
        dy = np.zeros(self.n_actions, dtype=np.float64)
        dy[action] = 1.0
        self.z.accumulate(self.net.backward(tape, dy))
        z_l1 = self.z.l1_norm()
        w_new, alpha_eff = self.opt.step(self.net.params, self.z.z, delta)
        self.net.params = w_new
        xi = None
        if audit:
            q_after = float(self.net.value(s)[action])
            if terminated:
                q_next_after = 0.0
            else:
                q_next_after = float(self.net.value(s_next)[next_action])
            delta_after = r_hat + cfg.gamma * q_next_after - q_after
            xi = (delta - delta_after) / delta if delta != 0.0 else 0.0
        self._s = s_next
        self._committed_action = next_action if not episode_over else None
        self.steps_done += 1
        M, clipped = self._optimizer_diag(self.opt, z_l1, delta, alpha_eff)
        return StepResult(delta, z_l1, M, alpha_eff, clipped, xi)


class StreamAC(StreamAgent):
    """Streaming actor-critic: shared TD error drives separate actor/critic traces.

    The actor trace accumulates the gradient of log-probability plus a signed
    entropy bonus (tau * sign(delta) * H), so exploration pressure rises with
    surprising outcomes and reverses for disappointing ones.
    """

    def __init__(self, cfg: AgentConfig, env_spec: EnvSpec, seed: int):
        super().__init__(cfg, env_spec, seed)
        if isinstance(env_spec.action_space, Discrete):
            self.head = SoftmaxHead(env_spec.action_space.n)
        elif isinstance(env_spec.action_space, Continuous):
            self.head = GaussianHead(env_spec.action_space.dim)
        else:
            raise ValueError(f"unsupported action space {env_spec.action_space!r}")
        self.critic = _init_network(env_spec.observation_dim, 1, cfg, self.init_rng)
        self.actor = _init_network(env_spec.observation_dim,
                                   self.head.trunk_output_width, cfg, self.init_rng)
        self.z_w = TraceSet(self.critic.param_count, cfg.gamma, cfg.lam)
        self.z_theta = TraceSet(self.actor.param_count, cfg.gamma, cfg.lam)
        self.opt_w = make_optimizer(cfg.optimizer, cfg.alpha, cfg.kappa)
        self.opt_theta = make_optimizer(cfg.optimizer, cfg.alpha, cfg.kappa_pi)
        self._dy = np.ones(1, dtype=np.float64)
        self._pending = None  # (actor tape, ActionSample)

    def networks(self):
        return [self.critic, self.actor]

    def trace_sets(self):
        return [self.z_w, self.z_theta]

    def begin_episode(self, raw_obs):
        self.z_w.reset()
        self.z_theta.reset()
        self._s = self.obs_norm.normalize(raw_obs)
        self._pending = None

    def act(self, step: int):
        trunk, tape = self.actor.forward(self._s)
        sample = sample_action(self.head, trunk, self.action_rng)
        self._pending = (tape, sample)
        return sample.action

    def transition(self, raw_next_obs, reward, terminated, truncated,
                   audit: bool = False) -> StepResult:
        cfg = self.cfg
        tape_theta, sample = self._pending
        s = self._s
        s_next = self.obs_norm.normalize(raw_next_obs)
        r_hat = self.reward_scaler.scale(reward, cfg.gamma, terminated)
        v, tape_w = self.critic.forward(s)
        v_next = 0.0 if terminated else float(self.critic.value(s_next)[0])
        delta = r_hat + cfg.gamma * v_next - float(v[0])
        self.z_w.accumulate(self.critic.backward(tape_w, self._dy))
        delta_sign = math.copysign(1.0, delta) if delta != 0.0 else 0.0
        g_theta = logprob_and_entropy_grad(self.head, self.actor, tape_theta,
                                           sample.raw, cfg.tau, delta_sign)
        self.z_theta.accumulate(g_theta)
        z_w_l1 = self.z_w.l1_norm()
        theta_new, _ = self.opt_theta.step(self.actor.params, self.z_theta.z, delta)
        self.actor.params = theta_new
        w_new, alpha_eff = self.opt_w.step(self.critic.params, self.z_w.z, delta)
        self.critic.params = w_new
        xi = None
        if audit:
            v_after = float(self.critic.value(s)[0])
            v_next_after = 0.0 if terminated else float(self.critic.value(s_next)[0])
            delta_after = r_hat + cfg.gamma * v_next_after - v_after
            xi = (delta - delta_after) / delta if delta != 0.0 else 0.0
        self._s = s_next
        self._pending = None
        self.steps_done += 1
        M, clipped = self._optimizer_diag(self.opt_w, z_w_l1, delta, alpha_eff)
        return StepResult(delta, z_w_l1, M, alpha_eff, clipped, xi)

    def predict_value(self, raw_obs) -> float:
        s = self.obs_norm.apply(raw_obs)
        return float(self.critic.value(s)[0]) * self.reward_scaler.denominator()


AGENT_KINDS = {
    "stream_td": StreamTD,
    "stream_q": StreamQ,
    "stream_sarsa": StreamSarsa,
    "stream_ac": StreamAC,
}


def build_agent(kind: str, cfg: AgentConfig, env_spec: EnvSpec, seed: int) -> StreamAgent:
    try:
        cls = AGENT_KINDS[kind]
    except KeyError:
        raise ValueError(f"unknown agent {kind!r}; expected one of {sorted(AGENT_KINDS)}") from None
    return cls(cfg, env_spec, seed)


@dataclass
class EpisodeRecord:
    episode_index: int
    steps: int
    raw_return: float
    mean_delta: float
    clip_fraction: float
    end_step: int  # cumulative env steps at episode end


@dataclass
class RunLog:
    """Everything one seeded run produced."""

    episodes: list[EpisodeRecord] = field(default_factory=list)
    diverged: bool = False
    diverged_at_step: int | None = None
    steps_run: int = 0
    audit: list[tuple] = field(default_factory=list)  # (step, delta, z_l1, M, alpha_eff, xi)

    def returns(self) -> np.ndarray:
        return np.array([e.raw_return for e in self.episodes], dtype=np.float64)


def save_checkpoint(agent: StreamAgent, path):
    """Write networks, scaler state, and the step counter to one container.

    Traces are episode-local (always zero at episode boundaries) and are not
    part of a checkpoint.
    """
    from .snapshot import network_meta, save_snapshot

    sections: dict[str, np.ndarray] = {}
    meta: dict = {"kind": type(agent).__name__, "steps_done": agent.steps_done,
                  "networks": []}
    for i, net in enumerate(agent.networks()):
        sections[f"net{i}.params"] = net.params
        meta["networks"].append(network_meta(net))
    if isinstance(agent.obs_norm, ObservationNormalizer):
        m = agent.obs_norm.moments
        sections["obs.mu"] = np.asarray(m.mu)
        sections["obs.p"] = np.asarray(m.p)
        meta["obs_n"] = m.n
    if isinstance(agent.reward_scaler, RewardScaler):
        sections["reward.state"] = np.array([agent.reward_scaler.u,
                                             agent.reward_scaler.p])
        meta["reward_n"] = agent.reward_scaler.n
    save_snapshot(path, sections, meta)


def load_checkpoint(agent: StreamAgent, path):
    """Restore a checkpoint into an agent built with the same configuration."""
    from .snapshot import load_snapshot

    sections, meta = load_snapshot(path)
    for i, net in enumerate(agent.networks()):
        net.params = sections[f"net{i}.params"]
    if isinstance(agent.obs_norm, ObservationNormalizer):
        agent.obs_norm.moments.mu = sections["obs.mu"]
        agent.obs_norm.moments.p = sections["obs.p"]
        agent.obs_norm.moments.n = int(meta["obs_n"])
    if isinstance(agent.reward_scaler, RewardScaler):
        agent.reward_scaler.u = float(sections["reward.state"][0])
        agent.reward_scaler.p = float(sections["reward.state"][1])
        agent.reward_scaler.n = int(meta["reward_n"])
    agent.steps_done = int(meta["steps_done"])
    return agent


def run_stream(agent: StreamAgent, env: Environment, total_steps: int, seed: int,
               audit: bool = False, stop_fn=None) -> RunLog:
    """Drive one agent/environment pair for `total_steps` env steps.

    Episodes are rolled back-to-back; traces reset at every episode start.
    Any non-finite error signal or agent state aborts the run and marks it
    diverged.  `stop_fn(log)` is evaluated at episode ends and may end the run
    early (used for solved-early experiment caps).
    """
    log = RunLog()
    if total_steps < 1:
        return log
    agent.prepare(total_steps)
    obs = env.reset(seed)
    agent.begin_episode(obs)
    ep_return = 0.0
    ep_steps = 0
    ep_delta_sum = 0.0
    ep_clips = 0
    episode_index = 0
    for step in range(1, total_steps + 1):
        action = agent.act(step)
        tr = env.step(action)
        res = agent.transition(tr.observation, tr.reward, tr.terminated, tr.truncated,
                               audit=audit)
        log.steps_run = step
        ep_return += tr.reward
        ep_steps += 1
        ep_delta_sum += res.delta
        ep_clips += 1 if res.clipped else 0
        if audit:
            log.audit.append((step, res.delta, res.z_l1, res.M, res.alpha_eff, res.xi))
        if not (math.isfinite(res.delta) and agent.state_is_finite()):
            log.diverged = True
            log.diverged_at_step = step
            break
        if tr.terminated or tr.truncated:
            log.episodes.append(EpisodeRecord(
                episode_index=episode_index,
                steps=ep_steps,
                raw_return=ep_return,
                mean_delta=ep_delta_sum / ep_steps,
                clip_fraction=ep_clips / ep_steps,
                end_step=step,
            ))
            episode_index += 1
            ep_return = 0.0
            ep_steps = 0
            ep_delta_sum = 0.0
            ep_clips = 0
            if stop_fn is not None and stop_fn(log):
                break
            if step < total_steps:
                obs = env.reset()
                agent.begin_episode(obs)
    return log
