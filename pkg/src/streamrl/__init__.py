"""Streaming deep reinforcement learning with eligibility traces.

Agents learn from each sample the moment it arrives: no replay buffer, no
batch updates, no target networks.  Stability comes from four cooperating
pieces: overshoot-bounded step sizes, per-layer activation normalization,
sparse initialization, and online scaling of observations and rewards.
"""

from .agents import (AgentConfig, RunLog, StreamAC, StreamQ, StreamSarsa,
                     StreamTD, build_agent, load_checkpoint, run_stream,
                     save_checkpoint)
from .envs import (EnvSpec, EnvStep, Gridworld, PointMassReacher, PoleBalance,
                   RandomWalk, TimeLimit, TimeSeriesGVF, make_env)
from .harness import AggregateResult, ExperimentConfig, ablate, plot, run_experiment
from .net import LayerSpec, Network, layernorm, make_mlp, sparse_init
from .optim import (AdaptiveMoments, AdaptiveObGD, BacktrackState, ObGD, SGD,
                    backtracking_step, xi_linear_regression, xi_linear_td)
from .policy import GaussianHead, SoftmaxHead, logprob_and_entropy_grad, sample_action
from .scaling import ObservationNormalizer, RewardScaler, RunningMoments, welford_update
from .traces import TraceSet

__all__ = [
    "AgentConfig", "AggregateResult", "AdaptiveMoments", "AdaptiveObGD",
    "BacktrackState", "EnvSpec", "EnvStep", "ExperimentConfig", "GaussianHead",
    "Gridworld", "LayerSpec", "Network", "ObGD", "ObservationNormalizer",
    "PointMassReacher", "PoleBalance", "RandomWalk", "RewardScaler", "RunLog",
    "RunningMoments", "SGD", "SoftmaxHead", "StreamAC", "StreamQ", "StreamSarsa",
    "StreamTD", "TimeLimit", "TimeSeriesGVF", "TraceSet", "ablate",
    "backtracking_step", "build_agent", "layernorm", "logprob_and_entropy_grad",
    "load_checkpoint", "make_env", "make_mlp", "plot", "run_experiment",
    "run_stream", "sample_action", "save_checkpoint", "sparse_init",
    "welford_update", "xi_linear_regression", "xi_linear_td",
]

__version__ = "0.1.0"
