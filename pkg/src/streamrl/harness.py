"""Experiment execution: seeded multi-run configs, aggregation, plots, ablations.

A single flat config fans out over seeds; every run is bit-reproducible from
(config, seed).  Learning curves are binned per 1% of total steps, averaged
across the non-diverged seeds, and wrapped in a 90% normal-approximation
confidence band.  Diverged runs never mix into the bands; they are counted
separately.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .agents import AgentConfig, AGENT_KINDS, RunLog, build_agent, run_stream
from .envs import make_env, true_discounted_returns
from .optim import OPTIMIZERS

N_BINS = 100
CI_Z_90 = 1.645  # two-sided 90% normal quantile


@dataclass
class ExperimentConfig:
    env_id: str
    agent_kind: str
    agent: AgentConfig = field(default_factory=AgentConfig)
    env_params: dict = field(default_factory=dict)
    total_steps: int = 10000
    seeds: tuple[int, ...] = (0,)
    out_dir: str | None = None
    audit: bool = False

    def validate(self):
        if self.agent_kind not in AGENT_KINDS:
            raise ValueError(f"unknown agent {self.agent_kind!r}")
        if self.agent.optimizer not in OPTIMIZERS:
            raise ValueError(f"unknown optimizer {self.agent.optimizer!r}")
        make_env(self.env_id, **self.env_params)  # raises on unknown id
        if len(self.seeds) < 1:
            raise ValueError("need at least one seed")
        if self.total_steps < 1:
            raise ValueError("total_steps must be >= 1")


@dataclass
class AggregateResult:
    bin_steps: np.ndarray          # (N_BINS,) step at each bin's right edge
    per_seed: np.ndarray           # (n_seeds, N_BINS) binned mean returns, NaN gaps
    mean: np.ndarray               # cross-seed mean over non-diverged runs
    ci_half: np.ndarray            # 90% band half-width
    seeds: tuple[int, ...]
    diverged_count: int
    diverged_seeds: tuple[int, ...]
    runlogs: list[RunLog]

    def final_return(self) -> float:
        """Mean return over the last 10% of steps; zero if any run diverged.

        The zero-on-divergence convention makes unstable configurations
        compare as failures rather than being silently dropped.
        """
        if self.diverged_count > 0:
            return 0.0
        tail = self.mean[-N_BINS // 10:]
        tail = tail[np.isfinite(tail)]
        return float(tail.mean()) if tail.size else 0.0


def _run_one_seed(cfg: ExperimentConfig, seed: int) -> RunLog:
    env = make_env(cfg.env_id, **cfg.env_params)
    agent = build_agent(cfg.agent_kind, cfg.agent, env.spec, seed)
    return run_stream(agent, env, cfg.total_steps, seed, audit=cfg.audit)


def bin_returns(log: RunLog, total_steps: int) -> np.ndarray:
    """Mean raw return per 1%-of-total-steps bin, forward-filled over gaps."""
    curve = np.full(N_BINS, np.nan)
    sums = np.zeros(N_BINS)
    counts = np.zeros(N_BINS, dtype=int)
    for ep in log.episodes:
        b = min(N_BINS - 1, (ep.end_step - 1) * N_BINS // total_steps)
        sums[b] += ep.raw_return
        counts[b] += 1
    have = counts > 0
    curve[have] = sums[have] / counts[have]
    last = np.nan
    for i in range(N_BINS):
        if np.isnan(curve[i]):
            curve[i] = last
        else:
            last = curve[i]
    return curve


def aggregate(cfg: ExperimentConfig, logs: list[RunLog]) -> AggregateResult:
    bin_steps = np.array([(b + 1) * cfg.total_steps / N_BINS for b in range(N_BINS)])
    per_seed = np.full((len(logs), N_BINS), np.nan)
    diverged_seeds = []
    for i, (seed, log) in enumerate(zip(cfg.seeds, logs)):
        if log.diverged:
            diverged_seeds.append(seed)
            continue
        per_seed[i] = bin_returns(log, cfg.total_steps)
    healthy = per_seed[[not log.diverged for log in logs]]
    if healthy.size:
        n_valid = np.sum(np.isfinite(healthy), axis=0)
        denom = np.maximum(n_valid, 1)
        mean = np.where(n_valid > 0, np.nansum(healthy, axis=0) / denom, np.nan)
        sq_dev = np.nansum((healthy - mean) ** 2, axis=0)
        std = np.sqrt(sq_dev / np.maximum(n_valid - 1, 1))
        ci_half = np.where(n_valid >= 2, CI_Z_90 * std / np.sqrt(denom), 0.0)
        ci_half = np.where(n_valid == 0, np.nan, ci_half)
    else:
        mean = np.full(N_BINS, np.nan)
        ci_half = np.full(N_BINS, np.nan)
    return AggregateResult(
        bin_steps=bin_steps,
        per_seed=per_seed,
        mean=mean,
        ci_half=ci_half,
        seeds=tuple(cfg.seeds),
        diverged_count=len(diverged_seeds),
        diverged_seeds=tuple(diverged_seeds),
        runlogs=logs,
    )


def write_runlog_csv(log: RunLog, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["episode_index", "steps", "raw_return", "mean_delta",
                         "clip_fraction"])
        for ep in log.episodes:
            writer.writerow([ep.episode_index, ep.steps, f"{ep.raw_return:.12g}",
                             f"{ep.mean_delta:.12g}", f"{ep.clip_fraction:.12g}"])


def write_audit_csv(log: RunLog, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        writer.writerow(["step", "delta", "z_l1", "M", "alpha_eff", "xi"])
        for row in log.audit:
            writer.writerow([row[0]] + [f"{float(v):.12g}" if v is not None else ""
                                        for v in row[1:]])


def write_aggregate_csv(result: AggregateResult, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        header = ["bin", "step", "mean_return", "ci_lo", "ci_hi", "n_seeds"]
        header += [f"seed_{s}" for s in result.seeds]
        writer.writerow(header)
        writer.writerow(["#diverged", result.diverged_count,
                         " ".join(str(s) for s in result.diverged_seeds), "", "", ""]
                        + [""] * len(result.seeds))
        for b in range(N_BINS):
            m = result.mean[b]
            h = result.ci_half[b]
            row = [b, f"{result.bin_steps[b]:.12g}", f"{m:.12g}",
                   f"{m - h:.12g}", f"{m + h:.12g}",
                   int(np.sum(np.isfinite(result.per_seed[:, b])))]
            row += [f"{v:.12g}" for v in result.per_seed[:, b]]
            writer.writerow(row)


def read_aggregate_csv(path) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """Parse (steps, mean, lo, hi) back out of an aggregate CSV.

    Malformed content raises with the 1-based line number of the bad row.
    """
    steps, mean, lo, hi = [], [], [], []
    with open(path, newline="", encoding="utf-8") as f:
        reader = csv.reader(f)
        for lineno, row in enumerate(reader, start=1):
            if lineno == 1:
                if len(row) < 6 or row[0] != "bin":
                    raise ValueError(f"{path}: malformed header at line {lineno}")
                continue
            if row and row[0].startswith("#"):
                continue
            try:
                steps.append(float(row[1]))
                mean.append(float(row[2]))
                lo.append(float(row[3]))
                hi.append(float(row[4]))
            except (ValueError, IndexError):
                raise ValueError(f"{path}: malformed row at line {lineno}") from None
    if not steps:
        raise ValueError(f"{path}: no data rows")
    return (np.asarray(steps), np.asarray(mean), np.asarray(lo), np.asarray(hi))


def run_experiment(cfg: ExperimentConfig, workers: int = 1,
                   seed_agent_overrides: dict[int, AgentConfig] | None = None
                   ) -> AggregateResult:
    """Execute every seed, write per-run and aggregate CSVs, return the aggregate.

    `seed_agent_overrides` substitutes the agent config for specific seeds
    (fault-injection support for the divergence-accounting tests).
    """
    cfg.validate()
    overrides = seed_agent_overrides or {}
    jobs = [replace(cfg, agent=overrides.get(seed, cfg.agent)) for seed in cfg.seeds]
    if workers > 1 and len(cfg.seeds) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            logs = list(pool.map(_run_one_seed, jobs, cfg.seeds))
    else:
        logs = [_run_one_seed(job, seed) for job, seed in zip(jobs, cfg.seeds)]
    result = aggregate(cfg, logs)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        for seed, log in zip(cfg.seeds, logs):
            write_runlog_csv(log, out / f"runlog_seed{seed}.csv")
            if cfg.audit:
                write_audit_csv(log, out / f"audit_seed{seed}.csv")
        write_aggregate_csv(result, out / "aggregate.csv")
    return result


def plot(curves_csv, out_svg):
    """Render an aggregate CSV as an SVG line chart with its confidence band."""
    steps, mean, lo, hi = read_aggregate_csv(curves_csv)
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    ok = np.isfinite(mean)
    ax.plot(steps[ok], mean[ok], color="tab:blue", label="mean return")
    band_ok = ok & np.isfinite(lo) & np.isfinite(hi)
    ax.fill_between(steps[band_ok], lo[band_ok], hi[band_ok],
                    color="tab:blue", alpha=0.25, linewidth=0, label="90% CI")
    ax.set_xlabel("environment steps")
    ax.set_ylabel("average return")
    ax.legend(loc="best")
    fig.tight_layout()
    fig.savefig(out_svg, format="svg")
    plt.close(fig)
    return out_svg


ABLATION_VARIANTS = ("obgd_to_adaptive_moments", "no_layernorm", "dense_init",
                     "no_data_scaling")


def ablation_config(cfg: ExperimentConfig, component: str,
                    baseline_alpha: float = 1e-5) -> ExperimentConfig:
    """One-off config with a single component removed or substituted."""
    a = cfg.agent
    if component == "base":
        agent = a
    elif component == "obgd_to_adaptive_moments":
        agent = replace(a, optimizer="adaptive_moments", alpha=baseline_alpha)
    elif component == "no_layernorm":
        agent = replace(a, use_layernorm=False)
    elif component == "dense_init":
        agent = replace(a, use_sparse_init=False)
    elif component == "no_data_scaling":
        agent = replace(a, normalize_obs=False, scale_reward=False)
    else:
        raise ValueError(f"unknown ablation component {component!r}")
    out = str(Path(cfg.out_dir) / component) if cfg.out_dir else None
    return replace(cfg, agent=agent, out_dir=out)


def ablate(cfg: ExperimentConfig, components: tuple[str, ...] = ABLATION_VARIANTS,
           workers: int = 1, baseline_alpha: float = 1e-5) -> dict[str, AggregateResult]:
    """Run the base config plus each one-component-removed variant."""
    results: dict[str, AggregateResult] = {}
    for name in ("base",) + tuple(components):
        results[name] = run_experiment(ablation_config(cfg, name, baseline_alpha),
                                       workers=workers)
    if cfg.out_dir:
        out = Path(cfg.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        with open(out / "ablation_summary.csv", "w", newline="", encoding="utf-8") as f:
            writer = csv.writer(f)
            writer.writerow(["variant", "final_return", "diverged_count"])
            for name, res in results.items():
                writer.writerow([name, f"{res.final_return():.12g}", res.diverged_count])
    return results


@dataclass
class GVFResult:
    predictions: np.ndarray    # scale-restored value predictions per stream state
    true_returns: np.ndarray   # backward-accumulated discounted cumulant sums
    mse_first: float           # over the first 5% of the stream
    mse_last: float            # over the last 5%, truncation shadow excluded
    diverged: bool


def oracle_shadow_length(gamma: float, tol: float = 1e-3) -> int:
    """Rows at the series end where the truncated return is biased.

    Within log(tol)/log(gamma) rows of the boundary the backward-accumulated
    return has lost more than `tol` of its mass versus the full-horizon
    return, so a bootstrapping predictor cannot (and should not) match it
    there.  Comparison windows skip this region.
    """
    if gamma <= 0.0:
        return 0
    return int(np.ceil(np.log(tol) / np.log(gamma)))


def run_gvf(env, cfg: AgentConfig, seed: int) -> GVFResult:
    """Stream TD over a time-series environment, recording rescaled predictions.

    The prediction at each state is made before that step's update and is
    multiplied back by the reward scaler's current denominator so it lives in
    cumulant units.  The environment's gamma defines the prediction horizon,
    so the learner's discount is forced to match it.
    """
    from .agents import StreamTD

    cfg = replace(cfg, gamma=env.gamma)
    agent = StreamTD(cfg, env.spec, seed)
    n_predictions = len(env.cumulants) - 1
    agent.prepare(n_predictions)
    predictions = np.empty(n_predictions)
    obs = env.reset(seed)
    agent.begin_episode(obs)
    diverged = False
    for t in range(n_predictions):
        predictions[t] = float(agent.net.value(agent._s)[0]) * agent.reward_scaler.denominator()
        tr = env.step(None)
        res = agent.transition(tr.observation, tr.reward, tr.terminated, tr.truncated)
        if not (math.isfinite(res.delta) and agent.state_is_finite()):
            diverged = True
            predictions[t + 1:] = np.nan
            break
    g = true_discounted_returns(env.cumulants, env.gamma)
    k = max(1, int(0.05 * n_predictions))
    err = (predictions - g) ** 2
    shadow = min(oracle_shadow_length(env.gamma), max(0, n_predictions - 2 * k))
    last_hi = n_predictions - shadow
    return GVFResult(
        predictions=predictions,
        true_returns=g,
        mse_first=float(np.nanmean(err[:k])),
        mse_last=float(np.nanmean(err[max(0, last_hi - k):last_hi])),
        diverged=diverged,
    )
