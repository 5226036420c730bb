"""Command-line entry point: run experiments, plot curves, ablate, predict series.

Configuration can come from a flat `key = value` text file (--config), with
any field overridable by the flag of the same name.  Exit status is nonzero on
validation errors and when every seed of a run diverged.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import fields
from pathlib import Path

import numpy as np

from .agents import AgentConfig
from .envs import TimeSeriesGVF, synthetic_series, write_series_csv
from .harness import ExperimentConfig, ablate, plot, run_experiment, run_gvf

AGENT_FLOAT_FIELDS = ("gamma", "alpha", "kappa", "kappa_pi", "tau", "sparsity",
                      "epsilon_start", "epsilon_end", "epsilon_end_fraction")
AGENT_BOOL_FIELDS = ("use_layernorm", "use_sparse_init", "normalize_obs", "scale_reward")


def parse_config_file(path) -> dict[str, str]:
    """Flat `key = value` lines; '#' starts a comment; blank lines ignored."""
    values: dict[str, str] = {}
    for lineno, raw in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"{path}: line {lineno}: expected key = value")
        key, value = line.split("=", 1)
        values[key.strip()] = value.strip()
    return values


def _add_agent_flags(p: argparse.ArgumentParser):
    p.add_argument("--lambda", dest="lam", type=float, default=None,
                   help="eligibility trace decay")
    for name in AGENT_FLOAT_FIELDS:
        p.add_argument(f"--{name.replace('_', '-')}", dest=name, type=float, default=None)
    p.add_argument("--optimizer", default=None,
                   help="obgd | adaptive_obgd | sgd | adaptive_moments")
    p.add_argument("--hidden", default=None, help="comma-separated layer widths")
    for name in AGENT_BOOL_FIELDS:
        flag = name.replace("use_", "").replace("_", "-")
        p.add_argument(f"--no-{flag}", dest=name, action="store_false", default=None)


def _add_run_flags(p: argparse.ArgumentParser):
    p.add_argument("--config", default=None, help="flat key=value config file")
    p.add_argument("--env", default=None)
    p.add_argument("--algo", default=None,
                   help="stream_td | stream_q | stream_sarsa | stream_ac")
    p.add_argument("--steps", type=int, default=None)
    p.add_argument("--seeds", default=None, help="comma-separated integer seeds")
    p.add_argument("--audit", action="store_true", default=None,
                   help="measure the true effective step size each update (extra forward passes)")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1,
                   help="seed-parallel worker processes")
    p.add_argument("--env-param", action="append", default=[],
                   metavar="KEY=VALUE", help="environment constructor parameter")
    _add_agent_flags(p)


def _build_agent_config(file_cfg: dict[str, str], args) -> AgentConfig:
    cfg = AgentConfig()
    valid = {f.name for f in fields(AgentConfig)}
    for key, raw in file_cfg.items():
        if key not in valid:
            continue
        if key in AGENT_BOOL_FIELDS:
            setattr(cfg, key, raw.lower() in ("1", "true", "yes", "on"))
        elif key == "optimizer":
            cfg.optimizer = raw
        elif key == "hidden":
            cfg.hidden = tuple(int(x) for x in raw.split(",") if x.strip())
        elif key == "lam":
            cfg.lam = float(raw)
        else:
            setattr(cfg, key, float(raw))
    for name in ("lam",) + AGENT_FLOAT_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    if getattr(args, "optimizer", None):
        cfg.optimizer = args.optimizer
    if getattr(args, "hidden", None):
        cfg.hidden = tuple(int(x) for x in args.hidden.split(",") if x.strip())
    for name in AGENT_BOOL_FIELDS:
        v = getattr(args, name, None)
        if v is not None:
            setattr(cfg, name, v)
    return cfg


def _parse_env_params(pairs: list[str], file_cfg: dict[str, str]) -> dict:
    params = {}
    for key, raw in file_cfg.items():
        if key.startswith("env_param."):
            params[key.split(".", 1)[1]] = raw
    for pair in pairs:
        if "=" not in pair:
            raise ValueError(f"--env-param expects KEY=VALUE, got {pair!r}")
        key, value = pair.split("=", 1)
        params[key.strip()] = value.strip()
    return params


def _build_experiment(args) -> tuple[ExperimentConfig, int]:
    file_cfg = parse_config_file(args.config) if args.config else {}

    def pick(flag_value, key, default=None):
        if flag_value is not None:
            return flag_value
        return file_cfg.get(key, default)

    env_id = pick(args.env, "env")
    algo = pick(args.algo, "algo")
    if not env_id or not algo:
        raise ValueError("--env and --algo are required (flag or config file)")
    steps = int(pick(args.steps, "steps", 10000))
    seeds_raw = pick(args.seeds, "seeds", "0")
    seeds = tuple(int(s) for s in str(seeds_raw).split(",") if s.strip())
    audit = pick(args.audit, "audit", False)
    if isinstance(audit, str):
        audit = audit.lower() in ("1", "true", "yes", "on")
    out = pick(args.out, "out")
    cfg = ExperimentConfig(
        env_id=env_id,
        agent_kind=algo,
        agent=_build_agent_config(file_cfg, args),
        env_params=_parse_env_params(args.env_param, file_cfg),
        total_steps=steps,
        seeds=seeds,
        out_dir=out,
        audit=audit,
    )
    return cfg, args.workers


def cmd_run(args) -> int:
    cfg, workers = _build_experiment(args)
    result = run_experiment(cfg, workers=workers)
    healthy = len(cfg.seeds) - result.diverged_count
    print(f"ran {len(cfg.seeds)} seed(s): {healthy} healthy, "
          f"{result.diverged_count} diverged; final return {result.final_return():.4g}")
    if result.diverged_count == len(cfg.seeds):
        print("error: every seed diverged", file=sys.stderr)
        return 2
    return 0


def cmd_plot(args) -> int:
    plot(args.curves, args.out)
    print(f"wrote {args.out}")
    return 0


def cmd_ablate(args) -> int:
    cfg, workers = _build_experiment(args)
    results = ablate(cfg, workers=workers)
    for name, res in results.items():
        print(f"{name:28s} final_return={res.final_return():.4g} "
              f"diverged={res.diverged_count}")
    return 0


def cmd_gvf(args) -> int:
    if args.csv:
        env = TimeSeriesGVF.from_csv(args.csv, args.cumulant_col,
                                     beta=args.beta, gamma=args.gamma)
    else:
        features, cumulants = synthetic_series(seed=0)
        env = TimeSeriesGVF(features, cumulants, beta=args.beta, gamma=args.gamma)
    cfg = AgentConfig()
    if args.lam is not None:
        cfg.lam = args.lam
    if args.alpha is not None:
        cfg.alpha = args.alpha
    cfg.gamma = args.gamma
    seeds = tuple(int(s) for s in args.seeds.split(",") if s.strip())
    ratios = []
    for seed in seeds:
        res = run_gvf(env, cfg, seed)
        env.reset()
        ratio = res.mse_first / res.mse_last if res.mse_last > 0 else float("inf")
        ratios.append(ratio)
        print(f"seed {seed}: mse_first={res.mse_first:.5g} mse_last={res.mse_last:.5g} "
              f"improvement={ratio:.1f}x diverged={res.diverged}")
        if args.out:
            out = Path(args.out)
            out.mkdir(parents=True, exist_ok=True)
            np.savetxt(out / f"gvf_seed{seed}.csv",
                       np.column_stack([res.predictions, res.true_returns]),
                       delimiter=",", header="prediction,true_return", comments="")
    print(f"median improvement {np.median(ratios):.1f}x over {len(seeds)} seed(s)")
    return 0


def cmd_make_series(args) -> int:
    features, cumulants = synthetic_series(n_rows=args.rows, seed=args.seed)
    write_series_csv(args.out, features, cumulants)
    print(f"wrote {args.rows} rows to {args.out}")
    return 0


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(prog="streamrl",
                                     description="Streaming RL experiment harness")
    sub = parser.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run one experiment across seeds")
    _add_run_flags(p_run)
    p_run.set_defaults(func=cmd_run)

    p_plot = sub.add_parser("plot", help="render an aggregate CSV to SVG")
    p_plot.add_argument("--curves", required=True)
    p_plot.add_argument("--out", required=True)
    p_plot.set_defaults(func=cmd_plot)

    p_ab = sub.add_parser("ablate", help="run base config plus component removals")
    _add_run_flags(p_ab)
    p_ab.set_defaults(func=cmd_ablate)

    p_gvf = sub.add_parser("gvf", help="time-series prediction with stream TD")
    p_gvf.add_argument("--csv", default=None, help="series CSV (default: synthetic)")
    p_gvf.add_argument("--cumulant-col", default="target")
    p_gvf.add_argument("--beta", type=float, default=0.999, help="memory trace decay")
    p_gvf.add_argument("--gamma", type=float, default=0.99)
    p_gvf.add_argument("--lambda", dest="lam", type=float, default=0.8)
    p_gvf.add_argument("--alpha", type=float, default=1.0)
    p_gvf.add_argument("--seeds", default="0")
    p_gvf.add_argument("--out", default=None)
    p_gvf.set_defaults(func=cmd_gvf)

    p_mk = sub.add_parser("make-series", help="write the synthetic series CSV")
    p_mk.add_argument("--out", required=True)
    p_mk.add_argument("--rows", type=int, default=70080)
    p_mk.add_argument("--seed", type=int, default=0)
    p_mk.set_defaults(func=cmd_make_series)

    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
