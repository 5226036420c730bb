#!/usr/bin/env python3
"""Control experiments: gridworld with stream Q/SARSA or cart-pole with stream AC."""

import argparse

from streamrl import AgentConfig, ExperimentConfig, plot, run_experiment


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--env", default="gridworld",
                    choices=["gridworld", "pole_balance", "point_mass_reacher"])
    ap.add_argument("--algo", default="stream_q",
                    choices=["stream_q", "stream_sarsa", "stream_ac"])
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--out", default=None)
    args = ap.parse_args()

    out = args.out or f"results/{args.env}_{args.algo}"
    cfg = ExperimentConfig(env_id=args.env, agent_kind=args.algo,
                           agent=AgentConfig(), total_steps=args.steps,
                           seeds=tuple(range(args.seeds)), out_dir=out)
    result = run_experiment(cfg, workers=args.workers)
    print(f"final return {result.final_return():.4g}, "
          f"{result.diverged_count} diverged seed(s)")
    plot(f"{out}/aggregate.csv", f"{out}/curve.svg")
    print(f"artifacts in {out}/")


if __name__ == "__main__":
    main()
