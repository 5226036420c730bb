#!/usr/bin/env python3
"""Random-walk prediction with stream TD: learned values against DP truth.

Runs a handful of seeds, prints the final per-state value estimates next to
the dynamic-programming solution, and drops learning-curve artifacts in
results/prediction/.
"""

import argparse

import numpy as np

from streamrl import AgentConfig, ExperimentConfig, plot, run_experiment
from streamrl.agents import build_agent, run_stream
from streamrl.envs import RandomWalk, random_walk_true_values


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--episodes", type=int, default=5000)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--out", default="results/prediction")
    args = ap.parse_args()

    cfg = AgentConfig()
    truth = random_walk_true_values(5, gamma=cfg.gamma)
    states = np.eye(5)

    all_preds = []
    for seed in range(args.seeds):
        env = RandomWalk(5)
        agent = build_agent("stream_td", cfg, env.spec, seed=seed)
        run_stream(agent, env, 100 * args.episodes, seed=seed,
                   stop_fn=lambda lg: len(lg.episodes) >= args.episodes)
        preds = np.array([agent.predict_value(s) for s in states])
        all_preds.append(preds)
        rms = np.sqrt(((preds - truth) ** 2).mean())
        print(f"seed {seed}: RMS vs DP = {rms:.4f}")

    mean_preds = np.mean(all_preds, axis=0)
    print(f"\ntruth          : {np.round(truth, 4)}")
    print(f"mean prediction: {np.round(mean_preds, 4)}")
    print(f"ensemble RMS   : {np.sqrt(((mean_preds - truth) ** 2).mean()):.4f}")

    exp = ExperimentConfig(env_id="random_walk", agent_kind="stream_td",
                           agent=cfg, total_steps=20_000,
                           seeds=tuple(range(args.seeds)), out_dir=args.out)
    run_experiment(exp, workers=2)
    plot(f"{args.out}/aggregate.csv", f"{args.out}/curve.svg")
    print(f"curves written to {args.out}/")


if __name__ == "__main__":
    main()
