#!/usr/bin/env python3
"""Component ablation on gridworld stream Q: remove one piece at a time."""

import argparse

from streamrl import AgentConfig, ExperimentConfig, ablate


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--steps", type=int, default=20_000)
    ap.add_argument("--seeds", type=int, default=10)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--out", default="results/ablation")
    args = ap.parse_args()

    cfg = ExperimentConfig(env_id="gridworld", agent_kind="stream_q",
                           agent=AgentConfig(), total_steps=args.steps,
                           seeds=tuple(range(args.seeds)), out_dir=args.out)
    results = ablate(cfg, workers=args.workers)
    print(f"{'variant':30s} {'final_return':>12s} {'diverged':>9s}")
    for name, res in results.items():
        print(f"{name:30s} {res.final_return():12.4g} {res.diverged_count:9d}")


if __name__ == "__main__":
    main()
