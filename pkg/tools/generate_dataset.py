#!/usr/bin/env python3
"""Generate an offline dataset (flat CSV) by rolling out a behavior policy on a scenario MDP.

Usage (example):
  python tools/generate_dataset.py --scenario default --episodes 2000 --seed 0 --out data/default.csv
"""
import argparse
import sys
from pathlib import Path

sys.path.insert(0, str(Path(__file__).resolve().parents[1]))

from pnlsvi.data import epsilon_greedy_behavior, rollout_dataset, uniform_behavior, write_dataset_csv  # noqa: E402
from pnlsvi.mdp import optimal_values  # noqa: E402
from pnlsvi.scenarios import SCENARIOS, build_scenario  # noqa: E402


def make_dataset(scenario: str, episodes: int, seed: int, behavior: str = "epsilon-greedy", epsilon: float = 0.3, mdp_seed: int = 0):
    mdp = build_scenario(scenario, mdp_seed)
    if behavior == "uniform":
        mu = uniform_behavior(mdp)
    else:
        mu = epsilon_greedy_behavior(optimal_values(mdp).policy, epsilon)
    return rollout_dataset(mdp, mu, episodes, seed, behavior=behavior)


def main():
    parser = argparse.ArgumentParser(description="Generate an offline RL dataset CSV")
    parser.add_argument("--scenario", choices=sorted(SCENARIOS), default="default")
    parser.add_argument("--mdp-seed", type=int, default=0)
    parser.add_argument("--episodes", type=int, default=1000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--behavior", choices=["uniform", "epsilon-greedy"], default="epsilon-greedy")
    parser.add_argument("--epsilon", type=float, default=0.3, help="Uniform-mixing weight of the epsilon-greedy behavior")
    parser.add_argument("--out", default="data/dataset.csv")
    args = parser.parse_args()

    data = make_dataset(args.scenario, args.episodes, args.seed, args.behavior, args.epsilon, args.mdp_seed)
    path = write_dataset_csv(data, args.out)
    print(f"Wrote {data.num_episodes} episodes (H={data.horizon}) to {path}")


if __name__ == "__main__":
    main()
