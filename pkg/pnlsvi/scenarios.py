# scenarios.py
"""Named MDP instances used by the experiments, the verify suite and the tests."""
from __future__ import annotations

from typing import Callable, Dict

import numpy as np
import pandas as pd

from .errors import ConfigError
from .mdp import EpisodicMdp, optimal_values


def two_state_instance() -> EpisodicMdp:
    """H=2, two states, two actions, a unique optimal policy."""
    rewards = np.array(
        [
            [[0.2, 0.8], [0.9, 0.1]],
            [[0.1, 0.6], [0.7, 0.3]],
        ]
    )
    stage_p = np.array(
        [
            [[0.7, 0.3], [0.4, 0.6]],
            [[0.5, 0.5], [0.2, 0.8]],
        ]
    )
    return EpisodicMdp(rewards, np.stack([stage_p, stage_p]), np.array([0.5, 0.5]), name="two_state")


def random_mdp(num_states: int, num_actions: int, horizon: int, seed: int, floor: float = 0.1, name: str = "random") -> EpisodicMdp:
    """Uniform rewards; every transition entry at least ``floor`` (capped so rows stay valid)."""
    rng = np.random.default_rng(seed)
    floor = min(floor, 0.5 / num_states)
    rewards = rng.uniform(0.0, 1.0, size=(horizon, num_states, num_actions))
    spread = rng.dirichlet(np.ones(num_states), size=(horizon, num_states, num_actions))
    transitions = floor + (1.0 - floor * num_states) * spread
    transitions /= transitions.sum(axis=-1, keepdims=True)
    initial = np.full(num_states, 1.0 / num_states)
    return EpisodicMdp(rewards, transitions, initial, name=name)


def default_scenario(seed: int = 0) -> EpisodicMdp:
    """3 states, 2 actions, H=3, transition entries in [0.1, 0.9]."""
    return random_mdp(3, 2, 3, seed, floor=0.1, name="default")


def deterministic_chain(num_states: int = 3, num_actions: int = 2, horizon: int = 3) -> EpisodicMdp:
    """Action a moves s to (s + a) mod S; reward is 1 for action 0 in the last state."""
    transitions = np.zeros((horizon, num_states, num_actions, num_states))
    rewards = np.zeros((horizon, num_states, num_actions))
    for s in range(num_states):
        for a in range(num_actions):
            transitions[:, s, a, (s + a) % num_states] = 1.0
        rewards[:, s, :] = 0.25 * s / max(num_states - 1, 1)
    rewards[:, num_states - 1, 0] = 1.0
    initial = np.zeros(num_states)
    initial[0] = 1.0
    return EpisodicMdp(rewards, transitions, initial, name="chain")


def lottery_instance(horizon: int = 4) -> EpisodicMdp:
    """A risky action splits the start state into an absorbing reward-1 state and an absorbing reward-0 state.

    From the start state at stage 1, Var_1 V*_2 = ((H - 1) / 2)^2 for the risky action.
    The safe action pays 0.5 and stays put.
    """
    transitions = np.zeros((horizon, 3, 2, 3))
    transitions[:, 0, 0] = [0.0, 0.5, 0.5]
    transitions[:, 0, 1, 0] = 1.0
    transitions[:, 1, :, 1] = 1.0
    transitions[:, 2, :, 2] = 1.0
    rewards = np.zeros((horizon, 3, 2))
    rewards[:, 0, 1] = 0.5
    rewards[:, 1, :] = 1.0
    return EpisodicMdp(rewards, transitions, np.array([0.8, 0.1, 0.1]), name="lottery")


SCENARIOS: Dict[str, Callable[[int], EpisodicMdp]] = {
    "default": default_scenario,
    "two_state": lambda seed=0: two_state_instance(),
    "chain": lambda seed=0: deterministic_chain(),
    "lottery": lambda seed=0: lottery_instance(),
}


def build_scenario(name: str, seed: int = 0) -> EpisodicMdp:
    try:
        factory = SCENARIOS[name]
    except KeyError:
        raise ConfigError(f"unknown scenario {name!r}; expected one of {sorted(SCENARIOS)}") from None
    return factory(seed)


def show_mdp(mdp: EpisodicMdp) -> str:
    """Human-readable per-stage tables with the optimal values and policy."""
    opt = optimal_values(mdp)
    lines = [
        f"scenario: {mdp.name}  S={mdp.num_states} A={mdp.num_actions} H={mdp.horizon}",
        f"initial distribution: {np.round(mdp.initial_distribution, 4).tolist()}",
    ]
    for h in range(1, mdp.horizon + 1):
        rows = []
        for s in range(mdp.num_states):
            for a in range(mdp.num_actions):
                row = {"state": s, "action": a, "reward": mdp.rewards[h - 1, s, a], "Q*": opt.q[h - 1, s, a]}
                row.update({f"P(s'={t})": mdp.transitions[h - 1, s, a, t] for t in range(mdp.num_states)})
                rows.append(row)
        frame = pd.DataFrame(rows).set_index(["state", "action"])
        lines.append(f"\nstage {h}  (pi* = {opt.policy.actions()[h - 1].tolist()}, V* = {np.round(opt.v[h - 1], 4).tolist()})")
        lines.append(frame.round(4).to_string())
    return "\n".join(lines)
