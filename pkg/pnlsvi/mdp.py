# mdp.py
"""Exact tabular episodic-MDP engine.

Stages are 1-based in every public signature (``h`` in ``1..H``); the backing
arrays are 0-based, so row ``h - 1`` of a per-stage table holds stage ``h``.
Value tables carry one extra row for stage ``H + 1``, which is always zero.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Tuple, Union

import numpy as np

from .errors import InvalidMdpError, InvalidPolicyError

PROB_TOL = 1e-12
OCCUPANCY_TOL = 1e-9


def _frozen(array, dtype=float) -> np.ndarray:
    out = np.array(array, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class EpisodicMdp:
    """Finite-horizon MDP with deterministic rewards.

    rewards: (H, S, A) in [0, 1]
    transitions: (H, S, A, S), rows sum to one
    initial_distribution: (S,)
    """

    rewards: np.ndarray
    transitions: np.ndarray
    initial_distribution: np.ndarray
    name: str = "mdp"

    def __post_init__(self):
        rewards = _frozen(self.rewards)
        transitions = _frozen(self.transitions)
        init = _frozen(self.initial_distribution)
        if rewards.ndim != 3:
            raise InvalidMdpError(f"rewards must be (H, S, A), got shape {rewards.shape}")
        horizon, num_states, num_actions = rewards.shape
        if min(horizon, num_states, num_actions) < 1:
            raise InvalidMdpError("horizon, states and actions must all be positive")
        if transitions.shape != (horizon, num_states, num_actions, num_states):
            raise InvalidMdpError(
                f"transitions must be {(horizon, num_states, num_actions, num_states)}, got {transitions.shape}"
            )
        if init.shape != (num_states,):
            raise InvalidMdpError(f"initial_distribution must have {num_states} entries")
        if np.any(rewards < 0.0) or np.any(rewards > 1.0):
            raise InvalidMdpError("rewards must lie in [0, 1]")
        if np.any(transitions < 0.0) or np.any(transitions > 1.0):
            raise InvalidMdpError("transition probabilities must lie in [0, 1]")
        if np.max(np.abs(transitions.sum(axis=-1) - 1.0)) > PROB_TOL:
            raise InvalidMdpError("every transition row must sum to 1")
        if np.any(init < 0.0) or abs(init.sum() - 1.0) > PROB_TOL:
            raise InvalidMdpError("initial_distribution must be a probability vector")
        object.__setattr__(self, "rewards", rewards)
        object.__setattr__(self, "transitions", transitions)
        object.__setattr__(self, "initial_distribution", init)

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_states(self) -> int:
        return self.rewards.shape[1]

    @property
    def num_actions(self) -> int:
        return self.rewards.shape[2]

    def check_stage(self, h: int, allow_terminal: bool = False) -> None:
        upper = self.horizon + 1 if allow_terminal else self.horizon
        if not isinstance(h, (int, np.integer)) or not 1 <= h <= upper:
            raise InvalidMdpError(f"stage {h} outside 1..{upper}")


@dataclass(frozen=True)
class StageValueFunction:
    stage: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))


@dataclass(frozen=True)
class StageActionValueFunction:
    stage: int
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "values", _frozen(self.values))

    def greedy_values(self) -> np.ndarray:
        return self.values.max(axis=1)


@dataclass(frozen=True)
class Policy:
    """probs[h-1, s, a] = pi_h(a | s)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 3:
            raise InvalidPolicyError(f"policy table must be (H, S, A), got {probs.shape}")
        if np.any(probs < 0.0) or np.max(np.abs(probs.sum(axis=-1) - 1.0)) > PROB_TOL:
            raise InvalidPolicyError("every action distribution must sum to 1")
        object.__setattr__(self, "probs", probs)

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "Policy":
        actions = np.asarray(actions, dtype=int)
        if np.any(actions < 0) or np.any(actions >= num_actions):
            raise InvalidPolicyError("action index out of range")
        probs = np.zeros(actions.shape + (num_actions,))
        np.put_along_axis(probs, actions[..., None], 1.0, axis=-1)
        return cls(probs)

    @classmethod
    def uniform(cls, horizon: int, num_states: int, num_actions: int) -> "Policy":
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))

    @classmethod
    def greedy(cls, q_values) -> "Policy":
        """Greedy in q_values (H, S, A); np.argmax breaks ties by lowest index."""
        q_values = np.asarray(q_values, dtype=float)
        return cls.deterministic(np.argmax(q_values, axis=-1), q_values.shape[-1])

    @property
    def horizon(self) -> int:
        return self.probs.shape[0]

    def actions(self) -> np.ndarray:
        """Most likely action per (h, s); exact for deterministic policies."""
        return np.argmax(self.probs, axis=-1)

    def check_compatible(self, mdp: EpisodicMdp) -> None:
        if self.probs.shape != (mdp.horizon, mdp.num_states, mdp.num_actions):
            raise InvalidPolicyError(
                f"policy shape {self.probs.shape} does not match MDP "
                f"{(mdp.horizon, mdp.num_states, mdp.num_actions)}"
            )


@dataclass(frozen=True)
class OccupancyMeasure:
    """probs[h-1, s, a] = d_h(s, a)."""

    probs: np.ndarray

    def __post_init__(self):
        probs = _frozen(self.probs)
        if probs.ndim != 3:
            raise InvalidPolicyError(f"occupancy table must be (H, S, A), got {probs.shape}")
        sums = probs.reshape(probs.shape[0], -1).sum(axis=1)
        if np.max(np.abs(sums - 1.0)) > OCCUPANCY_TOL:
            raise InvalidPolicyError("occupancy must sum to 1 at every stage")
        object.__setattr__(self, "probs", probs)

    def stage(self, h: int) -> np.ndarray:
        return self.probs[h - 1]


@dataclass(frozen=True)
class OptimalSolution:
    q: np.ndarray  # (H, S, A)
    v: np.ndarray  # (H + 1, S)
    policy: Policy

    def q_function(self, h: int) -> StageActionValueFunction:
        return StageActionValueFunction(h, self.q[h - 1])

    def value_function(self, h: int) -> StageValueFunction:
        return StageValueFunction(h, self.v[h - 1])


@dataclass(frozen=True)
class PolicyEvaluation:
    v: np.ndarray  # (H + 1, S)
    q: np.ndarray  # (H, S, A)


ValueLike = Union[StageValueFunction, np.ndarray]


def _next_values(mdp: EpisodicMdp, h: int, V: ValueLike) -> np.ndarray:
    mdp.check_stage(h)
    if isinstance(V, StageValueFunction):
        if V.stage != h + 1:
            raise InvalidMdpError(f"value function is for stage {V.stage}, expected {h + 1}")
        values = V.values
    else:
        values = np.asarray(V, dtype=float)
    if values.shape != (mdp.num_states,):
        raise InvalidMdpError(f"value function must have {mdp.num_states} entries, got {values.shape}")
    return values


def bellman_apply(mdp: EpisodicMdp, h: int, V: ValueLike) -> StageActionValueFunction:
    """[T_h V](s, a) = r_h(s, a) + sum_s' P_h(s'|s, a) V(s')."""
    values = _next_values(mdp, h, V)
    return StageActionValueFunction(h, mdp.rewards[h - 1] + mdp.transitions[h - 1] @ values)


def bellman_second_moment(mdp: EpisodicMdp, h: int, V: ValueLike) -> StageActionValueFunction:
    """[T_{2,h} V](s, a) = sum_s' P_h(s'|s, a) (r_h(s, a) + V(s'))^2."""
    values = _next_values(mdp, h, V)
    returns = mdp.rewards[h - 1][:, :, None] + values[None, None, :]
    return StageActionValueFunction(h, np.einsum("sat,sat->sa", mdp.transitions[h - 1], returns**2))


def conditional_variance(
    mdp: EpisodicMdp, h: int, V: ValueLike, truncated: bool = False
) -> StageActionValueFunction:
    """[Var_h V] = [P_h V^2] - ([P_h V])^2, or max{1, .} when truncated."""
    values = _next_values(mdp, h, V)
    P = mdp.transitions[h - 1]
    mean = P @ values
    var = P @ (values**2) - mean**2
    if var.min() < -PROB_TOL:
        raise RuntimeError(f"negative conditional variance {var.min()} at stage {h}")
    var = np.maximum(var, 0.0)
    if truncated:
        var = np.maximum(var, 1.0)
    return StageActionValueFunction(h, var)


def truncated_variance(mdp: EpisodicMdp, h: int, V: ValueLike) -> StageActionValueFunction:
    return conditional_variance(mdp, h, V, truncated=True)


def optimal_values(mdp: EpisodicMdp) -> OptimalSolution:
    """Backward induction from V*_{H+1} = 0; greedy ties go to the lowest action."""
    H, S, A = mdp.rewards.shape
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    for h in range(H, 0, -1):
        q[h - 1] = bellman_apply(mdp, h, v[h]).values
        v[h - 1] = q[h - 1].max(axis=1)
    return OptimalSolution(q=q, v=v, policy=Policy.greedy(q))


def policy_value(mdp: EpisodicMdp, pi: Policy) -> PolicyEvaluation:
    pi.check_compatible(mdp)
    H, S, A = mdp.rewards.shape
    q = np.zeros((H, S, A))
    v = np.zeros((H + 1, S))
    for h in range(H, 0, -1):
        q[h - 1] = bellman_apply(mdp, h, v[h]).values
        v[h - 1] = (pi.probs[h - 1] * q[h - 1]).sum(axis=1)
    return PolicyEvaluation(v=v, q=q)


def occupancy_measure(mdp: EpisodicMdp, pi: Policy) -> OccupancyMeasure:
    pi.check_compatible(mdp)
    H = mdp.horizon
    d = np.zeros(pi.probs.shape)
    d[0] = mdp.initial_distribution[:, None] * pi.probs[0]
    for h in range(1, H):
        next_states = np.einsum("sa,sat->t", d[h - 1], mdp.transitions[h - 1])
        d[h] = next_states[:, None] * pi.probs[h]
    return OccupancyMeasure(d)


def brute_force_optimal_values(mdp: EpisodicMdp, chunk: int = 65536) -> Tuple[np.ndarray, Policy]:
    """Evaluate every deterministic policy exactly and keep the best.

    Returns the elementwise maximum of V^pi_1 over all A^(S*H) deterministic
    policies and the policy with the largest expected initial value.
    """
    H, S, A = mdp.rewards.shape
    total = A ** (S * H)
    best_v1 = np.full(S, -np.inf)
    best_score, best_actions = -np.inf, None
    digits = A ** np.arange(S * H - 1, -1, -1)
    for start in range(0, total, chunk):
        index = np.arange(start, min(start + chunk, total))
        actions = ((index[:, None] // digits[None, :]) % A).reshape(-1, H, S)
        v = np.zeros((len(index), S))
        for h in range(H, 0, -1):
            q = mdp.rewards[h - 1][None] + np.einsum("sat,pt->psa", mdp.transitions[h - 1], v)
            v = np.take_along_axis(q, actions[:, h - 1, :, None], axis=2)[..., 0]
        best_v1 = np.maximum(best_v1, v.max(axis=0))
        scores = v @ mdp.initial_distribution
        top = int(np.argmax(scores))
        if scores[top] > best_score:
            best_score, best_actions = scores[top], actions[top]
    return best_v1, Policy.deterministic(best_actions, A)


def sample_categorical(rng: np.random.Generator, probs: np.ndarray) -> np.ndarray:
    """One draw per row of ``probs`` using a single uniform per row."""
    u = rng.random(probs.shape[0])
    cdf = np.cumsum(probs, axis=1)
    draws = (cdf <= u[:, None]).sum(axis=1)
    return np.minimum(draws, probs.shape[1] - 1)


def monte_carlo_policy_value(
    mdp: EpisodicMdp, pi: Policy, num_rollouts: int, seed: int
) -> Tuple[float, float]:
    """Sample mean and standard error of the episode return from s_1 ~ init."""
    pi.check_compatible(mdp)
    rng = np.random.default_rng(seed)
    states = sample_categorical(rng, np.broadcast_to(mdp.initial_distribution, (num_rollouts, mdp.num_states)))
    returns = np.zeros(num_rollouts)
    for h in range(mdp.horizon):
        actions = sample_categorical(rng, pi.probs[h][states])
        returns += mdp.rewards[h][states, actions]
        states = sample_categorical(rng, mdp.transitions[h][states, actions])
    return float(returns.mean()), float(returns.std(ddof=1) / np.sqrt(num_rollouts))


def mdp_to_document(mdp: EpisodicMdp) -> Dict:
    return {
        "name": mdp.name,
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "horizon": mdp.horizon,
        "rewards": mdp.rewards.tolist(),
        "transitions": mdp.transitions.tolist(),
        "initial_distribution": mdp.initial_distribution.tolist(),
    }


def mdp_from_document(doc: Dict) -> EpisodicMdp:
    try:
        mdp = EpisodicMdp(
            rewards=doc["rewards"],
            transitions=doc["transitions"],
            initial_distribution=doc["initial_distribution"],
            name=str(doc.get("name", "mdp")),
        )
    except KeyError as exc:
        raise InvalidMdpError(f"MDP document is missing {exc}") from exc
    for key, actual in (("num_states", mdp.num_states), ("num_actions", mdp.num_actions), ("horizon", mdp.horizon)):
        if key in doc and int(doc[key]) != actual:
            raise InvalidMdpError(f"{key}={doc[key]} disagrees with the tables ({actual})")
    return mdp


def all_deterministic_policies(mdp: EpisodicMdp):
    """Iterator over every deterministic policy (tiny instances only)."""
    H, S, A = mdp.rewards.shape
    for flat in itertools.product(range(A), repeat=S * H):
        yield Policy.deterministic(np.reshape(flat, (H, S)), A)
