# data.py
"""Offline datasets: behavior-policy rollouts, the two-half split, CSV export
and the per-cell sufficient statistics every regression consumes."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Iterator, List, Optional

import numpy as np
import pandas as pd

from .errors import DatasetError
from .mdp import EpisodicMdp, OccupancyMeasure, Policy, sample_categorical

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["episode", "stage", "state", "action", "reward", "next_state"]


@dataclass(frozen=True)
class TransitionRecord:
    episode: int
    stage: int
    state: int
    action: int
    reward: float
    next_state: int


@dataclass(frozen=True)
class OfflineDataset:
    """Episode-major arrays of shape (num_episodes, H)."""

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    num_states: int
    num_actions: int
    seed: Optional[int] = None
    behavior: str = "custom"

    def __post_init__(self):
        arrays = {}
        for name, dtype in (("states", np.int64), ("actions", np.int64), ("rewards", float), ("next_states", np.int64)):
            value = np.array(getattr(self, name), dtype=dtype, copy=True)
            if value.ndim != 2:
                raise DatasetError(f"{name} must be (episodes, H), got shape {value.shape}")
            value.setflags(write=False)
            arrays[name] = value
        shape = arrays["states"].shape
        if any(a.shape != shape for a in arrays.values()):
            raise DatasetError("states, actions, rewards and next_states must share one shape")
        if shape[0] and (
            arrays["states"].min() < 0
            or arrays["states"].max() >= self.num_states
            or arrays["next_states"].min() < 0
            or arrays["next_states"].max() >= self.num_states
            or arrays["actions"].min() < 0
            or arrays["actions"].max() >= self.num_actions
        ):
            raise DatasetError("state or action index out of range")
        if shape[1] > 1 and not np.array_equal(arrays["next_states"][:, :-1], arrays["states"][:, 1:]):
            raise DatasetError("next_state at stage h must equal state at stage h+1")
        for name, value in arrays.items():
            object.__setattr__(self, name, value)

    @property
    def num_episodes(self) -> int:
        return self.states.shape[0]

    @property
    def horizon(self) -> int:
        return self.states.shape[1]

    def episode(self, k: int) -> List[TransitionRecord]:
        """Records of episode k (1-based)."""
        i = k - 1
        return [
            TransitionRecord(
                k, h + 1, int(self.states[i, h]), int(self.actions[i, h]), float(self.rewards[i, h]), int(self.next_states[i, h])
            )
            for h in range(self.horizon)
        ]

    def records(self) -> Iterator[TransitionRecord]:
        for k in range(1, self.num_episodes + 1):
            yield from self.episode(k)

    def subset(self, episodes: slice) -> "OfflineDataset":
        return OfflineDataset(
            self.states[episodes],
            self.actions[episodes],
            self.rewards[episodes],
            self.next_states[episodes],
            self.num_states,
            self.num_actions,
            self.seed,
            self.behavior,
        )

    def stage_cells(self, h: int) -> np.ndarray:
        """Flat cell index s*A + a of every sample at stage h."""
        return self.states[:, h - 1] * self.num_actions + self.actions[:, h - 1]


@dataclass(frozen=True)
class SplitDataset:
    first_half: OfflineDataset  # D, planning
    second_half: OfflineDataset  # D-bar, variance estimation

    @property
    def num_episodes(self) -> int:
        return self.first_half.num_episodes

    def swapped(self) -> "SplitDataset":
        return SplitDataset(self.second_half, self.first_half)


@dataclass(frozen=True)
class StageStatistics:
    """Per-cell sufficient statistics of one stage slice.

    weights[s, a] = sum 1/sigma^2, sums[s, a] = sum y/sigma^2,
    squares[s, a] = sum y^2/sigma^2, counts[s, a] = raw sample count.
    """

    weights: np.ndarray
    sums: np.ndarray
    squares: np.ndarray
    counts: np.ndarray

    @classmethod
    def empty(cls, num_states: int, num_actions: int) -> "StageStatistics":
        zeros = np.zeros((num_states, num_actions))
        return cls(zeros, zeros, zeros, zeros)

    @property
    def shape(self):
        return self.weights.shape

    def objective(self, values: np.ndarray) -> float:
        """sum_k (f(z_k) - y_k)^2 / sigma_k^2 for a table f."""
        return float(np.sum(self.weights * values**2 - 2.0 * self.sums * values + self.squares))


def cell_statistics(
    cells: np.ndarray, target: np.ndarray, inv_var: np.ndarray, num_states: int, num_actions: int
) -> StageStatistics:
    """Per-cell sums of flat cell indices s * A + a, targets and 1/sigma^2 weights."""
    size = num_states * num_actions
    shape = (num_states, num_actions)
    return StageStatistics(
        weights=np.bincount(cells, weights=inv_var, minlength=size).reshape(shape),
        sums=np.bincount(cells, weights=inv_var * target, minlength=size).reshape(shape),
        squares=np.bincount(cells, weights=inv_var * target**2, minlength=size).reshape(shape),
        counts=np.bincount(cells, minlength=size).astype(float).reshape(shape),
    )


def stage_statistics(
    data: OfflineDataset, h: int, target: np.ndarray, sigma: Optional[np.ndarray] = None
) -> StageStatistics:
    """Reduce the stage-h samples with per-sample targets to per-cell sums."""
    if not 1 <= h <= data.horizon:
        raise DatasetError(f"stage {h} outside 1..{data.horizon}")
    target = np.asarray(target, dtype=float)
    if target.shape != (data.num_episodes,):
        raise DatasetError(f"target must have one entry per episode, got {target.shape}")
    cells = data.stage_cells(h)
    if sigma is None:
        inv_var = np.ones(data.num_episodes)
    else:
        inv_var = 1.0 / np.asarray(sigma, dtype=float).reshape(-1)[cells] ** 2
    return cell_statistics(cells, target, inv_var, data.num_states, data.num_actions)


def rollout_dataset(
    mdp: EpisodicMdp, mu: Policy, num_episodes: int, seed: int, behavior: str = "custom"
) -> OfflineDataset:
    """Sample episodes under mu.

    Stream order of the single generator: all initial states, then for each
    stage the actions of every episode followed by their transitions.
    """
    if num_episodes < 0:
        raise DatasetError("num_episodes must be non-negative")
    mu.check_compatible(mdp)
    H = mdp.horizon
    rng = np.random.default_rng(seed)
    states = np.zeros((num_episodes, H), dtype=np.int64)
    actions = np.zeros((num_episodes, H), dtype=np.int64)
    next_states = np.zeros((num_episodes, H), dtype=np.int64)
    current = sample_categorical(rng, np.broadcast_to(mdp.initial_distribution, (num_episodes, mdp.num_states)))
    for h in range(H):
        states[:, h] = current
        actions[:, h] = sample_categorical(rng, mu.probs[h][current])
        current = sample_categorical(rng, mdp.transitions[h][current, actions[:, h]])
        next_states[:, h] = current
    rewards = mdp.rewards[np.arange(H)[None, :], states, actions]
    logger.debug("rolled out %d episodes (seed=%s, behavior=%s)", num_episodes, seed, behavior)
    return OfflineDataset(states, actions, rewards, next_states, mdp.num_states, mdp.num_actions, seed, behavior)


def split_dataset(data: OfflineDataset) -> SplitDataset:
    if data.num_episodes % 2:
        raise DatasetError(f"cannot split an odd number of episodes ({data.num_episodes})")
    K = data.num_episodes // 2
    return SplitDataset(first_half=data.subset(slice(0, K)), second_half=data.subset(slice(K, 2 * K)))


def uniform_behavior(mdp: EpisodicMdp) -> Policy:
    return Policy.uniform(mdp.horizon, mdp.num_states, mdp.num_actions)


def epsilon_greedy_behavior(target: Policy, epsilon: float) -> Policy:
    """(1 - epsilon) * target + epsilon * uniform."""
    if not 0.0 <= epsilon <= 1.0:
        raise DatasetError(f"behavior epsilon must lie in [0, 1], got {epsilon}")
    num_actions = target.probs.shape[-1]
    return Policy((1.0 - epsilon) * target.probs + epsilon / num_actions)


def empirical_occupancy(data: OfflineDataset) -> OccupancyMeasure:
    if data.num_episodes == 0:
        raise DatasetError("empirical occupancy of an empty dataset is undefined")
    size = data.num_states * data.num_actions
    tables = [
        np.bincount(data.stage_cells(h), minlength=size).reshape(data.num_states, data.num_actions) / data.num_episodes
        for h in range(1, data.horizon + 1)
    ]
    return OccupancyMeasure(np.stack(tables))


def dataset_to_frame(data: OfflineDataset) -> pd.DataFrame:
    n, H = data.states.shape
    return pd.DataFrame(
        {
            "episode": np.repeat(np.arange(1, n + 1), H),
            "stage": np.tile(np.arange(1, H + 1), n),
            "state": data.states.reshape(-1),
            "action": data.actions.reshape(-1),
            "reward": data.rewards.reshape(-1),
            "next_state": data.next_states.reshape(-1),
        },
        columns=CSV_COLUMNS,
    )


def write_dataset_csv(data: OfflineDataset, path) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    dataset_to_frame(data).to_csv(path, index=False, float_format="%.17g")
    return path


def read_dataset_csv(path, num_states: Optional[int] = None, num_actions: Optional[int] = None) -> OfflineDataset:
    frame = pd.read_csv(path)
    missing = [c for c in CSV_COLUMNS if c not in frame.columns]
    if missing:
        raise DatasetError(f"dataset CSV is missing columns {missing}")
    frame = frame.sort_values(["episode", "stage"], kind="mergesort")
    n = frame["episode"].nunique()
    if n == 0:
        raise DatasetError("dataset CSV has no rows")
    H = len(frame) // n
    if n * H != len(frame) or not np.array_equal(frame["stage"].to_numpy().reshape(n, H), np.tile(np.arange(1, H + 1), (n, 1))):
        raise DatasetError("every episode must list stages 1..H exactly once")

    def column(name, dtype):
        return frame[name].to_numpy(dtype=dtype).reshape(n, H)

    states, next_states = column("state", np.int64), column("next_state", np.int64)
    actions = column("action", np.int64)
    return OfflineDataset(
        states,
        actions,
        column("reward", float),
        next_states,
        num_states if num_states is not None else int(max(states.max(), next_states.max())) + 1,
        num_actions if num_actions is not None else int(actions.max()) + 1,
    )
