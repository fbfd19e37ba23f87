# regression.py
"""Weighted least-squares oracles.

Finite classes are searched exhaustively (grid classes cell by cell), linear
classes are solved in closed form through the weighted Gram matrix.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .data import OfflineDataset, StageStatistics, cell_statistics, stage_statistics
from .divergence import WeightedGram
from .errors import DatasetError
from .function_class import FiniteFunctionClass, FunctionClass, GridFunctionClass, LinearFunctionClass

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class RegressionProblem:
    """Samples z_k = (s_k, a_k) with targets y_k and weights sigma_k >= 1."""

    states: np.ndarray
    actions: np.ndarray
    targets: np.ndarray
    sigma: np.ndarray
    ridge: float = 0.0

    def __post_init__(self):
        n = len(self.targets)
        for name in ("states", "actions", "sigma"):
            if len(getattr(self, name)) != n:
                raise DatasetError(f"{name} must have one entry per target")
        if n and np.min(self.sigma) < 1.0:
            raise DatasetError("regression weights sigma must be at least 1")
        if self.ridge < 0:
            raise DatasetError("ridge parameter must be non-negative")

    @classmethod
    def from_dataset(
        cls, data: OfflineDataset, h: int, targets, sigma_table: Optional[np.ndarray] = None, ridge: float = 0.0
    ) -> "RegressionProblem":
        states, actions = data.states[:, h - 1], data.actions[:, h - 1]
        sigma = np.ones(len(states)) if sigma_table is None else np.asarray(sigma_table, dtype=float)[states, actions]
        return cls(states, actions, np.asarray(targets, dtype=float), sigma, ridge)

    def statistics(self, num_states: int, num_actions: int) -> StageStatistics:
        cells = np.asarray(self.states, dtype=np.int64) * num_actions + np.asarray(self.actions, dtype=np.int64)
        inv_var = 1.0 / np.asarray(self.sigma, dtype=float) ** 2
        return cell_statistics(cells, np.asarray(self.targets, dtype=float), inv_var, num_states, num_actions)


@dataclass(frozen=True)
class RegressionFit:
    values: np.ndarray  # fitted table (S, A)
    objective: float
    index: Optional[int] = None  # finite classes: into cls.members, after deduplication
    theta: Optional[np.ndarray] = None  # linear classes


def finite_objectives(cls: FiniteFunctionClass, stats: StageStatistics) -> np.ndarray:
    """Weighted objective of every member."""
    flat = cls.members.reshape(cls.size, -1)
    w, s = stats.weights.reshape(-1), stats.sums.reshape(-1)
    return flat**2 @ w - 2.0 * (flat @ s) + float(stats.squares.sum())


def _grid_fit(cls: GridFunctionClass, stats: StageStatistics) -> RegressionFit:
    # separable objective: each cell picks its own level, lowest level on ties
    per_level = stats.weights[..., None] * cls.levels**2 - 2.0 * stats.sums[..., None] * cls.levels
    digits = per_level.argmin(axis=-1)
    values = cls.levels[digits]
    return RegressionFit(values, stats.objective(values), index=cls.member_index(digits))


def weighted_least_squares_finite(cls: FunctionClass, prob: RegressionProblem) -> int:
    """Index of the member minimizing sum (f(z_k) - y_k)^2 / sigma_k^2 (lowest index on ties).

    The index is into ``cls.members``; finite classes drop duplicate members,
    and ``cls.source_indices[index]`` is the position in the original tensor.
    """
    return FiniteRegressionOracle().fit_statistics(cls, prob.statistics(cls.num_states, cls.num_actions)).index


def weighted_ridge_linear(cls: LinearFunctionClass, prob: RegressionProblem) -> np.ndarray:
    """(G + lambda I)^-1 b, rescaled into the norm-B ball when it leaves it."""
    stats = prob.statistics(cls.num_states, cls.num_actions)
    return LinearRegressionOracle(prob.ridge).fit_statistics(cls, stats).theta


class RegressionOracle:
    """Minimizes the weighted squared loss over a class from per-cell statistics."""

    def fit_statistics(self, cls: FunctionClass, stats: StageStatistics) -> RegressionFit:
        raise NotImplementedError

    def fit(self, cls: FunctionClass, prob: RegressionProblem) -> RegressionFit:
        return self.fit_statistics(cls, prob.statistics(cls.num_states, cls.num_actions))

    def fit_stage(
        self, cls: FunctionClass, data: OfflineDataset, h: int, targets, sigma: Optional[np.ndarray] = None
    ) -> RegressionFit:
        return self.fit_statistics(cls, stage_statistics(data, h, targets, sigma))


class FiniteRegressionOracle(RegressionOracle):
    def fit_statistics(self, cls: FunctionClass, stats: StageStatistics) -> RegressionFit:
        if isinstance(cls, GridFunctionClass):
            return _grid_fit(cls, stats)
        if not isinstance(cls, FiniteFunctionClass):
            raise TypeError(f"finite regression needs a finite class, got {type(cls).__name__}")
        objectives = finite_objectives(cls, stats)
        index = int(np.argmin(objectives))
        logger.debug("finite regression over %d members: best %d (objective %.6g)", cls.size, index, objectives[index])
        return RegressionFit(cls.members[index], float(objectives[index]), index=index)


class LinearRegressionOracle(RegressionOracle):
    def __init__(self, ridge: float = 1.0):
        self.ridge = float(ridge)

    def fit_statistics(self, cls: FunctionClass, stats: StageStatistics) -> RegressionFit:
        if not isinstance(cls, LinearFunctionClass):
            raise TypeError(f"linear regression needs a linear class, got {type(cls).__name__}")
        gram = WeightedGram(cls.features, stats.weights, self.ridge)
        raw = gram.solve(gram.moment(stats.sums))
        theta = cls.project(raw)
        if theta is not raw:
            logger.debug("ridge solution norm %.4g exceeds B=%.4g; rescaled", np.linalg.norm(raw), cls.norm_bound)
        values = cls.evaluate(theta)
        return RegressionFit(values, stats.objective(values), theta=theta)


def default_regression_oracle(cls: FunctionClass, ridge: float = 1.0) -> RegressionOracle:
    if isinstance(cls, LinearFunctionClass):
        return LinearRegressionOracle(ridge)
    return FiniteRegressionOracle()
