# divergence.py
"""Weighted D^2-divergence of a query cell given a stage slice.

D^2(z) = sup_{f1, f2} (f1(z) - f2(z))^2 / (sum_k (f1(z_k) - f2(z_k))^2 / sigma_k^2 + lambda)

The data enter only through per-cell weights W[s, a] = sum 1/sigma^2.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve

from . import settings
from .errors import EnumerationCapExceeded, SingularSystemError
from .function_class import FiniteFunctionClass, GridFunctionClass, LinearFunctionClass

logger = logging.getLogger(__name__)


class WeightedGram:
    """Sigma = sum_c W_c phi_c phi_c^T + lambda I with a cached Cholesky factor."""

    def __init__(self, features: np.ndarray, weights: np.ndarray, ridge: float):
        self.features = np.asarray(features, dtype=float)
        self.weights = np.asarray(weights, dtype=float)
        self.ridge = float(ridge)
        d = self.features.shape[-1]
        phi = self.features.reshape(-1, d)
        self.matrix = phi.T @ (self.weights.reshape(-1)[:, None] * phi) + self.ridge * np.eye(d)

    @cached_property
    def factor(self):
        try:
            return cho_factor(self.matrix, lower=True, check_finite=False)
        except LinAlgError as exc:
            raise SingularSystemError(f"weighted Gram matrix is singular (lambda={self.ridge})") from exc

    def moment(self, sums: np.ndarray) -> np.ndarray:
        """b = sum_c S_c phi_c."""
        d = self.features.shape[-1]
        return self.features.reshape(-1, d).T @ np.asarray(sums, dtype=float).reshape(-1)

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        return cho_solve(self.factor, rhs, check_finite=False)

    def quadratic_form(self, phi: np.ndarray) -> float:
        """phi^T Sigma^-1 phi."""
        return float(phi @ self.solve(phi))

    def table(self) -> np.ndarray:
        """phi(s, a)^T Sigma^-1 phi(s, a) for every cell."""
        S, A, d = self.features.shape
        phi = self.features.reshape(-1, d)
        solved = self.solve(phi.T)
        return np.maximum(np.einsum("nd,dn->n", phi, solved), 0.0).reshape(S, A)


@dataclass(frozen=True)
class DivergenceQuery:
    state: int
    action: int
    weights: np.ndarray  # W[s, a] = sum over stage samples at (s, a) of 1/sigma^2
    ridge: float

    def __post_init__(self):
        if self.ridge <= 0:
            raise ValueError("the divergence regularizer lambda must be positive")


def _finite_table(members: np.ndarray, weights: np.ndarray, ridge: float) -> np.ndarray:
    n = members.shape[0]
    flat = members.reshape(n, -1)
    w = weights.reshape(-1)
    budget = settings.pair_budget()
    pairs = n * (n - 1) // 2
    if pairs > budget:
        raise EnumerationCapExceeded(f"{pairs} member pairs exceed the budget {budget}")
    best = np.zeros(flat.shape[1])
    # each unordered pair once
    for i in range(n - 1):
        sq = (flat[i + 1 :] - flat[i]) ** 2
        denom = sq @ w + ridge
        best = np.maximum(best, (sq / denom[:, None]).max(axis=0))
    return best.reshape(members.shape[1:])


def divergence_table(cls, weights: np.ndarray, ridge: float) -> np.ndarray:
    """D^2 at every cell for one stage slice."""
    weights = np.asarray(weights, dtype=float)
    if ridge <= 0:
        raise ValueError("the divergence regularizer lambda must be positive")
    if isinstance(cls, GridFunctionClass):
        # the sup puts the whole span on the query cell and agrees elsewhere
        span2 = cls.span**2
        return span2 / (weights * span2 + ridge)
    if isinstance(cls, LinearFunctionClass):
        return WeightedGram(cls.features, weights, ridge).table()
    if isinstance(cls, FiniteFunctionClass):
        return _finite_table(cls.members, weights, ridge)
    raise TypeError(f"unsupported class {type(cls).__name__}")


def d2_finite(cls, q: DivergenceQuery) -> float:
    """Brute-force supremum over member pairs; 0 for a singleton class."""
    return float(divergence_table(cls, q.weights, q.ridge)[q.state, q.action])


def d2_linear(cls, q: DivergenceQuery) -> float:
    """phi(z)^T Sigma^-1 phi(z)."""
    gram = WeightedGram(cls.features, q.weights, q.ridge)
    return gram.quadratic_form(cls.features[q.state, q.action])


def max_divergence(cls, weights: np.ndarray, ridge: float) -> float:
    return float(divergence_table(cls, weights, ridge).max())

