# bonus.py
"""Bonus oracles.

A bonus b(z) must dominate |f(z) - f_hat(z)| over every member f whose
weighted distance to f_hat on the stage slice is at most beta, and stay within
a constant of sqrt(beta^2 + lambda) * D(z) + eps * beta. Three oracles:

* exhaustive: the constrained maximum itself (finite and grid classes)
* binary search: the regression-oracle search over the difference class
* linear: sqrt(beta^2 + lambda) * |phi(z)|_{Sigma^-1}
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np

from . import settings
from .divergence import WeightedGram
from .errors import EnumerationCapExceeded, OracleInconsistencyError
from .function_class import FiniteFunctionClass, FunctionClass, GridFunctionClass, LinearFunctionClass

logger = logging.getLogger(__name__)

MAX_SEARCH_ITERATIONS = 1000
FEASIBILITY_TOL = 1e-12


@dataclass(frozen=True)
class BonusRequest:
    center: np.ndarray  # f_hat table (S, A)
    beta: float
    weights: np.ndarray  # W[s, a] = sum 1/sigma^2 over the stage slice
    ridge: float
    value_range: float
    alpha: float = 1e-3
    log_bonus_size: float = 0.0

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("confidence radius beta must be non-negative")
        if self.alpha <= 0:
            raise ValueError("binary-search precision alpha must be positive")


@dataclass(frozen=True)
class BonusFunction:
    values: np.ndarray
    provenance: str
    oracle_calls: int = 0
    heuristic: bool = False

    def __post_init__(self):
        values = np.maximum(np.asarray(self.values, dtype=float), 0.0)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)

    def __call__(self, state: int, action: int) -> float:
        return float(self.values[state, action])


def _feasible(norms: np.ndarray, beta: float) -> np.ndarray:
    return norms <= beta * beta * (1.0 + FEASIBILITY_TOL) + FEASIBILITY_TOL


def _exhaustive_table(cls: FunctionClass, req: BonusRequest) -> np.ndarray:
    center = np.asarray(req.center, dtype=float)
    if isinstance(cls, GridFunctionClass):
        # move a single cell, keep the others at the center
        dev = cls.levels[None, None, :] - center[..., None]
        ok = _feasible(req.weights[..., None] * dev**2, req.beta)
        return np.where(ok, np.abs(dev), 0.0).max(axis=-1)
    if isinstance(cls, FiniteFunctionClass):
        dev = cls.members - center[None]
        ok = _feasible((dev**2 * req.weights[None]).sum(axis=(1, 2)), req.beta)
        if not ok.any():
            return np.zeros_like(center)
        return np.abs(dev[ok]).max(axis=0)
    raise TypeError(f"exhaustive bonus needs a finite class, got {type(cls).__name__}")


def bonus_exhaustive(cls: FunctionClass, req: BonusRequest, z) -> float:
    """max |f(z) - f_hat(z)| over members within weighted distance beta of f_hat."""
    s, a = z
    return float(_exhaustive_table(cls, req)[s, a])


def bonus_linear(cls: LinearFunctionClass, req: BonusRequest, z) -> float:
    s, a = z
    gram = WeightedGram(cls.features, req.weights, req.ridge)
    return math.sqrt(req.beta**2 + req.ridge) * math.sqrt(max(gram.quadratic_form(cls.features[s, a]), 0.0))


class DifferenceRegression:
    """argmin_{g in F - F} |g|^2_{sigma, D} + (w/2) (g(z) - anchor)^2 at one query cell.

    ``minimize(w)`` returns (g(z), |g|^2) and counts its calls.
    """

    def __init__(self, anchor: float):
        self.anchor = anchor
        self.calls = 0

    def minimize(self, w: float):
        self.calls += 1
        return self._minimize(w)

    def _minimize(self, w: float):
        raise NotImplementedError


class LinearDifferenceRegression(DifferenceRegression):
    """Closed form with the ridge-regularized norm u^T (G + lambda I) u.

    With D = phi^T Sigma^-1 phi the minimizer has g(z) = c (wD/2) / (1 + wD/2)
    and norm g(z)^2 / D.
    """

    def __init__(self, gram: WeightedGram, phi: np.ndarray, anchor: float):
        super().__init__(anchor)
        self.d2 = max(gram.quadratic_form(phi), 0.0)

    def _minimize(self, w: float):
        if self.d2 == 0.0:
            return 0.0, 0.0
        half = w * self.d2 / 2.0
        value = self.anchor * half / (1.0 + half)
        return value, value * value / self.d2


class EnumeratedDifferenceRegression(DifferenceRegression):
    """Exhaustive argmin over the (deduplicated) differences of member pairs."""

    def __init__(self, values_at_z: np.ndarray, norms: np.ndarray, anchor: float):
        super().__init__(anchor)
        self.values_at_z = values_at_z
        self.norms = norms

    @classmethod
    def for_class(cls, fclass: FunctionClass, weights: np.ndarray, z, anchor: float) -> "EnumeratedDifferenceRegression":
        s, a = z
        if isinstance(fclass, GridFunctionClass):
            # separable: cells other than z sit at difference 0
            diffs = np.unique(fclass.levels[:, None] - fclass.levels[None, :])
            return cls(diffs, weights[s, a] * diffs**2, anchor)
        members = fclass.members.reshape(fclass.size, -1)
        n = members.shape[0]
        if n * n > 2 * settings.pair_budget():
            raise EnumerationCapExceeded(f"{n * n} ordered pairs exceed the budget")
        w = weights.reshape(-1)
        cell = s * fclass.num_actions + a
        values, norms = [], []
        for i in range(n):
            diff = members[i] - members
            values.append(diff[:, cell])
            norms.append(diff**2 @ w)
        table = np.unique(np.stack([np.concatenate(values), np.concatenate(norms)], axis=1), axis=0)
        return cls(table[:, 0], table[:, 1], anchor)

    def _minimize(self, w: float):
        objective = self.norms + 0.5 * w * (self.values_at_z - self.anchor) ** 2
        best = int(np.argmin(objective))
        return float(self.values_at_z[best]), float(self.norms[best])


@dataclass(frozen=True)
class SearchResult:
    value: float
    oracle_calls: int
    iterations: int


def binary_search(regression: DifferenceRegression, beta: float, alpha: float, value_range: float) -> SearchResult:
    """Bisection on the penalty weight w.

    w_H = beta / (alpha (L + 1)) and Delta = alpha beta / (8 (L + 1)^3); a
    midpoint whose solution has squared norm above beta^2 lowers w_H,
    otherwise it raises w_L. Returns z_H.
    """
    L1 = value_range + 1.0
    w_low, w_high = 0.0, beta / (alpha * L1)
    z_low = 0.0
    z_high, _ = regression.minimize(w_high)
    delta = alpha * beta / (8.0 * L1**3)
    iterations = 0
    while abs(z_high - z_low) > alpha and abs(w_high - w_low) > delta:
        iterations += 1
        if iterations > MAX_SEARCH_ITERATIONS:
            raise OracleInconsistencyError(f"binary search did not terminate after {MAX_SEARCH_ITERATIONS} iterations")
        w_mid = 0.5 * (w_high + w_low)
        z_mid, norm = regression.minimize(w_mid)
        if norm > beta * beta:
            w_high, z_high = w_mid, z_mid
        else:
            w_low, z_low = w_mid, z_mid
        logger.debug("binary search w=%.6g z=%.6g norm=%.6g", w_mid, z_mid, norm)
    return SearchResult(value=z_high, oracle_calls=regression.calls, iterations=iterations)


def search_call_bound(beta: float, alpha: float, value_range: float) -> int:
    """ceil(log2(w_H / Delta)) + 1 regression calls at most."""
    if beta <= 0:
        return 1
    L1 = value_range + 1.0
    ratio = (beta / (alpha * L1)) / (alpha * beta / (8.0 * L1**3))
    return max(int(math.ceil(math.log2(ratio))), 0) + 1


def bonus_binary_search(cls: FunctionClass, req: BonusRequest, z, regression: DifferenceRegression = None) -> float:
    return _binary_search_at(cls, req, z, regression).value


def _difference_regression(cls: FunctionClass, req: BonusRequest, z) -> DifferenceRegression:
    anchor = 2.0 * (req.value_range + 1.0)
    if isinstance(cls, LinearFunctionClass):
        gram = WeightedGram(cls.features, req.weights, req.ridge)
        return LinearDifferenceRegression(gram, cls.features[z[0], z[1]], anchor)
    return EnumeratedDifferenceRegression.for_class(cls, np.asarray(req.weights, dtype=float), z, anchor)


def _binary_search_at(cls: FunctionClass, req: BonusRequest, z, regression=None) -> SearchResult:
    regression = regression or _difference_regression(cls, req, z)
    return binary_search(regression, req.beta, req.alpha, req.value_range)


class BonusOracle:
    provenance = "abstract"

    def table(self, cls: FunctionClass, req: BonusRequest) -> BonusFunction:
        raise NotImplementedError


class ExhaustiveBonus(BonusOracle):
    provenance = "exhaustive"

    def table(self, cls, req):
        return BonusFunction(_exhaustive_table(cls, req), self.provenance)


class LinearBonus(BonusOracle):
    provenance = "linear-closed-form"

    def table(self, cls, req):
        if not isinstance(cls, LinearFunctionClass):
            raise TypeError(f"linear bonus needs a linear class, got {type(cls).__name__}")
        d2 = WeightedGram(cls.features, req.weights, req.ridge).table()
        return BonusFunction(math.sqrt(req.beta**2 + req.ridge) * np.sqrt(d2), self.provenance)


class BinarySearchBonus(BonusOracle):
    provenance = "binary-search"

    def table(self, cls, req):
        heuristic = not cls.is_convex
        if heuristic:
            logger.warning("binary-search bonus on non-convex class %s is heuristic", cls.name)
        values = np.zeros((cls.num_states, cls.num_actions))
        calls = 0
        gram = WeightedGram(cls.features, req.weights, req.ridge) if isinstance(cls, LinearFunctionClass) else None
        anchor = 2.0 * (req.value_range + 1.0)
        for s in range(cls.num_states):
            for a in range(cls.num_actions):
                if gram is not None:
                    regression = LinearDifferenceRegression(gram, cls.features[s, a], anchor)
                else:
                    regression = None
                result = _binary_search_at(cls, req, (s, a), regression)
                values[s, a] = result.value
                calls += result.oracle_calls
        return BonusFunction(values, self.provenance, oracle_calls=calls, heuristic=heuristic)


BONUS_METHODS = ("auto", "exhaustive", "binary-search", "linear")


def default_bonus_oracle(cls: FunctionClass, method: str = "auto") -> BonusOracle:
    if method == "auto":
        return LinearBonus() if isinstance(cls, LinearFunctionClass) else ExhaustiveBonus()
    if method == "exhaustive":
        return ExhaustiveBonus()
    if method == "binary-search":
        return BinarySearchBonus()
    if method == "linear":
        return LinearBonus()
    raise ValueError(f"unknown bonus method {method!r}; expected one of {BONUS_METHODS}")
