import math

import numpy as np
import pytest

from pnlsvi.bonus import (
    BinarySearchBonus,
    BonusRequest,
    DifferenceRegression,
    ExhaustiveBonus,
    LinearBonus,
    LinearDifferenceRegression,
    binary_search,
    bonus_binary_search,
    bonus_exhaustive,
    bonus_linear,
    default_bonus_oracle,
    search_call_bound,
)
from pnlsvi.divergence import WeightedGram
from pnlsvi.errors import OracleInconsistencyError
from pnlsvi.function_class import (
    FiniteFunctionClass,
    LinearFunctionClass,
    build_grid_class,
    build_tabular_linear_class,
    linear_epsilon_net,
)


def _request(center, beta, weights, ridge=1.0, value_range=1.0, alpha=1e-3):
    return BonusRequest(center=center, beta=beta, weights=weights, ridge=ridge, value_range=value_range, alpha=alpha)


def test_exhaustive_two_members_by_hand():
    cls = FiniteFunctionClass(np.array([[[0.0, 0.0]], [[1.0, 0.5]]]), 1.0)
    weights = np.array([[3.0, 4.0]])
    center = cls.member(0)
    # the second member sits at squared weighted distance 4
    assert bonus_exhaustive(cls, _request(center, 2.0, weights), (0, 0)) == pytest.approx(1.0)
    assert bonus_exhaustive(cls, _request(center, 1.9, weights), (0, 0)) == 0.0
    assert bonus_exhaustive(cls, _request(center, 2.0, weights), (0, 1)) == pytest.approx(0.5)


def test_grid_exhaustive_matches_enumeration(rng):
    grid = build_grid_class(2, 2, 3, 2.0)
    finite = grid.materialize()
    oracle = ExhaustiveBonus()
    for _ in range(10):
        center = grid.member(int(rng.integers(grid.size)))
        weights = rng.integers(0, 8, size=(2, 2)).astype(float)
        req = _request(center, float(rng.uniform(0, 4)), weights, value_range=2.0)
        np.testing.assert_allclose(oracle.table(grid, req).values, oracle.table(finite, req).values)


def test_linear_bonus_closed_form(rng):
    cls = build_tabular_linear_class(2, 2, 1.0)
    weights = rng.integers(0, 20, size=(2, 2)).astype(float)
    req = _request(np.zeros((2, 2)), 1.5, weights)
    table = LinearBonus().table(cls, req).values
    np.testing.assert_allclose(table, math.sqrt(1.5**2 + 1.0) / np.sqrt(weights + 1.0))
    assert bonus_linear(cls, req, (1, 1)) == pytest.approx(table[1, 1])


def test_binary_search_finds_constrained_maximum(rng):
    cls = build_tabular_linear_class(2, 2, 1.0)
    for _ in range(10):
        weights = rng.integers(1, 50, size=(2, 2)).astype(float)
        req = _request(np.zeros((2, 2)), float(rng.uniform(0.2, 2.0)), weights)
        for z in [(0, 0), (1, 1)]:
            target = req.beta / math.sqrt(weights[z] + 1.0)
            value = bonus_binary_search(cls, req, z)
            assert target - 1e-9 <= value <= target + req.alpha


def test_binary_search_matches_exhaustive_net(rng):
    for _ in range(5):
        lin = LinearFunctionClass(rng.uniform(0.5, 1.0, size=(2, 2, 1)), 1.0, 2.0)
        weights = rng.integers(100, 300, size=(2, 2)).astype(float)
        req = _request(lin.evaluate(np.array([0.5])), 1.0, weights, ridge=1e-9, value_range=2.0)
        exhaustive = ExhaustiveBonus().table(linear_epsilon_net(lin, 1e-4), req).values
        searched = BinarySearchBonus().table(lin, req)
        assert not searched.heuristic
        np.testing.assert_allclose(searched.values, exhaustive, atol=req.alpha + 1e-4)


def test_call_count_within_bound(rng):
    gram = WeightedGram(np.eye(2).reshape(2, 1, 2), np.array([[5.0], [9.0]]), 1.0)
    regression = LinearDifferenceRegression(gram, np.array([1.0, 0.0]), anchor=4.0)
    result = binary_search(regression, beta=1.0, alpha=1e-3, value_range=1.0)
    assert result.oracle_calls == regression.calls
    assert result.oracle_calls <= search_call_bound(1.0, 1e-3, 1.0) + 1


class _Identity(DifferenceRegression):
    def _minimize(self, w):
        return w, w


def test_iteration_guard():
    with pytest.raises(OracleInconsistencyError):
        binary_search(_Identity(anchor=1.0), beta=1.0, alpha=1e-300, value_range=1.0)


def test_non_convex_search_is_flagged(rng):
    grid = build_grid_class(2, 1, 3, 1.0)
    req = _request(grid.member(0), 1.0, np.array([[4.0], [1.0]]))
    result = BinarySearchBonus().table(grid, req)
    assert result.heuristic
    assert result.oracle_calls > 0
    assert np.all(result.values >= 0.0)


def test_oracle_selection():
    lin = build_tabular_linear_class(1, 1, 1.0)
    grid = build_grid_class(1, 1, 2, 1.0)
    assert isinstance(default_bonus_oracle(lin), LinearBonus)
    assert isinstance(default_bonus_oracle(grid), ExhaustiveBonus)
    assert isinstance(default_bonus_oracle(grid, "binary-search"), BinarySearchBonus)
    with pytest.raises(ValueError):
        default_bonus_oracle(grid, "magic")
    with pytest.raises(TypeError):
        LinearBonus().table(grid, _request(np.zeros((1, 1)), 1.0, np.ones((1, 1))))


def test_request_validation():
    with pytest.raises(ValueError):
        _request(np.zeros((1, 1)), -1.0, np.ones((1, 1)))
    with pytest.raises(ValueError):
        _request(np.zeros((1, 1)), 1.0, np.ones((1, 1)), alpha=0.0)


def _stable_plane_instance(rng):
    features = np.array([[[0.9, 0.1], [0.1, 0.9]], [[0.6, 0.4], [0.4, 0.6]]]) + rng.uniform(0.0, 0.1, size=(2, 2, 2))
    lin = LinearFunctionClass.from_raw_features(features, 1.0, 2.0)
    weights = rng.integers(100, 300, size=(2, 2)).astype(float)
    return lin, _request(lin.evaluate(np.full(2, 0.4)), 1.0, weights, ridge=1e-9, value_range=2.0)


def test_search_dominates_every_feasible_net_member(rng):
    for _ in range(3):
        lin, req = _stable_plane_instance(rng)
        net = linear_epsilon_net(lin, 5e-3)
        searched = BinarySearchBonus().table(lin, req).values
        dev = net.members - req.center[None]
        feasible = (dev**2 * req.weights[None]).sum(axis=(1, 2)) <= req.beta**2
        assert feasible.sum() > 1
        widths = np.abs(dev[feasible]).max(axis=0)
        assert np.all(searched >= widths - 1e-9)


def test_search_within_constant_of_true_bonus(rng):
    for _ in range(3):
        lin, req = _stable_plane_instance(rng)
        exact = WeightedGram(lin.features, req.weights, req.ridge).table()
        true_bonus = req.beta * np.sqrt(exact)
        searched = BinarySearchBonus().table(lin, req).values
        assert np.all(searched >= true_bonus - 1e-9)
        assert np.all(searched <= 4.0 * true_bonus)
        exhaustive = ExhaustiveBonus().table(linear_epsilon_net(lin, 5e-3), req).values
        assert np.all(searched <= 4.0 * exhaustive)


def test_bonus_grows_with_beta(rng):
    grid = build_grid_class(2, 2, 5, 2.0)
    lin = build_tabular_linear_class(2, 2, 2.0)
    weights = rng.integers(1, 30, size=(2, 2)).astype(float)
    center = grid.member(int(rng.integers(grid.size)))
    betas = [0.0, 0.5, 1.0, 2.0, 4.0]
    tables = {
        "exhaustive": [ExhaustiveBonus().table(grid, _request(center, b, weights, value_range=2.0)).values for b in betas],
        "linear": [LinearBonus().table(lin, _request(center, b, weights, value_range=2.0)).values for b in betas],
        "search": [BinarySearchBonus().table(lin, _request(center, b, weights, value_range=2.0)).values for b in betas[1:]],
    }
    for name, values in tables.items():
        slack = 1e-3 if name == "search" else 0.0
        for smaller, larger in zip(values, values[1:]):
            assert np.all(larger >= smaller - slack), name
    assert np.all(tables["linear"][-1] > tables["linear"][0])
