import math

import numpy as np
import pytest

from pnlsvi.errors import EnumerationCapExceeded, InvalidMdpError
from pnlsvi.function_class import (
    FiniteFunctionClass,
    LinearFunctionClass,
    build_grid_class,
    build_grid_family,
    build_tabular_linear_class,
    build_tabular_linear_family,
    class_diagnostics,
    completeness_gap,
    coverage_constant,
    linear_coverage_constant,
    linear_epsilon_net,
    nearest_member_gap,
)
from pnlsvi.mdp import OccupancyMeasure, Policy, occupancy_measure, optimal_values


def test_finite_class_dedupes_in_order():
    members = np.array([[[0.0, 1.0]], [[0.5, 0.5]], [[0.0, 1.0]]])
    cls = FiniteFunctionClass(members, 1.0)
    assert cls.size == 2
    np.testing.assert_array_equal(cls.member(1), [[0.5, 0.5]])
    assert cls.log_size == pytest.approx(math.log(2))
    with pytest.raises(InvalidMdpError):
        FiniteFunctionClass(members * 3, 1.0)


def test_grid_member_indexing():
    grid = build_grid_class(2, 1, 3, 2.0)
    assert grid.size == 9
    np.testing.assert_array_equal(grid.levels, [0.0, 1.0, 2.0])
    np.testing.assert_array_equal(grid.member(5), [[1.0], [2.0]])
    assert grid.member_index(grid.level_indices(7)) == 7
    materialized = grid.materialize()
    assert materialized.size == 9
    np.testing.assert_array_equal(materialized.member(5), grid.member(5))


def test_grid_cap(monkeypatch):
    with pytest.raises(EnumerationCapExceeded):
        build_grid_class(3, 2, 9, 1.0, cap=1000)
    monkeypatch.setenv("PNLSVI_ENUMERATION_CAP", "5")
    grid = build_grid_class(2, 1, 3, 1.0, cap=100)
    with pytest.raises(EnumerationCapExceeded):
        grid.materialize()


def test_families_have_stage_ranges():
    grid = build_grid_family(3, 2, 3, 5)
    assert grid.horizon == 3
    assert grid.stage(1).first.value_range == 3.0
    assert grid.stage(1).second.value_range == 9.0
    assert grid.stage(3).first.value_range == 1.0
    linear = build_tabular_linear_family(3, 2, 3)
    assert linear.stage(2).first.norm_bound == pytest.approx(math.sqrt(6) * 2)
    assert linear.log_size >= linear.stage(1).first.log_size


def test_linear_class_rescales_raw_features():
    cls = LinearFunctionClass.from_raw_features(np.full((1, 1, 2), 3.0), 1.0, 10.0)
    assert np.linalg.norm(cls.features[0, 0]) == pytest.approx(1.0)
    assert cls.norm_bound == pytest.approx(math.sqrt(18))
    with pytest.raises(InvalidMdpError):
        LinearFunctionClass(np.full((1, 1, 2), 3.0), 1.0, 10.0)
    np.testing.assert_allclose(cls.project([10.0, 0.0]), [cls.norm_bound, 0.0])


def test_epsilon_net_covers_the_class(rng):
    cls = LinearFunctionClass.from_raw_features(rng.uniform(0, 1, size=(2, 2, 2)), 1.0, 2.0)
    net = linear_epsilon_net(cls, 0.05)
    for _ in range(200):
        theta = cls.project(rng.normal(size=2))
        gap = np.abs(net.members - cls.evaluate(theta)[None]).max(axis=(1, 2)).min()
        assert gap <= 0.05 + 1e-12


def test_tabular_linear_is_complete(default_mdp):
    cls = build_tabular_linear_class(3, 2, 3.0)
    V = optimal_values(default_mdp).v[1]
    assert completeness_gap(cls, default_mdp, 1, V) <= 1e-7


def test_grid_completeness_is_rounding_error(default_mdp):
    grid = build_grid_class(3, 2, 4, 3.0)
    V = optimal_values(default_mdp).v[1]
    target = optimal_values(default_mdp).q[0]
    gap = completeness_gap(grid, default_mdp, 1, V)
    assert gap == pytest.approx(np.abs(grid.nearest(target) - target).max())
    assert gap <= 0.5 + 1e-12


def test_coverage_constants(default_mdp):
    d = occupancy_measure(default_mdp, Policy.uniform(3, 3, 2))
    grid = build_grid_class(3, 2, 3, 1.0)
    assert coverage_constant(grid, d, 2) == pytest.approx(d.stage(2).min())
    linear = build_tabular_linear_class(3, 2, 1.0)
    assert linear_coverage_constant(linear, d, 2) == pytest.approx(d.stage(2).min())
    single = FiniteFunctionClass(np.zeros((1, 3, 2)), 1.0)
    assert coverage_constant(single, d, 1) == math.inf


def test_finite_coverage_by_hand():
    cls = FiniteFunctionClass(np.array([[[0.0, 0.0]], [[1.0, 0.5]]]), 1.0)
    occ = OccupancyMeasure(np.array([[[0.25, 0.75]]]))
    assert coverage_constant(cls, occ, 1) == pytest.approx(0.25 + 0.75 * 0.25)


def test_nearest_member_gap_finite():
    cls = FiniteFunctionClass(np.array([[[0.0, 0.0]], [[1.0, 1.0]]]), 1.0)
    assert nearest_member_gap(cls, np.array([[0.2, 0.9]])) == pytest.approx(0.8)


def test_class_diagnostics_for_complete_family(default_mdp):
    family = build_tabular_linear_family(3, 2, 3)
    d = occupancy_measure(default_mdp, Policy.uniform(3, 3, 2))
    diag = class_diagnostics(family, default_mdp, d)
    assert diag.epsilon <= 1e-6
    assert diag.epsilon_second <= 1e-6
    assert diag.kappa == pytest.approx(d.probs.min())
    assert len(diag.stage_epsilon) == 3


def test_epsilon_net_is_inside_the_ball():
    # (theta_1 + theta_2) / sqrt(2) reaches sqrt(2) B on the box corners, B on the ball
    cls = LinearFunctionClass(np.full((1, 1, 2), 1.0 / math.sqrt(2.0)), 1.0, 2.0)
    net = linear_epsilon_net(cls, 0.1)
    assert net.members.max() <= 1.0 + 1e-9
    assert net.members.max() >= 1.0 - 0.1
    assert linear_epsilon_net(LinearFunctionClass(np.ones((1, 1, 1)), 0.0, 1.0), 0.1).size == 1


def test_one_hot_coverage_matches_net_brute_force():
    cls = build_tabular_linear_class(1, 2, 1.0)
    occupancy = OccupancyMeasure(np.array([[[0.3, 0.7]]]))
    eigen = linear_coverage_constant(cls, occupancy, 1)
    assert eigen == pytest.approx(0.3)
    brute = coverage_constant(linear_epsilon_net(cls, 0.25), occupancy, 1)
    assert abs(brute - eigen) <= 0.1 * eigen


def test_grid_completeness_at_nine_levels(default_mdp):
    grid = build_grid_class(3, 2, 9, 3.0)
    V = optimal_values(default_mdp).v[1]
    assert completeness_gap(grid, default_mdp, 1, V) <= 3.0 / 8 / 2 + 1e-12


def test_coverage_is_scale_free(rng, default_mdp):
    d = occupancy_measure(default_mdp, Policy.uniform(3, 3, 2))
    cls = FiniteFunctionClass(rng.uniform(0.0, 1.0, size=(12, 3, 2)), 1.0)
    for factor in (0.25, 3.0):
        scaled = cls.scaled(factor)
        assert scaled.value_range == pytest.approx(factor)
        assert coverage_constant(scaled, d, 2) == pytest.approx(coverage_constant(cls, d, 2))


def test_dedupe_records_source_positions():
    members = np.array([[[1.0, 1.0]], [[1.0, 1.0]], [[0.0, 2.0]], [[2.0, 0.0]], [[0.0, 2.0]]])
    cls = FiniteFunctionClass(members, 2.0)
    np.testing.assert_array_equal(cls.source_indices, [0, 2, 3])
    for i in range(cls.size):
        np.testing.assert_array_equal(members[cls.source_indices[i]], cls.member(i))
