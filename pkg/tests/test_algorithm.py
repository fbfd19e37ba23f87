import inspect
import json

import numpy as np
import pytest

from pnlsvi.algorithm import PnlsviConfig, empirical_kappa, pnlsvi_report, run_pnlsvi
from pnlsvi.config import ExperimentConfig
from pnlsvi.data import epsilon_greedy_behavior, rollout_dataset, split_dataset
from pnlsvi.errors import DatasetError
from pnlsvi.experiment import pessimism_violations, run_cell, sandwich_violations
from pnlsvi.function_class import build_grid_family, build_tabular_linear_family, class_diagnostics
from pnlsvi.mdp import occupancy_measure, optimal_values


class RecordingMdp:
    """Proxy that logs every attribute read on the wrapped MDP."""

    def __init__(self, mdp):
        self._mdp = mdp
        self.reads = []

    def __getattr__(self, name):
        self.reads.append(name)
        return getattr(self._mdp, name)


def _split(mdp, K, seed=0, epsilon=0.3):
    mu = epsilon_greedy_behavior(optimal_values(mdp).policy, epsilon)
    return split_dataset(rollout_dataset(mdp, mu, 2 * K, seed))


def test_planning_never_sees_the_mdp(two_state):
    recorder = RecordingMdp(two_state)
    mu = epsilon_greedy_behavior(optimal_values(two_state).policy, 0.3)
    split = split_dataset(rollout_dataset(recorder, mu, 400, seed=0))
    family = build_tabular_linear_family(2, 2, 2)
    assert "transitions" in recorder.reads
    recorder.reads.clear()
    run_pnlsvi(split, family, PnlsviConfig(profile="practical"))
    assert recorder.reads == []
    assert "mdp" not in inspect.signature(run_pnlsvi).parameters


def test_identical_inputs_give_identical_outputs(two_state):
    split = _split(two_state, 300)
    family = build_tabular_linear_family(2, 2, 2)
    a = run_pnlsvi(split, family, PnlsviConfig(profile="practical"))
    b = run_pnlsvi(split, family, PnlsviConfig(profile="practical"))
    np.testing.assert_array_equal(a.f_hat, b.f_hat)
    np.testing.assert_array_equal(a.variance.sigma_sq, b.variance.sigma_sq)
    np.testing.assert_array_equal(a.policy.probs, b.policy.probs)


def test_swapped_halves_run(two_state):
    split = _split(two_state, 300)
    family = build_tabular_linear_family(2, 2, 2)
    out = run_pnlsvi(split.swapped(), family, PnlsviConfig(profile="practical"))
    assert out.f_hat.shape == (2, 2, 2)


def test_outputs_respect_ranges(default_mdp):
    split = _split(default_mdp, 500)
    family = build_grid_family(3, 2, 3, 5)
    out = run_pnlsvi(split, family, PnlsviConfig(profile="practical"))
    H = 3
    for h in range(1, H + 1):
        assert np.all(out.f_hat[h - 1] >= 0.0)
        assert np.all(out.f_hat[h - 1] <= H - h + 1)
    assert np.all(out.variance.sigma_sq >= 1.0)
    assert np.all(out.variance.sigma_sq <= H * H)
    assert np.all(out.bonus >= 0.0)
    np.testing.assert_array_equal(out.value(H + 1), np.zeros(3))
    assert out.diagnostics["bonus_provenance"] == ["exhaustive"]


def test_unit_sigma_ablation(two_state):
    split = _split(two_state, 300)
    family = build_tabular_linear_family(2, 2, 2)
    out = run_pnlsvi(split, family, PnlsviConfig(profile="practical", sigma_mode="unit"))
    assert out.diagnostics["sigma_mode"] == "unit"
    with pytest.raises(ValueError):
        PnlsviConfig(sigma_mode="guess")


def test_paper_radii_are_pessimistic(default_mdp):
    split = _split(default_mdp, 1000)
    family = build_tabular_linear_family(3, 2, 3)
    out = run_pnlsvi(split, family, PnlsviConfig())
    opt = optimal_values(default_mdp)
    assert pessimism_violations(out, opt) == 0
    assert sandwich_violations(default_mdp, out, opt) == 0


def test_empirical_kappa_falls_back_on_gaps(two_state):
    split = _split(two_state, 5, epsilon=0.0)
    family = build_tabular_linear_family(2, 2, 2)
    assert empirical_kappa(split.second_half, family) == pytest.approx(1.0 / 5)


def test_mismatched_inputs_rejected(two_state, default_mdp):
    split = _split(two_state, 20)
    with pytest.raises(DatasetError):
        run_pnlsvi(split, build_tabular_linear_family(2, 2, 3), PnlsviConfig())
    uneven = type(split)(split.first_half, split.second_half.subset(slice(0, 10)))
    with pytest.raises(DatasetError):
        run_pnlsvi(uneven, build_tabular_linear_family(2, 2, 2), PnlsviConfig())


def test_report_is_json(two_state):
    out = run_pnlsvi(_split(two_state, 200), build_tabular_linear_family(2, 2, 2), PnlsviConfig(profile="practical"))
    doc = json.loads(json.dumps(pnlsvi_report(out)))
    assert doc["schema_version"] == "1.0"
    assert len(doc["f_hat"]) == 2
    assert doc["radii"]["beta"] > 0


@pytest.mark.slow
def test_complete_class_learns_two_state_policy(two_state):
    config = ExperimentConfig(scenario="two_state", profile="practical", K=(8000,), seeds=tuple(range(50)))
    mdp = config.build_mdp()
    family = config.build_family(mdp)
    diagnostics = class_diagnostics(family, mdp, occupancy_measure(mdp, config.behavior_policy(mdp)))
    assert diagnostics.epsilon <= 1e-4
    gaps = [run_cell(config, 8000, seed, diagnostics).gap for seed in config.seeds]
    assert np.median(gaps) < 0.25 * 2
