import pytest

from pnlsvi.config import ExperimentConfig
from pnlsvi.errors import OracleInconsistencyError
from pnlsvi.verify import (
    VerifyReport,
    check_algorithm,
    check_binary_search,
    check_divergence_monotonicity,
    check_divergence_trend,
    check_exact_oracles,
    check_optimal_values,
    check_regression,
    _guarded,
)


@pytest.fixture
def config():
    return ExperimentConfig(scenario="two_state", verify_K=500, verify_seeds=5)


def test_oracle_checks_pass(config):
    for check in (check_optimal_values, check_regression, check_divergence_monotonicity, check_exact_oracles):
        result = check(config)
        assert result.passed, result.detail


def test_binary_search_check_passes(config):
    result = check_binary_search(config, instances=5)
    assert result.passed, result.detail


def test_algorithm_checks(config):
    names = {r.name: r.passed for r in check_algorithm(config)}
    assert names == {"pessimism": True, "variance_sandwich": True, "regret_decomposition": True}


def test_zero_radii_fail_pessimism():
    config = ExperimentConfig(scenario="default", radius_multiplier=0.0, verify_K=2000, verify_seeds=3)
    results = {r.name: r.passed for r in check_algorithm(config)}
    assert results["pessimism"] is False


def test_guard_turns_errors_into_failures():
    def boom():
        raise OracleInconsistencyError("no convergence")

    [result] = _guarded("check_binary_search", boom)
    assert result.name == "binary_search"
    assert not result.passed
    report = VerifyReport([result])
    assert report.exit_code == 1
    assert report.as_dict()["passed"] is False


def test_weighted_divergence_trend_on_high_variance_scenario():
    result = check_divergence_trend(ExperimentConfig(scenario="lottery", behavior="uniform"), seeds=2)
    assert result.passed, result.detail
    assert 4.0 <= result.detail["weighted"]["ratio"] <= 16.0


@pytest.mark.slow
def test_algorithm_checks_at_configured_seed_count():
    config = ExperimentConfig()
    assert config.verify_seeds == 100
    results = {r.name: r for r in check_algorithm(config)}
    assert all(r.passed for r in results.values()), {k: r.detail for k, r in results.items()}
    assert results["pessimism"].detail["runs"] == 100


@pytest.mark.slow
def test_sandwich_holds_with_informative_weights_over_configured_seeds():
    config = ExperimentConfig(scenario="lottery", profile="practical", radius_scales={"beta_first": 0.01}, K=(4000,), verify_K=4000)
    results = {r.name: r for r in check_algorithm(config)}
    assert results["variance_sandwich"].passed, results["variance_sandwich"].detail
    assert results["variance_sandwich"].detail["runs"] == config.verify_seeds
