import numpy as np
import pytest

from pnlsvi.errors import ConfigError
from pnlsvi.mdp import conditional_variance, optimal_values
from pnlsvi.scenarios import SCENARIOS, build_scenario, deterministic_chain, lottery_instance, random_mdp, show_mdp


def test_two_state_optimum(two_state):
    opt = optimal_values(two_state)
    np.testing.assert_allclose(opt.v[1], [0.6, 0.7])
    np.testing.assert_allclose(opt.q[0], [[0.83, 1.46], [1.55, 0.78]])
    np.testing.assert_array_equal(opt.policy.actions(), [[1, 0], [1, 0]])


def test_random_mdp_respects_floor():
    mdp = random_mdp(3, 2, 3, seed=7, floor=0.1)
    assert mdp.transitions.min() >= 0.1 - 1e-12
    assert mdp.transitions.max() <= 0.9 + 1e-12
    np.testing.assert_allclose(mdp.transitions.sum(axis=-1), 1.0)
    again = random_mdp(3, 2, 3, seed=7, floor=0.1)
    np.testing.assert_array_equal(mdp.rewards, again.rewards)


def test_chain_is_deterministic():
    chain = deterministic_chain()
    assert set(np.unique(chain.transitions)) == {0.0, 1.0}
    assert optimal_values(chain).v[0][0] > 0


def test_registry():
    for name in SCENARIOS:
        assert build_scenario(name).horizon >= 1
    with pytest.raises(ConfigError):
        build_scenario("nowhere")


def test_show_mdp_lists_every_stage(default_mdp):
    text = show_mdp(default_mdp)
    assert "S=3 A=2 H=3" in text
    assert text.count("stage ") == 3


def test_lottery_has_large_conditional_variance():
    mdp = lottery_instance()
    opt = optimal_values(mdp)
    np.testing.assert_allclose(opt.v[1][1:], [3.0, 0.0])
    assert conditional_variance(mdp, 1, opt.v[1]).values[0, 0] == pytest.approx(2.25)
    assert conditional_variance(mdp, 1, opt.v[1]).values[0, 1] == pytest.approx(0.0)
    assert mdp.initial_distribution.min() > 0
