import numpy as np
import pytest

from pnlsvi.errors import InvalidMdpError, InvalidPolicyError
from pnlsvi.mdp import (
    EpisodicMdp,
    Policy,
    StageValueFunction,
    all_deterministic_policies,
    bellman_apply,
    bellman_second_moment,
    brute_force_optimal_values,
    conditional_variance,
    mdp_from_document,
    mdp_to_document,
    monte_carlo_policy_value,
    occupancy_measure,
    optimal_values,
    policy_value,
    truncated_variance,
)
from pnlsvi.scenarios import random_mdp


def test_two_state_optimal_values(two_state):
    opt = optimal_values(two_state)
    np.testing.assert_allclose(opt.v[1], [0.6, 0.7])
    np.testing.assert_allclose(opt.q[0], [[0.83, 1.46], [1.55, 0.78]])
    np.testing.assert_allclose(opt.v[0], [1.46, 1.55])
    np.testing.assert_array_equal(opt.v[2], [0.0, 0.0])
    np.testing.assert_array_equal(opt.policy.actions(), [[1, 0], [1, 0]])


def test_policy_value_of_optimal_policy_matches(two_state):
    opt = optimal_values(two_state)
    np.testing.assert_allclose(policy_value(two_state, opt.policy).v, opt.v, atol=1e-12)


def test_brute_force_agrees_with_backward_induction():
    for seed in range(5):
        mdp = random_mdp(3, 2, 2, seed)
        brute, best = brute_force_optimal_values(mdp)
        opt = optimal_values(mdp)
        np.testing.assert_allclose(brute, opt.v[0], atol=1e-9)
        assert mdp.initial_distribution @ policy_value(mdp, best).v[0] == pytest.approx(mdp.initial_distribution @ opt.v[0])


def test_brute_force_matches_policy_enumeration(two_state):
    scores = [two_state.initial_distribution @ policy_value(two_state, pi).v[0] for pi in all_deterministic_policies(two_state)]
    assert len(scores) == 16
    _, best = brute_force_optimal_values(two_state, chunk=3)
    assert two_state.initial_distribution @ policy_value(two_state, best).v[0] == pytest.approx(max(scores))


def test_invalid_tables_rejected(two_state):
    with pytest.raises(InvalidMdpError):
        EpisodicMdp(two_state.rewards + 0.5, two_state.transitions, two_state.initial_distribution)
    bad = np.array(two_state.transitions)
    bad[0, 0, 0] = [0.5, 0.6]
    with pytest.raises(InvalidMdpError):
        EpisodicMdp(two_state.rewards, bad, two_state.initial_distribution)
    with pytest.raises(InvalidMdpError):
        EpisodicMdp(two_state.rewards, two_state.transitions[:1], two_state.initial_distribution)
    with pytest.raises(InvalidMdpError):
        EpisodicMdp(two_state.rewards, two_state.transitions, [0.3, 0.3])


def test_stage_checks(two_state):
    with pytest.raises(InvalidMdpError):
        bellman_apply(two_state, 3, np.zeros(2))
    with pytest.raises(InvalidMdpError):
        bellman_apply(two_state, 1, StageValueFunction(3, np.zeros(2)))
    with pytest.raises(InvalidMdpError):
        bellman_apply(two_state, 1, np.zeros(3))


def test_conditional_variance_by_hand(two_state):
    v2 = np.array([0.6, 0.7])
    var = conditional_variance(two_state, 1, v2).values
    assert var[0, 0] == pytest.approx(0.7 * 0.36 + 0.3 * 0.49 - 0.63**2)
    np.testing.assert_allclose(truncated_variance(two_state, 1, v2).values, np.ones((2, 2)))


def test_second_moment_minus_square_is_variance(default_mdp):
    V = np.array([0.3, 1.2, 2.0])
    first = bellman_apply(default_mdp, 2, V).values
    second = bellman_second_moment(default_mdp, 2, V).values
    np.testing.assert_allclose(second - first**2, conditional_variance(default_mdp, 2, V).values, atol=1e-12)


def test_occupancy_is_a_distribution_per_stage(default_mdp):
    pi = Policy.uniform(3, 3, 2)
    d = occupancy_measure(default_mdp, pi)
    np.testing.assert_allclose(d.probs.reshape(3, -1).sum(axis=1), 1.0)
    np.testing.assert_allclose(d.stage(1), default_mdp.initial_distribution[:, None] * 0.5)


def test_monte_carlo_matches_exact_value(two_state):
    opt = optimal_values(two_state)
    mean, stderr = monte_carlo_policy_value(two_state, opt.policy, 20000, seed=7)
    assert abs(mean - two_state.initial_distribution @ opt.v[0]) < 4 * stderr + 1e-3


def test_document_round_trip(default_mdp):
    doc = mdp_to_document(default_mdp)
    back = mdp_from_document(doc)
    np.testing.assert_array_equal(back.rewards, default_mdp.rewards)
    np.testing.assert_array_equal(back.transitions, default_mdp.transitions)
    with pytest.raises(InvalidMdpError):
        mdp_from_document({**doc, "horizon": 7})
    with pytest.raises(InvalidMdpError):
        mdp_from_document({"rewards": doc["rewards"]})


def test_deterministic_policy_rejects_bad_action():
    with pytest.raises(InvalidPolicyError):
        Policy.deterministic([[0, 2]], 2)


def test_greedy_breaks_ties_low():
    pi = Policy.greedy(np.array([[[1.0, 1.0], [0.0, 2.0]]]))
    np.testing.assert_array_equal(pi.actions(), [[0, 1]])
