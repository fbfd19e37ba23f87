import math
from dataclasses import replace

import pytest

from pnlsvi.confidence import (
    ConfidenceInputs,
    RadiusScales,
    compute_confidence_params,
    log_bonus_class_size,
    radius_i,
)


def _inputs(**kw):
    base = dict(
        delta=0.1,
        ridge=1.0,
        num_episodes=1000,
        horizon=3,
        log_class_size=10.0,
        log_bonus_size=log_bonus_class_size(10.0),
        kappa=0.05,
        value_range=3.0,
    )
    base.update(kw)
    return ConfidenceInputs(**base)


def test_pair_count_in_log_domain():
    assert log_bonus_class_size(math.log(3)) == pytest.approx(math.log(3))
    assert log_bonus_class_size(math.log(1000)) == pytest.approx(math.log(1000 * 999 / 2))
    assert log_bonus_class_size(0.0) == pytest.approx(math.log(2))
    assert math.isfinite(log_bonus_class_size(1e5))


def test_radius_i_value():
    expected = math.sqrt(2 * (3.0 + math.log(2 * (2 * math.log(40) + 2) * (math.log(4) + 2) / 0.1)))
    assert radius_i(0.1, 1.0, 2.0, 2, 10, 2.0) == pytest.approx(expected)


def test_practical_profile_scales_radii_but_not_offset():
    paper = compute_confidence_params(_inputs())
    practical = compute_confidence_params(_inputs(profile="practical", practical_scale=0.1))
    assert practical.beta == pytest.approx(0.1 * paper.beta)
    assert practical.beta_first == pytest.approx(0.1 * paper.beta_first)
    assert practical.beta_second == pytest.approx(0.1 * paper.beta_second)
    assert practical.variance_offset == pytest.approx(paper.variance_offset)


def test_multiplier_and_per_radius_scales():
    zero = compute_confidence_params(_inputs(radius_multiplier=0.0))
    assert zero.beta == zero.beta_first == zero.beta_second == 0.0
    scaled = compute_confidence_params(_inputs(scales=RadiusScales(beta=2.0, variance_offset=0.5)))
    plain = compute_confidence_params(_inputs())
    assert scaled.beta == pytest.approx(2.0 * plain.beta)
    assert scaled.beta_first == pytest.approx(plain.beta_first)
    assert scaled.variance_offset == pytest.approx(0.5 * plain.variance_offset)


def test_offset_shrinks_like_one_over_sqrt_k():
    a = compute_confidence_params(_inputs(num_episodes=400))
    b = compute_confidence_params(_inputs(num_episodes=1600))
    assert a.variance_offset / b.variance_offset == pytest.approx(2.0)


def test_completeness_gap_inflates_radii():
    exact = compute_confidence_params(_inputs())
    gapped = compute_confidence_params(_inputs(epsilon=0.01, epsilon_second=0.01))
    assert gapped.beta > exact.beta
    assert gapped.beta_first > exact.beta_first
    assert gapped.beta_second > exact.beta_second


def test_report_is_plain_dict():
    params = compute_confidence_params(_inputs())
    doc = params.as_dict()
    assert doc["beta"] == params.beta
    assert doc["inputs"]["scales"]["beta"] == 1.0


def test_input_validation():
    with pytest.raises(ValueError):
        _inputs(delta=1.0)
    with pytest.raises(ValueError):
        _inputs(kappa=0.0)
    with pytest.raises(ValueError):
        _inputs(profile="loose")
    with pytest.raises(ValueError):
        replace(_inputs(), ridge=0.0)
