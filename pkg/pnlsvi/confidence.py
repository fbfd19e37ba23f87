# confidence.py
"""Confidence radii of the two phases.

Class sizes enter only through logarithms and are carried as log N and
log N_b so that grid and linear classes never overflow.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field
from typing import Dict

logger = logging.getLogger(__name__)

# "analytic" is an alias of "paper".
PROFILES = ("paper", "practical", "analytic")


@dataclass(frozen=True)
class RadiusScales:
    """Multipliers applied on top of the profile scale (all default to 1)."""

    beta_first: float = 1.0
    beta_second: float = 1.0
    beta: float = 1.0
    variance_offset: float = 1.0


@dataclass(frozen=True)
class ConfidenceInputs:
    delta: float
    ridge: float
    num_episodes: int  # K, episodes per half
    horizon: int
    log_class_size: float  # log N
    log_bonus_size: float  # log N_b
    kappa: float
    value_range: float  # L
    epsilon: float = 0.0
    epsilon_second: float = 0.0
    c_var: float = 1.0
    profile: str = "paper"
    practical_scale: float = 0.1
    radius_multiplier: float = 1.0
    scales: RadiusScales = field(default_factory=RadiusScales)

    def __post_init__(self):
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"delta must lie in (0, 1), got {self.delta}")
        if self.ridge <= 0:
            raise ValueError("lambda must be positive")
        if self.num_episodes < 1 or self.horizon < 1:
            raise ValueError("K and H must be positive")
        if self.profile not in PROFILES:
            raise ValueError(f"unknown radius profile {self.profile!r}")
        if self.kappa <= 0:
            raise ValueError("coverage constant kappa must be positive")


@dataclass(frozen=True)
class ConfidenceParams:
    inputs: ConfidenceInputs
    i: float
    i_prime: float
    v: float
    iota: float
    beta_first: float  # beta-bar_1, radius of the first-moment fit
    beta_second: float  # beta-bar_2, radius of the second-moment fit
    beta: float  # beta_h, radius of the weighted fit
    variance_offset: float

    def as_dict(self) -> Dict:
        return asdict(self)


def _log_pair_count(log_n: float) -> float:
    """log(N (N - 1) / 2) from log N, floored at log 2."""
    if log_n <= 0.0:
        return math.log(2.0)
    value = 2.0 * log_n + math.log1p(-math.exp(-log_n)) - math.log(2.0)
    return max(value, math.log(2.0))


def log_bonus_class_size(log_class_size: float) -> float:
    """log N_b with N_b the number of member pairs."""
    return _log_pair_count(log_class_size)


def radius_i(delta: float, log_n: float, log_nb: float, H: int, K: int, L: float) -> float:
    L = max(L, 1.0)
    inner = log_n + log_nb + math.log(H * (2.0 * math.log(4.0 * K) + 2.0) * (math.log(2.0 * L) + 2.0) / delta)
    return math.sqrt(2.0 * inner)


def radius_i_prime(delta: float, log_n: float, log_nb: float, H: int, K: int, L: float) -> float:
    L = max(L, 1.0)
    inner = log_n + log_nb + math.log(H * (2.0 * math.log(4.0 * L * K) + 2.0) * (math.log(4.0 * L) + 2.0) / delta)
    return math.sqrt(4.0 * inner)


def radius_v(delta: float, log_n: float, H: int, T: int, L: float) -> float:
    L = max(L, 1.0)
    inner = log_n + math.log(H * (2.0 * math.log(18.0 * L * T) + 2.0) * (math.log(18.0 * L) + 2.0) / delta)
    return math.sqrt(2.0 * inner)


def radius_iota(delta: float, log_n: float, log_nb: float, H: int, T: int, L: float) -> float:
    L = max(L, 1.0)
    inner = log_n + log_nb + math.log(H * (2.0 * math.log(18.0 * L * T) + 2.0) * (math.log(18.0 * L) + 2.0) / delta)
    return math.sqrt(3.0 * inner)


def compute_confidence_params(inputs: ConfidenceInputs) -> ConfidenceParams:
    """Closed-form radii; T is taken to be K."""
    H, K, L = inputs.horizon, inputs.num_episodes, inputs.value_range
    log_n = inputs.log_class_size
    log_nb = max(inputs.log_bonus_size, math.log(2.0))
    i = radius_i(inputs.delta, log_n, log_nb, H, K, L)
    i_prime = radius_i_prime(inputs.delta, log_n, log_nb, H, K, L)
    v = radius_v(inputs.delta, log_n, H, K, L)
    iota = radius_iota(inputs.delta, log_n, log_nb, H, K, L)

    beta_first = math.sqrt((48.0 * H**2 + 10.0) * i**2 + 16.0 * K * H * inputs.epsilon)
    beta_second = math.sqrt((40.0 * H**4 + 10.0) * i_prime**2 + 16.0 * K * L * inputs.epsilon_second)
    lam = inputs.ridge
    beta = math.sqrt(
        2.0
        * (
            4.0 / 3.0 * v * math.sqrt(lam)
            + math.sqrt(2.0) * v
            + 30.0 * v**2
            + 2.0 / 3.0 * iota**2 / log_nb
            + 8.0 * K * L * inputs.epsilon
        )
    )
    offset = inputs.c_var * math.sqrt(log_n + log_nb) * H**3 / math.sqrt(K * inputs.kappa)

    scale = inputs.radius_multiplier * (inputs.practical_scale if inputs.profile == "practical" else 1.0)
    params = ConfidenceParams(
        inputs=inputs,
        i=i,
        i_prime=i_prime,
        v=v,
        iota=iota,
        beta_first=beta_first * scale * inputs.scales.beta_first,
        beta_second=beta_second * scale * inputs.scales.beta_second,
        beta=beta * scale * inputs.scales.beta,
        variance_offset=offset * inputs.scales.variance_offset,
    )
    logger.debug(
        "radii: beta_first=%.4g beta_second=%.4g beta=%.4g offset=%.4g",
        params.beta_first,
        params.beta_second,
        params.beta,
        params.variance_offset,
    )
    return params
