# algorithm.py
"""Pessimistic nonlinear least-squares value iteration.

The variance phase runs on the second half of the data and produces the
per-cell weights sigma_hat; the planning phase runs on the first half. Neither
phase receives an MDP: everything is computed from dataset records.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Dict, Optional

import numpy as np

from .bonus import BonusRequest, default_bonus_oracle
from .confidence import (
    ConfidenceInputs,
    ConfidenceParams,
    RadiusScales,
    compute_confidence_params,
    log_bonus_class_size,
)
from .data import OfflineDataset, SplitDataset, empirical_occupancy, stage_statistics
from .errors import DatasetError
from .function_class import ClassFamily, coverage_constant
from .mdp import Policy
from .regression import default_regression_oracle

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"
SIGMA_MODES = ("estimated", "unit")


@dataclass(frozen=True)
class PnlsviConfig:
    delta: float = 0.1
    ridge: float = 1.0
    c_var: float = 1.0
    profile: str = "paper"
    practical_scale: float = 0.1
    radius_multiplier: float = 1.0
    scales: RadiusScales = field(default_factory=RadiusScales)
    bonus_method: str = "auto"
    alpha: float = 1e-3
    epsilon: float = 0.0
    epsilon_second: float = 0.0
    kappa: Optional[float] = None
    sigma_mode: str = "estimated"

    def __post_init__(self):
        if self.sigma_mode not in SIGMA_MODES:
            raise ValueError(f"sigma_mode must be one of {SIGMA_MODES}, got {self.sigma_mode!r}")
        if self.epsilon < 0 or self.epsilon_second < 0:
            raise ValueError("completeness gaps must be non-negative")


@dataclass(frozen=True)
class VariancePhaseOutput:
    f_bar: np.ndarray  # (H, S, A)
    g_bar: np.ndarray  # (H, S, A)
    f_check: np.ndarray  # (H, S, A)
    bonus: np.ndarray  # (H, S, A)
    sigma_sq: np.ndarray  # (H, S, A), in [1, H^2]

    @property
    def sigma(self) -> np.ndarray:
        return np.sqrt(self.sigma_sq)


@dataclass(frozen=True)
class PnlsviOutput:
    f_tilde: np.ndarray  # (H, S, A)
    bonus: np.ndarray  # (H, S, A)
    f_hat: np.ndarray  # (H, S, A); f_hat_{H+1} = 0 is implicit
    policy: Policy
    variance: VariancePhaseOutput
    params: ConfidenceParams
    diagnostics: Dict = field(default_factory=dict)

    @property
    def horizon(self) -> int:
        return self.f_hat.shape[0]

    def value(self, h: int) -> np.ndarray:
        """max_a f_hat_h(s, a), zero at h = H + 1."""
        if h == self.horizon + 1:
            return np.zeros(self.f_hat.shape[1])
        return self.f_hat[h - 1].max(axis=1)


def _next_values(tables: np.ndarray, h: int) -> np.ndarray:
    """V(s) = max_a f_{h+1}(s, a) for the 1-based stage h; zero past the horizon."""
    if h == tables.shape[0]:
        return np.zeros(tables.shape[1])
    return tables[h].max(axis=1)


def _targets(data: OfflineDataset, h: int, next_values: np.ndarray) -> np.ndarray:
    return data.rewards[:, h - 1] + next_values[data.next_states[:, h - 1]]


def empirical_kappa(data: OfflineDataset, family: ClassFamily) -> float:
    """Coverage constant of the family under the dataset's own visit frequencies."""
    occupancy = empirical_occupancy(data)
    kappa = min(coverage_constant(family.stage(h).first, occupancy, h) for h in range(1, family.horizon + 1))
    if kappa <= 1e-12:
        logger.warning("dataset leaves some direction uncovered; using kappa = 1/K")
        kappa = 1.0 / data.num_episodes
    return kappa


def confidence_inputs(config: PnlsviConfig, split: SplitDataset, family: ClassFamily) -> ConfidenceInputs:
    if split.num_episodes < 1:
        raise DatasetError("PNLSVI needs at least one episode per half")
    kappa = config.kappa if config.kappa is not None else empirical_kappa(split.second_half, family)
    log_n = family.log_size
    return ConfidenceInputs(
        delta=config.delta,
        ridge=config.ridge,
        num_episodes=split.num_episodes,
        horizon=family.horizon,
        log_class_size=log_n,
        log_bonus_size=log_bonus_class_size(log_n),
        kappa=kappa,
        value_range=float(family.horizon),
        epsilon=config.epsilon,
        epsilon_second=config.epsilon_second,
        c_var=config.c_var,
        profile=config.profile,
        practical_scale=config.practical_scale,
        radius_multiplier=config.radius_multiplier,
        scales=config.scales,
    )


def variance_estimation_phase(
    dbar: OfflineDataset, family: ClassFamily, params: ConfidenceParams, config: PnlsviConfig
) -> VariancePhaseOutput:
    H = family.horizon
    S, A = dbar.num_states, dbar.num_actions
    f_bar, g_bar, f_check, bonus, sigma_sq = (np.zeros((H, S, A)) for _ in range(5))
    for h in range(H, 0, -1):
        classes = family.stage(h)
        cap = float(H - h + 1)
        y = _targets(dbar, h, _next_values(f_check, h))
        first_stats = stage_statistics(dbar, h, y)
        first_fit = default_regression_oracle(classes.first, config.ridge).fit_statistics(classes.first, first_stats)
        second_stats = stage_statistics(dbar, h, y**2)
        second_fit = default_regression_oracle(classes.second, config.ridge).fit_statistics(classes.second, second_stats)
        request = BonusRequest(
            center=first_fit.values,
            beta=params.beta_first,
            weights=first_stats.weights,
            ridge=config.ridge,
            value_range=classes.first.value_range,
            alpha=config.alpha,
            log_bonus_size=params.inputs.log_bonus_size,
        )
        b = default_bonus_oracle(classes.first, config.bonus_method).table(classes.first, request)
        f_bar[h - 1], g_bar[h - 1], bonus[h - 1] = first_fit.values, second_fit.values, b.values
        f_check[h - 1] = np.clip(first_fit.values - b.values - config.epsilon, 0.0, cap)
        raw = second_fit.values - first_fit.values**2 - params.variance_offset
        sigma_sq[h - 1] = np.clip(np.maximum(raw, 1.0), 1.0, float(H * H))
        logger.debug("variance phase h=%d: max bonus %.4g, max sigma^2 %.4g", h, b.values.max(), sigma_sq[h - 1].max())
    return VariancePhaseOutput(f_bar, g_bar, f_check, bonus, sigma_sq)


def pessimistic_planning_phase(
    d: OfflineDataset,
    variance: VariancePhaseOutput,
    family: ClassFamily,
    params: ConfidenceParams,
    config: PnlsviConfig,
) -> PnlsviOutput:
    H = family.horizon
    S, A = d.num_states, d.num_actions
    sigma = np.ones((H, S, A)) if config.sigma_mode == "unit" else variance.sigma
    f_tilde, bonus, f_hat = (np.zeros((H, S, A)) for _ in range(3))
    calls, heuristic, provenance = 0, False, set()
    for h in range(H, 0, -1):
        first = family.stage(h).first
        y = _targets(d, h, _next_values(f_hat, h))
        stats = stage_statistics(d, h, y, sigma[h - 1])
        fit = default_regression_oracle(first, config.ridge).fit_statistics(first, stats)
        request = BonusRequest(
            center=fit.values,
            beta=params.beta,
            weights=stats.weights,
            ridge=config.ridge,
            value_range=first.value_range,
            alpha=config.alpha,
            log_bonus_size=params.inputs.log_bonus_size,
        )
        b = default_bonus_oracle(first, config.bonus_method).table(first, request)
        calls += b.oracle_calls
        heuristic = heuristic or b.heuristic
        provenance.add(b.provenance)
        f_tilde[h - 1], bonus[h - 1] = fit.values, b.values
        f_hat[h - 1] = np.clip(fit.values - b.values - config.epsilon, 0.0, float(H - h + 1))
    diagnostics = {
        "bonus_provenance": sorted(provenance),
        "binary_search_calls": calls,
        "heuristic_bonus": heuristic,
        "sigma_mode": config.sigma_mode,
        "kappa": params.inputs.kappa,
        "epsilon": config.epsilon,
    }
    return PnlsviOutput(f_tilde, bonus, f_hat, Policy.greedy(f_hat), variance, params, diagnostics)


def run_pnlsvi(split: SplitDataset, family: ClassFamily, config: PnlsviConfig) -> PnlsviOutput:
    """Variance phase on the second half, then pessimistic planning on the first."""
    if split.first_half.num_episodes != split.second_half.num_episodes:
        raise DatasetError("the two halves must hold the same number of episodes")
    if split.first_half.horizon != family.horizon:
        raise DatasetError(f"dataset horizon {split.first_half.horizon} != class family horizon {family.horizon}")
    params = compute_confidence_params(confidence_inputs(config, split, family))
    logger.info("variance estimation phase (K=%d)", split.num_episodes)
    variance = variance_estimation_phase(split.second_half, family, params, config)
    logger.info("pessimistic planning phase (K=%d)", split.num_episodes)
    return pessimistic_planning_phase(split.first_half, variance, family, params, config)


def pnlsvi_report(output: PnlsviOutput) -> Dict:
    """JSON-compatible report of one run."""

    def stages(table):
        return [np.round(t, 12).tolist() for t in table]

    return {
        "schema_version": REPORT_SCHEMA_VERSION,
        "horizon": output.horizon,
        "policy": output.policy.actions().tolist(),
        "f_hat": stages(output.f_hat),
        "f_tilde": stages(output.f_tilde),
        "bonus": stages(output.bonus),
        "sigma_sq": stages(output.variance.sigma_sq),
        "radii": output.params.as_dict(),
        "diagnostics": output.diagnostics,
    }
