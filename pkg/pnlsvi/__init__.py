"""Pessimistic nonlinear least-squares value iteration for offline RL."""
from .algorithm import PnlsviConfig, PnlsviOutput, pnlsvi_report, run_pnlsvi
from .config import ExperimentConfig, load_config
from .data import OfflineDataset, SplitDataset, rollout_dataset, split_dataset
from .errors import PnlsviError
from .experiment import calibrate_config, run_cell, suboptimality_gap, sweep, theorem_bound_rhs
from .function_class import (
    ClassFamily,
    FiniteFunctionClass,
    GridFunctionClass,
    LinearFunctionClass,
    build_grid_family,
    build_tabular_linear_family,
)
from .mdp import EpisodicMdp, Policy, optimal_values, policy_value
from .scenarios import build_scenario

__all__ = [
    "ClassFamily",
    "EpisodicMdp",
    "ExperimentConfig",
    "FiniteFunctionClass",
    "GridFunctionClass",
    "LinearFunctionClass",
    "OfflineDataset",
    "PnlsviConfig",
    "PnlsviError",
    "PnlsviOutput",
    "Policy",
    "SplitDataset",
    "build_grid_family",
    "calibrate_config",
    "build_scenario",
    "build_tabular_linear_family",
    "load_config",
    "optimal_values",
    "pnlsvi_report",
    "policy_value",
    "rollout_dataset",
    "run_cell",
    "run_pnlsvi",
    "split_dataset",
    "suboptimality_gap",
    "sweep",
    "theorem_bound_rhs",
]
