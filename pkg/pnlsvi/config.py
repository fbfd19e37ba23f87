# config.py
"""Experiment configuration: JSON document -> schema check -> frozen ExperimentConfig.

Precedence is built-in defaults < config file < explicit overrides (CLI flags).
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple

from jsonschema import Draft7Validator
from packaging.version import InvalidVersion, Version

from . import settings
from .algorithm import PnlsviConfig
from .confidence import RadiusScales
from .data import epsilon_greedy_behavior, uniform_behavior
from .errors import ConfigError
from .function_class import ClassDiagnostics, ClassFamily, build_grid_family, build_tabular_linear_family
from .mdp import EpisodicMdp, Policy, mdp_from_document, optimal_values
from .scenarios import build_scenario

logger = logging.getLogger(__name__)

SCHEMA_VERSION = "1.0"
SCHEMA_PATH = Path(__file__).with_name("schemas") / "experiment.schema.json"


@dataclass(frozen=True)
class ExperimentConfig:
    scenario: str = "default"
    mdp_seed: int = 0
    mdp: Optional[Dict[str, Any]] = None
    behavior: str = "epsilon-greedy"
    behavior_epsilon: float = 0.3
    function_class: str = "tabular-linear"
    grid_levels: int = 9
    net_eps: float = 0.01
    K: Tuple[int, ...] = (500, 1000, 2000, 4000, 8000)
    seeds: Tuple[int, ...] = tuple(range(10))
    delta: float = 0.1
    ridge: float = 1.0
    c_var: Optional[float] = None  # None: fitted on calibration seeds before any cell runs
    c_var_seeds: int = 10
    profile: str = "paper"
    practical_scale: float = 0.1
    radius_multiplier: float = 1.0
    radius_scales: Dict[str, float] = field(default_factory=dict)
    bonus_method: str = "auto"
    alpha: float = 1e-3
    sigma_mode: str = "estimated"
    verify_K: int = 4000
    verify_seeds: int = 100
    output_csv: str = "results/sweep.csv"
    output_json: str = "results/summary.json"
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self):
        if not self.seeds:
            raise ConfigError("seed list must not be empty")
        if not self.K or min(self.K) < 1:
            raise ConfigError("K values must be positive")

    def build_mdp(self) -> EpisodicMdp:
        if self.mdp is not None:
            return mdp_from_document(self.mdp)
        return build_scenario(self.scenario, self.mdp_seed)

    def behavior_policy(self, mdp: EpisodicMdp, optimal: Optional[Policy] = None) -> Policy:
        if self.behavior == "uniform":
            return uniform_behavior(mdp)
        target = optimal if optimal is not None else optimal_values(mdp).policy
        return epsilon_greedy_behavior(target, self.behavior_epsilon)

    def build_family(self, mdp: EpisodicMdp) -> ClassFamily:
        if self.function_class == "grid":
            return build_grid_family(mdp.num_states, mdp.num_actions, mdp.horizon, self.grid_levels)
        if self.function_class == "tabular-linear":
            return build_tabular_linear_family(mdp.num_states, mdp.num_actions, mdp.horizon, self.net_eps)
        raise ConfigError(f"unknown function class {self.function_class!r}")

    def pnlsvi_config(self, diagnostics: Optional[ClassDiagnostics] = None) -> PnlsviConfig:
        """Algorithm settings, with measured completeness gaps and coverage when available."""
        if self.c_var is None:
            raise ConfigError("c_var is not fitted yet; see experiment.calibrate_config")
        measured = {}
        if diagnostics is not None:
            measured = dict(epsilon=diagnostics.epsilon, epsilon_second=diagnostics.epsilon_second, kappa=diagnostics.kappa)
        return PnlsviConfig(
            delta=self.delta,
            ridge=self.ridge,
            c_var=self.c_var,
            profile=self.profile,
            practical_scale=self.practical_scale,
            radius_multiplier=self.radius_multiplier,
            scales=RadiusScales(**self.radius_scales),
            bonus_method=self.bonus_method,
            alpha=self.alpha,
            sigma_mode=self.sigma_mode,
            **measured,
        )

    def with_overrides(self, **overrides) -> "ExperimentConfig":
        return coerce_document({**self.as_document(), **{k: v for k, v in overrides.items() if v is not None}})

    def as_document(self) -> Dict[str, Any]:
        doc = asdict(self)
        doc["K"], doc["seeds"] = list(self.K), list(self.seeds)
        return doc


def _load_schema() -> Dict[str, Any]:
    with SCHEMA_PATH.open("r", encoding="utf-8") as f:
        return json.load(f)


def validate_document(doc: Dict[str, Any]) -> List[str]:
    """Schema violations as readable strings (empty when valid)."""
    validator = Draft7Validator(_load_schema())
    return [f"{list(e.path)}: {e.message}" for e in sorted(validator.iter_errors(doc), key=lambda e: list(e.path))]


def check_schema_version(version: str, expected: str = SCHEMA_VERSION) -> None:
    try:
        found, wanted = Version(str(version)), Version(expected)
    except InvalidVersion as exc:
        raise ConfigError(f"invalid schema_version {version!r}") from exc
    if found.major != wanted.major:
        raise ConfigError(f"schema_version {found} is incompatible with {wanted}")


def coerce_document(doc: Dict[str, Any]) -> ExperimentConfig:
    """Keep the known keys, fill the missing ones with defaults and freeze.

    Unknown keys are dropped with a warning.
    """
    if not isinstance(doc, dict):
        raise ConfigError("experiment configuration must be a JSON object")
    known = {f.name for f in fields(ExperimentConfig)}
    dropped = sorted(set(doc) - known)
    if dropped:
        logger.warning("ignoring unknown config keys: %s", ", ".join(dropped))
    values = {k: v for k, v in doc.items() if k in known}
    errors = validate_document(values)
    if errors:
        raise ConfigError("invalid experiment configuration: " + "; ".join(errors))
    check_schema_version(values.get("schema_version", SCHEMA_VERSION))
    for key in ("K", "seeds"):
        if key in values:
            values[key] = tuple(int(x) for x in values[key])
    if "radius_scales" in values:
        values["radius_scales"] = dict(values["radius_scales"])
    return ExperimentConfig(**values)


def load_config(path: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None) -> ExperimentConfig:
    """Defaults, then the file (``path`` or PNLSVI_CONFIG_PATH), then overrides."""
    doc: Dict[str, Any] = {}
    path = path or settings.default_config_path()
    if path:
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"config file not found: {p}")
        with p.open("r", encoding="utf-8") as f:
            doc = json.load(f)
        logger.info("loaded experiment config from %s", p)
    if overrides:
        doc = {**doc, **{k: v for k, v in overrides.items() if v is not None}}
    return coerce_document(doc)

