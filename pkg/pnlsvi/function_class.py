# function_class.py
"""Hypothesis families F_h over S x A.

Every member of every class is a table over S x A, so the oracles work on
per-cell statistics. Three concrete classes exist:

* ``FiniteFunctionClass``: an explicit member tensor (N, S, A).
* ``GridFunctionClass``: the product class whose value at every cell lies on
  a shared level set. Members are only materialized on request; regression,
  divergence, coverage, completeness and the exhaustive bonus use exact
  per-cell formulas instead.
* ``LinearFunctionClass``: clamp(<phi(s, a), theta>, 0, L) with |theta| <= B.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

from . import settings
from .errors import EnumerationCapExceeded, InvalidMdpError
from .mdp import (
    EpisodicMdp,
    OccupancyMeasure,
    StageValueFunction,
    bellman_apply,
    bellman_second_moment,
    optimal_values,
)

logger = logging.getLogger(__name__)

DEFAULT_NET_EPS = 0.01


class FunctionClass:
    """Shared surface of every class: dimensions, range and log-cardinality."""

    num_states: int
    num_actions: int
    value_range: float
    name: str

    @property
    def log_size(self) -> float:
        raise NotImplementedError

    @property
    def is_convex(self) -> bool:
        return False

    def _check_table(self, values) -> np.ndarray:
        values = np.asarray(values, dtype=float)
        if values.shape != (self.num_states, self.num_actions):
            raise InvalidMdpError(f"expected a ({self.num_states}, {self.num_actions}) table, got {values.shape}")
        return values


def _dedupe_members(members: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """Distinct members in order of first appearance, with those positions."""
    flat = members.reshape(members.shape[0], -1)
    _, first = np.unique(flat, axis=0, return_index=True)
    first = np.sort(first)
    return members[first], first


@dataclass(frozen=True)
class FiniteFunctionClass(FunctionClass):
    """Explicit member tensor (N, S, A); duplicates are dropped at construction.

    ``source_indices[i]`` is the position of member i in the tensor the class
    was built from, so indices returned by the regression oracles can be
    mapped back to a caller's own list.
    """

    members: np.ndarray
    value_range: float
    name: str = "finite"
    source_indices: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        members = np.array(self.members, dtype=float, copy=True)
        if members.ndim != 3 or members.shape[0] < 1:
            raise InvalidMdpError(f"members must be a non-empty (N, S, A) tensor, got {members.shape}")
        if members.min() < -1e-12 or members.max() > self.value_range + 1e-12:
            raise InvalidMdpError(f"member values must lie in [0, {self.value_range}]")
        members, first = _dedupe_members(np.clip(members, 0.0, self.value_range))
        members.setflags(write=False)
        first.setflags(write=False)
        object.__setattr__(self, "source_indices", first)
        object.__setattr__(self, "members", members)
        object.__setattr__(self, "value_range", float(self.value_range))

    @property
    def num_states(self) -> int:
        return self.members.shape[1]

    @property
    def num_actions(self) -> int:
        return self.members.shape[2]

    @property
    def size(self) -> int:
        return self.members.shape[0]

    @property
    def log_size(self) -> float:
        return math.log(self.size)

    def member(self, index: int) -> np.ndarray:
        return self.members[index]

    def scaled(self, factor: float) -> "FiniteFunctionClass":
        return FiniteFunctionClass(self.members * factor, self.value_range * factor, f"{self.name}*{factor:g}")


@dataclass(frozen=True)
class GridFunctionClass(FunctionClass):
    """All tables with every entry on ``levels`` (a sorted, deduplicated grid)."""

    num_states: int
    num_actions: int
    levels: np.ndarray
    value_range: float
    name: str = "grid"

    def __post_init__(self):
        levels = np.unique(np.asarray(self.levels, dtype=float))
        levels.setflags(write=False)
        object.__setattr__(self, "levels", levels)
        object.__setattr__(self, "value_range", float(self.value_range))

    @property
    def num_cells(self) -> int:
        return self.num_states * self.num_actions

    @property
    def num_levels(self) -> int:
        return len(self.levels)

    @property
    def size(self) -> int:
        return self.num_levels**self.num_cells

    @property
    def log_size(self) -> float:
        return self.num_cells * math.log(self.num_levels)

    @property
    def span(self) -> float:
        return float(self.levels[-1] - self.levels[0])

    def level_indices(self, index: int) -> np.ndarray:
        """Per-cell level digits of member ``index``; cell (0, 0) is most significant."""
        digits = np.zeros(self.num_cells, dtype=np.int64)
        for c in range(self.num_cells - 1, -1, -1):
            index, digits[c] = divmod(index, self.num_levels)
        return digits.reshape(self.num_states, self.num_actions)

    def member_index(self, digits: np.ndarray) -> int:
        index = 0
        for d in np.asarray(digits).reshape(-1):
            index = index * self.num_levels + int(d)
        return index

    def member(self, index: int) -> np.ndarray:
        return self.levels[self.level_indices(index)]

    @property
    def members(self) -> np.ndarray:
        return self.materialize().members

    def materialize(self, cap: Optional[int] = None) -> FiniteFunctionClass:
        cap = settings.enumeration_cap() if cap is None else cap
        if self.size > cap:
            raise EnumerationCapExceeded(f"grid class has {self.size} members, cap is {cap}")
        grids = np.meshgrid(*([self.levels] * self.num_cells), indexing="ij")
        members = np.stack([g.reshape(-1) for g in grids], axis=1)
        return FiniteFunctionClass(members.reshape(-1, self.num_states, self.num_actions), self.value_range, self.name)

    def nearest(self, target: np.ndarray) -> np.ndarray:
        """Member closest to ``target`` in sup norm (per-cell rounding)."""
        target = np.asarray(target, dtype=float)
        idx = np.abs(target[..., None] - self.levels).argmin(axis=-1)
        return self.levels[idx]


@dataclass(frozen=True)
class LinearFunctionClass(FunctionClass):
    """clamp(<phi(s, a), theta>, 0, L) over |theta|_2 <= B; features (S, A, d)."""

    features: np.ndarray
    norm_bound: float
    value_range: float
    net_eps: float = DEFAULT_NET_EPS
    name: str = "linear"

    def __post_init__(self):
        features = np.array(self.features, dtype=float, copy=True)
        if features.ndim != 3:
            raise InvalidMdpError(f"features must be (S, A, d), got {features.shape}")
        if np.linalg.norm(features, axis=-1).max(initial=0.0) > 1.0 + 1e-12:
            raise InvalidMdpError("feature vectors must have norm at most 1; use from_raw_features")
        if self.norm_bound < 0:
            raise InvalidMdpError("norm bound must be non-negative")
        features.setflags(write=False)
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "value_range", float(self.value_range))

    @classmethod
    def from_raw_features(cls, features, norm_bound: float, value_range: float, **kwargs) -> "LinearFunctionClass":
        """Rescale features to unit norm and the bound B accordingly; the class is unchanged."""
        features = np.asarray(features, dtype=float)
        scale = max(float(np.linalg.norm(features, axis=-1).max(initial=0.0)), 1.0)
        return cls(features / scale, norm_bound * scale, value_range, **kwargs)

    @property
    def num_states(self) -> int:
        return self.features.shape[0]

    @property
    def num_actions(self) -> int:
        return self.features.shape[1]

    @property
    def dim(self) -> int:
        return self.features.shape[2]

    @property
    def is_convex(self) -> bool:
        return True

    @property
    def log_size(self) -> float:
        """log of the eps-net size used as the class cardinality."""
        spacing = _net_spacing(self.net_eps, self.dim)
        return self.dim * math.log(_net_points_per_axis(self.norm_bound, spacing))

    def raw_values(self, theta) -> np.ndarray:
        return self.features @ np.asarray(theta, dtype=float)

    def evaluate(self, theta) -> np.ndarray:
        return np.clip(self.raw_values(theta), 0.0, self.value_range)

    def project(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        norm = float(np.linalg.norm(theta))
        if norm > self.norm_bound:
            return theta * (self.norm_bound / norm) if norm > 0 else theta
        return theta


@dataclass(frozen=True)
class StageClasses:
    """``first`` fits T_h (range H-h+1); ``second`` fits T_{2,h} (range (H-h+1)^2)."""

    first: FunctionClass
    second: FunctionClass


@dataclass(frozen=True)
class ClassFamily:
    stages: Tuple[StageClasses, ...]
    kind: str = "custom"

    @property
    def horizon(self) -> int:
        return len(self.stages)

    def stage(self, h: int) -> StageClasses:
        return self.stages[h - 1]

    @property
    def log_size(self) -> float:
        """log N with N the largest class of the family."""
        return max(max(s.first.log_size, s.second.log_size) for s in self.stages)


@dataclass(frozen=True)
class ClassDiagnostics:
    epsilon: float
    kappa: float
    epsilon_second: float = 0.0
    stage_epsilon: Tuple[float, ...] = field(default_factory=tuple)
    stage_kappa: Tuple[float, ...] = field(default_factory=tuple)

    def as_dict(self) -> dict:
        return {
            "epsilon": self.epsilon,
            "epsilon_second": self.epsilon_second,
            "kappa": self.kappa,
            "stage_epsilon": list(self.stage_epsilon),
            "stage_kappa": list(self.stage_kappa),
        }


def build_grid_class(num_states: int, num_actions: int, levels: int, value_range: float, cap: Optional[int] = None) -> GridFunctionClass:
    if levels < 2:
        raise InvalidMdpError("a grid class needs at least 2 levels")
    cls = GridFunctionClass(num_states, num_actions, np.linspace(0.0, value_range, levels), value_range)
    cap = settings.enumeration_cap() if cap is None else cap
    if cls.size > cap:
        raise EnumerationCapExceeded(f"grid class would have {cls.size} members, cap is {cap}")
    return cls


def build_tabular_linear_class(num_states: int, num_actions: int, value_range: float, net_eps: float = DEFAULT_NET_EPS) -> LinearFunctionClass:
    """One-hot features; every table in [0, L]^(S x A) is a member."""
    d = num_states * num_actions
    features = np.eye(d).reshape(num_states, num_actions, d)
    return LinearFunctionClass(features, math.sqrt(d) * value_range, value_range, net_eps=net_eps, name="tabular-linear")


def build_grid_family(num_states: int, num_actions: int, horizon: int, levels: int) -> ClassFamily:
    stages = []
    for h in range(1, horizon + 1):
        L = horizon - h + 1
        stages.append(
            StageClasses(
                build_grid_class(num_states, num_actions, levels, L),
                build_grid_class(num_states, num_actions, levels, L * L),
            )
        )
    return ClassFamily(tuple(stages), kind="grid")


def build_tabular_linear_family(num_states: int, num_actions: int, horizon: int, net_eps: float = DEFAULT_NET_EPS) -> ClassFamily:
    stages = []
    for h in range(1, horizon + 1):
        L = horizon - h + 1
        stages.append(
            StageClasses(
                build_tabular_linear_class(num_states, num_actions, L, net_eps),
                build_tabular_linear_class(num_states, num_actions, L * L, net_eps),
            )
        )
    return ClassFamily(tuple(stages), kind="tabular-linear")


def _net_spacing(eps: float, dim: int) -> float:
    return eps / math.sqrt(dim)


def _net_points_per_axis(norm_bound: float, spacing: float) -> int:
    return 2 * int(math.floor(norm_bound / spacing + 1e-12)) + 1


def linear_epsilon_net(cls: LinearFunctionClass, eps: float, cap: Optional[int] = None) -> FiniteFunctionClass:
    """Finite sup-norm eps-cover of a linear class.

    Parameters lie on the zero-centred grid spacing * Z^d with spacing
    eps / sqrt(d), intersected with the ball |theta| <= B. Rounding every
    coordinate of a ball point towards zero lands on a net point inside the
    ball at distance at most eps, and features have norm at most 1.
    """
    if eps <= 0:
        raise InvalidMdpError("net eps must be positive")
    cap = settings.enumeration_cap() if cap is None else cap
    d = cls.dim
    spacing = _net_spacing(eps, d)
    per_axis = _net_points_per_axis(cls.norm_bound, spacing)
    if per_axis**d > cap:
        raise EnumerationCapExceeded(f"eps-net grid has {per_axis}^{d} points, cap is {cap}")
    half = per_axis // 2
    axis = spacing * np.arange(-half, half + 1)
    thetas = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), axis=-1).reshape(-1, d)
    thetas = thetas[np.linalg.norm(thetas, axis=1) <= cls.norm_bound * (1.0 + 1e-12)]
    members = np.clip(np.einsum("sad,nd->nsa", cls.features, thetas), 0.0, cls.value_range)
    return FiniteFunctionClass(members, cls.value_range, name=f"{cls.name}-net({eps:g})")


def _bellman_target(mdp: EpisodicMdp, h: int, V, moment: int) -> np.ndarray:
    if moment == 1:
        return bellman_apply(mdp, h, V).values
    if moment == 2:
        return bellman_second_moment(mdp, h, V).values
    raise ValueError(f"moment must be 1 or 2, got {moment}")


def nearest_member_gap(cls: FunctionClass, target: np.ndarray) -> float:
    """min_f max_{s,a} |f(s, a) - target(s, a)|."""
    target = cls._check_table(target)
    if isinstance(cls, GridFunctionClass):
        return float(np.abs(cls.nearest(target) - target).max())
    if isinstance(cls, FiniteFunctionClass):
        return float(np.abs(cls.members - target[None]).max(axis=(1, 2)).min())
    if isinstance(cls, LinearFunctionClass):
        return _linear_gap(cls, target)
    raise TypeError(f"unsupported class {type(cls).__name__}")


def _linear_gap(cls: LinearFunctionClass, target: np.ndarray) -> float:
    try:
        return nearest_member_gap(linear_epsilon_net(cls, cls.net_eps), target)
    except EnumerationCapExceeded:
        pass
    # Chebyshev fit over the inscribed box |theta_i| <= B/sqrt(d): min t s.t. |Phi theta - y| <= t
    d = cls.dim
    phi = cls.features.reshape(-1, d)
    y = target.reshape(-1)
    n = phi.shape[0]
    c = np.zeros(d + 1)
    c[-1] = 1.0
    A_ub = np.vstack([np.hstack([phi, -np.ones((n, 1))]), np.hstack([-phi, -np.ones((n, 1))])])
    b_ub = np.concatenate([y, -y])
    box = cls.norm_bound / math.sqrt(d)
    result = linprog(c, A_ub=A_ub, b_ub=b_ub, bounds=[(-box, box)] * d + [(0, None)], method="highs")
    if not result.success:
        logger.warning("Chebyshev fit failed (%s); reporting the gap of theta = 0", result.message)
        return float(np.abs(cls.evaluate(np.zeros(d)) - target).max())
    return float(np.abs(cls.evaluate(result.x[:d]) - target).max())


def completeness_gap(cls: FunctionClass, mdp: EpisodicMdp, h: int, V, moment: int = 1) -> float:
    """Distance from [T_h V] (moment=1) or [T_{2,h} V] (moment=2) to the class.

    Linear classes report the gap through their eps-net, or through a
    Chebyshev fit over the inscribed parameter box when the net exceeds the
    enumeration cap; both are upper bounds on the exact gap.
    """
    return nearest_member_gap(cls, _bellman_target(mdp, h, V, moment))


def _pair_count(n: int) -> int:
    return n * (n - 1) // 2


def coverage_constant(cls: FunctionClass, occupancy: OccupancyMeasure, h: int) -> float:
    """min over distinct pairs of E_{d_h}[(f1 - f2)^2] / |f1 - f2|_inf^2 (inf for a singleton)."""
    d = occupancy.stage(h)
    if isinstance(cls, GridFunctionClass):
        return math.inf if cls.num_levels < 2 else float(d.min())
    if isinstance(cls, LinearFunctionClass):
        return linear_coverage_constant(cls, occupancy, h)
    members = cls.members.reshape(cls.size, -1)
    if cls.size < 2:
        return math.inf
    budget = settings.pair_budget()
    if _pair_count(cls.size) > budget:
        raise EnumerationCapExceeded(f"{_pair_count(cls.size)} member pairs exceed the budget {budget}")
    weights = d.reshape(-1)
    best = math.inf
    for i in range(cls.size - 1):
        diffs = members[i + 1 :] - members[i]
        sup = np.abs(diffs).max(axis=1)
        mask = sup > 0
        if mask.any():
            ratio = (diffs[mask] ** 2 @ weights) / sup[mask] ** 2
            best = min(best, float(ratio.min()))
    return best


def linear_coverage_constant(cls: LinearFunctionClass, occupancy: OccupancyMeasure, h: int) -> float:
    """lambda_min(E_{d_h}[phi phi^T])."""
    phi = cls.features.reshape(-1, cls.dim)
    gram = phi.T @ (occupancy.stage(h).reshape(-1)[:, None] * phi)
    return float(np.linalg.eigvalsh(gram)[0])


def candidate_next_values(mdp: EpisodicMdp, h: int, num_random: int = 2, seed: int = 0) -> List[np.ndarray]:
    """Next-stage value functions the completeness gap is measured on."""
    S, H = mdp.num_states, mdp.horizon
    top = H - h
    opt = optimal_values(mdp)
    candidates = [opt.v[h], np.zeros(S), np.full(S, float(top))]
    rng = np.random.default_rng([seed, h])
    candidates.extend(rng.uniform(0.0, top, size=S) for _ in range(num_random))
    return candidates


def class_diagnostics(
    family: ClassFamily,
    mdp: EpisodicMdp,
    occupancy: OccupancyMeasure,
    num_random_values: int = 2,
    seed: int = 0,
) -> ClassDiagnostics:
    """Measured completeness gaps (first and second moment) and coverage."""
    stage_eps, stage_eps2, stage_kappa = [], [], []
    for h in range(1, family.horizon + 1):
        classes = family.stage(h)
        candidates = candidate_next_values(mdp, h, num_random_values, seed)
        stage_eps.append(max(completeness_gap(classes.first, mdp, h, StageValueFunction(h + 1, V)) for V in candidates))
        stage_eps2.append(
            max(completeness_gap(classes.second, mdp, h, StageValueFunction(h + 1, V), moment=2) for V in candidates)
        )
        stage_kappa.append(coverage_constant(classes.first, occupancy, h))
    diagnostics = ClassDiagnostics(
        epsilon=max(stage_eps),
        kappa=min(stage_kappa),
        epsilon_second=max(stage_eps2),
        stage_epsilon=tuple(stage_eps),
        stage_kappa=tuple(stage_kappa),
    )
    logger.debug("class diagnostics: %s", diagnostics)
    return diagnostics
