# verify.py
"""Invariant suite behind ``pnlsvi verify``.

Every check returns a CheckResult; the suite passes only if all of them do.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Sequence

import numpy as np

from .bonus import BonusRequest, ExhaustiveBonus, LinearDifferenceRegression, binary_search, search_call_bound
from .config import ExperimentConfig
from .data import rollout_dataset, stage_statistics
from .divergence import WeightedGram, divergence_table, max_divergence
from .errors import PnlsviError
from .experiment import VALUE_TOL, calibrate_config, run_cell, sweep
from .function_class import (
    FiniteFunctionClass,
    LinearFunctionClass,
    build_grid_class,
    class_diagnostics,
    coverage_constant,
    linear_epsilon_net,
    nearest_member_gap,
)
from .mdp import OccupancyMeasure, brute_force_optimal_values, occupancy_measure, optimal_values, truncated_variance
from .regression import FiniteRegressionOracle, RegressionProblem, weighted_least_squares_finite, weighted_ridge_linear
from .scenarios import random_mdp

logger = logging.getLogger(__name__)

REPORT_SCHEMA_VERSION = "1.0"


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: Dict = field(default_factory=dict)


@dataclass
class VerifyReport:
    checks: List[CheckResult]

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def exit_code(self) -> int:
        return 0 if self.passed else 1

    def as_dict(self) -> Dict:
        return {
            "schema_version": REPORT_SCHEMA_VERSION,
            "passed": self.passed,
            "checks": [{"name": c.name, "passed": c.passed, "detail": c.detail} for c in self.checks],
        }


def _random_finite_class(rng: np.random.Generator, num_states: int, num_actions: int, size: int, value_range: float) -> FiniteFunctionClass:
    members = rng.uniform(0.0, value_range, size=(size, num_states, num_actions))
    return FiniteFunctionClass(members, value_range)


def _random_problem(rng: np.random.Generator, num_states: int, num_actions: int, n: int) -> RegressionProblem:
    return RegressionProblem(
        states=rng.integers(0, num_states, n),
        actions=rng.integers(0, num_actions, n),
        targets=rng.uniform(0.0, 2.0, n),
        sigma=rng.uniform(1.0, 3.0, n),
    )


def check_optimal_values(config: ExperimentConfig, instances: int = 20) -> CheckResult:
    rng = np.random.default_rng(config.mdp_seed)
    worst = 0.0
    for _ in range(instances):
        S, A, H = int(rng.integers(1, 5)), int(rng.integers(1, 4)), int(rng.integers(1, 4))
        mdp = random_mdp(S, A, H, seed=int(rng.integers(2**31)))
        brute, _ = brute_force_optimal_values(mdp)
        worst = max(worst, float(np.abs(optimal_values(mdp).v[0] - brute).max()))
    return CheckResult("optimal_values_vs_brute_force", worst <= 1e-9, {"instances": instances, "max_error": worst})


def check_regression(config: ExperimentConfig, problems: int = 50) -> CheckResult:
    rng = np.random.default_rng(config.mdp_seed + 1)
    argmin_failures = scale_failures = 0
    worst_residual = 0.0
    for _ in range(problems):
        S, A = int(rng.integers(1, 4)), int(rng.integers(1, 3))
        cls = _random_finite_class(rng, S, A, int(rng.integers(2, 200)), 2.0)
        prob = _random_problem(rng, S, A, int(rng.integers(0, 40)))
        index = weighted_least_squares_finite(cls, prob)
        rescan = [
            float(np.sum((cls.members[j][prob.states, prob.actions] - prob.targets) ** 2 / prob.sigma**2)) for j in range(cls.size)
        ]
        if rescan[index] > min(rescan) + 1e-9:
            argmin_failures += 1
        scaled = RegressionProblem(prob.states, prob.actions, prob.targets, prob.sigma * 2.0)
        if weighted_least_squares_finite(cls, scaled) != index:
            scale_failures += 1

        d, n = 3, 50
        raw = rng.normal(size=(S, A, d))
        lin = LinearFunctionClass.from_raw_features(raw, 1e6, 1e6)
        lin_prob = _random_problem(rng, S, A, n)
        observed = len(set(zip(lin_prob.states.tolist(), lin_prob.actions.tolist())))
        for ridge in (0.0, 1.0):
            if ridge == 0.0 and observed < d:
                continue
            prob_r = RegressionProblem(lin_prob.states, lin_prob.actions, lin_prob.targets, lin_prob.sigma, ridge)
            try:
                theta = weighted_ridge_linear(lin, prob_r)
            except PnlsviError:
                continue
            phi = lin.features[prob_r.states, prob_r.actions]
            inv_var = 1.0 / prob_r.sigma**2
            G = phi.T @ (inv_var[:, None] * phi) + ridge * np.eye(d)
            b = phi.T @ (inv_var * prob_r.targets)
            scale = max(1.0, float(np.abs(b).max()), float(np.abs(G).max() * np.abs(theta).max()))
            worst_residual = max(worst_residual, float(np.abs(G @ theta - b).max()) / scale)
    passed = argmin_failures == 0 and scale_failures == 0 and worst_residual <= 1e-8
    return CheckResult(
        "regression_oracles",
        passed,
        {"problems": problems, "argmin_failures": argmin_failures, "scale_failures": scale_failures, "max_residual": worst_residual},
    )


def check_divergence_monotonicity(config: ExperimentConfig, triples: int = 100) -> CheckResult:
    rng = np.random.default_rng(config.mdp_seed + 2)
    failures = {"data": 0, "lambda": 0, "weights": 0}
    for _ in range(triples):
        S, A = 2, 2
        cls = _random_finite_class(rng, S, A, int(rng.integers(2, 25)), 1.0)
        lin = LinearFunctionClass.from_raw_features(rng.normal(size=(S, A, 2)), 1.0, 1.0)
        counts = rng.integers(0, 20, size=(S, A)).astype(float)
        sigma = rng.uniform(1.0, 2.0, size=(S, A))
        weights = counts / sigma**2
        ridge = float(rng.uniform(0.1, 2.0))
        for c in (cls, lin):
            base = divergence_table(c, weights, ridge)
            more = weights.copy()
            more[rng.integers(S), rng.integers(A)] += 1.0 / float(rng.uniform(1.0, 2.0)) ** 2
            if np.any(divergence_table(c, more, ridge) > base + 1e-12):
                failures["data"] += 1
            larger = divergence_table(c, weights, ridge * 1.5)
            positive = base > 1e-12
            if np.any(larger[positive] >= base[positive]):
                failures["lambda"] += 1
            wider = counts / (sigma * rng.uniform(1.0, 2.0, size=(S, A))) ** 2
            if np.any(divergence_table(c, wider, ridge) < base - 1e-12):
                failures["weights"] += 1
    return CheckResult("divergence_monotonicity", not any(failures.values()), {"triples": triples, "failures": failures})


def check_divergence_net(config: ExperimentConfig, instances: int = 20, eps: float = 0.05) -> CheckResult:
    rng = np.random.default_rng(config.mdp_seed + 3)
    worst = 0.0
    failures = 0
    for _ in range(instances):
        features = rng.uniform(0.0, 1.0, size=(2, 2, 2))
        lin = LinearFunctionClass.from_raw_features(features, 1.0, 2.0)
        weights = rng.integers(20, 60, size=(2, 2)).astype(float)
        linear = WeightedGram(lin.features, weights, 1.0).table()
        finite = divergence_table(linear_epsilon_net(lin, eps), weights, 1.0)
        worst = max(worst, float(np.abs(finite - linear).max()))
        if np.any(finite > linear + 0.05) or np.any(finite < 0.75 * linear - 0.05):
            failures += 1
    return CheckResult("divergence_linear_vs_net", failures == 0, {"instances": instances, "max_abs_difference": worst})


def check_divergence_trend(config: ExperimentConfig, seeds: int = 5, K_small: int = 500, K_large: int = 4000) -> CheckResult:
    """max_z D^2 shrinks like 1/K, with unit weights and with the true truncated-variance weights."""
    mdp = config.build_mdp()
    optimal = optimal_values(mdp)
    behavior = config.behavior_policy(mdp, optimal.policy)
    family = config.build_family(mdp)
    sigmas = [np.sqrt(truncated_variance(mdp, h, optimal.v[h]).values) for h in range(1, mdp.horizon + 1)]

    def average_max(K: int, weighted: bool) -> float:
        values = []
        for seed in range(seeds):
            data = rollout_dataset(mdp, behavior, K, seed)
            values.append(
                max(
                    max_divergence(
                        family.stage(h).first,
                        stage_statistics(data, h, np.zeros(K), sigmas[h - 1] if weighted else None).weights,
                        config.ridge,
                    )
                    for h in range(1, mdp.horizon + 1)
                )
            )
        return float(np.mean(values))

    detail = {"K": [K_small, K_large]}
    passed = True
    for label, weighted in (("unit", False), ("weighted", True)):
        small, large = average_max(K_small, weighted), average_max(K_large, weighted)
        ratio = small / large if large > 0 else math.inf
        detail[label] = {"max_d2": [small, large], "ratio": ratio}
        passed = passed and 4.0 <= ratio <= 16.0
    return CheckResult("divergence_one_over_K", passed, detail)


def _stable_linear_instance(rng: np.random.Generator, dim: int):
    """Well-conditioned d = 1 or d = 2 features on 2x2 cells; the feasible set around the centre stays inside |theta| <= B."""
    if dim == 1:
        lin = LinearFunctionClass(rng.uniform(0.5, 1.0, size=(2, 2, 1)), 1.0, 2.0)
    else:
        mixes = np.array([[[0.9, 0.1], [0.1, 0.9]], [[0.6, 0.4], [0.4, 0.6]]])
        features = mixes + rng.uniform(0.0, 0.1, size=(2, 2, 2))
        lin = LinearFunctionClass.from_raw_features(features, 1.0, 2.0)
    weights = rng.integers(100, 300, size=(2, 2)).astype(float)
    return lin, weights, lin.evaluate(np.full(dim, 0.4 if dim > 1 else 0.5))


def check_binary_search(config: ExperimentConfig, instances: int = 30, alpha: float = 1e-3) -> CheckResult:
    """Binary search against the exhaustive bonus of an eps-net, for d = 1 and random convex d = 2 instances."""
    rng = np.random.default_rng(config.mdp_seed + 4)
    worst = 0.0
    below = 0
    call_failures = 0
    for dim, net_eps in ((1, 1e-4), (2, 5e-3)):
        # nearest feasible net point is within 2 sqrt(d) spacings of the constrained optimum
        tolerance = alpha + 2.0 * math.sqrt(dim) * net_eps + 1e-9
        for _ in range(instances if dim == 1 else max(instances // 3, 1)):
            lin, weights, center = _stable_linear_instance(rng, dim)
            request = BonusRequest(center=center, beta=1.0, weights=weights, ridge=1e-9, value_range=2.0, alpha=alpha)
            exhaustive = ExhaustiveBonus().table(linear_epsilon_net(lin, net_eps), request).values
            gram = WeightedGram(lin.features, weights, request.ridge)
            bound = search_call_bound(request.beta, alpha, request.value_range)
            for s in range(2):
                for a in range(2):
                    regression = LinearDifferenceRegression(gram, lin.features[s, a], 2.0 * (request.value_range + 1.0))
                    result = binary_search(regression, request.beta, alpha, request.value_range)
                    worst = max(worst, (result.value - exhaustive[s, a]) / tolerance)
                    if result.value < exhaustive[s, a] - 1e-9:
                        below += 1
                    if result.oracle_calls > bound + 1:
                        call_failures += 1
    return CheckResult(
        "binary_search_precision",
        worst <= 1.0 and below == 0 and call_failures == 0,
        {"instances": instances, "alpha": alpha, "max_relative_error": worst, "below_exhaustive": below, "call_failures": call_failures},
    )


def check_exact_oracles(config: ExperimentConfig) -> CheckResult:
    """Grid fast paths against the materialized member tensor."""
    rng = np.random.default_rng(config.mdp_seed + 5)
    grid = build_grid_class(2, 2, 3, 2.0)
    finite = grid.materialize()
    mismatches = []
    for trial in range(10):
        prob = _random_problem(rng, 2, 2, int(rng.integers(0, 30)))
        stats = prob.statistics(2, 2)
        fast = FiniteRegressionOracle().fit_statistics(grid, stats)
        slow = FiniteRegressionOracle().fit_statistics(finite, stats)
        if abs(fast.objective - slow.objective) > 1e-9:
            mismatches.append(("regression", trial))
        if not np.allclose(divergence_table(grid, stats.weights, 1.0), divergence_table(finite, stats.weights, 1.0), atol=1e-12):
            mismatches.append(("divergence", trial))
        request = BonusRequest(center=fast.values, beta=float(rng.uniform(0.0, 3.0)), weights=stats.weights, ridge=1.0, value_range=2.0)
        if not np.allclose(ExhaustiveBonus().table(grid, request).values, ExhaustiveBonus().table(finite, request).values, atol=1e-12):
            mismatches.append(("bonus", trial))
        occupancy = OccupancyMeasure(rng.dirichlet(np.ones(4)).reshape(1, 2, 2))
        if abs(coverage_constant(grid, occupancy, 1) - coverage_constant(finite, occupancy, 1)) > 1e-12:
            mismatches.append(("coverage", trial))
        target = rng.uniform(0.0, 2.0, size=(2, 2))
        if abs(nearest_member_gap(grid, target) - nearest_member_gap(finite, target)) > 1e-12:
            mismatches.append(("completeness", trial))
    return CheckResult("grid_fast_paths_vs_enumeration", not mismatches, {"mismatches": mismatches[:10]})


def check_algorithm(config: ExperimentConfig) -> List[CheckResult]:
    """Pessimism, variance sandwich and regret decomposition over seeded runs."""
    mdp = config.build_mdp()
    behavior = config.behavior_policy(mdp)
    diagnostics = class_diagnostics(config.build_family(mdp), mdp, occupancy_measure(mdp, behavior))
    config = calibrate_config(config, diagnostics)
    records = [run_cell(config, config.verify_K, seed, diagnostics) for seed in range(config.verify_seeds)]
    pessimistic = float(np.mean([r.pess_viol == 0 for r in records]))
    sandwiched = float(np.mean([r.sandwich_viol == 0 for r in records]))
    premise = [r for r in records if r.regret_premise]
    violations = sum(1 for r in premise if r.regret_lhs > r.regret_rhs + VALUE_TOL)
    detail = {"runs": len(records), "K": config.verify_K, "profile": config.profile, "c_var": config.c_var}
    return [
        CheckResult("pessimism", pessimistic >= 0.9, {**detail, "rate": pessimistic}),
        CheckResult("variance_sandwich", sandwiched >= 0.9, {**detail, "rate": sandwiched}),
        CheckResult("regret_decomposition", violations == 0, {**detail, "premise_runs": len(premise), "violations": violations}),
    ]


def check_determinism(config: ExperimentConfig) -> CheckResult:
    cells = [(min(config.K), seed) for seed in list(config.seeds)[:2]]
    first = sweep(config, workers=1, cells=cells).summary["determinism_hash"]
    second = sweep(config, workers=1, cells=cells).summary["determinism_hash"]
    return CheckResult("sweep_determinism", first == second, {"hash": first, "repeat": second})


SINGLE_CHECKS: Sequence[Callable[[ExperimentConfig], CheckResult]] = (
    check_optimal_values,
    check_regression,
    check_divergence_monotonicity,
    check_divergence_net,
    check_divergence_trend,
    check_binary_search,
    check_exact_oracles,
    check_determinism,
)


def verify(config: ExperimentConfig, include_algorithm: bool = True) -> VerifyReport:
    results: List[List[CheckResult]] = []
    for check in SINGLE_CHECKS:
        results.append(_guarded(check.__name__, lambda: [check(config)]))
    if include_algorithm:
        results.append(_guarded("check_algorithm", lambda: check_algorithm(config)))
    flat = [r for group in results for r in group]
    for result in flat:
        logger.info("verify %-32s %s", result.name, "PASS" if result.passed else "FAIL")
    return VerifyReport(flat)


def _guarded(name: str, run: Callable[[], List[CheckResult]]) -> List[CheckResult]:
    try:
        return run()
    except PnlsviError as exc:
        logger.warning("check %s raised %s", name, exc)
        return [CheckResult(name.removeprefix("check_"), False, {"error": f"{type(exc).__name__}: {exc}"})]
