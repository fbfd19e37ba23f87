# experiment.py
"""Sweeps over (K, seed) cells scored against the exact MDP oracles."""
from __future__ import annotations

import hashlib
import io
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import asdict, dataclass, field, replace
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np
import pandas as pd
from tqdm import tqdm

from . import settings
from .algorithm import PnlsviOutput, confidence_inputs, run_pnlsvi, variance_estimation_phase
from .confidence import compute_confidence_params
from .config import ExperimentConfig
from .data import OfflineDataset, rollout_dataset, split_dataset, stage_statistics
from .divergence import divergence_table
from .errors import PnlsviError
from .function_class import ClassDiagnostics, ClassFamily, class_diagnostics
from .mdp import (
    EpisodicMdp,
    OptimalSolution,
    Policy,
    bellman_apply,
    conditional_variance,
    occupancy_measure,
    optimal_values,
    policy_value,
    truncated_variance,
)

logger = logging.getLogger(__name__)

CSV_COLUMNS = ["scenario", "K", "seed", "gap", "bound_rhs", "pess_viol", "sandwich_viol", "eps", "kappa", "ms"]
VALUE_TOL = 1e-9
CALIBRATION_SEED_BASE = 1_000_000


@dataclass(frozen=True)
class RunRecord:
    scenario: str
    K: int
    seed: int
    gap: float
    bound_rhs: float
    pess_viol: int
    sandwich_viol: int
    eps: float
    kappa: float
    ms: float
    regret_premise: bool = False
    regret_lhs: float = math.nan
    regret_rhs: float = math.nan
    error: Optional[str] = None


@dataclass(frozen=True)
class RegretCheck:
    premise_holds: bool
    lhs: float
    rhs: float

    @property
    def violated(self) -> bool:
        return self.premise_holds and self.lhs > self.rhs + VALUE_TOL


def suboptimality_gap(mdp: EpisodicMdp, pi_hat: Policy, optimal: Optional[OptimalSolution] = None) -> float:
    """E_{s1 ~ init}[V*_1(s1) - V^pi_1(s1)]."""
    optimal = optimal or optimal_values(mdp)
    values = policy_value(mdp, pi_hat).v[0]
    return float(mdp.initial_distribution @ (optimal.v[0] - values))


def _expected_under(mdp: EpisodicMdp, policy: Policy, tables: np.ndarray) -> float:
    """sum_h sum_{s,a} d^pi_h(s, a) tables[h-1, s, a]."""
    return float(np.sum(occupancy_measure(mdp, policy).probs * tables))


def theorem_bound_rhs(
    mdp: EpisodicMdp,
    family: ClassFamily,
    dataset: OfflineDataset,
    multiplier: float = 1.0,
    ridge: float = 1.0,
    optimal: Optional[OptimalSolution] = None,
) -> float:
    """c sqrt(log N) sum_h E_{pi*}[D(z; D_h; sigma_h)] with sigma_h^2 the true truncated variance of V*_{h+1}."""
    optimal = optimal or optimal_values(mdp)
    tables = np.zeros(mdp.rewards.shape)
    for h in range(1, mdp.horizon + 1):
        sigma = np.sqrt(truncated_variance(mdp, h, optimal.v[h]).values)
        stats = stage_statistics(dataset, h, np.zeros(dataset.num_episodes), sigma)
        tables[h - 1] = np.sqrt(divergence_table(family.stage(h).first, stats.weights, ridge))
    return multiplier * math.sqrt(family.log_size) * _expected_under(mdp, optimal.policy, tables)


def pessimism_violations(output: PnlsviOutput, optimal: OptimalSolution) -> int:
    return int(np.sum(output.f_hat > optimal.q + VALUE_TOL))


def sandwich_violations(mdp: EpisodicMdp, output: PnlsviOutput, optimal: OptimalSolution) -> int:
    """Cells where sigma_hat^2 leaves [1, max{1, Var_h V*_{h+1}}]."""
    count = 0
    for h in range(1, mdp.horizon + 1):
        ceiling = np.maximum(1.0, conditional_variance(mdp, h, optimal.v[h]).values) + VALUE_TOL
        sigma_sq = output.variance.sigma_sq[h - 1]
        count += int(np.sum((sigma_sq > ceiling) | (sigma_sq < 1.0 - VALUE_TOL)))
    return count


def regret_decomposition_check(
    mdp: EpisodicMdp, output: PnlsviOutput, epsilon: float, optimal: Optional[OptimalSolution] = None
) -> RegretCheck:
    """Premise |T_h f_hat_{h+1} - f_tilde_h| <= b_h everywhere, and gap vs 2 sum_h E_pi*[b_h] + 2 eps H."""
    optimal = optimal or optimal_values(mdp)
    premise = True
    for h in range(1, mdp.horizon + 1):
        target = bellman_apply(mdp, h, output.value(h + 1)).values
        if np.any(np.abs(target - output.f_tilde[h - 1]) > output.bonus[h - 1] + VALUE_TOL):
            premise = False
            break
    lhs = suboptimality_gap(mdp, output.policy, optimal)
    rhs = 2.0 * _expected_under(mdp, optimal.policy, output.bonus) + 2.0 * epsilon * mdp.horizon
    return RegretCheck(premise, lhs, rhs)


def calibration_seeds(config: ExperimentConfig) -> List[int]:
    """Dataset seeds reserved for fitting c_var, offset away from the sweep seeds."""
    return [CALIBRATION_SEED_BASE + i for i in range(config.c_var_seeds)]


def fit_variance_constant(
    config: ExperimentConfig,
    diagnostics: Optional[ClassDiagnostics] = None,
    K: Optional[int] = None,
    seeds: Optional[Sequence[int]] = None,
) -> float:
    """Smallest c_var with sigma_hat^2 <= max{1, Var_h V*_{h+1}} on every calibration run.

    The moments g_bar and f_bar do not depend on c_var, so a single variance
    phase per seed gives the excess of g_bar - f_bar^2 over the ceiling in
    units of the offset at c_var = 1. Calibration runs at the smallest K.
    """
    mdp = config.build_mdp()
    optimal = optimal_values(mdp)
    behavior = config.behavior_policy(mdp, optimal.policy)
    family = config.build_family(mdp)
    if diagnostics is None:
        diagnostics = class_diagnostics(family, mdp, occupancy_measure(mdp, behavior))
    K = min(config.K) if K is None else K
    seeds = calibration_seeds(config) if seeds is None else list(seeds)
    ceiling = np.stack(
        [np.maximum(1.0, conditional_variance(mdp, h, optimal.v[h]).values) for h in range(1, mdp.horizon + 1)]
    )
    unit = replace(config, c_var=1.0).pnlsvi_config(diagnostics)
    worst = 0.0
    for seed in seeds:
        split = split_dataset(rollout_dataset(mdp, behavior, 2 * K, seed, behavior=config.behavior))
        params = compute_confidence_params(confidence_inputs(unit, split, family))
        if params.variance_offset <= 0:
            return 0.0
        variance = variance_estimation_phase(split.second_half, family, params, unit)
        excess = (variance.g_bar - variance.f_bar**2 - ceiling) / params.variance_offset
        worst = max(worst, float(excess.max()))
    logger.info("fitted c_var=%.4g on %d calibration run(s) at K=%d", worst, len(seeds), K)
    return worst


def calibrate_config(config: ExperimentConfig, diagnostics: Optional[ClassDiagnostics] = None) -> ExperimentConfig:
    """The config with c_var fitted and frozen; unchanged when c_var is already set."""
    if config.c_var is not None:
        return config
    return replace(config, c_var=fit_variance_constant(config, diagnostics))


def execute_cell(
    config: ExperimentConfig,
    K: int,
    seed: int,
    diagnostics: Optional[ClassDiagnostics] = None,
) -> Tuple[PnlsviOutput, RunRecord]:
    """One (K, seed) cell: 2K episodes, PNLSVI, exact scoring."""
    started = time.perf_counter()
    mdp = config.build_mdp()
    optimal = optimal_values(mdp)
    behavior = config.behavior_policy(mdp, optimal.policy)
    family = config.build_family(mdp)
    if diagnostics is None:
        diagnostics = class_diagnostics(family, mdp, occupancy_measure(mdp, behavior))
    config = calibrate_config(config, diagnostics)
    data = rollout_dataset(mdp, behavior, 2 * K, seed, behavior=config.behavior)
    split = split_dataset(data)
    output = run_pnlsvi(split, family, config.pnlsvi_config(diagnostics))
    regret = regret_decomposition_check(mdp, output, diagnostics.epsilon, optimal)
    record = RunRecord(
        scenario=mdp.name,
        K=K,
        seed=seed,
        gap=regret.lhs,
        bound_rhs=theorem_bound_rhs(mdp, family, split.first_half, ridge=config.ridge, optimal=optimal),
        pess_viol=pessimism_violations(output, optimal),
        sandwich_viol=sandwich_violations(mdp, output, optimal),
        eps=diagnostics.epsilon,
        kappa=diagnostics.kappa,
        ms=(time.perf_counter() - started) * 1000.0,
        regret_premise=regret.premise_holds,
        regret_lhs=regret.lhs,
        regret_rhs=regret.rhs,
    )
    logger.debug("cell K=%d seed=%d gap=%.4g", K, seed, record.gap)
    return output, record


def run_cell(config: ExperimentConfig, K: int, seed: int, diagnostics: Optional[ClassDiagnostics] = None) -> RunRecord:
    return execute_cell(config, K, seed, diagnostics)[1]


def _failed_record(config: ExperimentConfig, K: int, seed: int, exc: Exception) -> RunRecord:
    nan = math.nan
    return RunRecord(config.scenario, K, seed, nan, nan, -1, -1, nan, nan, 0.0, error=f"{type(exc).__name__}: {exc}")


def _run_cell_job(args) -> RunRecord:
    config, K, seed, diagnostics = args
    try:
        return run_cell(config, K, seed, diagnostics)
    except PnlsviError as exc:
        logger.warning("cell K=%d seed=%d failed: %s", K, seed, exc)
        return _failed_record(config, K, seed, exc)


def records_to_frame(records: Sequence[RunRecord]) -> pd.DataFrame:
    frame = pd.DataFrame([asdict(r) for r in records])
    if frame.empty:
        return pd.DataFrame(columns=CSV_COLUMNS)
    return frame.sort_values(["K", "seed"], kind="mergesort").reset_index(drop=True)


def records_to_csv(records: Sequence[RunRecord]) -> str:
    buffer = io.StringIO()
    records_to_frame(records)[CSV_COLUMNS].to_csv(buffer, index=False, float_format="%.12g")
    return buffer.getvalue()


def determinism_hash(csv_text: str) -> str:
    """sha256 of the CSV with the wall-time column removed."""
    lines = csv_text.splitlines()
    if not lines:
        return hashlib.sha256(b"").hexdigest()
    header = lines[0].split(",")
    drop = header.index("ms") if "ms" in header else None
    kept = []
    for line in lines:
        cells = line.split(",")
        if drop is not None:
            del cells[drop]
        kept.append(",".join(cells))
    return hashlib.sha256("\n".join(kept).encode("utf-8")).hexdigest()


def fit_rate_slope(K_values: Iterable[float], median_gaps: Iterable[float]) -> float:
    """Least-squares slope of log(median gap) against log K; zero gaps are skipped."""
    K_values = np.asarray(list(K_values), dtype=float)
    gaps = np.asarray(list(median_gaps), dtype=float)
    keep = np.isfinite(gaps) & (gaps > 0)
    if keep.sum() < 2:
        return math.nan
    slope, _ = np.polyfit(np.log(K_values[keep]), np.log(gaps[keep]), 1)
    return float(slope)


def fit_bound_constant(records: Sequence[RunRecord]) -> float:
    """Smallest c with gap <= c * bound_rhs on every given record."""
    ratios = [r.gap / r.bound_rhs for r in records if r.error is None and r.bound_rhs > 0]
    return max(max(ratios, default=0.0), 0.0)


@dataclass
class SweepResult:
    records: List[RunRecord]
    csv: str
    summary: Dict = field(default_factory=dict)


def summarize(records: Sequence[RunRecord], delta: float) -> Dict:
    ok = [r for r in records if r.error is None]
    Ks = sorted({r.K for r in records})
    medians = {K: float(np.median([r.gap for r in ok if r.K == K])) if any(r.K == K for r in ok) else math.nan for K in Ks}
    calibration = [r for r in ok if r.K == Ks[0]] if Ks else []
    c = fit_bound_constant(calibration)
    later = [r for r in ok if r.K != Ks[0]]
    covered = [r.gap <= c * r.bound_rhs + VALUE_TOL for r in later]
    return {
        "cells": len(records),
        "failures": [{"K": r.K, "seed": r.seed, "error": r.error} for r in records if r.error is not None],
        "median_gap": {str(K): medians[K] for K in Ks},
        "rate_slope": fit_rate_slope(Ks, [medians[K] for K in Ks]),
        "bound_constant": c,
        "bound_coverage": float(np.mean(covered)) if covered else math.nan,
        "unscaled_bound_coverage": float(np.mean([r.gap <= r.bound_rhs + VALUE_TOL for r in ok])) if ok else math.nan,
        "pessimism_rate": float(np.mean([r.pess_viol == 0 for r in ok])) if ok else math.nan,
        "sandwich_rate": float(np.mean([r.sandwich_viol == 0 for r in ok])) if ok else math.nan,
        "regret_violations": sum(1 for r in ok if r.regret_premise and r.regret_lhs > r.regret_rhs + VALUE_TOL),
        "delta": delta,
    }


def sweep(
    config: ExperimentConfig,
    workers: Optional[int] = None,
    progress: bool = False,
    cells: Optional[Sequence[Tuple[int, int]]] = None,
) -> SweepResult:
    """Run every (K, seed) cell, in a process pool when workers > 1."""
    workers = settings.worker_count() if workers is None else max(1, workers)
    cells = list(cells) if cells is not None else [(K, seed) for K in config.K for seed in config.seeds]
    mdp = config.build_mdp()
    behavior = config.behavior_policy(mdp)
    diagnostics = class_diagnostics(config.build_family(mdp), mdp, occupancy_measure(mdp, behavior))
    config = calibrate_config(config, diagnostics)
    logger.info("sweep: %d cells on %s, %d worker(s), eps=%.4g kappa=%.4g", len(cells), mdp.name, workers, diagnostics.epsilon, diagnostics.kappa)
    jobs = [(config, K, seed, diagnostics) for K, seed in cells]
    records: List[RunRecord] = []
    with tqdm(total=len(jobs), disable=not progress, desc="sweep") as bar:
        if workers == 1:
            for job in jobs:
                records.append(_run_cell_job(job))
                bar.update(1)
        else:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_cell_job, job) for job in jobs]
                for future in as_completed(futures):
                    records.append(future.result())
                    bar.update(1)
    records.sort(key=lambda r: (r.K, r.seed))
    summary = summarize(records, config.delta)
    csv_text = records_to_csv(records)
    summary["determinism_hash"] = determinism_hash(csv_text)
    summary["c_var"] = config.c_var
    logger.info("sweep done: rate slope %.3f, %d failure(s)", summary["rate_slope"], len(summary["failures"]))
    return SweepResult(records, csv_text, summary)
