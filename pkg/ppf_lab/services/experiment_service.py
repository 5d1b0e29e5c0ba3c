"""
Multi-seed ranking experiment
=============================

Every seed regenerates the dataset (sampling seed = run seed), trains M1-M4
and scores them on the test split. The per-seed reports are then checked
against three orderings:

flows       M4 beats M2 on the mean of the P- and Q-flow average RMSE
angle_diff  M4 is no worse than M3 on angle-difference average RMSE
angles      M2, M3 and M4 each beat M1 on angle average RMSE

A check passes when it holds in at least ``ceil(fraction * seeds)`` seeds.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import pandas as pd

from ppf_lab.core.errors import ConfigurationError, ContractViolation
from ppf_lab.models.network import NetworkCase
from ppf_lab.models.reports import QUANTITIES, EvalReport
from ppf_lab.models.settings import METHOD_IDS, RunConfig
from ppf_lab.services.pipeline_service import evaluate_methods, train_method
from ppf_lab.services.scenario_service import build_dataset

logger = logging.getLogger(__name__)

FLOW_WIN_FRACTION = 0.8
ANGLE_DIFF_WIN_FRACTION = 0.6
ANGLE_WIN_FRACTION = 1.0


@dataclass(frozen=True)
class RankingCheck:
    name: str
    description: str
    wins: int
    required: int
    seeds: int

    @property
    def passed(self) -> bool:
        return self.wins >= self.required


@dataclass
class RankingOutcome:
    seeds: List[int]
    reports: List[EvalReport] = field(default_factory=list)
    checks: List[RankingCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)


# --------------------------------------------------------------------------- #
# Checks
# --------------------------------------------------------------------------- #
def _rmse(report: EvalReport, method: str, quantity: str) -> float:
    return report.results[method][quantity].avg_rmse


def flow_rmse(report: EvalReport, method: str) -> float:
    return 0.5 * (_rmse(report, method, "p_flow") + _rmse(report, method, "q_flow"))


def _required(fraction: float, seeds: int) -> int:
    return max(1, math.ceil(fraction * seeds - 1e-9))


def ranking_checks(reports: Sequence[EvalReport]) -> List[RankingCheck]:
    if not reports:
        raise ContractViolation("ranking checks need at least one report")
    for report in reports:
        missing = [m for m in METHOD_IDS if m not in report.results]
        if missing:
            raise ContractViolation(f"ranking needs every method, report lacks {missing}")

    rules: List[Tuple[str, str, float, Callable[[EvalReport], bool]]] = [
        ("flows", "M4 < M2 on branch-flow RMSE", FLOW_WIN_FRACTION,
         lambda r: flow_rmse(r, "M4") < flow_rmse(r, "M2")),
        ("angle_diff", "M4 <= M3 on angle-difference RMSE", ANGLE_DIFF_WIN_FRACTION,
         lambda r: _rmse(r, "M4", "angle_difference") <= _rmse(r, "M3", "angle_difference")),
        ("angles", "M2, M3, M4 < M1 on angle RMSE", ANGLE_WIN_FRACTION,
         lambda r: all(_rmse(r, m, "angle") < _rmse(r, "M1", "angle") for m in ("M2", "M3", "M4"))),
    ]
    n = len(reports)
    return [
        RankingCheck(name, text, sum(1 for r in reports if holds(r)), _required(fraction, n), n)
        for name, text, fraction, holds in rules
    ]


# --------------------------------------------------------------------------- #
# Experiment
# --------------------------------------------------------------------------- #
def evaluate_seed(
    case: NetworkCase,
    cfg: RunConfig,
    seed: int,
    *,
    workers: Optional[int] = None,
    epochs: Optional[int] = None,
) -> EvalReport:
    """Fresh dataset, all four methods, test-split report for one seed."""
    sampling = cfg.sampling.model_copy(update={"seed": int(seed)})
    dataset = build_dataset(case, sampling, cfg.solver, workers=workers)
    bundles = {
        method: train_method(method, case, dataset, cfg.training, int(seed), epochs=epochs).bundle
        for method in METHOD_IDS
    }
    return evaluate_methods(case, dataset, bundles)


def run_ranking_experiment(
    case: NetworkCase,
    cfg: RunConfig,
    seeds: Optional[Sequence[int]] = None,
    *,
    workers: Optional[int] = None,
    epochs: Optional[int] = None,
) -> RankingOutcome:
    seeds = [int(s) for s in (cfg.ranking.seeds if seeds is None else seeds)]
    if not seeds:
        raise ConfigurationError("the ranking experiment needs at least one seed")
    if len(set(seeds)) != len(seeds):
        raise ConfigurationError(f"ranking seeds must be distinct, got {seeds}")
    epochs = cfg.ranking.epochs if epochs is None else epochs

    outcome = RankingOutcome(seeds)
    for seed in seeds:
        report = evaluate_seed(case, cfg, seed, workers=workers, epochs=epochs)
        outcome.reports.append(report)
        logger.info(
            "seed %d: flow RMSE M2 %.4e / M4 %.4e, angle-difference RMSE M3 %.4e / M4 %.4e",
            seed, flow_rmse(report, "M2"), flow_rmse(report, "M4"),
            _rmse(report, "M3", "angle_difference"), _rmse(report, "M4", "angle_difference"),
        )
    outcome.checks = ranking_checks(outcome.reports)
    for check in outcome.checks:
        logger.info("%s: %d of %d seeds (need %d)", check.name, check.wins, check.seeds, check.required)
    return outcome


# --------------------------------------------------------------------------- #
# Tables
# --------------------------------------------------------------------------- #
def ranking_frame(outcome: RankingOutcome) -> pd.DataFrame:
    """One row per seed and method: average RMSE of every quantity plus the flow mean."""
    rows: List[Dict[str, object]] = []
    for seed, report in zip(outcome.seeds, outcome.reports):
        for method in METHOD_IDS:
            row: Dict[str, object] = {"seed": seed, "method": method}
            row.update({f"{q}_rmse": _rmse(report, method, q) for q in QUANTITIES})
            row["flow_rmse"] = flow_rmse(report, method)
            rows.append(row)
    columns = ["seed", "method", *(f"{q}_rmse" for q in QUANTITIES), "flow_rmse"]
    return pd.DataFrame(rows, columns=columns)


def checks_frame(outcome: RankingOutcome) -> pd.DataFrame:
    return pd.DataFrame(
        [(c.name, c.wins, c.required, c.seeds, int(c.passed)) for c in outcome.checks],
        columns=["check", "wins", "required", "seeds", "passed"],
    )


__all__ = [
    "FLOW_WIN_FRACTION",
    "ANGLE_DIFF_WIN_FRACTION",
    "ANGLE_WIN_FRACTION",
    "RankingCheck",
    "RankingOutcome",
    "flow_rmse",
    "ranking_checks",
    "evaluate_seed",
    "run_ranking_experiment",
    "ranking_frame",
    "checks_frame",
]
