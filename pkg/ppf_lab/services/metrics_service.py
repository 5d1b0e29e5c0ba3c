"""
Evaluation metrics and report emission
======================================

Metric families over n×d estimate / truth matrices (columns = responses):

* average RMSE  (1/d) sum_i sqrt(mean((est_i - true_i)^2))
* AWD           (1/d) sum_i W1(est_i, true_i), W1 between empirical distributions
* e1, e2        mean absolute error of per-column means / sample stds (ddof=1)

Angles are in radians, magnitudes and flows in per-unit on the system base.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Dict, List, Sequence, Tuple, Union

import numpy as np
import pandas as pd

from ppf_lab.core.errors import ContractViolation, DatasetFormatError, InputFileNotFound
from ppf_lab.models.network import NetworkCase
from ppf_lab.models.reports import METRIC_NAMES, QUANTITIES, EvalReport, MetricsReport, ResponseMatrixPair
from ppf_lab.services.case_service import incidence_matrix
from ppf_lab.utils.io import write_frame

logger = logging.getLogger(__name__)

QUANTITY_UNITS: Dict[str, str] = {
    "angle": "rad",
    "angle_difference": "rad",
    "magnitude": "pu",
    "p_flow": "pu",
    "q_flow": "pu",
}


# --------------------------------------------------------------------------- #
# Metric families
# --------------------------------------------------------------------------- #
def average_rmse(pair: ResponseMatrixPair) -> float:
    if pair.n == 0:
        raise ContractViolation("RMSE needs at least one sample")
    if pair.d == 0:
        return 0.0
    err = pair.estimate - pair.truth
    return float(np.mean(np.sqrt(np.mean(err * err, axis=0))))


def wasserstein1(samples_a: np.ndarray, samples_b: np.ndarray) -> float:
    """
    W1 between two 1-D empirical distributions. Equal sizes use the sorted
    pairing; otherwise |CDF_a - CDF_b| is integrated over the merged support.
    """
    a = np.sort(np.asarray(samples_a, dtype=float).ravel())
    b = np.sort(np.asarray(samples_b, dtype=float).ravel())
    if a.size == 0 or b.size == 0:
        raise ContractViolation("W1 needs non-empty samples")
    if a.size == b.size:
        return float(np.mean(np.abs(a - b)))
    support = np.sort(np.concatenate([a, b]))
    widths = np.diff(support)
    cdf_a = np.searchsorted(a, support[:-1], side="right") / a.size
    cdf_b = np.searchsorted(b, support[:-1], side="right") / b.size
    return float(np.sum(np.abs(cdf_a - cdf_b) * widths))


def awd(pair: ResponseMatrixPair) -> Tuple[float, np.ndarray]:
    """Average per-column W1 and the per-column vector."""
    if pair.n == 0:
        raise ContractViolation("AWD needs at least one sample")
    per_column = np.array([wasserstein1(pair.estimate[:, i], pair.truth[:, i]) for i in range(pair.d)])
    return (float(per_column.mean()) if per_column.size else 0.0), per_column


def moment_maes(pair: ResponseMatrixPair) -> Tuple[float, float]:
    if pair.n < 2:
        raise ContractViolation(f"sample std needs n >= 2, got {pair.n}")
    if pair.d == 0:
        return 0.0, 0.0
    e1 = np.mean(np.abs(pair.estimate.mean(axis=0) - pair.truth.mean(axis=0)))
    e2 = np.mean(np.abs(pair.estimate.std(axis=0, ddof=1) - pair.truth.std(axis=0, ddof=1)))
    return float(e1), float(e2)


def evaluate(estimate: np.ndarray, truth: np.ndarray) -> MetricsReport:
    pair = ResponseMatrixPair(estimate, truth)
    mean_wd, per_column = awd(pair)
    e1, e2 = moment_maes(pair)
    return MetricsReport(avg_rmse=average_rmse(pair), awd=mean_wd, e1=e1, e2=e2, per_response_wd=per_column)


def angle_differences(case: NetworkCase, angles: np.ndarray) -> np.ndarray:
    """Branch angle differences theta_f - theta_t (n×M) from slack-relative angles."""
    return np.asarray(angles, dtype=float) @ incidence_matrix(case).T


# --------------------------------------------------------------------------- #
# Report emission
# --------------------------------------------------------------------------- #
def write_report_csv(
    report: EvalReport,
    path: Union[str, Path],
    metrics: Sequence[str] = METRIC_NAMES,
) -> Path:
    """``method,quantity,<metrics...>``, one row per method and quantity."""
    rows: List[Dict[str, object]] = []
    for method in report.methods():
        for quantity in QUANTITIES:
            if quantity not in report.results[method]:
                continue
            values = report.results[method][quantity].as_row()
            rows.append({"method": method, "quantity": quantity, **{m: float(values[m]) for m in metrics}})
    return write_frame(pd.DataFrame(rows, columns=["method", "quantity", *metrics]), path)


def _metric(raw: str) -> float:
    return float(raw) if raw != "" else float("nan")


def read_report_csv(path: Union[str, Path]) -> EvalReport:
    path = Path(path)
    if not path.is_file():
        raise InputFileNotFound(path, "report")
    try:
        frame = pd.read_csv(path, dtype=str, keep_default_na=False)
    except (pd.errors.EmptyDataError, ValueError) as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc
    missing = [c for c in ("method", "quantity") if c not in frame.columns]
    if missing:
        raise DatasetFormatError(f"{path}: missing columns {missing}")

    report = EvalReport()
    for line_no, row in enumerate(frame.to_dict("records"), start=2):
        try:
            values = {m: _metric(row.get(m, "")) for m in METRIC_NAMES}
        except ValueError as exc:
            raise DatasetFormatError(f"{path}: line {line_no}: {exc}") from exc
        report.results.setdefault(row["method"], {})[row["quantity"]] = MetricsReport(
            avg_rmse=values["rmse"], awd=values["awd"], e1=values["e1"], e2=values["e2"],
            per_response_wd=np.zeros(0),
        )
    return report


def render_report_table(report: EvalReport, metrics: Sequence[str] = METRIC_NAMES) -> str:
    """Aligned text: one block per quantity, methods as rows."""
    method_width = max([len("method")] + [len(m) for m in report.methods()])
    lines: List[str] = []
    for quantity in QUANTITIES:
        rows = [(m, report.results[m][quantity]) for m in report.methods() if quantity in report.results[m]]
        if not rows:
            continue
        lines.append(f"{quantity} [{QUANTITY_UNITS[quantity]}]")
        lines.append("  ".join(["method".ljust(method_width), *(name.upper().rjust(12) for name in metrics)]))
        for method, res in rows:
            values = res.as_row()
            lines.append("  ".join([method.ljust(method_width), *(f"{values[m]:12.4e}" for m in metrics)]))
        lines.append("")
    return "\n".join(lines)


def write_distance_profile(
    per_method: Dict[str, np.ndarray],
    labels: Sequence[str],
    path: Union[str, Path],
) -> Path:
    """Per-response W1 of every method, sorted descending within each method."""
    blocks: List[pd.DataFrame] = []
    for method in sorted(per_method):
        wd = np.asarray(per_method[method], dtype=float)
        if wd.size != len(labels):
            raise ContractViolation(f"{method}: {wd.size} distances for {len(labels)} labels")
        order = np.argsort(-wd, kind="stable")
        blocks.append(pd.DataFrame({
            "method": method,
            "rank": np.arange(1, wd.size + 1, dtype=np.int64),
            "response": [labels[i] for i in order],
            "w1": wd[order],
        }))
    columns = ["method", "rank", "response", "w1"]
    frame = pd.concat(blocks, ignore_index=True) if blocks else pd.DataFrame(columns=columns)
    return write_frame(frame[columns], path)


__all__ = [
    "QUANTITY_UNITS",
    "average_rmse",
    "wasserstein1",
    "awd",
    "moment_maes",
    "evaluate",
    "angle_differences",
    "write_report_csv",
    "read_report_csv",
    "render_report_table",
    "write_distance_profile",
]
