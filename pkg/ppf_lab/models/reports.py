from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Tuple

import numpy as np

from ppf_lab.core.errors import ContractViolation

# Quantities reported per method, in table order.
QUANTITIES: Tuple[str, ...] = ("angle", "angle_difference", "magnitude", "p_flow", "q_flow")
METRIC_NAMES: Tuple[str, ...] = ("rmse", "awd", "e1", "e2")


@dataclass(frozen=True)
class ResponseMatrixPair:
    """Estimate and ground truth, both n×d; columns are responses."""

    estimate: np.ndarray
    truth: np.ndarray

    def __post_init__(self) -> None:
        est = np.asarray(self.estimate, dtype=float)
        tru = np.asarray(self.truth, dtype=float)
        if est.ndim == 1:
            est = est[:, None]
        if tru.ndim == 1:
            tru = tru[:, None]
        if est.shape != tru.shape:
            raise ContractViolation(f"estimate {est.shape} and truth {tru.shape} differ in shape")
        if not (np.all(np.isfinite(est)) and np.all(np.isfinite(tru))):
            raise ContractViolation("metric inputs must be finite")
        object.__setattr__(self, "estimate", est)
        object.__setattr__(self, "truth", tru)

    @property
    def n(self) -> int:
        return int(self.truth.shape[0])

    @property
    def d(self) -> int:
        return int(self.truth.shape[1])


@dataclass(frozen=True)
class MetricsReport:
    avg_rmse: float
    awd: float
    e1: float
    e2: float
    per_response_wd: np.ndarray

    def as_row(self) -> Dict[str, float]:
        return {"rmse": self.avg_rmse, "awd": self.awd, "e1": self.e1, "e2": self.e2}


@dataclass
class EvalReport:
    """``results[method][quantity]`` -> MetricsReport; labels name the columns."""

    results: Dict[str, Dict[str, MetricsReport]] = field(default_factory=dict)
    response_labels: Dict[str, List[str]] = field(default_factory=dict)

    def methods(self) -> List[str]:
        return list(self.results)


__all__ = ["QUANTITIES", "METRIC_NAMES", "ResponseMatrixPair", "MetricsReport", "EvalReport"]
