from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Tuple

import numpy as np

from ppf_lab.core.errors import ContractViolation

SPLIT_NAMES: Tuple[str, str, str] = ("train", "validation", "test")


@dataclass(frozen=True)
class PfState:
    """Polar voltage state: magnitudes (pu) and angles (rad), length N each."""

    v_mag: np.ndarray
    v_ang: np.ndarray

    def __post_init__(self) -> None:
        if self.v_mag.shape != self.v_ang.shape or self.v_mag.ndim != 1:
            raise ContractViolation(
                f"v_mag {self.v_mag.shape} and v_ang {self.v_ang.shape} must be equal-length vectors"
            )

    @property
    def complex_voltage(self) -> np.ndarray:
        return self.v_mag * np.exp(1j * self.v_ang)


@dataclass(frozen=True)
class PfSolution:
    state: PfState
    iterations: int
    max_mismatch: float
    converged: bool


@dataclass(frozen=True)
class BranchFlows:
    """
    From/to-end active and reactive flows, per-unit. Each array is either
    length M (one state) or n×M (a batch of states).
    """

    p_from: np.ndarray
    q_from: np.ndarray
    p_to: np.ndarray
    q_to: np.ndarray

    def row(self, k: int) -> "BranchFlows":
        return BranchFlows(self.p_from[k], self.q_from[k], self.p_to[k], self.q_to[k])


@dataclass(frozen=True)
class InjectionSample:
    """x = [P_g at PV buses; P_d at PQ buses; Q_d at PQ buses], per-unit."""

    x: np.ndarray

    def __post_init__(self) -> None:
        if not np.all(np.isfinite(self.x)):
            raise ContractViolation("injection sample contains non-finite entries")


@dataclass(frozen=True)
class StateSample:
    """y_a = [theta_g; theta_l] relative to the slack angle, V_l at PQ buses."""

    y_a: np.ndarray
    v_l: np.ndarray


@dataclass
class Dataset:
    """
    Row-aligned MCS ground truth with a contiguous train / validation /
    test partition (train first).
    """

    inputs: np.ndarray
    angles: np.ndarray
    magnitudes: np.ndarray
    split: Dict[str, int]
    rejected_count: int = 0
    input_columns: List[str] = field(default_factory=list)
    angle_columns: List[str] = field(default_factory=list)
    magnitude_columns: List[str] = field(default_factory=list)
    metadata: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        n = self.inputs.shape[0]
        if self.angles.shape[0] != n or self.magnitudes.shape[0] != n:
            raise ContractViolation(
                f"row counts differ: inputs={n}, angles={self.angles.shape[0]}, "
                f"magnitudes={self.magnitudes.shape[0]}"
            )
        if set(self.split) != set(SPLIT_NAMES):
            raise ContractViolation(f"split must name exactly {SPLIT_NAMES}, got {sorted(self.split)}")
        if sum(self.split.values()) != n:
            raise ContractViolation(f"split sizes {self.split} do not sum to {n} rows")

    @property
    def n_rows(self) -> int:
        return int(self.inputs.shape[0])

    def bounds(self, name: str) -> Tuple[int, int]:
        if name not in SPLIT_NAMES:
            raise ContractViolation(f"unknown split {name!r}; expected one of {SPLIT_NAMES}")
        start = 0
        for part in SPLIT_NAMES:
            stop = start + self.split[part]
            if part == name:
                return start, stop
            start = stop
        raise AssertionError("unreachable")

    def part(self, name: str) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """(inputs, angles, magnitudes) rows of one split."""
        lo, hi = self.bounds(name)
        return self.inputs[lo:hi], self.angles[lo:hi], self.magnitudes[lo:hi]


@dataclass(frozen=True)
class StateEstimate:
    """Batch of full states (n×N), known quantities copied from the case."""

    v_mag: np.ndarray
    v_ang: np.ndarray

    @property
    def n_samples(self) -> int:
        return int(self.v_mag.shape[0])

    def state(self, k: int) -> PfState:
        return PfState(self.v_mag[k], self.v_ang[k])


__all__ = [
    "SPLIT_NAMES",
    "PfState",
    "PfSolution",
    "BranchFlows",
    "InjectionSample",
    "StateSample",
    "Dataset",
    "StateEstimate",
]
