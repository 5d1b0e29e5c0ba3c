from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, Tuple

import numpy as np
from scipy.sparse import csr_matrix


class BusKind(str, Enum):
    """MATPOWER bus type codes: 1 = PQ, 2 = PV, 3 = slack."""

    LOAD = "PQ"
    GENERATOR = "PV"
    SLACK = "slack"

    @classmethod
    def from_code(cls, code: int) -> "BusKind":
        return {1: cls.LOAD, 2: cls.GENERATOR, 3: cls.SLACK}[code]

    @property
    def code(self) -> int:
        return {BusKind.LOAD: 1, BusKind.GENERATOR: 2, BusKind.SLACK: 3}[self]


@dataclass(frozen=True)
class Bus:
    """
    A single bus, all powers per-unit on the system base.

    Columns
    -------
    id : int
        External MATPOWER bus number (preserved for reporting).
    v_ang_init : float
        Initial / stored voltage angle in **radians**.
    """

    id: int
    kind: BusKind
    p_demand: float
    q_demand: float
    gs_shunt: float
    bs_shunt: float
    base_kv: float
    v_mag_init: float
    v_ang_init: float


@dataclass(frozen=True)
class Gen:
    bus_id: int
    p_out: float
    q_out: float
    v_setpoint: float
    in_service: bool


@dataclass(frozen=True)
class Branch:
    from_bus: int
    to_bus: int
    r: float
    x: float
    b_charge: float
    tap: float = 1.0
    shift: float = 0.0  # radians
    in_service: bool = True


@dataclass(frozen=True)
class NetworkCase:
    """
    Parsed grid. Immutable; derived index sets are cached on first access.

    Internal indexing is dense ``0..N-1`` in file order. The injection vector
    x is laid out as ``[P_g at PV buses; P_d at PQ buses; Q_d at PQ buses]``,
    the angle vector y_a as ``[theta at PV buses; theta at PQ buses]``, each
    block bus-index ascending.
    """

    base_mva: float
    buses: Tuple[Bus, ...]
    gens: Tuple[Gen, ...]
    branches: Tuple[Branch, ...]
    name: str = field(default="case", compare=False)

    # ------------------------------------------------------------------ #
    # Sizes / index sets
    # ------------------------------------------------------------------ #
    @property
    def n_bus(self) -> int:
        return len(self.buses)

    @cached_property
    def index_of(self) -> Dict[int, int]:
        return {bus.id: i for i, bus in enumerate(self.buses)}

    @cached_property
    def bus_ids(self) -> np.ndarray:
        return np.array([bus.id for bus in self.buses], dtype=np.int64)

    @cached_property
    def slack_index(self) -> int:
        return next(i for i, bus in enumerate(self.buses) if bus.kind is BusKind.SLACK)

    @cached_property
    def pv_indices(self) -> np.ndarray:
        return np.array(
            [i for i, bus in enumerate(self.buses) if bus.kind is BusKind.GENERATOR], dtype=np.int64
        )

    @cached_property
    def pq_indices(self) -> np.ndarray:
        return np.array(
            [i for i, bus in enumerate(self.buses) if bus.kind is BusKind.LOAD], dtype=np.int64
        )

    @cached_property
    def non_slack_indices(self) -> np.ndarray:
        """Angle-vector order: PV block then PQ block."""
        return np.concatenate([self.pv_indices, self.pq_indices])

    @property
    def n_pv(self) -> int:
        return int(self.pv_indices.size)

    @property
    def n_pq(self) -> int:
        return int(self.pq_indices.size)

    @property
    def input_dim(self) -> int:
        return self.n_pv + 2 * self.n_pq

    @cached_property
    def in_service_branches(self) -> Tuple[Branch, ...]:
        return tuple(br for br in self.branches if br.in_service)

    @property
    def n_branch(self) -> int:
        """M: number of in-service branches."""
        return len(self.in_service_branches)

    @cached_property
    def branch_endpoints(self) -> Tuple[np.ndarray, np.ndarray]:
        """Dense (from, to) indices of the in-service branches."""
        f = np.array([self.index_of[br.from_bus] for br in self.in_service_branches], dtype=np.int64)
        t = np.array([self.index_of[br.to_bus] for br in self.in_service_branches], dtype=np.int64)
        return f, t

    # ------------------------------------------------------------------ #
    # Per-bus vectors
    # ------------------------------------------------------------------ #
    @cached_property
    def p_demand(self) -> np.ndarray:
        return np.array([bus.p_demand for bus in self.buses])

    @cached_property
    def q_demand(self) -> np.ndarray:
        return np.array([bus.q_demand for bus in self.buses])

    @cached_property
    def p_generation(self) -> np.ndarray:
        """In-service generator output aggregated per bus."""
        out = np.zeros(self.n_bus)
        for gen in self.gens:
            if gen.in_service:
                out[self.index_of[gen.bus_id]] += gen.p_out
        return out

    @cached_property
    def v_setpoint(self) -> np.ndarray:
        """
        Voltage magnitude held at slack / PV buses (first in-service generator
        wins); PQ entries carry the stored initial magnitude.
        """
        v = np.array([bus.v_mag_init for bus in self.buses])
        seen = set()
        for gen in self.gens:
            idx = self.index_of[gen.bus_id]
            if gen.in_service and idx not in seen and self.buses[idx].kind is not BusKind.LOAD:
                v[idx] = gen.v_setpoint
                seen.add(idx)
        return v

    @property
    def slack_angle(self) -> float:
        return self.buses[self.slack_index].v_ang_init

    @cached_property
    def base_injection(self) -> np.ndarray:
        """The case's own x = [P_g(PV); P_d(PQ); Q_d(PQ)]."""
        return np.concatenate(
            [
                self.p_generation[self.pv_indices],
                self.p_demand[self.pq_indices],
                self.q_demand[self.pq_indices],
            ]
        )


@dataclass(frozen=True)
class AdmittanceMatrix:
    """
    Nodal admittance Y = G + jB plus the branch matrices Yf / Yt that map the
    complex voltage vector to from-/to-end branch currents (in-service rows only).
    """

    ybus: csr_matrix
    yf: csr_matrix
    yt: csr_matrix

    @cached_property
    def dense(self) -> np.ndarray:
        return self.ybus.toarray()

    @property
    def g(self) -> np.ndarray:
        return self.dense.real

    @property
    def b(self) -> np.ndarray:
        return self.dense.imag

    @property
    def n_bus(self) -> int:
        return int(self.ybus.shape[0])


__all__ = ["BusKind", "Bus", "Gen", "Branch", "NetworkCase", "AdmittanceMatrix"]
