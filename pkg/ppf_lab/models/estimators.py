from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Dict, List, Optional, Union

import numpy as np

from ppf_lab.core.errors import ContractViolation

STD_FLOOR = 1e-12


@dataclass(frozen=True)
class Standardizer:
    """Per-feature affine map z = (v - mean) / std, std floored at 1e-12."""

    mean: np.ndarray
    std: np.ndarray

    @classmethod
    def identity(cls, width: int) -> "Standardizer":
        return cls(np.zeros(width), np.ones(width))

    @classmethod
    def fit(cls, values: np.ndarray, *, pooled: bool = False) -> "Standardizer":
        """
        Column means, and either per-column stds or one shared std (the RMS of
        all centred entries) when *pooled*.
        """
        values = np.asarray(values, dtype=float)
        mean = values.mean(axis=0)
        if pooled:
            scale = float(np.sqrt(np.mean((values - mean) ** 2))) if values.size else 1.0
            std = np.full(values.shape[1], scale)
        else:
            std = values.std(axis=0)
        return cls(mean, np.maximum(std, STD_FLOOR))

    @property
    def width(self) -> int:
        return int(self.mean.size)

    def apply(self, values: np.ndarray) -> np.ndarray:
        return (values - self.mean) / self.std

    def invert(self, scaled: np.ndarray) -> np.ndarray:
        return scaled * self.std + self.mean


@dataclass(frozen=True)
class LinearModel:
    """
    y = h[:, 1:] @ x + h[:, 0]; column 0 of ``h`` is the intercept.
    """

    h: np.ndarray

    @property
    def d_in(self) -> int:
        return int(self.h.shape[1] - 1)

    @property
    def d_out(self) -> int:
        return int(self.h.shape[0])

    def predict(self, inputs: np.ndarray) -> np.ndarray:
        inputs = np.asarray(inputs, dtype=float)
        if inputs.ndim != 2 or inputs.shape[1] != self.d_in:
            raise ContractViolation(f"expected n×{self.d_in} inputs, got {inputs.shape}")
        return inputs @ self.h[:, 1:].T + self.h[:, 0]


@dataclass
class MlpModel:
    """
    Fully connected network: ReLU on hidden layers, identity on the output.
    ``weights[l]`` has shape (layer_dims[l], layer_dims[l+1]).
    """

    layer_dims: List[int]
    weights: List[np.ndarray]
    biases: List[np.ndarray]
    input_standardizer: Standardizer
    output_standardizer: Standardizer
    config_fingerprint: str = ""

    def __post_init__(self) -> None:
        if len(self.layer_dims) < 2:
            raise ContractViolation("an MLP needs at least input and output widths")
        if len(self.weights) != len(self.layer_dims) - 1 or len(self.biases) != len(self.weights):
            raise ContractViolation("one weight matrix and bias vector per layer transition")
        for l, (w, b) in enumerate(zip(self.weights, self.biases)):
            if w.shape != (self.layer_dims[l], self.layer_dims[l + 1]) or b.shape != (self.layer_dims[l + 1],):
                raise ContractViolation(
                    f"layer {l}: weight {w.shape} / bias {b.shape} incompatible with dims {self.layer_dims}"
                )
        if self.input_standardizer.width != self.layer_dims[0]:
            raise ContractViolation("input standardizer width differs from layer_dims[0]")
        if self.output_standardizer.width != self.layer_dims[-1]:
            raise ContractViolation("output standardizer width differs from layer_dims[-1]")

    @property
    def d_in(self) -> int:
        return self.layer_dims[0]

    @property
    def d_out(self) -> int:
        return self.layer_dims[-1]

    @property
    def n_parameters(self) -> int:
        return sum(w.size + b.size for w, b in zip(self.weights, self.biases))

    def parameters(self) -> List[np.ndarray]:
        """Flat list ``[W0, b0, W1, b1, ...]`` sharing memory with the model."""
        out: List[np.ndarray] = []
        for w, b in zip(self.weights, self.biases):
            out.extend((w, b))
        return out

    def copy(self) -> "MlpModel":
        return MlpModel(
            layer_dims=list(self.layer_dims),
            weights=[w.copy() for w in self.weights],
            biases=[b.copy() for b in self.biases],
            input_standardizer=self.input_standardizer,
            output_standardizer=self.output_standardizer,
            config_fingerprint=self.config_fingerprint,
        )


Estimator = Union[LinearModel, MlpModel]


@dataclass(frozen=True)
class BusSplit:
    """
    Partition of load-bus *positions* (0..N_l-1, PQ order) by magnitude std:
    ``small_std`` holds std <= gamma, ``big_std`` the rest.
    """

    small_std: List[int]
    big_std: List[int]
    gamma: float
    per_bus_std: np.ndarray


@dataclass(frozen=True)
class StateLayout:
    """
    What a bundle needs from the case to assemble full states: index sets and
    the known quantities (slack V/theta, PV magnitudes) that are copied.
    """

    n_bus: int
    slack_index: int
    pv_indices: np.ndarray
    pq_indices: np.ndarray
    v_known: np.ndarray
    slack_angle: float
    input_dim: int

    @property
    def n_angles(self) -> int:
        return self.n_bus - 1

    @property
    def n_magnitudes(self) -> int:
        return int(self.pq_indices.size)

    def to_dict(self) -> Dict[str, Any]:
        return {
            "n_bus": self.n_bus,
            "slack_index": self.slack_index,
            "pv_indices": self.pv_indices.tolist(),
            "pq_indices": self.pq_indices.tolist(),
            "v_known": [float(v) for v in self.v_known],
            "slack_angle": float(self.slack_angle),
            "input_dim": self.input_dim,
        }

    @classmethod
    def from_dict(cls, raw: Dict[str, Any]) -> "StateLayout":
        return cls(
            n_bus=int(raw["n_bus"]),
            slack_index=int(raw["slack_index"]),
            pv_indices=np.asarray(raw["pv_indices"], dtype=np.int64),
            pq_indices=np.asarray(raw["pq_indices"], dtype=np.int64),
            v_known=np.asarray(raw["v_known"], dtype=float),
            slack_angle=float(raw["slack_angle"]),
            input_dim=int(raw["input_dim"]),
        )


@dataclass
class MethodBundle:
    """
    Trained components of one method.

    Component names
    ---------------
    M1 : ``linear`` (angles then magnitudes)
    M2 : ``joint`` (angles then magnitudes)
    M3 : ``angle``, ``magnitude``
    M4 : ``angle``, optionally ``magnitude`` (big-std buses) and
         ``magnitude_linear`` (small-std buses)
    """

    method_id: str
    components: Dict[str, Estimator]
    layout: StateLayout
    split: Optional[BusSplit] = None
    alpha: Optional[float] = None
    provenance: Dict[str, Any] = field(default_factory=dict)


__all__ = [
    "STD_FLOOR",
    "Standardizer",
    "LinearModel",
    "MlpModel",
    "Estimator",
    "BusSplit",
    "StateLayout",
    "MethodBundle",
]
