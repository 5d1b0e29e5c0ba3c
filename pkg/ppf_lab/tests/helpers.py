"""Small cases and synthetic datasets shared by the test suites."""
from __future__ import annotations

import numpy as np

from ppf_lab.core.config import CASES_DIR
from ppf_lab.models.network import NetworkCase
from ppf_lab.models.settings import NetworkConfig, M2Config, M3Config, M4Config, TrainingSection
from ppf_lab.models.states import Dataset
from ppf_lab.services.case_service import load_case, parse_case
from ppf_lab.services.scenario_service import angle_columns, input_columns, magnitude_columns

CASE14_PATH = CASES_DIR / "case14.m"

# Slack bus 1, load bus 2 (100 MW), lossless line x = 0.1 pu, no charging.
TWO_BUS = """function mpc = two_bus
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
\t2\t1\t100\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t100\t0;
];
mpc.branch = [
\t1\t2\t0\t0.1\t0\t0\t0\t0\t0\t0\t1\t-360\t360;
];
"""

# Slack bus 1, load buses 2 and 3, branches (1,2), (2,3), (1,3).
TRIANGLE = """function mpc = triangle
mpc.baseMVA = 100;
mpc.bus = [
\t1\t3\t0\t0\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
\t2\t1\t20\t5\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
\t3\t1\t30\t10\t0\t0\t1\t1\t0\t100\t1\t1.1\t0.9;
];
mpc.gen = [
\t1\t0\t0\t100\t-100\t1\t100\t1\t100\t0;
];
mpc.branch = [
\t1\t2\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1\t-360\t360;
\t2\t3\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1\t-360\t360;
\t1\t3\t0.01\t0.1\t0.02\t0\t0\t0\t0\t0\t1\t-360\t360;
];
"""


def two_bus() -> NetworkCase:
    return parse_case(TWO_BUS)


def triangle() -> NetworkCase:
    return parse_case(TRIANGLE)


def case14() -> NetworkCase:
    return load_case(CASE14_PATH)


def linear_dataset(
    case: NetworkCase,
    split=(60, 20, 20),
    *,
    seed: int = 0,
    constant_magnitudes: bool = False,
) -> Dataset:
    """Random inputs with targets that are exact affine functions of them."""
    rng = np.random.default_rng(seed)
    n = sum(split)
    d_x, d_a, d_m = case.input_dim, case.n_bus - 1, case.n_pq
    inputs = case.base_injection + 0.05 * rng.standard_normal((n, d_x))
    h_a = 0.1 * rng.standard_normal((d_a, d_x))
    angles = inputs @ h_a.T - 0.2
    if constant_magnitudes:
        magnitudes = np.full((n, d_m), 1.01)
    else:
        h_m = 0.01 * rng.standard_normal((d_m, d_x))
        magnitudes = 1.0 + inputs @ h_m.T
    return Dataset(
        inputs=inputs,
        angles=angles,
        magnitudes=magnitudes,
        split=dict(zip(("train", "validation", "test"), split)),
        input_columns=input_columns(case),
        angle_columns=angle_columns(case),
        magnitude_columns=magnitude_columns(case),
        metadata={"config_fingerprint": "test"},
    )


def tiny_training(epochs: int = 3, hidden=(8,)) -> TrainingSection:
    net = NetworkConfig(hidden_layers=list(hidden), learning_rate=1e-3, epochs=epochs, batch_size=16)
    return TrainingSection(
        M2=M2Config(joint=net),
        M3=M3Config(angle=net, magnitude=net),
        M4=M4Config(angle=net, magnitude=net, alpha=0.0, gamma=0.0),
    )
