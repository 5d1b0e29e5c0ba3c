"""
Method orchestration
====================

Methods
-------
M1  one OLS model over the stacked targets [angles, magnitudes]
M2  one network over the stacked targets (joint pooled scaling)
M3  separate angle and magnitude networks
M4  angle network trained with the angle-difference multitask loss, plus a
    split of load buses by magnitude std: buses with std <= gamma are
    regressed linearly, the rest by a magnitude network

Every component draws its initialisation and shuffle seeds from
``derive_seed(run_seed, <component tag>)``; M3 and M4 share the tags
``angle`` and ``magnitude``.
"""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence, Tuple, Union

import numpy as np

from ppf_lab.core.errors import BundleError, ConfigurationError, ContractViolation
from ppf_lab.models.estimators import BusSplit, LinearModel, MethodBundle, MlpModel, StateLayout
from ppf_lab.models.network import AdmittanceMatrix, NetworkCase
from ppf_lab.models.reports import EvalReport, ResponseMatrixPair
from ppf_lab.models.settings import METHOD_IDS, M4Config, NetworkConfig, TrainingSection
from ppf_lab.models.states import BranchFlows, Dataset, StateEstimate
from ppf_lab.services.case_service import build_ybus, incidence_matrix
from ppf_lab.services.metrics_service import angle_differences, average_rmse, evaluate
from ppf_lab.services.mlp_service import TrainingHistory, build_mlp, load_mlp, mlp_forward, save_mlp, train_mlp
from ppf_lab.services.powerflow_service import branch_flows_batch
from ppf_lab.services.regression_service import fit_ols, load_linear, save_linear
from ppf_lab.services.scenario_service import angle_columns, magnitude_columns
from ppf_lab.utils.io import fingerprint, read_yaml, write_yaml
from ppf_lab.utils.seeding import derive_seed

logger = logging.getLogger(__name__)

BUNDLE_FORMAT_VERSION = 1
MANIFEST_NAME = "manifest.yaml"


# --------------------------------------------------------------------------- #
# Case-derived structure
# --------------------------------------------------------------------------- #
def state_layout(case: NetworkCase) -> StateLayout:
    return StateLayout(
        n_bus=case.n_bus,
        slack_index=case.slack_index,
        pv_indices=case.pv_indices.copy(),
        pq_indices=case.pq_indices.copy(),
        v_known=case.v_setpoint.copy(),
        slack_angle=case.slack_angle,
        input_dim=case.input_dim,
    )


def assemble_states(layout: StateLayout, angles: np.ndarray, magnitudes: np.ndarray) -> StateEstimate:
    """Full n×N states; slack V and theta and PV magnitudes come from the layout."""
    n = angles.shape[0]
    if angles.shape != (n, layout.n_angles) or magnitudes.shape != (n, layout.n_magnitudes):
        raise ContractViolation(
            f"angles {angles.shape} / magnitudes {magnitudes.shape} do not fit a {layout.n_bus}-bus layout"
        )
    non_slack = np.r_[layout.pv_indices, layout.pq_indices].astype(np.int64)
    v_ang = np.full((n, layout.n_bus), layout.slack_angle)
    v_ang[:, non_slack] = angles + layout.slack_angle
    v_mag = np.tile(layout.v_known, (n, 1))
    v_mag[:, layout.pq_indices] = magnitudes
    return StateEstimate(v_mag=v_mag, v_ang=v_ang)


# --------------------------------------------------------------------------- #
# Bus split
# --------------------------------------------------------------------------- #
def split_buses(train_magnitudes: np.ndarray, gamma: float) -> BusSplit:
    if gamma < 0:
        raise ConfigurationError(f"gamma must be >= 0, got {gamma}")
    mags = np.asarray(train_magnitudes, dtype=float)
    if mags.ndim != 2 or mags.shape[0] < 2:
        raise ContractViolation(f"need at least 2 training rows to split buses, got {mags.shape}")
    std = mags.std(axis=0, ddof=1)
    small = np.flatnonzero(std <= gamma)
    big = np.flatnonzero(std > gamma)
    return BusSplit(small_std=small.tolist(), big_std=big.tolist(), gamma=float(gamma), per_bus_std=std)


# --------------------------------------------------------------------------- #
# Component training
# --------------------------------------------------------------------------- #
@dataclass
class TrainResult:
    bundle: MethodBundle
    histories: Dict[str, TrainingHistory] = field(default_factory=dict)
    seconds: float = 0.0


def _fit_network(
    tag: str,
    train: Tuple[np.ndarray, np.ndarray],
    validation: Tuple[np.ndarray, np.ndarray],
    net_cfg: NetworkConfig,
    run_seed: int,
    *,
    scaling: str,
    alpha: float = 0.0,
    incidence: Optional[np.ndarray] = None,
    epochs: Optional[int] = None,
) -> Tuple[MlpModel, TrainingHistory]:
    model = build_mlp(train[0], train[1], net_cfg.hidden_layers, derive_seed(run_seed, tag), output_scaling=scaling)
    cfg = net_cfg.to_train_config(
        alpha=alpha,
        incidence=incidence,
        shuffle_seed=derive_seed(run_seed, f"{tag}:shuffle"),
        output_scaling=scaling,
    )
    if epochs is not None:
        cfg = cfg.model_copy(update={"epochs": int(epochs)})
    model.config_fingerprint = fingerprint(cfg.model_dump(mode="json"), net_cfg.model_dump(mode="json"))
    return train_mlp(model, train, validation, cfg, desc=tag)


def _magnitude_models(
    split: BusSplit,
    x: Tuple[np.ndarray, np.ndarray],
    mags: Tuple[np.ndarray, np.ndarray],
    cfg: M4Config,
    run_seed: int,
    epochs: Optional[int],
) -> Tuple[Dict[str, Any], Dict[str, TrainingHistory]]:
    components: Dict[str, Any] = {}
    histories: Dict[str, TrainingHistory] = {}
    if split.big_std:
        net, hist = _fit_network(
            "magnitude",
            (x[0], _columns(mags[0], split.big_std)),
            (x[1], _columns(mags[1], split.big_std)),
            cfg.magnitude,
            run_seed,
            scaling="per_column",
            epochs=epochs,
        )
        components["magnitude"] = net
        histories["magnitude"] = hist
    else:
        logger.warning("degenerate split at gamma=%g: every load bus is regressed linearly", split.gamma)
    if split.small_std:
        components["magnitude_linear"] = fit_ols(x[0], _columns(mags[0], split.small_std))
    return components, histories


def _columns(matrix: np.ndarray, index: Sequence[int]) -> np.ndarray:
    """C-ordered column selection; the full index returns *matrix* itself."""
    if len(index) == matrix.shape[1] and list(index) == list(range(matrix.shape[1])):
        return matrix
    return np.ascontiguousarray(matrix[:, np.asarray(index, dtype=int)])


def train_method(
    method_id: str,
    case: NetworkCase,
    dataset: Dataset,
    training: TrainingSection,
    run_seed: int,
    *,
    gamma: Optional[float] = None,
    alpha: Optional[float] = None,
    epochs: Optional[int] = None,
) -> TrainResult:
    if method_id not in METHOD_IDS:
        raise ConfigurationError(f"unknown method {method_id!r}; expected one of {list(METHOD_IDS)}")
    layout = state_layout(case)
    if dataset.inputs.shape[1] != layout.input_dim:
        raise ContractViolation(f"dataset has {dataset.inputs.shape[1]} inputs, case expects {layout.input_dim}")

    x_tr, a_tr, m_tr = dataset.part("train")
    x_va, a_va, m_va = dataset.part("validation")
    started = time.perf_counter()
    components: Dict[str, Any] = {}
    histories: Dict[str, TrainingHistory] = {}
    split: Optional[BusSplit] = None
    used_alpha: Optional[float] = None
    tags: List[str] = []

    logger.info("Training %s on %d rows (validation %d)", method_id, x_tr.shape[0], x_va.shape[0])
    if method_id == "M1":
        components["linear"] = fit_ols(x_tr, np.hstack([a_tr, m_tr]))
    elif method_id == "M2":
        tags = ["joint"]
        net, hist = _fit_network(
            "joint",
            (x_tr, np.hstack([a_tr, m_tr])),
            (x_va, np.hstack([a_va, m_va])),
            training.M2.joint,
            run_seed,
            scaling="pooled",
            epochs=epochs,
        )
        components["joint"], histories["joint"] = net, hist
    elif method_id == "M3":
        tags = ["angle", "magnitude"]
        components["angle"], histories["angle"] = _fit_network(
            "angle", (x_tr, a_tr), (x_va, a_va), training.M3.angle, run_seed, scaling="pooled", epochs=epochs
        )
        components["magnitude"], histories["magnitude"] = _fit_network(
            "magnitude", (x_tr, m_tr), (x_va, m_va), training.M3.magnitude, run_seed, scaling="per_column", epochs=epochs
        )
    else:
        cfg = training.M4
        used_alpha = cfg.alpha if alpha is None else float(alpha)
        split = split_buses(m_tr, cfg.gamma if gamma is None else float(gamma))
        logger.info(
            "M4 split at gamma=%g: %d linear, %d network buses", split.gamma, len(split.small_std), len(split.big_std)
        )
        tags = ["angle", "magnitude"]
        components["angle"], histories["angle"] = _fit_network(
            "angle",
            (x_tr, a_tr),
            (x_va, a_va),
            cfg.angle,
            run_seed,
            scaling="pooled",
            alpha=used_alpha,
            incidence=incidence_matrix(case),
            epochs=epochs,
        )
        mag_components, mag_histories = _magnitude_models(split, (x_tr, x_va), (m_tr, m_va), cfg, run_seed, epochs)
        components.update(mag_components)
        histories.update(mag_histories)

    elapsed = time.perf_counter() - started
    provenance = {
        "run_seed": int(run_seed),
        "component_seeds": {tag: derive_seed(run_seed, tag) for tag in tags},
        "dataset_fingerprint": dataset.metadata.get("config_fingerprint"),
        "training": training.model_dump(mode="json"),
        "epochs_override": epochs,
    }
    bundle = MethodBundle(method_id, components, layout, split=split, alpha=used_alpha, provenance=provenance)
    logger.info("%s trained in %.2f s", method_id, elapsed)
    return TrainResult(bundle, histories, seconds=elapsed)


# --------------------------------------------------------------------------- #
# Prediction
# --------------------------------------------------------------------------- #
def _run(component: Any, inputs: np.ndarray) -> np.ndarray:
    if isinstance(component, LinearModel):
        return component.predict(inputs)
    return mlp_forward(component, inputs)


def predict_components(bundle: MethodBundle, inputs: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """(angles n×(N-1), magnitudes n×N_l) in physical units."""
    layout = bundle.layout
    inputs = np.asarray(inputs, dtype=float)
    if inputs.ndim != 2 or inputs.shape[1] != layout.input_dim:
        raise ContractViolation(f"expected n×{layout.input_dim} inputs, got {inputs.shape}")
    na = layout.n_angles
    comps = bundle.components

    if bundle.method_id in ("M1", "M2"):
        stacked = _run(comps["linear" if bundle.method_id == "M1" else "joint"], inputs)
        return stacked[:, :na], stacked[:, na:]

    angles = _run(comps["angle"], inputs)
    if bundle.method_id == "M3":
        return angles, _run(comps["magnitude"], inputs)

    split = bundle.split
    if split is None:
        raise BundleError("M4 bundle has no bus split")
    mags = np.empty((inputs.shape[0], layout.n_magnitudes))
    if split.big_std:
        mags[:, split.big_std] = _run(comps["magnitude"], inputs)
    if split.small_std:
        mags[:, split.small_std] = _run(comps["magnitude_linear"], inputs)
    return angles, mags


def predict_states(bundle: MethodBundle, inputs: np.ndarray) -> StateEstimate:
    angles, mags = predict_components(bundle, inputs)
    return assemble_states(bundle.layout, angles, mags)


def estimate_branch_flows(
    case: NetworkCase,
    estimates: StateEstimate,
    y: Optional[AdmittanceMatrix] = None,
) -> BranchFlows:
    return branch_flows_batch(case, estimates.v_mag, estimates.v_ang, y)


# --------------------------------------------------------------------------- #
# Validation sweeps
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class SweepPoint:
    value: float
    score: float
    detail: Dict[str, Any]


def _check_candidates(candidates: Sequence[float], what: str) -> List[float]:
    values = [float(c) for c in candidates]
    if not values:
        raise ConfigurationError(f"at least one {what} candidate is required")
    if any(v < 0 for v in values):
        raise ConfigurationError(f"{what} candidates must be >= 0, got {values}")
    return values


def tune_gamma(
    candidates: Sequence[float],
    dataset: Dataset,
    cfg: M4Config,
    run_seed: int,
    *,
    epochs: Optional[int] = None,
) -> Tuple[float, List[SweepPoint]]:
    """
    Validation average magnitude RMSE per gamma; ties go to the larger gamma.
    """
    values = _check_candidates(candidates, "gamma")
    x_tr, _, m_tr = dataset.part("train")
    x_va, _, m_va = dataset.part("validation")
    if x_va.shape[0] == 0:
        raise ConfigurationError("gamma tuning needs validation rows")

    points: List[SweepPoint] = []
    for gamma in values:
        split = split_buses(m_tr, gamma)
        comps, _ = _magnitude_models(split, (x_tr, x_va), (m_tr, m_va), cfg, run_seed, epochs)
        pred = np.empty_like(m_va)
        if split.big_std:
            pred[:, split.big_std] = _run(comps["magnitude"], x_va)
        if split.small_std:
            pred[:, split.small_std] = _run(comps["magnitude_linear"], x_va)
        score = average_rmse(ResponseMatrixPair(pred, m_va))
        points.append(SweepPoint(gamma, score, {"n_linear": len(split.small_std), "n_network": len(split.big_std)}))
        logger.info("gamma=%g: %d linear / %d network buses, validation RMSE %.6e",
                    gamma, len(split.small_std), len(split.big_std), score)

    if all(p.detail["n_network"] == 0 for p in points):
        logger.warning("every gamma candidate yields a purely linear magnitude model")
    best = min(points, key=lambda p: (p.score, -p.value))
    return best.value, points


def tune_alpha(
    candidates: Sequence[float],
    case: NetworkCase,
    dataset: Dataset,
    cfg: M4Config,
    run_seed: int,
    *,
    epochs: Optional[int] = None,
) -> Tuple[float, List[SweepPoint]]:
    """
    Validation branch-flow RMSE (mean of active and reactive) of the
    multitask angle network combined with true magnitudes; ties go to the
    smaller alpha.
    """
    values = _check_candidates(candidates, "alpha")
    x_tr, a_tr, _ = dataset.part("train")
    x_va, a_va, m_va = dataset.part("validation")
    if x_va.shape[0] == 0:
        raise ConfigurationError("alpha tuning needs validation rows")
    layout = state_layout(case)
    y = build_ybus(case)
    true_flows = estimate_branch_flows(case, assemble_states(layout, a_va, m_va), y)
    incidence = incidence_matrix(case)

    points: List[SweepPoint] = []
    for alpha in values:
        net, _ = _fit_network(
            "angle", (x_tr, a_tr), (x_va, a_va), cfg.angle, run_seed,
            scaling="pooled", alpha=alpha, incidence=incidence, epochs=epochs,
        )
        flows = estimate_branch_flows(case, assemble_states(layout, mlp_forward(net, x_va), m_va), y)
        p_rmse = average_rmse(ResponseMatrixPair(flows.p_from, true_flows.p_from))
        q_rmse = average_rmse(ResponseMatrixPair(flows.q_from, true_flows.q_from))
        score = 0.5 * (p_rmse + q_rmse)
        points.append(SweepPoint(alpha, score, {"p_flow_rmse": p_rmse, "q_flow_rmse": q_rmse}))
        logger.info("alpha=%g: validation flow RMSE %.6e (P %.6e, Q %.6e)", alpha, score, p_rmse, q_rmse)

    best = min(points, key=lambda p: (p.score, p.value))
    return best.value, points


# --------------------------------------------------------------------------- #
# Evaluation
# --------------------------------------------------------------------------- #
def branch_labels(case: NetworkCase) -> List[str]:
    """``<from>-<to>`` per in-service branch, ``#k`` appended for parallel lines."""
    seen: Dict[str, int] = {}
    labels: List[str] = []
    for br in case.in_service_branches:
        base = f"{br.from_bus}-{br.to_bus}"
        seen[base] = seen.get(base, 0) + 1
        labels.append(base if seen[base] == 1 else f"{base}#{seen[base]}")
    return labels


def response_labels(case: NetworkCase) -> Dict[str, List[str]]:
    branches = branch_labels(case)
    return {
        "angle": angle_columns(case),
        "angle_difference": branches,
        "magnitude": magnitude_columns(case),
        "p_flow": branches,
        "q_flow": branches,
    }


def evaluate_methods(
    case: NetworkCase,
    dataset: Dataset,
    bundles: Dict[str, MethodBundle],
    split_name: str = "test",
) -> EvalReport:
    """All metric families for every quantity and method on one dataset split."""
    x, a_true, m_true = dataset.part(split_name)
    layout = state_layout(case)
    y = build_ybus(case)
    true_flows = estimate_branch_flows(case, assemble_states(layout, a_true, m_true), y)
    true_diff = angle_differences(case, a_true)

    report = EvalReport(response_labels=response_labels(case))
    for method in sorted(bundles):
        bundle = bundles[method]
        if bundle.layout.n_bus != layout.n_bus or bundle.layout.input_dim != layout.input_dim:
            raise ContractViolation(f"{method} bundle was trained for a different case layout")
        angles, mags = predict_components(bundle, x)
        flows = estimate_branch_flows(case, assemble_states(layout, angles, mags), y)
        report.results[method] = {
            "angle": evaluate(angles, a_true),
            "angle_difference": evaluate(angle_differences(case, angles), true_diff),
            "magnitude": evaluate(mags, m_true),
            "p_flow": evaluate(flows.p_from, true_flows.p_from),
            "q_flow": evaluate(flows.q_from, true_flows.q_from),
        }
        logger.info(
            "%s: angle RMSE %.4e, P-flow RMSE %.4e, Q-flow RMSE %.4e",
            method,
            report.results[method]["angle"].avg_rmse,
            report.results[method]["p_flow"].avg_rmse,
            report.results[method]["q_flow"].avg_rmse,
        )
    return report


# --------------------------------------------------------------------------- #
# Bundle persistence
# --------------------------------------------------------------------------- #
def save_bundle(bundle: MethodBundle, directory: Union[str, Path]) -> Path:
    """One ``<component>.npz`` per component, manifest written last."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    entries: Dict[str, Dict[str, str]] = {}
    for name, comp in sorted(bundle.components.items()):
        file_name = f"{name}.npz"
        if isinstance(comp, LinearModel):
            save_linear(comp, directory / file_name)
            entries[name] = {"kind": "linear", "file": file_name}
        else:
            save_mlp(comp, directory / file_name)
            entries[name] = {"kind": "mlp", "file": file_name}

    split = None
    if bundle.split is not None:
        split = {
            "gamma": bundle.split.gamma,
            "small_std": list(bundle.split.small_std),
            "big_std": list(bundle.split.big_std),
            "per_bus_std": [float(s) for s in bundle.split.per_bus_std],
        }
    manifest = {
        "format_version": BUNDLE_FORMAT_VERSION,
        "method_id": bundle.method_id,
        "alpha": bundle.alpha,
        "split": split,
        "layout": bundle.layout.to_dict(),
        "components": entries,
        "provenance": bundle.provenance,
    }
    write_yaml(directory / MANIFEST_NAME, manifest)
    logger.info("Saved %s bundle to %s", bundle.method_id, directory)
    return directory


def load_bundle(directory: Union[str, Path]) -> MethodBundle:
    directory = Path(directory)
    manifest_path = directory / MANIFEST_NAME
    if not manifest_path.is_file():
        raise BundleError(f"bundle not found: {directory} (no {MANIFEST_NAME})")
    manifest = read_yaml(manifest_path)
    if manifest.get("format_version") != BUNDLE_FORMAT_VERSION:
        raise BundleError(f"{manifest_path}: unsupported format_version {manifest.get('format_version')!r}")
    try:
        components: Dict[str, Any] = {}
        for name, entry in manifest["components"].items():
            path = directory / entry["file"]
            components[name] = load_linear(path) if entry["kind"] == "linear" else load_mlp(path)
        raw_split = manifest.get("split")
        split = None
        if raw_split is not None:
            split = BusSplit(
                small_std=[int(i) for i in raw_split["small_std"]],
                big_std=[int(i) for i in raw_split["big_std"]],
                gamma=float(raw_split["gamma"]),
                per_bus_std=np.asarray(raw_split["per_bus_std"], dtype=float),
            )
        bundle = MethodBundle(
            method_id=str(manifest["method_id"]),
            components=components,
            layout=StateLayout.from_dict(manifest["layout"]),
            split=split,
            alpha=manifest.get("alpha"),
            provenance=dict(manifest.get("provenance") or {}),
        )
    except (KeyError, TypeError, AttributeError) as exc:
        raise BundleError(f"{manifest_path}: malformed manifest ({exc})") from exc
    logger.debug("Loaded %s bundle from %s", bundle.method_id, directory)
    return bundle


__all__ = [
    "BUNDLE_FORMAT_VERSION",
    "MANIFEST_NAME",
    "incidence_matrix",
    "state_layout",
    "assemble_states",
    "split_buses",
    "TrainResult",
    "train_method",
    "predict_components",
    "predict_states",
    "estimate_branch_flows",
    "branch_labels",
    "response_labels",
    "evaluate_methods",
    "SweepPoint",
    "tune_gamma",
    "tune_alpha",
    "save_bundle",
    "load_bundle",
]
