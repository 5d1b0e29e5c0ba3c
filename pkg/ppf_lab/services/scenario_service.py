"""
Monte Carlo scenario generation
===============================

* Profile-driven PQ buses: net active demand = base demand - PV output, with
  reactive demand Q = P * u, u ~ Uniform(0, 1) drawn per sample and bus.
* Remaining PQ buses: joint Gaussian (P, Q) demands, means = case demands,
  stds = ``load_std_fraction`` * |mean|, equicorrelation ``corr_p`` among
  active and ``corr_q`` among reactive demands, no P/Q cross-correlation.
* Sample k is drawn from ``SeedSequence([seed, k])`` so it is reproducible on
  its own, whatever the worker count or completion order.
"""
from __future__ import annotations

import logging
import math
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Any, Dict, List, Optional, Protocol, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from tqdm import tqdm

from ppf_lab.core.config import PROGRESS, worker_count
from ppf_lab.core.errors import ConfigurationError, DatasetError, InputFileNotFound, SolverError
from ppf_lab.models.network import AdmittanceMatrix, NetworkCase
from ppf_lab.models.settings import ProfileConfig, SamplingConfig, SolverOptions
from ppf_lab.models.states import SPLIT_NAMES, Dataset, InjectionSample, PfState, StateSample
from ppf_lab.services.case_service import build_ybus, resolve_bus_ids
from ppf_lab.services.powerflow_service import solve_pf
from ppf_lab.utils.io import fingerprint
from ppf_lab.utils.seeding import sample_rng

logger = logging.getLogger(__name__)

COV_JITTER = 1e-10
_COLD_BLOCK = 256  # solve-block size when warm start is off


# --------------------------------------------------------------------------- #
# Column labels
# --------------------------------------------------------------------------- #
def input_columns(case: NetworkCase) -> List[str]:
    ids = case.bus_ids
    return (
        [f"p_g:{ids[i]}" for i in case.pv_indices]
        + [f"p_l:{ids[i]}" for i in case.pq_indices]
        + [f"q_l:{ids[i]}" for i in case.pq_indices]
    )


def angle_columns(case: NetworkCase) -> List[str]:
    return [f"theta:{case.bus_ids[i]}" for i in case.non_slack_indices]


def magnitude_columns(case: NetworkCase) -> List[str]:
    return [f"vm:{case.bus_ids[i]}" for i in case.pq_indices]


# --------------------------------------------------------------------------- #
# PV profile sources
# --------------------------------------------------------------------------- #
class ProfileSource(Protocol):
    bus_ids: List[int]

    def pv_output(self, k: int, rng: np.random.Generator) -> np.ndarray:
        """Per-unit PV output of every profile bus for sample *k*."""
        ...


class SyntheticPvProfile:
    """
    Half-sine clear-sky envelope over daylight hours at a uniformly drawn time
    of day, times an independent Beta(a, b) cloud factor per bus.
    """

    def __init__(self, bus_ids: Sequence[int], capacity: np.ndarray, cfg: ProfileConfig) -> None:
        self.bus_ids = list(bus_ids)
        self.capacity = np.asarray(capacity, dtype=float)
        self.cfg = cfg

    def pv_output(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if not self.bus_ids:
            return np.zeros(0)
        hour = rng.uniform(self.cfg.sunrise_hour, self.cfg.sunset_hour)
        span = self.cfg.sunset_hour - self.cfg.sunrise_hour
        clear_sky = math.sin(math.pi * (hour - self.cfg.sunrise_hour) / span)
        cloud = rng.beta(self.cfg.beta_a, self.cfg.beta_b, size=len(self.bus_ids))
        return self.capacity * clear_sky * cloud


class CsvPvProfile:
    """User-supplied PV outputs: columns ``pv:<bus>`` in MW, row k = sample k."""

    def __init__(self, path: Union[str, Path], bus_ids: Sequence[int], base_mva: float) -> None:
        path = Path(path)
        if not path.is_file():
            raise InputFileNotFound(path, "PV profile CSV")
        self.bus_ids = list(bus_ids)
        try:
            frame = pd.read_csv(path, float_precision="round_trip")
        except (pd.errors.EmptyDataError, ValueError) as exc:
            raise ConfigurationError(f"{path}: unreadable PV profile ({exc})") from exc
        wanted = [f"pv:{b}" for b in self.bus_ids]
        missing = [c for c in wanted if c not in frame.columns]
        if missing:
            raise ConfigurationError(f"{path}: PV profile lacks columns {missing}")
        try:
            table = frame[wanted].to_numpy(dtype=float)
        except (ValueError, TypeError) as exc:
            raise ConfigurationError(f"{path}: malformed PV profile row ({exc})") from exc
        if not np.all(np.isfinite(table)):
            raise ConfigurationError(f"{path}: PV profile has missing or non-finite values")
        self.table = np.ascontiguousarray(table) / base_mva
        logger.info("Loaded %d PV profile rows for %d buses from %s", table.shape[0], len(wanted), path)

    def pv_output(self, k: int, rng: np.random.Generator) -> np.ndarray:
        if k >= self.table.shape[0]:
            raise ConfigurationError(
                f"PV profile has {self.table.shape[0]} rows but sample {k} was requested"
            )
        return self.table[k].copy()


# --------------------------------------------------------------------------- #
# Sampler
# --------------------------------------------------------------------------- #
def equicorrelation_factor(n: int, rho: float) -> np.ndarray:
    """Lower Cholesky factor of (1 - rho) I + rho 11^T, jittered once if needed."""
    if n == 0:
        return np.zeros((0, 0))
    corr = np.full((n, n), rho)
    np.fill_diagonal(corr, 1.0)
    try:
        return np.linalg.cholesky(corr)
    except np.linalg.LinAlgError:
        logger.warning("correlation matrix (n=%d, rho=%g) not positive definite; adding jitter", n, rho)
    try:
        return np.linalg.cholesky(corr + COV_JITTER * np.eye(n))
    except np.linalg.LinAlgError as exc:
        raise ConfigurationError(
            f"correlation matrix with rho={rho} is not positive definite even after jitter"
        ) from exc


def default_profile_positions(case: NetworkCase, count: int) -> np.ndarray:
    """
    Positions (within the PQ block) of the *count* highest-demand PQ buses,
    capped at half of the PQ buses with positive demand.
    """
    demand = case.p_demand[case.pq_indices]
    loaded = np.flatnonzero(demand > 0)
    take = min(count, loaded.size // 2)
    order = loaded[np.argsort(-demand[loaded], kind="stable")]
    return np.sort(order[:take])


class ScenarioSampler:
    """Everything a single draw needs, prepared once per (case, config)."""

    def __init__(
        self,
        case: NetworkCase,
        cfg: SamplingConfig,
        profile: Optional[ProfileSource] = None,
    ) -> None:
        self.case = case
        self.cfg = cfg
        self.seed = int(cfg.seed) if cfg.seed is not None else 0

        pq = case.pq_indices
        if cfg.pv_buses is not None:
            dense = resolve_bus_ids(case, cfg.pv_buses)
            position = {int(idx): pos for pos, idx in enumerate(pq)}
            bad = [b for b, idx in zip(cfg.pv_buses, dense) if int(idx) not in position]
            if bad:
                raise ConfigurationError(f"profile buses must be PQ buses; not PQ: {bad}")
            self.profile_positions = np.sort(np.array([position[int(i)] for i in dense], dtype=np.int64))
        else:
            self.profile_positions = default_profile_positions(case, cfg.profile_bus_count)
        mask = np.ones(pq.size, dtype=bool)
        mask[self.profile_positions] = False
        self.gaussian_positions = np.flatnonzero(mask)

        self.base_p = case.p_demand[pq]
        self.base_q = case.q_demand[pq]
        self.base_pg = case.p_generation[case.pv_indices]

        ng = self.gaussian_positions.size
        self.chol_p = equicorrelation_factor(ng, cfg.corr_p)
        self.chol_q = equicorrelation_factor(ng, cfg.corr_q)
        self.std_p = cfg.load_std_fraction * np.abs(self.base_p[self.gaussian_positions])
        self.std_q = cfg.load_std_fraction * np.abs(self.base_q[self.gaussian_positions])

        profile_ids = [int(case.bus_ids[pq[p]]) for p in self.profile_positions]
        self.profile = profile or make_profile_source(case, cfg.profile, profile_ids, self.base_p[self.profile_positions])
        logger.debug(
            "Sampler for %s: %d profile buses %s, %d Gaussian buses",
            case.name, len(profile_ids), profile_ids, ng,
        )

    @property
    def profile_bus_ids(self) -> List[int]:
        return list(self.profile.bus_ids)

    def sample(self, k: int) -> InjectionSample:
        rng = sample_rng(self.seed, k)
        ng = self.gaussian_positions.size
        n_prof = self.profile_positions.size
        z_p = rng.standard_normal(ng)
        z_q = rng.standard_normal(ng)
        u = rng.uniform(np.nextafter(0.0, 1.0), 1.0, size=n_prof)
        pv = self.profile.pv_output(k, rng)

        p_l = self.base_p.copy()
        q_l = self.base_q.copy()
        g = self.gaussian_positions
        p_l[g] = self.base_p[g] + self.std_p * (self.chol_p @ z_p)
        q_l[g] = self.base_q[g] + self.std_q * (self.chol_q @ z_q)
        prof = self.profile_positions
        p_l[prof] = self.base_p[prof] - pv
        q_l[prof] = p_l[prof] * u
        return InjectionSample(np.concatenate([self.base_pg, p_l, q_l]))


def make_profile_source(
    case: NetworkCase,
    cfg: ProfileConfig,
    bus_ids: Sequence[int],
    base_demand: np.ndarray,
) -> ProfileSource:
    if cfg.source == "csv":
        return CsvPvProfile(cfg.csv_path, bus_ids, case.base_mva)  # type: ignore[arg-type]
    return SyntheticPvProfile(bus_ids, cfg.pv_capacity_fraction * np.abs(base_demand), cfg)


def sample_injections(case: NetworkCase, cfg: SamplingConfig, k: int) -> InjectionSample:
    """One draw; prefer a reused :class:`ScenarioSampler` inside loops."""
    return ScenarioSampler(case, cfg).sample(k)


# --------------------------------------------------------------------------- #
# Dataset assembly
# --------------------------------------------------------------------------- #
def state_sample(case: NetworkCase, state: PfState) -> StateSample:
    """Angles relative to the slack angle ([PV; PQ] order) and PQ magnitudes."""
    return StateSample(
        y_a=state.v_ang[case.non_slack_indices] - state.v_ang[case.slack_index],
        v_l=state.v_mag[case.pq_indices].copy(),
    )


Row = Optional[Tuple[np.ndarray, np.ndarray, np.ndarray]]


def _solve_block(
    case: NetworkCase,
    y: AdmittanceMatrix,
    sampler: ScenarioSampler,
    opts: SolverOptions,
    indices: range,
) -> List[Row]:
    out: List[Row] = []
    previous: Optional[PfState] = None
    for k in indices:
        x = sampler.sample(k)
        try:
            sol = solve_pf(case, y, x, opts, initial=previous if opts.warm_start else None)
        except SolverError as exc:
            logger.debug("sample %d rejected: %s", k, exc)
            out.append(None)
            continue
        if not sol.converged:
            logger.debug("sample %d rejected: no convergence (mismatch %.3e)", k, sol.max_mismatch)
            out.append(None)
            continue
        previous = sol.state
        st = state_sample(case, sol.state)
        out.append((x.x, st.y_a, st.v_l))
    return out


def build_dataset(
    case: NetworkCase,
    cfg: SamplingConfig,
    opts: Optional[SolverOptions] = None,
    *,
    workers: Optional[int] = None,
    profile: Optional[ProfileSource] = None,
    metadata: Optional[Dict[str, Any]] = None,
) -> Dataset:
    """
    Solve every sample and assemble index-ordered rows; non-converged samples
    are counted and skipped. Rows beyond the split total are discarded.
    """
    opts = opts or SolverOptions()
    sampler = ScenarioSampler(case, cfg, profile)
    y = build_ybus(case)

    n = cfg.sample_count
    block = opts.warm_start_block if opts.warm_start else _COLD_BLOCK
    blocks = [range(s, min(s + block, n)) for s in range(0, n, block)]
    n_workers = worker_count(workers)
    logger.info(
        "Generating %d samples for %s with %d worker(s) (warm_start=%s)",
        n, case.name, n_workers, opts.warm_start,
    )

    def _run(indices: range) -> List[Row]:
        return _solve_block(case, y, sampler, opts, indices)

    rows: List[Row] = []
    with tqdm(total=n, desc="MCS", unit="sample", disable=None if PROGRESS else True) as bar:
        if n_workers == 1:
            results = map(_run, blocks)
            for chunk in results:
                rows.extend(chunk)
                bar.update(len(chunk))
        else:
            with ThreadPoolExecutor(max_workers=n_workers) as pool:
                for chunk in pool.map(_run, blocks):
                    rows.extend(chunk)
                    bar.update(len(chunk))

    accepted = [r for r in rows if r is not None]
    rejected = n - len(accepted)
    if n and rejected / n > cfg.max_rejection_rate:
        raise DatasetError(
            f"{rejected} of {n} samples failed to converge "
            f"(> {cfg.max_rejection_rate:.0%}); the sampling configuration is likely ill-posed"
        )
    total = cfg.split_total
    if len(accepted) < total:
        raise DatasetError(
            f"only {len(accepted)} converged samples for a split total of {total}; raise sample_count"
        )
    accepted = accepted[:total]

    d_x, d_a, d_m = case.input_dim, case.n_bus - 1, case.n_pq
    inputs = np.array([r[0] for r in accepted]).reshape(total, d_x)
    angles = np.array([r[1] for r in accepted]).reshape(total, d_a)
    magnitudes = np.array([r[2] for r in accepted]).reshape(total, d_m)

    meta: Dict[str, Any] = {
        "case": case.name,
        "seed": sampler.seed,
        "sampling": cfg.model_dump(mode="json"),
        "solver": opts.model_dump(mode="json"),
        "profile_buses": sampler.profile_bus_ids,
        "config_fingerprint": fingerprint(cfg.model_dump(mode="json"), opts.model_dump(mode="json")),
    }
    meta.update(metadata or {})
    logger.info("Dataset ready: %d rows, %d rejected", total, rejected)
    return Dataset(
        inputs=inputs,
        angles=angles,
        magnitudes=magnitudes,
        split=dict(zip(SPLIT_NAMES, cfg.split)),
        rejected_count=rejected,
        input_columns=input_columns(case),
        angle_columns=angle_columns(case),
        magnitude_columns=magnitude_columns(case),
        metadata=meta,
    )


def magnitude_std_summary(dataset: Dataset, thresholds: Sequence[float] = (1e-4, 1e-3, 1e-2)) -> Dict[str, Any]:
    """Per-bus training-split magnitude stds (ddof=1), the input to choosing gamma."""
    _, _, mags = dataset.part("train")
    if mags.shape[0] < 2:
        std = np.zeros(mags.shape[1])
    else:
        std = mags.std(axis=0, ddof=1)
    return {
        "per_bus": dict(zip(dataset.magnitude_columns, (float(s) for s in std))),
        "min": float(std.min()) if std.size else 0.0,
        "median": float(np.median(std)) if std.size else 0.0,
        "max": float(std.max()) if std.size else 0.0,
        "at_or_below": {f"{t:g}": int(np.sum(std <= t)) for t in thresholds},
    }


__all__ = [
    "input_columns",
    "angle_columns",
    "magnitude_columns",
    "ProfileSource",
    "SyntheticPvProfile",
    "CsvPvProfile",
    "equicorrelation_factor",
    "default_profile_positions",
    "ScenarioSampler",
    "make_profile_source",
    "sample_injections",
    "state_sample",
    "build_dataset",
    "magnitude_std_summary",
]
