"""
Dataset persistence
===================

One CSV per dataset (header = column labels, rows in sample order, values in
``%.17g``) plus a YAML sidecar ``<name>.meta.yaml`` holding the split,
rejection count, generation seed, config and fingerprint.

Saving a loaded dataset reproduces both files byte for byte.
"""
from __future__ import annotations

import logging
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd

from ppf_lab.core.errors import DatasetFormatError, InputFileNotFound
from ppf_lab.models.network import NetworkCase
from ppf_lab.models.states import SPLIT_NAMES, Dataset
from ppf_lab.services.scenario_service import angle_columns, input_columns, magnitude_columns
from ppf_lab.utils.io import read_yaml, sidecar_path, write_frame, write_yaml

logger = logging.getLogger(__name__)

FORMAT_VERSION = 1


# --------------------------------------------------------------------------- #
# Save
# --------------------------------------------------------------------------- #
def save_dataset(dataset: Dataset, path: Union[str, Path]) -> Path:
    """Write ``path`` and its sidecar atomically; returns the CSV path."""
    path = Path(path)
    header = dataset.input_columns + dataset.angle_columns + dataset.magnitude_columns
    width = dataset.inputs.shape[1] + dataset.angles.shape[1] + dataset.magnitudes.shape[1]
    if len(header) != width:
        raise DatasetFormatError(f"{len(header)} column labels for {width} columns")

    table = np.hstack([dataset.inputs, dataset.angles, dataset.magnitudes]).reshape(dataset.n_rows, width)
    write_frame(pd.DataFrame(table, columns=header), path)

    meta: Dict[str, Any] = {
        "format_version": FORMAT_VERSION,
        "rows": dataset.n_rows,
        "columns": {
            "inputs": len(dataset.input_columns),
            "angles": len(dataset.angle_columns),
            "magnitudes": len(dataset.magnitude_columns),
        },
        "split": {name: int(dataset.split[name]) for name in SPLIT_NAMES},
        "rejected_count": int(dataset.rejected_count),
        "metadata": dataset.metadata,
    }
    write_yaml(sidecar_path(path), meta)
    logger.info("Saved dataset (%d rows) to %s", dataset.n_rows, path)
    return path


# --------------------------------------------------------------------------- #
# Load
# --------------------------------------------------------------------------- #
def _check_labels(found: List[str], expected: List[str], what: str, path: Path) -> None:
    if found != expected:
        raise DatasetFormatError(f"{path}: {what} columns do not match the case ({found[:3]}... vs {expected[:3]}...)")


def _read_table(path: Path, width: int) -> Tuple[List[str], np.ndarray]:
    try:
        frame = pd.read_csv(path, dtype=float, float_precision="round_trip")
    except pd.errors.EmptyDataError as exc:
        raise DatasetFormatError(f"{path}: empty file, header expected") from exc
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc

    header = [str(c) for c in frame.columns]
    if len(header) != width:
        raise DatasetFormatError(f"{path}: header has {len(header)} columns, metadata says {width}")
    table = np.ascontiguousarray(frame.to_numpy(dtype=float))
    # Short rows come back padded with NaN
    bad = np.flatnonzero(~np.isfinite(table).all(axis=1))
    if bad.size:
        raise DatasetFormatError(f"{path}: line {int(bad[0]) + 2} has missing or non-finite values")
    return header, table


def load_dataset(path: Union[str, Path], case: Optional[NetworkCase] = None) -> Dataset:
    """
    Read a dataset written by :func:`save_dataset`. When *case* is given the
    column labels must match its bus layout.
    """
    path = Path(path)
    meta_path = sidecar_path(path)
    if not path.is_file():
        raise InputFileNotFound(path, "dataset")
    if not meta_path.is_file():
        raise DatasetFormatError(f"{path}: metadata sidecar {meta_path.name} is missing")

    meta = read_yaml(meta_path)
    if meta.get("format_version") != FORMAT_VERSION:
        raise DatasetFormatError(f"{meta_path}: unsupported format_version {meta.get('format_version')!r}")
    try:
        n_in = int(meta["columns"]["inputs"])
        n_ang = int(meta["columns"]["angles"])
        n_mag = int(meta["columns"]["magnitudes"])
        split = {name: int(meta["split"][name]) for name in SPLIT_NAMES}
    except (KeyError, TypeError, ValueError) as exc:
        raise DatasetFormatError(f"{meta_path}: malformed metadata ({exc})") from exc

    header, table = _read_table(path, n_in + n_ang + n_mag)
    if sum(split.values()) != table.shape[0]:
        raise DatasetFormatError(f"{path}: split {split} does not cover {table.shape[0]} rows")

    in_cols = header[:n_in]
    ang_cols = header[n_in : n_in + n_ang]
    mag_cols = header[n_in + n_ang :]
    if case is not None:
        _check_labels(in_cols, input_columns(case), "input", path)
        _check_labels(ang_cols, angle_columns(case), "angle", path)
        _check_labels(mag_cols, magnitude_columns(case), "magnitude", path)

    logger.info("Loaded dataset (%d rows) from %s", table.shape[0], path)
    return Dataset(
        inputs=table[:, :n_in],
        angles=table[:, n_in : n_in + n_ang],
        magnitudes=table[:, n_in + n_ang :],
        split=split,
        rejected_count=int(meta.get("rejected_count", 0)),
        input_columns=in_cols,
        angle_columns=ang_cols,
        magnitude_columns=mag_cols,
        metadata=dict(meta.get("metadata") or {}),
    )


__all__ = ["FORMAT_VERSION", "save_dataset", "load_dataset"]
