"""Ordinary least squares with intercept (the linear estimator)."""
from __future__ import annotations

import io
import logging
from pathlib import Path
from typing import Union

import numpy as np
from scipy import linalg

from ppf_lab.core.errors import BundleError, ContractViolation, UnderdeterminedError
from ppf_lab.models.estimators import LinearModel
from ppf_lab.utils.io import atomic_write_bytes

logger = logging.getLogger(__name__)

LINEAR_FORMAT_VERSION = 1


def _design(inputs: np.ndarray) -> np.ndarray:
    return np.hstack([np.ones((inputs.shape[0], 1)), inputs])


def fit_ols(inputs: np.ndarray, targets: np.ndarray) -> LinearModel:
    """
    Minimise ``||[1, X] h^T - Y||_F`` through column-pivoted QR. A rank
    deficient design falls back to the minimum-norm least-squares solution.
    """
    inputs = np.asarray(inputs, dtype=float)
    targets = np.asarray(targets, dtype=float)
    if targets.ndim == 1:
        targets = targets[:, None]
    if inputs.ndim != 2 or inputs.shape[0] != targets.shape[0]:
        raise ContractViolation(f"inputs {inputs.shape} and targets {targets.shape} are not row-aligned")
    n, d_in = inputs.shape
    if n <= d_in + 1:
        raise UnderdeterminedError(f"{n} samples cannot determine {d_in + 1} coefficients per output")

    a = _design(inputs)
    q, r, piv = linalg.qr(a, mode="economic", pivoting=True)
    diag = np.abs(np.diag(r))
    tol = diag[0] * max(a.shape) * np.finfo(float).eps if diag.size else 0.0
    rank = int(np.sum(diag > tol))

    if rank < a.shape[1]:
        logger.warning("OLS design is rank deficient (%d < %d); using minimum-norm solution", rank, a.shape[1])
        coef, *_ = linalg.lstsq(a, targets)
    else:
        coef_piv = linalg.solve_triangular(r, q.T @ targets)
        coef = np.empty_like(coef_piv)
        coef[piv] = coef_piv
    return LinearModel(h=np.ascontiguousarray(coef.T))


# --------------------------------------------------------------------------- #
# Persistence
# --------------------------------------------------------------------------- #
def save_linear(model: LinearModel, path: Union[str, Path]) -> Path:
    buf = io.BytesIO()
    np.savez(buf, format_version=np.array(LINEAR_FORMAT_VERSION), kind=np.array("linear"), h=model.h)
    return atomic_write_bytes(path, buf.getvalue())


def load_linear(path: Union[str, Path]) -> LinearModel:
    try:
        with np.load(path, allow_pickle=False) as data:
            if str(data["kind"]) != "linear" or int(data["format_version"]) != LINEAR_FORMAT_VERSION:
                raise BundleError(f"{path}: not a linear model file of version {LINEAR_FORMAT_VERSION}")
            return LinearModel(h=np.array(data["h"], dtype=float))
    except (OSError, KeyError, ValueError) as exc:
        raise BundleError(f"{path}: cannot read linear model ({exc})") from exc


__all__ = ["fit_ols", "save_linear", "load_linear", "LINEAR_FORMAT_VERSION"]
