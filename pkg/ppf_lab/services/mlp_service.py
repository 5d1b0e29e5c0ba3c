"""
Fully connected regression networks
===================================

Forward pass, backpropagation, the angle / angle-difference multitask loss,
a bias-corrected Adam optimiser and a mini-batch training loop with early
stopping. Everything runs in the standardized space of the model; callers
see physical units only through :func:`mlp_forward`.

Loss normalisation
------------------
For a batch of b rows, d angle responses and M branches, with e = pred - true:

    L = sum(e^2) / (b d) + alpha * sum((e A^T)^2) / (b M)
    dL/dpred = 2 e / (b d) + alpha * 2 (e A^T) A / (b M)
"""
from __future__ import annotations

import io
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from tqdm import tqdm

from ppf_lab.core.config import PROGRESS
from ppf_lab.core.errors import BundleError, ConfigurationError, ContractViolation, DivergenceError
from ppf_lab.models.estimators import MlpModel, Standardizer
from ppf_lab.models.settings import TrainConfig
from ppf_lab.utils.io import atomic_write_bytes

logger = logging.getLogger(__name__)

MLP_FORMAT_VERSION = 1

Batch = Tuple[np.ndarray, np.ndarray]


# --------------------------------------------------------------------------- #
# Construction
# --------------------------------------------------------------------------- #
def init_mlp(
    layer_dims: Sequence[int],
    seed: int,
    *,
    input_standardizer: Optional[Standardizer] = None,
    output_standardizer: Optional[Standardizer] = None,
) -> MlpModel:
    """He-uniform weights (limit sqrt(6 / fan_in)), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigurationError(f"invalid layer dims {dims}")
    rng = np.random.default_rng(seed)
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        limit = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-limit, limit, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpModel(
        layer_dims=dims,
        weights=weights,
        biases=biases,
        input_standardizer=input_standardizer or Standardizer.identity(dims[0]),
        output_standardizer=output_standardizer or Standardizer.identity(dims[-1]),
    )


def build_mlp(
    train_inputs: np.ndarray,
    train_targets: np.ndarray,
    hidden_layers: Sequence[int],
    seed: int,
    *,
    output_scaling: str = "per_column",
) -> MlpModel:
    """Initialise a network sized for the data, with standardizers fitted on it."""
    dims = [train_inputs.shape[1], *hidden_layers, train_targets.shape[1]]
    return init_mlp(
        dims,
        seed,
        input_standardizer=Standardizer.fit(train_inputs),
        output_standardizer=Standardizer.fit(train_targets, pooled=output_scaling == "pooled"),
    )


# --------------------------------------------------------------------------- #
# Forward / backward
# --------------------------------------------------------------------------- #
@dataclass
class _Cache:
    layer_inputs: List[np.ndarray]
    pre_activations: List[np.ndarray]


def _forward_scaled(model: MlpModel, z: np.ndarray) -> Tuple[np.ndarray, _Cache]:
    cache = _Cache([], [])
    h = z
    last = len(model.weights) - 1
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        cache.layer_inputs.append(h)
        a = h @ w + b
        if l < last:
            cache.pre_activations.append(a)
            h = np.maximum(a, 0.0)
        else:
            h = a
    return h, cache


def _backward(model: MlpModel, cache: _Cache, grad_out: np.ndarray) -> List[np.ndarray]:
    """Gradients in ``model.parameters()`` order."""
    grads: List[np.ndarray] = [np.empty(0)] * (2 * len(model.weights))
    g = grad_out
    for l in range(len(model.weights) - 1, -1, -1):
        grads[2 * l] = cache.layer_inputs[l].T @ g
        grads[2 * l + 1] = g.sum(axis=0)
        if l > 0:
            g = (g @ model.weights[l].T) * (cache.pre_activations[l - 1] > 0)
    return grads


def _check_width(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    batch = np.asarray(batch, dtype=float)
    if batch.ndim != 2 or batch.shape[1] != model.d_in:
        raise ContractViolation(f"expected b×{model.d_in} batch, got {batch.shape}")
    return batch


def mlp_forward(model: MlpModel, batch: np.ndarray) -> np.ndarray:
    """Physical-unit predictions for a b×d_in batch."""
    batch = _check_width(model, batch)
    out, _ = _forward_scaled(model, model.input_standardizer.apply(batch))
    return model.output_standardizer.invert(out)


def min_preactivation(model: MlpModel, batch: np.ndarray) -> float:
    """Smallest |pre-activation| over hidden units; distance to the nearest ReLU kink."""
    batch = _check_width(model, batch)
    _, cache = _forward_scaled(model, model.input_standardizer.apply(batch))
    if not cache.pre_activations:
        return float("inf")
    return float(min(np.min(np.abs(a)) for a in cache.pre_activations))


# --------------------------------------------------------------------------- #
# Losses
# --------------------------------------------------------------------------- #
def multitask_loss(
    pred: np.ndarray,
    true: np.ndarray,
    incidence: Optional[np.ndarray] = None,
    alpha: float = 0.0,
) -> Tuple[float, np.ndarray]:
    """Angle MSE plus alpha times branch angle-difference MSE; returns (loss, dL/dpred)."""
    if alpha < 0:
        raise ConfigurationError(f"alpha must be >= 0, got {alpha}")
    if pred.shape != true.shape or pred.ndim != 2:
        raise ContractViolation(f"pred {pred.shape} and true {true.shape} must be equal b×d matrices")
    b, d = pred.shape
    err = pred - true
    loss = float(np.sum(err * err)) / (b * d)
    grad = 2.0 * err / (b * d)
    if alpha == 0:
        return loss, grad

    if incidence is None:
        raise ConfigurationError("alpha > 0 needs an incidence matrix")
    a = np.asarray(incidence, dtype=float)
    if a.ndim != 2 or a.shape[1] != d:
        raise ContractViolation(f"incidence {a.shape} does not match {d} angle responses")
    m = a.shape[0]
    if m == 0:
        return loss, grad
    diff = err @ a.T
    loss += alpha * float(np.sum(diff * diff)) / (b * m)
    grad = grad + alpha * 2.0 * (diff @ a) / (b * m)
    return loss, grad


def mse_loss(pred: np.ndarray, true: np.ndarray) -> Tuple[float, np.ndarray]:
    return multitask_loss(pred, true)


def _loss_and_grads(
    model: MlpModel,
    z: np.ndarray,
    t: np.ndarray,
    incidence: Optional[np.ndarray],
    alpha: float,
) -> Tuple[float, List[np.ndarray]]:
    out, cache = _forward_scaled(model, z)
    loss, grad_out = multitask_loss(out, t, incidence, alpha)
    return loss, _backward(model, cache, grad_out)


def _loss_only(model: MlpModel, z: np.ndarray, t: np.ndarray, incidence: Optional[np.ndarray], alpha: float) -> float:
    out, _ = _forward_scaled(model, z)
    return multitask_loss(out, t, incidence, alpha)[0]


# --------------------------------------------------------------------------- #
# Optimiser
# --------------------------------------------------------------------------- #
class AdamOptimizer:
    """Adam with bias-corrected moments; updates parameter arrays in place."""

    def __init__(
        self,
        params: List[np.ndarray],
        learning_rate: float,
        betas: Tuple[float, float] = (0.9, 0.999),
        eps: float = 1e-8,
    ) -> None:
        self.params = params
        self.lr = learning_rate
        self.beta1, self.beta2 = betas
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p) for p in params]
        self.v = [np.zeros_like(p) for p in params]

    def step(self, grads: List[np.ndarray]) -> None:
        self.t += 1
        c1 = 1.0 - self.beta1 ** self.t
        c2 = 1.0 - self.beta2 ** self.t
        for p, g, m, v in zip(self.params, grads, self.m, self.v):
            m *= self.beta1
            m += (1.0 - self.beta1) * g
            v *= self.beta2
            v += (1.0 - self.beta2) * (g * g)
            p -= self.lr * (m / c1) / (np.sqrt(v / c2) + self.eps)


# --------------------------------------------------------------------------- #
# Training
# --------------------------------------------------------------------------- #
@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    validation_loss: float
    best: bool


@dataclass
class TrainingHistory:
    records: List[EpochRecord] = field(default_factory=list)
    best_epoch: int = 0
    stopped_early: bool = False

    @property
    def train_losses(self) -> List[float]:
        return [r.train_loss for r in self.records]

    @property
    def validation_losses(self) -> List[float]:
        return [r.validation_loss for r in self.records]


def train_mlp(
    model: MlpModel,
    train: Batch,
    validation: Optional[Batch],
    cfg: TrainConfig,
    *,
    desc: str = "train",
) -> Tuple[MlpModel, TrainingHistory]:
    """
    Mini-batch Adam on a copy of *model*. Returns the weights with the lowest
    validation loss (training loss when no validation rows are given).
    """
    x_tr = _check_width(model, train[0])
    y_tr = np.asarray(train[1], dtype=float)
    if y_tr.shape != (x_tr.shape[0], model.d_out):
        raise ContractViolation(f"targets {y_tr.shape} do not match {x_tr.shape[0]}×{model.d_out}")
    if x_tr.shape[0] == 0:
        raise ContractViolation("no training rows")

    incidence = None if cfg.incidence is None else np.asarray(cfg.incidence, dtype=float)
    alpha = cfg.alpha
    if alpha > 0 and incidence is None:
        raise ConfigurationError("alpha > 0 needs an incidence matrix")

    model = model.copy()
    z_tr = model.input_standardizer.apply(x_tr)
    t_tr = model.output_standardizer.apply(y_tr)
    z_va = t_va = None
    if validation is not None and np.asarray(validation[0]).shape[0] > 0:
        z_va = model.input_standardizer.apply(_check_width(model, validation[0]))
        t_va = model.output_standardizer.apply(np.asarray(validation[1], dtype=float))

    params = model.parameters()
    adam = AdamOptimizer(params, cfg.learning_rate, cfg.adam_betas, cfg.adam_eps)
    rng = np.random.default_rng(cfg.shuffle_seed)
    n = z_tr.shape[0]
    bs = cfg.batch_size

    history = TrainingHistory()
    best_loss = np.inf
    best_params = [p.copy() for p in params]
    wait = 0

    epochs = tqdm(range(1, cfg.epochs + 1), desc=desc, unit="epoch", leave=False, disable=None if PROGRESS else True)
    for epoch in epochs:
        order = rng.permutation(n)
        total = 0.0
        for batch_no, start in enumerate(range(0, n, bs), start=1):
            idx = order[start : start + bs]
            loss, grads = _loss_and_grads(model, z_tr[idx], t_tr[idx], incidence, alpha)
            if not np.isfinite(loss) or not all(np.all(np.isfinite(g)) for g in grads):
                raise DivergenceError("non-finite loss or gradient", epoch, batch_no)
            adam.step(grads)
            total += loss * idx.size
        train_loss = total / n

        if z_va is not None:
            val_loss = _loss_only(model, z_va, t_va, incidence, alpha)
        else:
            val_loss = train_loss
        if not np.isfinite(val_loss):
            raise DivergenceError("non-finite validation loss", epoch, 0)

        improved = val_loss < best_loss
        if improved:
            best_loss = val_loss
            best_params = [p.copy() for p in params]
            history.best_epoch = epoch
            wait = 0
        else:
            wait += 1
        history.records.append(EpochRecord(epoch, float(train_loss), float(val_loss), improved))
        logger.debug("%s epoch %d: train %.6e, validation %.6e", desc, epoch, train_loss, val_loss)
        if wait >= cfg.early_stop_patience:
            history.stopped_early = True
            logger.info("%s: early stop at epoch %d (best %d)", desc, epoch, history.best_epoch)
            break

    for p, best in zip(params, best_params):
        p[...] = best
    logger.info("%s: best validation loss %.6e at epoch %d", desc, best_loss, history.best_epoch)
    return model, history


# --------------------------------------------------------------------------- #
# Gradient check
# --------------------------------------------------------------------------- #
def grad_check(
    model: MlpModel,
    inputs: np.ndarray,
    targets: np.ndarray,
    *,
    incidence: Optional[np.ndarray] = None,
    alpha: float = 0.0,
    step: float = 1e-6,
) -> float:
    """
    Worst relative error between analytic and central-difference gradients
    over every parameter; denominators are floored at 1e-5.
    """
    model = model.copy()
    z = model.input_standardizer.apply(_check_width(model, inputs))
    t = model.output_standardizer.apply(np.asarray(targets, dtype=float))
    _, grads = _loss_and_grads(model, z, t, incidence, alpha)

    worst = 0.0
    for p, g in zip(model.parameters(), grads):
        flat_p = p.reshape(-1)
        flat_g = g.reshape(-1)
        for i in range(flat_p.size):
            orig = flat_p[i]
            flat_p[i] = orig + step
            up = _loss_only(model, z, t, incidence, alpha)
            flat_p[i] = orig - step
            down = _loss_only(model, z, t, incidence, alpha)
            flat_p[i] = orig
            numeric = (up - down) / (2.0 * step)
            denom = max(abs(flat_g[i]), abs(numeric), 1e-5)
            worst = max(worst, abs(flat_g[i] - numeric) / denom)
    return worst


# --------------------------------------------------------------------------- #
# Persistence
# --------------------------------------------------------------------------- #
def save_mlp(model: MlpModel, path: Union[str, Path]) -> Path:
    arrays = {
        "format_version": np.array(MLP_FORMAT_VERSION),
        "kind": np.array("mlp"),
        "layer_dims": np.asarray(model.layer_dims, dtype=np.int64),
        "input_mean": model.input_standardizer.mean,
        "input_std": model.input_standardizer.std,
        "output_mean": model.output_standardizer.mean,
        "output_std": model.output_standardizer.std,
        "config_fingerprint": np.array(model.config_fingerprint),
    }
    for l, (w, b) in enumerate(zip(model.weights, model.biases)):
        arrays[f"W{l}"] = np.ascontiguousarray(w)
        arrays[f"b{l}"] = b
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    return atomic_write_bytes(path, buf.getvalue())


def load_mlp(path: Union[str, Path]) -> MlpModel:
    try:
        with np.load(path, allow_pickle=False) as data:
            if str(data["kind"]) != "mlp" or int(data["format_version"]) != MLP_FORMAT_VERSION:
                raise BundleError(f"{path}: not an MLP file of version {MLP_FORMAT_VERSION}")
            dims = [int(d) for d in data["layer_dims"]]
            n_layers = len(dims) - 1
            return MlpModel(
                layer_dims=dims,
                weights=[np.array(data[f"W{l}"], dtype=float) for l in range(n_layers)],
                biases=[np.array(data[f"b{l}"], dtype=float) for l in range(n_layers)],
                input_standardizer=Standardizer(np.array(data["input_mean"]), np.array(data["input_std"])),
                output_standardizer=Standardizer(np.array(data["output_mean"]), np.array(data["output_std"])),
                config_fingerprint=str(data["config_fingerprint"]),
            )
    except (OSError, KeyError, ValueError) as exc:
        raise BundleError(f"{path}: cannot read MLP ({exc})") from exc


__all__ = [
    "MLP_FORMAT_VERSION",
    "init_mlp",
    "build_mlp",
    "mlp_forward",
    "min_preactivation",
    "multitask_loss",
    "mse_loss",
    "AdamOptimizer",
    "EpochRecord",
    "TrainingHistory",
    "train_mlp",
    "grad_check",
    "save_mlp",
    "load_mlp",
]
