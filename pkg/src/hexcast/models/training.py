"""Composite loss and the mini-batch Adam training loop shared by all networks."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .. import ndtensor as nd
from ..ingest import SampleSet, ScaleParams, scale
from ..ndtensor import Tensor
from .nets import NeuralModel

log = logging.getLogger(__name__)


def combined_loss(preds: Tensor, targets, lam: float = 0.01) -> Tensor:
    """RMSE over all samples + lam * mean |(pred - y) / y| over samples with y != 0."""
    targets = np.asarray(targets, dtype=np.float64)
    if preds.size == 0:
        raise ValueError("combined_loss needs at least one sample")
    if preds.shape != targets.shape:
        raise nd.ShapeError(f"preds {preds.shape} vs targets {targets.shape}")
    err = nd.sub(preds, targets)
    loss = nd.tsqrt(nd.tmean(nd.square(err)))
    nonzero = targets != 0
    if lam and nonzero.any():
        inv = np.where(nonzero, 1.0 / np.where(nonzero, np.abs(targets), 1.0), 0.0)
        mape = nd.scale(nd.tsum(nd.mul(nd.tabs(err), inv)), 1.0 / int(nonzero.sum()))
        loss = loss + nd.scale(mape, lam)
    return loss


@dataclass
class TrainConfig:
    epochs: int = 50
    batch_size: int = 128
    lam: float = 0.01
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    max_train_samples: int | None = None  # random subsample drawn once per run

    def __post_init__(self):
        if self.epochs < 1 or self.batch_size < 1 or self.lr <= 0:
            raise nd.ConfigError("epochs, batch size and learning rate must be positive")
        if self.lam < 0:
            raise nd.ConfigError("lambda must be non-negative")


@dataclass
class TrainResult:
    history: list[dict] = field(default_factory=list)
    n_updates: int = 0


def _batches(n: int, batch_size: int, rng: np.random.Generator):
    perm = rng.permutation(n)
    for start in range(0, n, batch_size):
        yield perm[start:start + batch_size]


def _model_inputs(model: NeuralModel, samples: SampleSet, sel, params: ScaleParams) -> np.ndarray:
    windows = scale(samples.inputs(sel), params, "forward", clip=False)
    return model.encode(windows)


def train_model(model: NeuralModel, train: SampleSet, scale_params: ScaleParams, config: TrainConfig,
                val: SampleSet | None = None) -> TrainResult:
    """Fit ``model`` in place on scaled targets; returns per-epoch loss history."""
    if len(train) == 0:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    idx = np.arange(len(train))
    if config.max_train_samples is not None and len(train) > config.max_train_samples:
        idx = np.sort(rng.choice(len(train), size=config.max_train_samples, replace=False))
    y_all = scale(train.targets, scale_params, "forward")
    params = model.parameters()
    result = TrainResult()
    for epoch in range(config.epochs):
        total, n_seen = 0.0, 0
        for batch in _batches(len(idx), config.batch_size, rng):
            sel = idx[batch]
            if len(sel) < 2 and model.bn:
                continue  # batch norm cannot normalise a single sample
            x = _model_inputs(model, train, sel, scale_params)
            pred = model.forward(x, mode="train", rng=rng)
            loss = combined_loss(pred, y_all[sel], config.lam)
            nd.zero_grad(params)
            nd.backward(loss)
            nd.adam_step(params, config.lr, config.beta1, config.beta2, config.eps)
            result.n_updates += 1
            total += loss.item() * len(sel)
            n_seen += len(sel)
        row = {"epoch": epoch + 1, "train_loss": total / max(n_seen, 1)}
        if val is not None and len(val):
            row["val_loss"] = evaluate_loss(model, val, scale_params, config)
        result.history.append(row)
        log.debug("epoch %d: %s", epoch + 1, row)
    nd.zero_grad(params)
    return result


def predict_scaled(model: NeuralModel, samples: SampleSet, scale_params: ScaleParams,
                   batch_size: int = 512) -> np.ndarray:
    out = np.empty(len(samples))
    for start in range(0, len(samples), batch_size):
        sel = np.arange(start, min(start + batch_size, len(samples)))
        x = _model_inputs(model, samples, sel, scale_params)
        out[sel] = model.forward(x, mode="eval").data
    return out


def predict(model: NeuralModel, samples: SampleSet, scale_params: ScaleParams, batch_size: int = 512) -> np.ndarray:
    """Predictions in raw demand units."""
    return scale(predict_scaled(model, samples, scale_params, batch_size), scale_params, "inverse")


def evaluate_loss(model: NeuralModel, samples: SampleSet, scale_params: ScaleParams, config: TrainConfig) -> float:
    p = predict_scaled(model, samples, scale_params)
    y = scale(samples.targets, scale_params, "forward")
    return combined_loss(Tensor(p), y, config.lam).item()


def updates_per_epoch(n_samples: int, batch_size: int) -> int:
    return math.ceil(n_samples / batch_size)
