"""Logistic regression trained by full-batch gradient descent.

The trainer accepts continuous labels in [0,1], so batches emitted by the
generator can be used directly as NLL targets without rounding. Training is
deterministic: zero init, fixed step count, no shuffling.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import ConfigError, DegenerateBatchError, LabelError, ShapeError

Array = np.ndarray

PROB_CLAMP = 1e-7


@dataclass
class TrainConfig:
    """Inner-classifier settings: brief aggressive descent on a convex loss."""

    steps: int = 200
    lr: float = 0.5
    optimizer: str = "sgd"

    def __post_init__(self):
        if self.steps < 1:
            raise ConfigError(f"steps must be >= 1, got {self.steps}")
        if self.lr <= 0:
            raise ConfigError(f"lr must be positive, got {self.lr}")
        if self.optimizer not in nn.OPTIMIZERS:
            raise ConfigError(f"unknown optimizer {self.optimizer!r}")


@dataclass
class LogisticModel:
    weights: Array
    bias: float
    config: TrainConfig = field(default_factory=TrainConfig)


def nll_loss(probs: Array, targets: Array) -> float:
    """Mean negative log-likelihood with probabilities clamped away from
    {0,1} so the value is always finite."""
    p = np.clip(probs, PROB_CLAMP, 1.0 - PROB_CLAMP)
    return float(-np.mean(targets * np.log(p) + (1.0 - targets) * np.log1p(-p)))


def train_logreg(features: Array, labels: Array,
                 config: TrainConfig | None = None) -> LogisticModel:
    """Fit by ``config.steps`` full-batch updates of the mean-NLL gradient.

    Labels may be any reals in [0,1]; the gradient is mean((sigma(z)-y) x),
    which stays exact and finite without clamping.
    """
    if config is None:
        config = TrainConfig()
    x = np.asarray(features, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if x.ndim != 2 or y.shape != (x.shape[0],):
        raise ShapeError(f"features {x.shape} vs labels {y.shape}")
    if x.shape[0] < 1:
        raise DegenerateBatchError("empty training batch")
    if not np.isfinite(x).all():
        raise DegenerateBatchError("non-finite feature values")
    if y.size and (y.min() < 0.0 or y.max() > 1.0):
        raise LabelError("labels must lie in [0,1]")

    n, d = x.shape
    w = np.zeros(d)
    b = np.zeros(1)
    step = {"sgd": nn.sgd_step, "adam": nn.adam_step,
            "rmsprop": nn.rmsprop_step}[config.optimizer]
    states = ({}, {})
    inv_n = 1.0 / n
    for _ in range(config.steps):
        delta = nn.sigmoid(x @ w + b[0])
        delta -= y
        grad_w = (x.T @ delta)
        grad_w *= inv_n
        grad_b = delta.mean(keepdims=True)
        if config.optimizer == "sgd":
            nn.sgd_step(w, grad_w, config.lr)
            nn.sgd_step(b, grad_b, config.lr)
        else:
            step(w, grad_w, states[0], config.lr)
            step(b, grad_b, states[1], config.lr)
    return LogisticModel(w, float(b[0]), config)


def predict_proba(model: LogisticModel, features: Array) -> Array:
    """sigma(Xw + b) elementwise; always strictly inside (0,1)."""
    x = np.asarray(features, dtype=np.float64)
    if x.ndim != 2 or x.shape[1] != model.weights.shape[0]:
        raise ShapeError(
            f"features {x.shape} incompatible with weights {model.weights.shape}")
    return nn.sigmoid(x @ model.weights + model.bias)
