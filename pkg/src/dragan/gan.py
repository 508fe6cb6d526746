"""The batch-generating GAN.

One noise vector is mapped by the Generator to an entire synthetic training
batch (features plus soft labels). Each epoch the batch trains a fresh
logistic regression, the classifier's score on the real training data is
stored alongside the flattened batch in a replay memory, the Critic is
retrained on the memory to predict stored scores, and the Generator takes
one step pushing the Critic's prediction toward 1. The best-scoring batch is
retained and emitted at the end.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, fields, replace

import numpy as np

from . import nn
from .classify import TrainConfig, predict_proba, train_logreg
from .data import (Dataset, apply_minmax, fit_minmax, invert_minmax,
                   round_half_up)
from .errors import ConfigError, DegenerateDatasetError, ParseError, ShapeError
from .metrics import auc, confusion, f1, g_score, youden_threshold
from .nn import Tensor

Array = np.ndarray

GEN_CHANNELS = 8
GEN_KERNEL = 3

METRICS = ("auc", "f1", "g")


@dataclass
class DraganConfig:
    """Hyperparameters; the defaults are the tuned values used throughout."""

    z_size: int = 512
    gen_lr: float = 0.000266
    gen_optimizer: str = "rmsprop"
    gen_activation: str = "sigmoid"
    gen_batchnorm: bool = False
    gen_dropout: bool = True
    gen_dropout_rate: float = 0.5
    gen_channels: int = GEN_CHANNELS
    gen_kernel: int = GEN_KERNEL
    critic_lr: float = 0.036284
    critic_epochs_per_iter: int = 2
    critic_optimizer: str = "adam"
    critic_layers: tuple = (64, 128, 64)
    critic_activations: tuple = ("relu", "relu", "leaky-relu")
    critic_batchnorm: tuple = (True, False)
    critic_dropout: tuple = (False, True)
    critic_dropout_rate: float = 0.5
    sample_factor: float = 1.793469
    total_epochs: int = 1750
    critic_batch_size: int = 16
    max_memory_factor: int = 124
    early_stopping_patience: int = 921
    metric: str = "auc"
    seed: int = 0

    def __post_init__(self):
        if self.z_size < 1:
            raise ConfigError(f"z_size must be >= 1, got {self.z_size}")
        if self.sample_factor <= 0:
            raise ConfigError(f"sample_factor must be positive, got {self.sample_factor}")
        if self.total_epochs < 1:
            raise ConfigError(f"total_epochs must be >= 1, got {self.total_epochs}")
        if not 0 <= self.early_stopping_patience <= self.total_epochs:
            raise ConfigError(
                f"patience {self.early_stopping_patience} outside "
                f"[0, total_epochs={self.total_epochs}]")
        if self.critic_batch_size < 2:
            raise ConfigError(
                f"critic_batch_size must be >= 2 (batchnorm), got {self.critic_batch_size}")
        if self.max_memory_factor < 1:
            raise ConfigError(
                f"max_memory_factor must be >= 1, got {self.max_memory_factor}")
        if self.metric not in METRICS:
            raise ConfigError(f"metric must be one of {METRICS}, got {self.metric!r}")
        if self.gen_optimizer not in nn.OPTIMIZERS or self.critic_optimizer not in nn.OPTIMIZERS:
            raise ConfigError("optimizer kinds must be sgd, adam or rmsprop")
        if len(self.critic_layers) != len(self.critic_activations):
            raise ConfigError("critic_layers and critic_activations lengths differ")
        if self.critic_epochs_per_iter < 1:
            raise ConfigError("critic_epochs_per_iter must be >= 1")

    @property
    def memory_capacity(self) -> int:
        return self.max_memory_factor * self.critic_batch_size

    def batch_rows(self, n_train: int) -> int:
        """Rows per generated batch: round(sample_factor * n), at least 2."""
        return max(2, round_half_up(self.sample_factor * n_train))

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            for f in fields(self):
                value = getattr(self, f.name)
                if isinstance(value, tuple):
                    value = ",".join(str(v) for v in value)
                fh.write(f"{f.name} = {value}\n")

    @classmethod
    def load(cls, path) -> "DraganConfig":
        """Parse a flat key=value file; '#' starts a comment."""
        spec = {f.name: f for f in fields(cls)}
        overrides = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.split("#", 1)[0].strip()
                if not line:
                    continue
                if "=" not in line:
                    raise ParseError(f"{path}: line {lineno}: expected key = value")
                key, _, raw = line.partition("=")
                key = key.strip().replace("-", "_")
                raw = raw.strip()
                if key not in spec:
                    raise ConfigError(f"{path}: line {lineno}: unknown key {key!r}")
                try:
                    overrides[key] = _coerce(raw, getattr(cls, key))
                except ValueError:
                    raise ParseError(
                        f"{path}: line {lineno}: cannot parse {raw!r} for {key}") from None
        return cls(**overrides)


def _coerce(raw: str, default):
    if isinstance(default, bool):
        low = raw.lower()
        if low in ("true", "on", "yes", "1"):
            return True
        if low in ("false", "off", "no", "0"):
            return False
        raise ValueError(raw)
    if isinstance(default, int):
        return int(raw)
    if isinstance(default, float):
        return float(raw)
    if isinstance(default, tuple):
        parts = [p.strip() for p in raw.split(",") if p.strip()]
        kinds = {type(v) for v in default}
        kind = kinds.pop() if len(kinds) == 1 else str
        if kind is bool:
            return tuple(_coerce(p, True) for p in parts)
        return tuple(kind(p) for p in parts)
    return raw


@dataclass
class GeneratedBatch:
    """One Generator emission: scaled features, soft labels, and (after
    evaluation) the score its classifier reached on real data."""

    features: Array
    soft_labels: Array
    achieved_score: float | None = None


class ReplayMemory:
    """Bounded store of (flattened batch, achieved score) pairs.

    Once full, a push overwrites a uniformly random slot; there is no
    FIFO/FILO order. Storage grows geometrically up to capacity so small
    runs never allocate the full buffer.
    """

    def __init__(self, capacity: int, width: int):
        if capacity < 1:
            raise ConfigError(f"capacity must be >= 1, got {capacity}")
        self.capacity = capacity
        self.width = width
        self.size = 0
        alloc = min(capacity, 256)
        self._batches = np.empty((alloc, width))
        self._scores = np.empty(alloc)

    def _grow(self) -> None:
        alloc = min(self.capacity, 2 * len(self._batches))
        batches = np.empty((alloc, self.width))
        batches[: self.size] = self._batches[: self.size]
        scores = np.empty(alloc)
        scores[: self.size] = self._scores[: self.size]
        self._batches, self._scores = batches, scores

    def push(self, flat_batch: Array, score: float, rng: np.random.Generator) -> int:
        """Store a pair, evicting a uniform random entry when at capacity;
        returns the slot written."""
        if flat_batch.shape != (self.width,):
            raise ShapeError(f"expected flat batch of width {self.width}, "
                             f"got {flat_batch.shape}")
        if self.size < self.capacity:
            if self.size == len(self._batches):
                self._grow()
            slot = self.size
            self.size += 1
        else:
            slot = int(rng.integers(self.capacity))
        self._batches[slot] = flat_batch
        self._scores[slot] = score
        return slot

    def sample(self, k: int, rng: np.random.Generator,
               out: Array | None = None) -> tuple[Array, Array]:
        """k entries drawn uniformly with replacement.

        ``out`` optionally receives the batches in place, sparing the
        per-call allocation on hot paths.
        """
        if self.size == 0:
            raise ConfigError("cannot sample from an empty memory")
        idx = rng.integers(self.size, size=k)
        if out is None:
            return self._batches[idx], self._scores[idx]
        np.take(self._batches, idx, axis=0, out=out)
        return out, self._scores[idx]


class Generator:
    """noise[1, z] -> dense -> dropout -> [h, m] -> conv1d -> [m, d+1] -> sigmoid.

    A single forward pass emits the whole batch; column d holds the soft
    labels. Batchnorm is structurally unavailable here because the dense
    output has batch extent 1.
    """

    def __init__(self, config: DraganConfig, d: int, m: int, rng: np.random.Generator):
        if d < 1 or m < 2:
            raise ConfigError(f"need d >= 1 and m >= 2, got d={d}, m={m}")
        if config.gen_batchnorm:
            raise ConfigError(
                "generator batchnorm is unsupported: the dense output has batch extent 1")
        if config.gen_activation != "sigmoid":
            raise ConfigError(
                "generator activation must be sigmoid so soft labels stay in (0,1)")
        self.config = config
        self.d = d
        self.m = m
        self.h = config.gen_channels
        self.dense = nn.Dense(config.z_size, m * self.h, rng)
        self.conv = nn.Conv1d(self.h, d + 1, config.gen_kernel, rng)

    def forward(self, noise: Tensor, train: bool, rng: np.random.Generator) -> Tensor:
        a = self.dense(noise)
        if self.config.gen_dropout:
            a = nn.dropout(a, self.config.gen_dropout_rate, train, rng)
        a = a.reshape(self.h, self.m)
        out = self.conv(a).transpose()
        return nn.activation(out, self.config.gen_activation)

    def parameters(self) -> list[Tensor]:
        return self.dense.parameters() + self.conv.parameters()


class Critic:
    """flatten[m(d+1)] -> dense stack -> dense 1 -> sigmoid score estimate."""

    def __init__(self, config: DraganConfig, d: int, m: int, rng: np.random.Generator):
        if d < 1 or m < 2:
            raise ConfigError(f"need d >= 1 and m >= 2, got d={d}, m={m}")
        self.config = config
        self.in_width = m * (d + 1)
        self.layers = []
        self.norms = {}
        width = self.in_width
        for i, out_width in enumerate(config.critic_layers):
            self.layers.append(nn.Dense(width, out_width, rng))
            if i < len(config.critic_batchnorm) and config.critic_batchnorm[i]:
                self.norms[i] = nn.BatchNorm1d(out_width)
            width = out_width
        self.head = nn.Dense(width, 1, rng)

    def forward(self, x: Tensor, train: bool, rng: np.random.Generator) -> Tensor:
        cfg = self.config
        for i, layer in enumerate(self.layers):
            x = nn.activation(layer(x), cfg.critic_activations[i])
            if i in self.norms:
                x = self.norms[i](x, train)
            if i < len(cfg.critic_dropout) and cfg.critic_dropout[i]:
                x = nn.dropout(x, cfg.critic_dropout_rate, train, rng)
        return self.head(x).sigmoid()

    def parameters(self) -> list[Tensor]:
        params = []
        for layer in self.layers:
            params += layer.parameters()
        for norm in self.norms.values():
            params += norm.parameters()
        return params + self.head.parameters()


def build_generator(config: DraganConfig, d: int, m: int,
                    rng: np.random.Generator | None = None) -> Generator:
    return Generator(config, d, m, rng or np.random.default_rng(config.seed))


def build_critic(config: DraganConfig, d: int, m: int,
                 rng: np.random.Generator | None = None) -> Critic:
    return Critic(config, d, m, rng or np.random.default_rng(config.seed))


def evaluate_batch(batch: GeneratedBatch, real_train: Dataset,
                   metric: str = "auc",
                   train_config: TrainConfig | None = None) -> float:
    """Train a fresh classifier on the batch, score it on real data.

    The soft labels feed the NLL loss unrounded. The returned score also
    lands in ``batch.achieved_score``.
    """
    if metric not in METRICS:
        raise ConfigError(f"metric must be one of {METRICS}, got {metric!r}")
    if batch.features.shape[1] != real_train.d:
        raise ShapeError(
            f"batch has {batch.features.shape[1]} features, real data {real_train.d}")
    model = train_logreg(batch.features, batch.soft_labels, train_config)
    scores = predict_proba(model, real_train.features)
    if metric == "auc":
        value = auc(scores, real_train.labels)
    else:
        threshold = youden_threshold(scores, real_train.labels)
        conf = confusion(scores, real_train.labels, threshold)
        value = f1(conf) if metric == "f1" else g_score(conf)
    batch.achieved_score = float(value)
    return batch.achieved_score


def generator_step(critic: Critic, gen_opt: nn.Optimizer, out: Tensor,
                   rng: np.random.Generator, generator: "Generator | None" = None,
                   noise: Tensor | None = None) -> float:
    """One generator update minimizing (1 - critic(batch))^2.

    The critic runs in eval mode (its dropout and batch statistics must not
    inject noise into a batch of extent 1) and its parameters are frozen, so
    gradients flow through it into the generator only.

    When ``generator`` and ``noise`` are supplied and the optimizer is
    RMSprop, the dense weight takes a fused rank-1 update: with a one-row
    noise input its gradient is outer(noise, dense-output-grad), and the
    one-row bias gradient IS that output grad, so the z x m*h matrix never
    needs materializing. Bit-identical to the plain path, much less traffic.
    """
    critic_params = critic.parameters()
    for p in critic_params:
        p.requires_grad = False
    dense_w = None
    if generator is not None and noise is not None \
            and isinstance(gen_opt, nn.RMSprop) and noise.data.shape[0] == 1:
        dense_w = generator.dense.weight
    try:
        gen_opt.zero_grad()
        rows, cols = out.shape
        if dense_w is not None:
            dense_w.requires_grad = False
        pred = critic.forward(out.reshape(1, rows * cols), train=False, rng=rng)
        loss = (1.0 - pred).square().sum()
        loss.backward()
        if dense_w is not None:
            w_state = gen_opt._states[gen_opt.params.index(dense_w)]
            nn.rmsprop_step_outer(dense_w.data, noise.data[0],
                                  generator.dense.bias.grad, w_state, gen_opt.lr)
        gen_opt.step()
    finally:
        if dense_w is not None:
            dense_w.requires_grad = True
        for p in critic_params:
            p.requires_grad = True
    return float(loss.data.item())


@dataclass
class DraganState:
    """Everything the training loop accumulated, best batch included."""

    generator: Generator
    critic: Critic
    memory: ReplayMemory
    best_batch: GeneratedBatch
    best_score: float
    epochs_since_improvement: int
    epoch: int
    score_history: list = field(default_factory=list)


def train_dragan(real_train: Dataset, config: DraganConfig,
                 telemetry_path=None) -> DraganState:
    """Run the adversarial loop on an already min-max scaled training set.

    Per epoch: generate a batch from fresh noise, measure the score its
    classifier reaches on the real data, remember (batch, score), refit the
    Critic on remembered pairs, then step the Generator against the frozen
    Critic. Stops at total_epochs or once the best score has not improved
    for ``early_stopping_patience`` consecutive epochs.
    """
    if real_train.n_minority == 0 or real_train.n_majority == 0:
        raise DegenerateDatasetError(
            f"dataset {real_train.name!r} must contain both classes")
    rng = np.random.default_rng(config.seed)
    d = real_train.d
    m = config.batch_rows(real_train.n)
    width = m * (d + 1)

    generator = Generator(config, d, m, rng)
    critic = Critic(config, d, m, rng)
    memory = ReplayMemory(config.memory_capacity, width)
    gen_opt = nn.make_optimizer(config.gen_optimizer, generator.parameters(),
                                config.gen_lr)
    critic_opt = nn.make_optimizer(config.critic_optimizer, critic.parameters(),
                                   config.critic_lr)
    sample_buf = np.empty((config.critic_batch_size, width))

    best_score = -math.inf
    best_batch = None
    since_improvement = 0
    history: list[float] = []
    telemetry = None
    writer = None
    try:
        if telemetry_path is not None:
            telemetry = open(telemetry_path, "w", newline="", encoding="utf-8")
            writer = csv.writer(telemetry)
            writer.writerow(["epoch", "achieved_score", "critic_loss",
                             "generator_loss", "best_score"])

        for epoch in range(1, config.total_epochs + 1):
            # (1) one tracked forward emits the whole batch
            noise = Tensor(rng.standard_normal((1, config.z_size)))
            out = generator.forward(noise, train=True, rng=rng)
            batch = GeneratedBatch(out.data[:, :d].copy(), out.data[:, d].copy())

            # (2) score the batch through a fresh classifier
            score = evaluate_batch(batch, real_train, config.metric)

            # (3) remember it
            memory.push(out.data.ravel().copy(), score, rng)

            # (4) refit the critic on remembered pairs
            per_pass = math.ceil(memory.size / config.critic_batch_size)
            losses = []
            for _ in range(config.critic_epochs_per_iter * per_pass):
                xb, yb = memory.sample(config.critic_batch_size, rng, out=sample_buf)
                critic_opt.zero_grad()
                pred = critic.forward(Tensor(xb), train=True, rng=rng)
                err = pred - Tensor(yb.reshape(-1, 1))
                loss = err.square().mean()
                loss.backward()
                critic_opt.step()
                losses.append(loss.data.item())
            critic_loss = float(np.mean(losses))

            # (5) one generator step against the frozen critic in eval mode
            gen_loss = generator_step(critic, gen_opt, out, rng,
                                      generator=generator, noise=noise)

            # (6) best tracking and early stopping
            history.append(score)
            if score > best_score:
                best_score = score
                best_batch = GeneratedBatch(batch.features.copy(),
                                            batch.soft_labels.copy(), score)
                since_improvement = 0
            else:
                since_improvement += 1
            if writer is not None:
                writer.writerow([epoch, repr(score), repr(critic_loss),
                                 repr(gen_loss), repr(best_score)])
            if since_improvement >= config.early_stopping_patience:
                break
    finally:
        if telemetry is not None:
            telemetry.close()

    return DraganState(generator, critic, memory, best_batch, best_score,
                       since_improvement, epoch, history)


def resample_with_dragan(real_train: Dataset, config: DraganConfig | None = None,
                         seed: int | None = None) -> Dataset:
    """Emit the best generated batch as a dataset in original feature units.

    The training set is min-max scaled internally (the generator's sigmoid
    lives in (0,1)); best-batch features are mapped back through the inverse
    scaling and soft labels round at 0.5, half to the minority class.
    """
    if config is None:
        config = DraganConfig()
    if seed is not None:
        config = replace(config, seed=seed)
    scaler = fit_minmax(real_train.features)
    scaled = Dataset(real_train.name, apply_minmax(scaler, real_train.features),
                     real_train.labels, list(real_train.feature_names),
                     scaling=scaler)
    state = train_dragan(scaled, config)
    features = invert_minmax(scaler, state.best_batch.features)
    labels = (state.best_batch.soft_labels >= 0.5).astype(np.int64)
    return Dataset(f"{real_train.name}|dragan", features, labels,
                   list(real_train.feature_names))
