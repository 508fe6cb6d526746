"""Baseline oversamplers behind one resampler contract.

All samplers append synthetic rows to a copy of the dataset and never touch
the original rows. SMOTE and the polynomial star sampler emit minority-only
points on segments between real minority points; MixUp interpolates arbitrary
row pairs and rounds the mixed label.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset
from .errors import (ConfigError, DegenerateDatasetError,
                     InsufficientMinorityError)

Array = np.ndarray

METHODS = ("vanilla", "smote", "polyfit", "mixup", "dragan")

DEFAULT_SMOTE_K = 5
DEFAULT_MIXUP_ALPHA = 0.2


@dataclass
class ResamplePlan:
    """What to synthesize: method, how many rows, method knobs, seed."""

    method: str
    target_count: int = 0
    k_neighbors: int | None = None
    alpha: float | None = None
    seed: int = 0

    def __post_init__(self):
        if self.method == "polyfit-star":
            self.method = "polyfit"
        if self.method not in METHODS:
            raise ConfigError(f"unknown method {self.method!r}; pick from {METHODS}")
        if self.target_count < 0:
            raise ConfigError(f"target_count must be >= 0, got {self.target_count}")
        if self.k_neighbors is not None and self.k_neighbors < 1:
            raise ConfigError(f"k_neighbors must be >= 1, got {self.k_neighbors}")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigError(f"alpha must be positive, got {self.alpha}")


def target_count_balance(ds: Dataset) -> int:
    """Rows to synthesize so minority count reaches majority count."""
    if ds.n_minority == 0 or ds.n_majority == 0:
        raise DegenerateDatasetError(
            f"dataset {ds.name!r} must contain both classes")
    return ds.n_majority - ds.n_minority


def _append(ds: Dataset, new_features: Array, new_labels: Array, tag: str) -> Dataset:
    if len(new_features) == 0:
        return Dataset(f"{ds.name}|{tag}", ds.features.copy(), ds.labels.copy(),
                       list(ds.feature_names))
    return Dataset(f"{ds.name}|{tag}",
                   np.vstack([ds.features, new_features]),
                   np.concatenate([ds.labels, new_labels]),
                   list(ds.feature_names))


def smote(ds: Dataset, target_count: int, k: int | None = None,
          seed: int = 0) -> Dataset:
    """Linear interpolation between a minority sample and one of its k
    nearest minority neighbors: x_new = x_i + eps (x_j - x_i), eps ~ U(0,1).

    k defaults to min(5, minority count - 1).
    """
    minority = ds.features[ds.labels == 1]
    m = len(minority)
    if m < 2:
        raise InsufficientMinorityError(
            f"smote needs >= 2 minority samples, got {m}")
    if k is None:
        k = min(DEFAULT_SMOTE_K, m - 1)
    if not 1 <= k <= m - 1:
        raise ConfigError(f"k must be in [1, {m - 1}], got {k}")

    # neighbor table: k nearest minority rows per minority row, self excluded
    diff = minority[:, None, :] - minority[None, :, :]
    dist = np.sqrt((diff * diff).sum(axis=2))
    np.fill_diagonal(dist, np.inf)
    neighbors = np.argsort(dist, axis=1, kind="stable")[:, :k]

    rng = np.random.default_rng(seed)
    new = np.empty((target_count, ds.d))
    for t in range(target_count):
        i = int(rng.integers(m))
        j = neighbors[i, int(rng.integers(k))]
        eps = rng.random()
        new[t] = minority[i] + eps * (minority[j] - minority[i])
    return _append(ds, new, np.ones(target_count, dtype=np.int64), "smote")


def polyfit_star(ds: Dataset, target_count: int, seed: int = 0) -> Dataset:
    """Star topology: new points drawn uniformly along the segments joining
    the minority centroid to each minority sample, cycling the samples in
    shuffled order."""
    minority = ds.features[ds.labels == 1]
    m = len(minority)
    if m < 2:
        raise InsufficientMinorityError(
            f"polyfit-star needs >= 2 minority samples, got {m}")
    centroid = minority.mean(axis=0)

    rng = np.random.default_rng(seed)
    order = rng.permutation(m)
    new = np.empty((target_count, ds.d))
    for t in range(target_count):
        x_i = minority[order[t % m]]
        draw = rng.random()
        new[t] = centroid + draw * (x_i - centroid)
    return _append(ds, new, np.ones(target_count, dtype=np.int64), "polyfit")


def mixup(ds: Dataset, target_count: int, alpha: float = DEFAULT_MIXUP_ALPHA,
          seed: int = 0) -> Dataset:
    """Convex combination of two distinct rows drawn from the whole dataset;
    the mixed label rounds half-to-one (exact 0.5 goes to the minority)."""
    if ds.n < 2:
        raise DegenerateDatasetError(f"mixup needs >= 2 rows, got {ds.n}")
    if alpha <= 0:
        raise ConfigError(f"alpha must be positive, got {alpha}")
    rng = np.random.default_rng(seed)
    new = np.empty((target_count, ds.d))
    new_labels = np.empty(target_count, dtype=np.int64)
    for t in range(target_count):
        i = int(rng.integers(ds.n))
        j = int(rng.integers(ds.n - 1))
        if j >= i:
            j += 1
        lam = rng.beta(alpha, alpha)
        new[t] = lam * ds.features[i] + (1.0 - lam) * ds.features[j]
        mixed = lam * ds.labels[i] + (1.0 - lam) * ds.labels[j]
        new_labels[t] = 1 if mixed >= 0.5 else 0
    return _append(ds, new, new_labels, "mixup")


def resample(ds: Dataset, plan: ResamplePlan, dragan_config=None) -> Dataset:
    """Dispatch a ResamplePlan; vanilla returns the dataset untouched."""
    if plan.method == "vanilla":
        return ds
    if plan.method == "smote":
        return smote(ds, plan.target_count, plan.k_neighbors, plan.seed)
    if plan.method == "polyfit":
        return polyfit_star(ds, plan.target_count, plan.seed)
    if plan.method == "mixup":
        alpha = DEFAULT_MIXUP_ALPHA if plan.alpha is None else plan.alpha
        return mixup(ds, plan.target_count, alpha, plan.seed)
    from .gan import DraganConfig, resample_with_dragan
    config = DraganConfig() if dragan_config is None else dragan_config
    return resample_with_dragan(ds, config, seed=plan.seed)
