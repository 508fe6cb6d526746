"""Dataset ingestion, min-max scaling and stratified k-fold splitting.

Labels follow the convention that the rarer class is the positive class 1;
the imbalance ratio is majority count over minority count.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field

import numpy as np

from .errors import (ConfigError, DegenerateDatasetError, LabelError,
                     ParseError, ShapeError, StratificationError)

Array = np.ndarray


def round_half_up(x: float) -> int:
    """round() with the half-up rule instead of banker's rounding."""
    return int(math.floor(x + 0.5))


@dataclass
class MinMaxScaler:
    """Per-column affine map onto [0,1], fitted on a training split only."""

    col_min: Array
    col_max: Array

    @property
    def span(self) -> Array:
        return self.col_max - self.col_min


@dataclass
class Dataset:
    """An immutable labelled table: features [n, d] and 0/1 labels [n]."""

    name: str
    features: Array
    labels: Array
    feature_names: list[str] = field(default_factory=list)
    scaling: MinMaxScaler | None = None

    def __post_init__(self):
        self.features = np.asarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.features.ndim != 2:
            raise ShapeError(f"features must be [n, d], got {self.features.shape}")
        if self.labels.shape != (self.features.shape[0],):
            raise ShapeError(
                f"labels shape {self.labels.shape} does not match "
                f"{self.features.shape[0]} rows")
        if self.labels.size and not np.isin(self.labels, (0, 1)).all():
            raise LabelError("labels must be 0 or 1")
        if not self.feature_names:
            self.feature_names = [f"x{i}" for i in range(self.features.shape[1])]

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def n_minority(self) -> int:
        return int(np.count_nonzero(self.labels == 1))

    @property
    def n_majority(self) -> int:
        return int(np.count_nonzero(self.labels == 0))


def imbalance_ratio(ds: Dataset) -> float:
    """Majority count over minority count (IR)."""
    if ds.n_minority == 0 or ds.n_majority == 0:
        raise DegenerateDatasetError(
            f"dataset {ds.name!r} has counts -:{ds.n_majority} +:{ds.n_minority}; "
            "both classes required")
    return ds.n_majority / ds.n_minority


def load_csv(path, label_col: str | None = None, name: str | None = None) -> Dataset:
    """Load a comma-delimited UTF-8 file with one header row.

    The label column is the last one unless ``label_col`` names another.
    Raw label values are mapped so the rarer class becomes 1; an exact tie
    maps the lexicographically larger value to 1.
    """
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise ParseError(f"{path}: empty file, expected a header row")
    header = [h.strip() for h in rows[0]]
    if label_col is None:
        label_idx = len(header) - 1
    else:
        try:
            label_idx = header.index(label_col)
        except ValueError:
            raise ConfigError(
                f"label column {label_col!r} not in header {header}") from None
    feature_names = [h for i, h in enumerate(header) if i != label_idx]
    if not rows[1:]:
        raise ParseError(f"{path}: no data rows")

    features = []
    raw_labels = []
    for lineno, row in enumerate(rows[1:], start=2):
        if len(row) != len(header):
            raise ParseError(
                f"{path}: row {lineno} has {len(row)} fields, expected {len(header)}")
        vec = np.empty(len(feature_names))
        j = 0
        for i, cell in enumerate(row):
            if i == label_idx:
                raw_labels.append(cell.strip())
                continue
            try:
                value = float(cell)
            except ValueError:
                raise ParseError(
                    f"{path}: row {lineno}, column {header[i]!r}: "
                    f"cannot parse {cell!r}") from None
            if not math.isfinite(value):
                raise ParseError(
                    f"{path}: row {lineno}, column {header[i]!r}: "
                    f"non-finite value {cell!r}")
            vec[j] = value
            j += 1
        features.append(vec)

    distinct = sorted(set(raw_labels))
    if len(distinct) == 1:
        raise DegenerateDatasetError(
            f"{path}: single label value {distinct[0]!r}; two classes required")
    if len(distinct) > 2:
        raise LabelError(f"{path}: more than two label values: {distinct}")
    counts = {v: raw_labels.count(v) for v in distinct}
    # rarer class is positive; ties map the lexicographically larger value to 1
    if counts[distinct[0]] == counts[distinct[1]]:
        positive = distinct[1]
    else:
        positive = min(distinct, key=lambda v: counts[v])
    labels = np.array([1 if v == positive else 0 for v in raw_labels])

    ds_name = name if name is not None else os.path.splitext(os.path.basename(path))[0]
    return Dataset(ds_name, np.array(features), labels, feature_names)


def save_csv(ds: Dataset, path) -> None:
    """Write a dataset as CSV with a trailing ``label`` column.

    Floats are written with repr so a load_csv round trip is exact.
    """
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow([*ds.feature_names, "label"])
        for row, label in zip(ds.features, ds.labels):
            writer.writerow([*(repr(float(v)) for v in row), int(label)])


# ---------------------------------------------------------------------------
# Min-max scaling


def fit_minmax(data) -> MinMaxScaler:
    """Fit per-column min/max on a feature matrix (or a Dataset's features)."""
    x = data.features if isinstance(data, Dataset) else np.asarray(data, dtype=np.float64)
    return MinMaxScaler(x.min(axis=0), x.max(axis=0))


def apply_minmax(scaler: MinMaxScaler, features: Array) -> Array:
    """Map into [0,1] on the fitting data; constant columns map to 0.5.

    Features outside the fitted range (e.g. a test split) land outside [0,1]
    and are deliberately not clipped.
    """
    span = scaler.span
    out = np.empty_like(features, dtype=np.float64)
    flat = span == 0.0
    out[:, flat] = 0.5
    out[:, ~flat] = (features[:, ~flat] - scaler.col_min[~flat]) / span[~flat]
    return out


def invert_minmax(scaler: MinMaxScaler, scaled: Array) -> Array:
    """Inverse of apply_minmax; constant columns recover their fitted value."""
    return scaled * scaler.span + scaler.col_min


# ---------------------------------------------------------------------------
# Splitting


@dataclass
class SplitPlan:
    """Repeated stratified k-fold assignment over a dataset's row indices.

    ``folds[r][f]`` is the (train, test) index pair for fold f of repeat r.
    """

    n_splits: int
    n_repeats: int
    seed: int
    folds: list[list[tuple[Array, Array]]]

    def iter_folds(self):
        for r, repeat in enumerate(self.folds):
            for f, (train, test) in enumerate(repeat):
                yield r, f, train, test

    def write_csv(self, path) -> None:
        """Audit export: one row per (repeat, fold, index, role)."""
        with open(path, "w", newline="", encoding="utf-8") as fh:
            writer = csv.writer(fh)
            writer.writerow(["repeat", "fold", "index", "role"])
            for r, f, train, test in self.iter_folds():
                for i in train:
                    writer.writerow([r, f, int(i), "train"])
                for i in test:
                    writer.writerow([r, f, int(i), "test"])


def stratified_kfold(ds: Dataset, n_splits: int, n_repeats: int, seed: int) -> SplitPlan:
    """Deal each class round-robin into folds, shuffled per repeat.

    The dealing position carries over between classes so fold sizes differ
    by at most one overall, not per class.
    """
    if n_splits < 2:
        raise ConfigError(f"n_splits must be >= 2, got {n_splits}")
    if n_repeats < 1:
        raise ConfigError(f"n_repeats must be >= 1, got {n_repeats}")
    if ds.n_minority == 0 or ds.n_majority == 0:
        raise StratificationError(
            f"dataset {ds.name!r} has counts -:{ds.n_majority} +:{ds.n_minority}; "
            "cannot stratify a single-class dataset")
    if ds.n < n_splits:
        raise StratificationError(
            f"{ds.n} rows cannot fill {n_splits} folds")

    rng = np.random.default_rng(seed)
    all_indices = np.arange(ds.n)
    repeats = []
    for _ in range(n_repeats):
        fold_members: list[list[int]] = [[] for _ in range(n_splits)]
        dealt = 0
        for value in (0, 1):
            members = all_indices[ds.labels == value]
            for idx in rng.permutation(members):
                fold_members[dealt % n_splits].append(int(idx))
                dealt += 1
        pairs = []
        for f in range(n_splits):
            test = np.sort(np.array(fold_members[f], dtype=np.int64))
            mask = np.ones(ds.n, dtype=bool)
            mask[test] = False
            pairs.append((all_indices[mask], test))
        repeats.append(pairs)
    return SplitPlan(n_splits, n_repeats, seed, repeats)


def subsample_fraction(ds: Dataset, fraction: float, seed: int) -> Dataset:
    """Stratified random subset keeping round(fraction * count) per class,
    floored at one sample so neither class disappears."""
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    if ds.n_minority == 0 or ds.n_majority == 0:
        raise DegenerateDatasetError(
            f"dataset {ds.name!r} must contain both classes before subsampling")
    rng = np.random.default_rng(seed)
    keep: list[Array] = []
    for value in (0, 1):
        members = np.flatnonzero(ds.labels == value)
        count = max(1, round_half_up(fraction * members.size))
        keep.append(rng.permutation(members)[:count])
    chosen = rng.permutation(np.concatenate(keep))
    return Dataset(f"{ds.name}@{fraction:g}", ds.features[chosen],
                   ds.labels[chosen], list(ds.feature_names))
