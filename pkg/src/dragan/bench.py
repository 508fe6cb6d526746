"""Benchmark harness: repeated stratified CV over datasets and resamplers.

Every (dataset, method, repeat, fold) cell scales the train fold to [0,1],
resamples it, fits the from-scratch logistic model on the result and scores
the untouched test fold; the decision threshold comes from the Youden point
of the test scores. Wall time covers resampling plus training only.

Aggregation produces per-dataset mean +- std tables with an average row and
strict-max win counts, a Pearson correlation of each method against the
vanilla baseline, the largest per-dataset AUC gains, and a data-fraction
ablation with least-squares slopes. All emitted tables use fixed precision
so identical reports serialize byte for byte.
"""

from __future__ import annotations

import math
import os
import time
import warnings
import zlib
from dataclasses import dataclass, field

import numpy as np
from joblib import Parallel, delayed

from . import oversample
from .classify import predict_proba, train_logreg
from .data import (Dataset, apply_minmax, fit_minmax, load_csv, round_half_up,
                   stratified_kfold, subsample_fraction)
from .errors import ConfigError, ShapeError, UndefinedMetricError
from .metrics import auc, confusion, f1, g_score, pearson, youden_threshold

Array = np.ndarray

METRIC_NAMES = ("auc", "f1", "g")
DEFAULT_METHODS = ("vanilla", "smote", "polyfit", "mixup", "dragan")
DEFAULT_FRACTIONS = (0.2, 0.4, 0.6, 0.8, 1.0)


# ---------------------------------------------------------------------------
# Seeding

def _crc(text: str) -> int:
    return zlib.crc32(text.encode("utf-8"))


def record_seed(seed: int, dataset: str, method: str, repeat: int, fold: int) -> int:
    """Deterministic per-cell sub-seed.

    Derived from the cell coordinates alone, so adding, removing or
    reordering methods never changes any other method's records.
    """
    entropy = [seed, _crc(dataset), _crc(method), repeat, fold]
    return int(np.random.SeedSequence(entropy).generate_state(1)[0])


def split_seed(seed: int, dataset: str) -> int:
    """Fold assignment seed; method-independent so all methods share splits."""
    return int(np.random.SeedSequence([seed, _crc(dataset)]).generate_state(1)[0])


# ---------------------------------------------------------------------------
# Single cell

@dataclass
class EvalRecord:
    """One scored CV cell."""

    dataset: str
    method: str
    repeat: int
    fold: int
    auc: float
    f1: float
    g: float
    threshold: float
    wall_seconds: float
    seed: int


def evaluate_fold(ds: Dataset, train_idx: Array, test_idx: Array, method: str,
                  repeat: int, fold: int, seed: int, dragan_config=None,
                  augment: bool = False, keep_scores: bool = False):
    """Run one cell and return (record, scores, labels).

    Scaling is fitted on the train fold only and applied to both sides; the
    resampler sees the scaled train fold and never the test rows. scores and
    labels are None unless ``keep_scores`` (used for pooled aggregation).
    """
    sub = record_seed(seed, ds.name, method, repeat, fold)
    names = list(ds.feature_names)
    train = Dataset(ds.name, ds.features[train_idx], ds.labels[train_idx], names)
    scaler = fit_minmax(train)
    scaled_train = Dataset(ds.name, apply_minmax(scaler, train.features),
                           train.labels, names)
    x_test = apply_minmax(scaler, ds.features[test_idx])
    y_test = ds.labels[test_idx]

    started = time.perf_counter()
    plan = oversample.ResamplePlan(
        method, target_count=oversample.target_count_balance(scaled_train), seed=sub)
    resampled = oversample.resample(scaled_train, plan, dragan_config=dragan_config)
    if augment and plan.method == "dragan":
        resampled = Dataset(
            resampled.name + "+real",
            np.vstack([resampled.features, scaled_train.features]),
            np.concatenate([resampled.labels, scaled_train.labels]), names)
    model = train_logreg(resampled.features, resampled.labels.astype(np.float64))
    wall = time.perf_counter() - started

    scores = predict_proba(model, x_test)
    threshold = youden_threshold(scores, y_test)
    cm = confusion(scores, y_test, threshold)
    record = EvalRecord(ds.name, method, repeat, fold, float(auc(scores, y_test)),
                        float(f1(cm)), float(g_score(cm)), float(threshold),
                        wall, sub)
    if keep_scores:
        return record, scores, y_test
    return record, None, None


# ---------------------------------------------------------------------------
# Full grid

@dataclass
class BenchmarkReport:
    """Records plus the aggregate tables derived from them.

    ``tables[metric][dataset][method]`` is a (mean, std) pair; under pooled
    aggregation std is NaN because each cell is a single pooled value.
    """

    datasets: list
    methods: list
    splits: int
    repeats: int
    seed: int
    pooled: bool
    records: list = field(default_factory=list)
    tables: dict = field(default_factory=dict)
    averages: dict = field(default_factory=dict)
    best_counts: dict = field(default_factory=dict)
    ties: dict = field(default_factory=dict)
    timing: dict = field(default_factory=dict)
    failures: list = field(default_factory=list)


def _normalize_methods(methods) -> list:
    out = [oversample.ResamplePlan(m).method for m in methods]
    if len(set(out)) != len(out):
        raise ConfigError(f"duplicate methods in {list(methods)}")
    return out


def _aggregate(report: BenchmarkReport, pools: dict) -> None:
    by_cell = {}
    for rec in report.records:
        by_cell.setdefault((rec.dataset, rec.method), []).append(rec)

    tables = {metric: {} for metric in METRIC_NAMES}
    timing = {}
    for name in report.datasets:
        for metric in METRIC_NAMES:
            tables[metric][name] = {}
        timing[name] = {}
        for method in report.methods:
            cell = by_cell[(name, method)]
            timing[name][method] = float(np.mean([r.wall_seconds for r in cell]))
            if report.pooled:
                scores = np.concatenate([s for s, _ in pools[(name, method)]])
                labels = np.concatenate([y for _, y in pools[(name, method)]])
                cm = confusion(scores, labels, youden_threshold(scores, labels))
                pooled_value = {"auc": float(auc(scores, labels)),
                                "f1": float(f1(cm)), "g": float(g_score(cm))}
                for metric in METRIC_NAMES:
                    tables[metric][name][method] = (pooled_value[metric], math.nan)
            else:
                for metric in METRIC_NAMES:
                    vals = [getattr(r, metric) for r in cell]
                    tables[metric][name][method] = (float(np.mean(vals)),
                                                    float(np.std(vals)))
    report.tables = tables
    report.timing = timing

    report.averages = {metric: {} for metric in METRIC_NAMES}
    report.best_counts = {metric: {m: 0 for m in report.methods}
                          for metric in METRIC_NAMES}
    report.ties = {metric: [] for metric in METRIC_NAMES}
    for metric in METRIC_NAMES:
        for method in report.methods:
            means = [tables[metric][name][method][0] for name in report.datasets]
            report.averages[metric][method] = float(np.mean(means)) if means else math.nan
        for name in report.datasets:
            row = [tables[metric][name][m][0] for m in report.methods]
            top = max(row)
            winners = [m for m, v in zip(report.methods, row) if v == top]
            if len(winners) == 1:
                report.best_counts[metric][winners[0]] += 1
            else:
                report.ties[metric].append(name)


def run_benchmark(datasets, methods=DEFAULT_METHODS, splits: int = 5,
                  repeats: int = 3, seed: int = 0, dragan_config=None,
                  augment: bool = False, pooled: bool = False, jobs: int = 1,
                  split_plan_dir=None, progress=None) -> BenchmarkReport:
    """Run the full dataset x method x repeat x fold grid.

    ``datasets`` may hold CSV paths or Dataset objects. A failure while
    loading, splitting or evaluating one dataset is recorded in
    report.failures and the rest of the run continues; a failed dataset
    contributes no records. ``split_plan_dir`` exports one fold-assignment
    CSV per dataset for auditing. ``progress`` is called with each finished
    EvalRecord.
    """
    methods = _normalize_methods(methods)
    loaded, failures = [], []
    for item in datasets:
        if isinstance(item, Dataset):
            loaded.append(item)
            continue
        try:
            loaded.append(load_csv(item))
        except Exception as exc:
            failures.append((str(item), f"{type(exc).__name__}: {exc}"))

    report = BenchmarkReport([], methods, splits, repeats, seed, pooled,
                             failures=failures)
    pools = {}
    for ds in loaded:
        try:
            plan = stratified_kfold(ds, splits, repeats, split_seed(seed, ds.name))
            if split_plan_dir is not None:
                os.makedirs(split_plan_dir, exist_ok=True)
                plan.write_csv(os.path.join(split_plan_dir, f"splits_{ds.name}.csv"))
            tasks = [(method, r, f, train, test)
                     for method in methods
                     for r, f, train, test in plan.iter_folds()]
            if jobs == 1:
                outcomes = []
                for method, r, f, train, test in tasks:
                    outcomes.append(evaluate_fold(
                        ds, train, test, method, r, f, seed, dragan_config,
                        augment, keep_scores=pooled))
                    if progress is not None:
                        progress(outcomes[-1][0])
            else:
                outcomes = Parallel(n_jobs=jobs)(
                    delayed(evaluate_fold)(ds, train, test, method, r, f, seed,
                                           dragan_config, augment, pooled)
                    for method, r, f, train, test in tasks)
                if progress is not None:
                    for rec, _, _ in outcomes:
                        progress(rec)
        except Exception as exc:
            report.failures.append((ds.name, f"{type(exc).__name__}: {exc}"))
            continue
        report.datasets.append(ds.name)
        for rec, scores, labels in outcomes:
            report.records.append(rec)
            if pooled:
                pools.setdefault((rec.dataset, rec.method), []).append((scores, labels))

    _aggregate(report, pools)
    return report


# ---------------------------------------------------------------------------
# Derived reports

def correlation_report(report: BenchmarkReport) -> dict:
    """Pearson correlation of per-dataset mean AUCs against vanilla.

    None marks an undefined correlation (either series constant). Requires
    the vanilla baseline and at least two datasets.
    """
    if "vanilla" not in report.methods:
        raise ConfigError("correlation requires the vanilla baseline")
    if len(report.datasets) < 2:
        raise ConfigError(
            f"correlation requires at least two datasets, got {len(report.datasets)}")
    base = [report.tables["auc"][n]["vanilla"][0] for n in report.datasets]
    out = {}
    for method in report.methods:
        series = [report.tables["auc"][n][method][0] for n in report.datasets]
        try:
            out[method] = float(pearson(series, base))
        except UndefinedMetricError:
            out[method] = None
    return out


def top_gains(report: BenchmarkReport, k: int = 10) -> dict:
    """Largest per-dataset mean-AUC gains over vanilla, per method.

    Returns {method: {"gains": [(dataset, gain)], "average": float,
    "count": int}} with gains sorted descending (dataset order breaks ties).
    When fewer than k datasets exist all of them are listed and ``count``
    records how many that was.
    """
    if "vanilla" not in report.methods:
        raise ConfigError("top gains require the vanilla baseline")
    if k < 1:
        raise ConfigError(f"k must be >= 1, got {k}")
    order = {name: i for i, name in enumerate(report.datasets)}
    out = {}
    for method in report.methods:
        gains = [(name, report.tables["auc"][name][method][0]
                  - report.tables["auc"][name]["vanilla"][0])
                 for name in report.datasets]
        gains.sort(key=lambda item: (-item[1], order[item[0]]))
        chosen = gains[:k]
        average = float(np.mean([g for _, g in chosen])) if chosen else math.nan
        out[method] = {"gains": chosen, "average": average, "count": len(chosen)}
    return out


def least_squares_slope(xs, ys) -> float:
    """Simple-regression slope: sum((x-xbar)(y-ybar)) / sum((x-xbar)^2)."""
    xs = np.asarray(xs, dtype=np.float64)
    ys = np.asarray(ys, dtype=np.float64)
    if xs.ndim != 1 or xs.shape != ys.shape:
        raise ShapeError(
            f"slope needs equal-length vectors, got {xs.shape} and {ys.shape}")
    if xs.size < 2:
        raise ConfigError("slope needs at least two points")
    dx = xs - xs.mean()
    denom = float(dx @ dx)
    if denom == 0.0:
        raise ConfigError("slope undefined: all x values identical")
    return float(dx @ (ys - ys.mean())) / denom


@dataclass
class AblationResult:
    """Mean AUC per method at each feasible data fraction, plus slopes.

    ``slopes[method]`` is None when fewer than two fractions ran;
    ``skipped`` lists (fraction, reason) for fractions that could not run.
    """

    dataset: str
    methods: list
    fractions: list
    table: dict
    slopes: dict
    skipped: list


def ablate_data_fraction(dataset, methods=DEFAULT_METHODS,
                         fractions=DEFAULT_FRACTIONS, seed: int = 0,
                         splits: int = 5, repeats: int = 3, dragan_config=None,
                         jobs: int = 1, progress=None) -> AblationResult:
    """Benchmark stratified subsets of one dataset at several fractions.

    Each feasible fraction is subsampled once (deterministically per
    fraction) and run through the usual CV grid; infeasible fractions are
    skipped with a warning rather than failing the ablation.
    """
    ds = dataset if isinstance(dataset, Dataset) else load_csv(dataset)
    methods = _normalize_methods(methods)
    used, skipped, table = [], [], {}
    for fraction in fractions:
        if not 0.0 < fraction <= 1.0:
            reason = "fraction outside (0, 1]"
            skipped.append((fraction, reason))
            warnings.warn(f"skipping fraction {fraction:g}: {reason}")
            continue
        kept_minority = max(1, round_half_up(fraction * ds.n_minority))
        if kept_minority < splits:
            reason = (f"{kept_minority} minority rows cannot stratify "
                      f"into {splits} folds")
            skipped.append((fraction, reason))
            warnings.warn(f"skipping fraction {fraction:g}: {reason}")
            continue
        sub_seed = record_seed(seed, ds.name, "subsample", 0,
                               int(round(fraction * 10 ** 9)))
        sub = subsample_fraction(ds, fraction, sub_seed)
        rep = run_benchmark([sub], methods, splits, repeats, seed,
                            dragan_config=dragan_config, jobs=jobs,
                            progress=progress)
        if rep.failures:
            reason = rep.failures[0][1]
            skipped.append((fraction, reason))
            warnings.warn(f"skipping fraction {fraction:g}: {reason}")
            continue
        used.append(fraction)
        table[fraction] = {m: rep.averages["auc"][m] for m in methods}

    slopes = {}
    for method in methods:
        if len(used) >= 2:
            slopes[method] = least_squares_slope(
                used, [table[f][method] for f in used])
        else:
            slopes[method] = None
    return AblationResult(ds.name, methods, used, table, slopes, skipped)


# ---------------------------------------------------------------------------
# Emission

def _fmt(value, decimals: int = 4) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "NA"
    return f"{value:.{decimals}f}"


def _write_lines(path: str, lines) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("\n".join(lines) + "\n")


def _markdown_table(header, rows, bold=None) -> list:
    """Rows of cells -> pipe table; ``bold`` maps (row, col) -> True."""
    lines = ["| " + " | ".join(header) + " |",
             "| " + " | ".join("---" for _ in header) + " |"]
    for i, row in enumerate(rows):
        cells = [f"**{cell}**" if bold and bold.get((i, j)) else cell
                 for j, cell in enumerate(row)]
        lines.append("| " + " | ".join(cells) + " |")
    return lines


def _emit_results_tables(report, out_dir, formats, written):
    for metric in METRIC_NAMES:
        csv_rows, md_rows, bold = [], [], {}
        for i, name in enumerate(report.datasets):
            cells = [report.tables[metric][name][m] for m in report.methods]
            top = max(mean for mean, _ in cells)
            csv_rows.append([name] + [part for mean, std in cells
                                      for part in (_fmt(mean), _fmt(std))])
            md_rows.append([name] + [f"{_fmt(mean)} ± {_fmt(std)}"
                                     if not math.isnan(std) else _fmt(mean)
                                     for mean, std in cells])
            for j, (mean, _) in enumerate(cells):
                if mean == top:
                    bold[(i, j + 1)] = True
        avg = [report.averages[metric][m] for m in report.methods]
        csv_rows.append(["average"] + [part for v in avg
                                       for part in (_fmt(v), "NA")])
        md_rows.append(["average"] + [_fmt(v) for v in avg])
        if avg:
            top = max(avg)
            for j, v in enumerate(avg):
                if v == top:
                    bold[(len(report.datasets), j + 1)] = True

        if "csv" in formats:
            header = ["dataset"] + [f"{m}_{part}" for m in report.methods
                                    for part in ("mean", "std")]
            path = os.path.join(out_dir, f"results_{metric}.csv")
            _write_lines(path, [",".join(header)]
                         + [",".join(r) for r in csv_rows])
            written.append(path)
        if "markdown" in formats:
            path = os.path.join(out_dir, f"results_{metric}.md")
            _write_lines(path, _markdown_table(
                ["dataset"] + list(report.methods), md_rows, bold))
            written.append(path)


def _emit_timing(report, out_dir, formats, written):
    rows = [[name] + [_fmt(report.timing[name][m]) for m in report.methods]
            for name in report.datasets]
    header = ["dataset"] + list(report.methods)
    if "csv" in formats:
        path = os.path.join(out_dir, "timing.csv")
        _write_lines(path, [",".join(header)] + [",".join(r) for r in rows])
        written.append(path)
    if "markdown" in formats:
        path = os.path.join(out_dir, "timing.md")
        _write_lines(path, _markdown_table(header, rows))
        written.append(path)


def _emit_correlation(corr, methods, out_dir, formats, written):
    rows = [[m, _fmt(corr[m])] for m in methods]
    if "csv" in formats:
        path = os.path.join(out_dir, "correlation.csv")
        _write_lines(path, ["method,pearson_auc"] + [",".join(r) for r in rows])
        written.append(path)
    if "markdown" in formats:
        path = os.path.join(out_dir, "correlation.md")
        _write_lines(path, _markdown_table(["method", "pearson_auc"], rows))
        written.append(path)


def _emit_top_gains(gains, methods, out_dir, formats, written):
    rows = []
    for m in methods:
        for rank, (name, gain) in enumerate(gains[m]["gains"], start=1):
            rows.append([m, str(rank), name, _fmt(gain)])
        rows.append([m, "average", "", _fmt(gains[m]["average"])])
    if "csv" in formats:
        path = os.path.join(out_dir, "top_gains.csv")
        _write_lines(path, ["method,rank,dataset,gain"]
                     + [",".join(r) for r in rows])
        written.append(path)
    if "markdown" in formats:
        path = os.path.join(out_dir, "top_gains.md")
        _write_lines(path, _markdown_table(
            ["method", "rank", "dataset", "gain"], rows))
        written.append(path)


def emit_report(report: BenchmarkReport, out_dir,
                formats=("csv", "markdown")) -> list:
    """Write the aggregate tables under ``out_dir`` and return the paths.

    results_{auc,f1,g} carry one row per dataset plus an average row, with
    the per-row best method bold in markdown. correlation and top_gains are
    written only when vanilla ran and at least two datasets succeeded.
    Values are fixed at four decimals, so everything except timing (which
    reports measured wall clock) is reproducible byte for byte.
    """
    for fmt in formats:
        if fmt not in ("csv", "markdown"):
            raise ConfigError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    _emit_results_tables(report, out_dir, formats, written)
    _emit_timing(report, out_dir, formats, written)
    if "vanilla" in report.methods and len(report.datasets) >= 2:
        _emit_correlation(correlation_report(report), report.methods,
                          out_dir, formats, written)
        _emit_top_gains(top_gains(report), report.methods,
                        out_dir, formats, written)
    return sorted(written)


def emit_ablation(result: AblationResult, out_dir,
                  formats=("csv", "markdown")) -> list:
    """Write ablation.csv / ablation.md: one row per fraction plus slopes."""
    for fmt in formats:
        if fmt not in ("csv", "markdown"):
            raise ConfigError(f"unknown format {fmt!r}")
    os.makedirs(out_dir, exist_ok=True)
    written = []
    header = ["fraction"] + list(result.methods)
    rows = [[f"{fraction:g}"] + [_fmt(result.table[fraction][m])
                                 for m in result.methods]
            for fraction in result.fractions]
    rows.append(["slope"] + [_fmt(result.slopes[m], decimals=6)
                             for m in result.methods])
    if "csv" in formats:
        path = os.path.join(out_dir, "ablation.csv")
        _write_lines(path, [",".join(header)] + [",".join(r) for r in rows])
        written.append(path)
    if "markdown" in formats:
        path = os.path.join(out_dir, "ablation.md")
        _write_lines(path, _markdown_table(header, rows))
        written.append(path)
    return sorted(written)
