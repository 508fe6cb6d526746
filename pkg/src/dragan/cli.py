"""Command line front end for the benchmark harness.

Installed as ``bench``. Subcommands: run (full CV grid over a directory of
CSV datasets), ablate (data-fraction ablation on one dataset), curve (the
closed-form trivial-solution loss/F1 curve) and resample (apply one
oversampler to a CSV and write the result).
"""

from __future__ import annotations

import dataclasses
import glob
import os

import click

from . import bench
from .data import load_csv, save_csv
from .errors import DraganError
from .gan import DraganConfig
from .metrics import loss_f1_curve
from .oversample import ResamplePlan, resample, target_count_balance

METHODS_HELP = "comma-separated subset of vanilla,smote,polyfit,mixup,dragan"


def _parse_methods(text: str) -> list:
    return [part.strip() for part in text.split(",") if part.strip()]


def _dragan_options(fn):
    fn = click.option("--dragan-config", type=click.Path(exists=True, dir_okay=False),
                      default=None, help="draGAN key=value config file.")(fn)
    fn = click.option("--dragan-epochs", type=int, default=None,
                      help="Override total draGAN epochs.")(fn)
    fn = click.option("--dragan-patience", type=int, default=None,
                      help="Override draGAN early-stopping patience.")(fn)
    return fn


def _build_dragan_config(path, epochs, patience):
    config = DraganConfig() if path is None else DraganConfig.load(path)
    changes = {}
    if epochs is not None:
        changes["total_epochs"] = epochs
        if patience is None:
            # keep the patience <= total_epochs invariant on a plain override
            changes["early_stopping_patience"] = min(
                config.early_stopping_patience, epochs)
    if patience is not None:
        changes["early_stopping_patience"] = patience
    return dataclasses.replace(config, **changes) if changes else config


def _collect_csvs(data_path: str) -> list:
    if os.path.isdir(data_path):
        paths = sorted(glob.glob(os.path.join(data_path, "*.csv")))
        if not paths:
            raise click.ClickException(f"no *.csv files under {data_path}")
        return paths
    return [data_path]


def _progress_printer(verbose: bool):
    if not verbose:
        return None

    def show(rec):
        click.echo(f"  {rec.dataset} {rec.method} r{rec.repeat} f{rec.fold} "
                   f"auc={rec.auc:.4f} ({rec.wall_seconds:.1f}s)")
    return show


@click.group()
@click.version_option(package_name="dragan")
def main():
    """Imbalanced-classification benchmark tools."""


@main.command("run")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True), help="CSV file or directory of CSVs.")
@click.option("--methods", default=",".join(bench.DEFAULT_METHODS),
              show_default=True, help=METHODS_HELP)
@click.option("--splits", default=5, show_default=True, type=int)
@click.option("--repeats", default=3, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True, type=int,
              help="Parallel workers per dataset grid.")
@click.option("--pooled", is_flag=True,
              help="Pool test scores across folds instead of averaging per fold.")
@click.option("--augment", is_flag=True,
              help="Train on generated plus real rows for dragan.")
@click.option("--split-plans", is_flag=True,
              help="Export fold assignments per dataset for auditing.")
@click.option("--verbose", is_flag=True)
@_dragan_options
def run_cmd(data_path, methods, splits, repeats, seed, out_dir, jobs, pooled,
            augment, split_plans, verbose, dragan_config, dragan_epochs,
            dragan_patience):
    """Run the repeated stratified CV benchmark and write result tables."""
    try:
        config = _build_dragan_config(dragan_config, dragan_epochs, dragan_patience)
        report = bench.run_benchmark(
            _collect_csvs(data_path), _parse_methods(methods), splits, repeats,
            seed, dragan_config=config, augment=augment, pooled=pooled,
            jobs=jobs, split_plan_dir=out_dir if split_plans else None,
            progress=_progress_printer(verbose))
        written = bench.emit_report(report, out_dir)
    except DraganError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"{len(report.records)} records over "
               f"{len(report.datasets)} dataset(s), {len(report.methods)} method(s)")
    for name, message in report.failures:
        click.echo(f"failed: {name}: {message}", err=True)
    for path in written:
        click.echo(f"wrote {path}")
    if report.failures and not report.datasets:
        raise click.ClickException("every dataset failed")


@main.command("ablate")
@click.option("--data", "data_path", required=True,
              type=click.Path(exists=True, dir_okay=False), help="One CSV dataset.")
@click.option("--fractions", default=",".join(f"{f:g}" for f in bench.DEFAULT_FRACTIONS),
              show_default=True, help="Comma-separated data fractions in (0, 1].")
@click.option("--methods", default=",".join(bench.DEFAULT_METHODS),
              show_default=True, help=METHODS_HELP)
@click.option("--splits", default=5, show_default=True, type=int)
@click.option("--repeats", default=3, show_default=True, type=int)
@click.option("--seed", default=0, show_default=True, type=int)
@click.option("--out", "out_dir", required=True, type=click.Path(file_okay=False))
@click.option("--jobs", default=1, show_default=True, type=int)
@click.option("--verbose", is_flag=True)
@_dragan_options
def ablate_cmd(data_path, fractions, methods, splits, repeats, seed, out_dir,
               jobs, verbose, dragan_config, dragan_epochs, dragan_patience):
    """Benchmark stratified subsets of one dataset at several fractions."""
    try:
        parsed = [float(part) for part in _parse_methods(fractions)]
    except ValueError:
        raise click.ClickException(f"cannot parse fractions {fractions!r}") from None
    try:
        config = _build_dragan_config(dragan_config, dragan_epochs, dragan_patience)
        result = bench.ablate_data_fraction(
            data_path, _parse_methods(methods), parsed, seed, splits, repeats,
            dragan_config=config, jobs=jobs, progress=_progress_printer(verbose))
        written = bench.emit_ablation(result, out_dir)
    except DraganError as exc:
        raise click.ClickException(str(exc)) from exc
    for fraction, reason in result.skipped:
        click.echo(f"skipped fraction {fraction:g}: {reason}", err=True)
    for path in written:
        click.echo(f"wrote {path}")
    if not result.fractions:
        raise click.ClickException("no feasible fractions")


@main.command("curve")
@click.option("--minority-fraction", required=True, type=float,
              help="Class-1 fraction of the hypothetical dataset, in (0, 1).")
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--step", default=0.001, show_default=True, type=float,
              help="Grid step over the constant-output range (0, 1).")
def curve_cmd(minority_fraction, out_path, step):
    """Write the loss and F1 of the constant-score model over epsilon."""
    if not 0.0 < step < 1.0:
        raise click.ClickException(f"step must be in (0, 1), got {step}")
    grid = []
    k = 1
    while (eps := k * step) < 1.0:
        grid.append(eps)
        k += 1
    try:
        rows = loss_f1_curve(minority_fraction, grid)
    except DraganError as exc:
        raise click.ClickException(str(exc)) from exc
    with open(out_path, "w", newline="", encoding="utf-8") as fh:
        fh.write("epsilon,loss,f1\n")
        for eps, loss, score in rows:
            fh.write(f"{eps:.6f},{loss:.6f},{score:.6f}\n")
    click.echo(f"wrote {out_path} ({len(rows)} rows)")


@main.command("resample")
@click.option("--method", required=True, help=METHODS_HELP.replace("comma-separated subset", "one"))
@click.option("--in", "in_path", required=True,
              type=click.Path(exists=True, dir_okay=False))
@click.option("--out", "out_path", required=True, type=click.Path(dir_okay=False))
@click.option("--seed", default=0, show_default=True, type=int)
@_dragan_options
def resample_cmd(method, in_path, out_path, seed, dragan_config, dragan_epochs,
                 dragan_patience):
    """Apply one oversampler to a CSV file and write the resampled rows."""
    try:
        config = _build_dragan_config(dragan_config, dragan_epochs, dragan_patience)
        ds = load_csv(in_path)
        plan = ResamplePlan(method, target_count=target_count_balance(ds), seed=seed)
        out = resample(ds, plan, dragan_config=config)
        save_csv(out, out_path)
    except DraganError as exc:
        raise click.ClickException(str(exc)) from exc
    click.echo(f"wrote {out_path}: {out.n} rows "
               f"(-:{out.n_majority} +:{out.n_minority}) from {ds.n}")
