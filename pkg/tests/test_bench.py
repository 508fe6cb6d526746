"""Benchmark harness tests: seed isolation, test-fold purity, timing scope,
failure containment, aggregation, gains, slopes and emission determinism."""

import math
import time

import numpy as np
import pytest

from dragan import bench, oversample
from dragan.bench import BenchmarkReport
from dragan.data import Dataset, apply_minmax, fit_minmax, stratified_kfold
from dragan.errors import ConfigError, ShapeError


def two_cluster(n_majority, n_minority, d=3, seed=0, shift=1.3, name="toy"):
    rng = np.random.default_rng(seed)
    feats = np.vstack([rng.normal(0.0, 1.0, size=(n_majority, d)),
                       rng.normal(shift, 1.0, size=(n_minority, d))])
    labels = np.concatenate([np.zeros(n_majority, dtype=int),
                             np.ones(n_minority, dtype=int)])
    perm = rng.permutation(labels.size)
    return Dataset(name, feats[perm], labels[perm])


def report_from_table(datasets, methods, auc_table):
    """Build a minimal report around a hand-written mean-AUC table."""
    tables = {"auc": {name: {m: (auc_table[name][m], 0.0) for m in methods}
                      for name in datasets}}
    return BenchmarkReport(list(datasets), list(methods), 5, 3, 0, False,
                           tables=tables)


class TestSeeding:

    def test_record_seed_depends_only_on_cell_coordinates(self):
        a = bench.record_seed(7, "ds", "smote", 1, 2)
        assert a == bench.record_seed(7, "ds", "smote", 1, 2)
        assert a != bench.record_seed(8, "ds", "smote", 1, 2)
        assert a != bench.record_seed(7, "other", "smote", 1, 2)
        assert a != bench.record_seed(7, "ds", "mixup", 1, 2)
        assert a != bench.record_seed(7, "ds", "smote", 2, 2)
        assert a != bench.record_seed(7, "ds", "smote", 1, 0)

    def test_split_seed_is_method_independent(self):
        assert bench.split_seed(3, "ds") == bench.split_seed(3, "ds")
        assert bench.split_seed(3, "ds") != bench.split_seed(3, "other")

    def test_method_reordering_leaves_records_unchanged(self):
        ds = two_cluster(60, 15)
        key = lambda r: (r.dataset, r.method, r.repeat, r.fold)
        ab = bench.run_benchmark([ds], ["vanilla", "smote"], 3, 2, seed=5)
        ba = bench.run_benchmark([ds], ["smote", "vanilla"], 3, 2, seed=5)
        left = {key(r): (r.auc, r.f1, r.g, r.threshold, r.seed) for r in ab.records}
        right = {key(r): (r.auc, r.f1, r.g, r.threshold, r.seed) for r in ba.records}
        assert left == right

    def test_dropping_a_method_leaves_the_rest_unchanged(self):
        ds = two_cluster(60, 15)
        both = bench.run_benchmark([ds], ["vanilla", "smote"], 3, 2, seed=5)
        alone = bench.run_benchmark([ds], ["smote"], 3, 2, seed=5)
        kept = [r for r in both.records if r.method == "smote"]
        assert [(r.auc, r.seed, r.threshold) for r in kept] \
            == [(r.auc, r.seed, r.threshold) for r in alone.records]

    def test_duplicate_methods_rejected(self):
        with pytest.raises(ConfigError):
            bench.run_benchmark([], ["smote", "polyfit-star", "polyfit"])


class TestEvaluateFold:

    def test_resampler_sees_exactly_the_scaled_train_fold(self, monkeypatch):
        # unique monotone feature values make the scaled fold reconstructible
        n = 40
        feats = np.arange(n, dtype=float).reshape(n, 1)
        labels = np.array([0] * 30 + [1] * 10)
        ds = Dataset("audit", feats, labels)
        plan = stratified_kfold(ds, 4, 1, bench.split_seed(0, "audit"))
        seen = []
        original = oversample.resample

        def spy(data, rplan, dragan_config=None):
            seen.append(data.features.copy())
            return original(data, rplan, dragan_config=dragan_config)

        monkeypatch.setattr(oversample, "resample", spy)
        for r, f, train_idx, test_idx in plan.iter_folds():
            bench.evaluate_fold(ds, train_idx, test_idx, "smote", r, f, seed=0)
            scaler = fit_minmax(feats[train_idx])
            expected = apply_minmax(scaler, feats[train_idx])
            assert np.array_equal(seen[-1], expected)

    def test_wall_time_covers_resampling_but_not_scoring(self, monkeypatch):
        ds = two_cluster(40, 10)
        plan = stratified_kfold(ds, 4, 1, 0)
        _, _, train_idx, test_idx = next(plan.iter_folds())
        original = oversample.resample

        def slow_resample(data, rplan, dragan_config=None):
            time.sleep(0.05)
            return original(data, rplan, dragan_config=dragan_config)

        def slow_threshold(scores, labels):
            time.sleep(0.2)
            return 0.5

        monkeypatch.setattr(oversample, "resample", slow_resample)
        monkeypatch.setattr(bench, "youden_threshold", slow_threshold)
        rec, _, _ = bench.evaluate_fold(ds, train_idx, test_idx, "vanilla", 0, 0, 0)
        assert 0.05 <= rec.wall_seconds < 0.2

    def test_keep_scores_returns_test_fold_scores(self):
        ds = two_cluster(40, 10)
        plan = stratified_kfold(ds, 4, 1, 0)
        _, _, train_idx, test_idx = next(plan.iter_folds())
        rec, scores, labels = bench.evaluate_fold(
            ds, train_idx, test_idx, "vanilla", 0, 0, 0, keep_scores=True)
        assert scores.shape == (test_idx.size,)
        assert np.array_equal(labels, ds.labels[test_idx])
        assert 0.0 <= rec.auc <= 1.0

    def test_augment_unions_generated_and_real_rows(self, monkeypatch):
        ds = two_cluster(40, 10, d=2)
        plan = stratified_kfold(ds, 4, 1, 0)
        _, _, train_idx, test_idx = next(plan.iter_folds())
        fake = Dataset("fake", np.full((6, 2), 0.5), np.array([1, 1, 1, 0, 0, 0]))
        monkeypatch.setattr(oversample, "resample",
                            lambda data, rplan, dragan_config=None: fake)
        sizes = []
        original = bench.train_logreg

        def spy(x, y, config=None):
            sizes.append(x.shape[0])
            return original(x, y, config)

        monkeypatch.setattr(bench, "train_logreg", spy)
        bench.evaluate_fold(ds, train_idx, test_idx, "dragan", 0, 0, 0)
        bench.evaluate_fold(ds, train_idx, test_idx, "dragan", 0, 0, 0, augment=True)
        bench.evaluate_fold(ds, train_idx, test_idx, "smote", 0, 0, 0, augment=True)
        assert sizes == [6, 6 + train_idx.size, 6]


class TestRunBenchmark:

    def test_grid_shape_and_mean_tables(self):
        ds = two_cluster(60, 15)
        rep = bench.run_benchmark([ds], ["vanilla", "smote"], 3, 2, seed=1)
        assert len(rep.records) == 2 * 3 * 2
        cell = [r.auc for r in rep.records
                if r.method == "smote" and r.dataset == "toy"]
        mean, std = rep.tables["auc"]["toy"]["smote"]
        assert mean == pytest.approx(np.mean(cell))
        assert std == pytest.approx(np.std(cell))
        assert rep.averages["auc"]["smote"] == pytest.approx(mean)

    def test_bad_path_is_recorded_and_run_continues(self, tmp_path):
        ds = two_cluster(60, 15)
        missing = str(tmp_path / "nope.csv")
        rep = bench.run_benchmark([missing, ds], ["vanilla"], 3, 2, seed=0)
        assert rep.datasets == ["toy"]
        assert len(rep.failures) == 1 and rep.failures[0][0] == missing
        assert len(rep.records) == 6

    def test_unsplittable_dataset_is_recorded_not_fatal(self):
        tiny = Dataset("tiny", np.zeros((3, 2)), np.array([0, 0, 1]))
        ds = two_cluster(60, 15)
        rep = bench.run_benchmark([tiny, ds], ["vanilla"], 5, 1, seed=0)
        assert rep.datasets == ["toy"]
        assert rep.failures[0][0] == "tiny"
        assert "tiny" not in {r.dataset for r in rep.records}

    def test_failing_dataset_contributes_no_partial_records(self, monkeypatch):
        ds_a = two_cluster(40, 10, name="a")
        ds_b = two_cluster(40, 10, seed=1, name="b")
        calls = []
        original = oversample.resample

        def flaky(data, rplan, dragan_config=None):
            calls.append(data.name)
            if data.name == "a" and len(calls) > 2:
                raise ValueError("boom")
            return original(data, rplan, dragan_config=dragan_config)

        monkeypatch.setattr(oversample, "resample", flaky)
        rep = bench.run_benchmark([ds_a, ds_b], ["smote"], 4, 1, seed=0)
        assert rep.datasets == ["b"]
        assert {r.dataset for r in rep.records} == {"b"}
        assert rep.failures[0][0] == "a" and "boom" in rep.failures[0][1]

    def test_best_counts_strict_max_and_ties(self):
        rep = report_from_table(
            ["a", "b"], ["vanilla", "smote"],
            {"a": {"vanilla": 0.7, "smote": 0.8},
             "b": {"vanilla": 0.6, "smote": 0.6}})
        rep.tables["f1"] = rep.tables["auc"]
        rep.tables["g"] = rep.tables["auc"]
        counts = {m: 0 for m in rep.methods}
        ties = []
        for name in rep.datasets:
            row = [rep.tables["auc"][name][m][0] for m in rep.methods]
            winners = [m for m, v in zip(rep.methods, row) if v == max(row)]
            (counts.__setitem__(winners[0], counts[winners[0]] + 1)
             if len(winners) == 1 else ties.append(name))
        assert counts == {"vanilla": 0, "smote": 1} and ties == ["b"]

    def test_best_counts_from_a_real_run(self):
        ds_a = two_cluster(60, 15, name="a")
        ds_b = two_cluster(60, 15, seed=2, name="b")
        rep = bench.run_benchmark([ds_a, ds_b], ["vanilla", "smote"], 3, 2, seed=3)
        for metric in bench.METRIC_NAMES:
            total = sum(rep.best_counts[metric].values()) + len(rep.ties[metric])
            assert total == len(rep.datasets)

    def test_progress_callback_sees_every_record(self):
        ds = two_cluster(40, 10)
        seen = []
        rep = bench.run_benchmark([ds], ["vanilla"], 4, 1, seed=0,
                                  progress=seen.append)
        assert [(r.repeat, r.fold) for r in seen] \
            == [(r.repeat, r.fold) for r in rep.records]

    def test_parallel_jobs_match_serial_records(self):
        ds = two_cluster(60, 15)
        serial = bench.run_benchmark([ds], ["vanilla", "smote"], 3, 2, seed=9)
        parallel = bench.run_benchmark([ds], ["vanilla", "smote"], 3, 2, seed=9,
                                       jobs=2)
        assert [(r.method, r.repeat, r.fold, r.auc, r.seed)
                for r in serial.records] \
            == [(r.method, r.repeat, r.fold, r.auc, r.seed)
                for r in parallel.records]

    def test_split_plan_export(self, tmp_path):
        ds = two_cluster(40, 10)
        bench.run_benchmark([ds], ["vanilla"], 4, 1, seed=0,
                            split_plan_dir=str(tmp_path))
        lines = (tmp_path / "splits_toy.csv").read_text().splitlines()
        assert lines[0] == "repeat,fold,index,role"
        # every row appears once as test per repeat
        test_rows = [line for line in lines[1:] if line.endswith(",test")]
        assert len(test_rows) == ds.n

    def test_pooled_tables_use_concatenated_scores(self):
        ds = two_cluster(60, 15)
        rep = bench.run_benchmark([ds], ["vanilla"], 3, 2, seed=4, pooled=True)
        assert len(rep.records) == 6
        mean, std = rep.tables["auc"]["toy"]["vanilla"]
        assert math.isnan(std)

        plan = stratified_kfold(ds, 3, 2, bench.split_seed(4, "toy"))
        scores, labels = [], []
        for r, f, train_idx, test_idx in plan.iter_folds():
            _, s, y = bench.evaluate_fold(ds, train_idx, test_idx, "vanilla",
                                          r, f, 4, keep_scores=True)
            scores.append(s)
            labels.append(y)
        from dragan.metrics import auc
        assert mean == pytest.approx(
            auc(np.concatenate(scores), np.concatenate(labels)), abs=1e-12)


class TestCorrelation:

    def test_identical_method_correlates_at_one(self):
        rep = report_from_table(
            ["a", "b", "c"], ["vanilla", "twin"],
            {"a": {"vanilla": 0.6, "twin": 0.6},
             "b": {"vanilla": 0.7, "twin": 0.7},
             "c": {"vanilla": 0.9, "twin": 0.9}})
        corr = bench.correlation_report(rep)
        assert corr["twin"] == pytest.approx(1.0)
        assert corr["vanilla"] == pytest.approx(1.0)

    def test_constant_series_reports_none(self):
        rep = report_from_table(
            ["a", "b"], ["vanilla", "flat"],
            {"a": {"vanilla": 0.6, "flat": 0.5},
             "b": {"vanilla": 0.7, "flat": 0.5}})
        assert bench.correlation_report(rep)["flat"] is None

    def test_requires_vanilla_and_two_datasets(self):
        rep = report_from_table(["a", "b"], ["smote"],
                                {"a": {"smote": 0.5}, "b": {"smote": 0.6}})
        with pytest.raises(ConfigError):
            bench.correlation_report(rep)
        rep = report_from_table(["a"], ["vanilla"], {"a": {"vanilla": 0.5}})
        with pytest.raises(ConfigError):
            bench.correlation_report(rep)

    def test_anticorrelated_series(self):
        rep = report_from_table(
            ["a", "b", "c"], ["vanilla", "anti"],
            {"a": {"vanilla": 0.5, "anti": 0.9},
             "b": {"vanilla": 0.7, "anti": 0.7},
             "c": {"vanilla": 0.9, "anti": 0.5}})
        assert bench.correlation_report(rep)["anti"] == pytest.approx(-1.0)


class TestTopGains:

    def test_vanilla_against_itself_is_all_zeros(self):
        rep = report_from_table(
            ["a", "b"], ["vanilla"],
            {"a": {"vanilla": 0.62}, "b": {"vanilla": 0.71}})
        gains = bench.top_gains(rep, k=10)["vanilla"]
        assert all(g == 0.0 for _, g in gains["gains"])
        assert gains["average"] == 0.0 and gains["count"] == 2

    def test_sorted_descending_and_truncated_to_k(self):
        rep = report_from_table(
            ["a", "b", "c"], ["vanilla", "m"],
            {"a": {"vanilla": 0.5, "m": 0.58},
             "b": {"vanilla": 0.5, "m": 0.65},
             "c": {"vanilla": 0.5, "m": 0.51}})
        out = bench.top_gains(rep, k=2)["m"]
        assert [name for name, _ in out["gains"]] == ["b", "a"]
        assert out["average"] == pytest.approx((0.15 + 0.08) / 2)
        assert out["count"] == 2

    def test_fewer_datasets_than_k_lists_them_all(self):
        rep = report_from_table(
            ["a", "b"], ["vanilla", "m"],
            {"a": {"vanilla": 0.5, "m": 0.6},
             "b": {"vanilla": 0.5, "m": 0.4}})
        out = bench.top_gains(rep, k=10)["m"]
        assert out["count"] == 2
        assert out["gains"] == [("a", pytest.approx(0.1)),
                                ("b", pytest.approx(-0.1))]

    def test_requires_vanilla_and_positive_k(self):
        rep = report_from_table(["a"], ["m"], {"a": {"m": 0.5}})
        with pytest.raises(ConfigError):
            bench.top_gains(rep)
        rep = report_from_table(["a"], ["vanilla"], {"a": {"vanilla": 0.5}})
        with pytest.raises(ConfigError):
            bench.top_gains(rep, k=0)


class TestSlope:

    def test_matches_polyfit_oracle(self):
        xs = [0.2, 0.4, 0.6, 0.8, 1.0]
        ys = [0.61, 0.66, 0.64, 0.71, 0.74]
        oracle = float(np.polyfit(xs, ys, 1)[0])
        assert bench.least_squares_slope(xs, ys) == pytest.approx(oracle, abs=1e-12)

    def test_exact_line_recovers_its_slope(self):
        assert bench.least_squares_slope([1.0, 2.0, 3.0], [2.0, 4.0, 6.0]) \
            == pytest.approx(2.0, abs=1e-15)

    def test_rejects_degenerate_inputs(self):
        with pytest.raises(ShapeError):
            bench.least_squares_slope([1.0, 2.0], [1.0])
        with pytest.raises(ConfigError):
            bench.least_squares_slope([1.0], [1.0])
        with pytest.raises(ConfigError):
            bench.least_squares_slope([2.0, 2.0], [1.0, 3.0])


class TestAblation:

    def test_single_fraction_has_no_slope(self):
        ds = two_cluster(60, 15)
        result = bench.ablate_data_fraction(ds, ["vanilla"], [1.0], seed=0,
                                            splits=3, repeats=1)
        assert result.fractions == [1.0]
        assert result.slopes["vanilla"] is None

    def test_infeasible_fraction_skipped_with_warning(self):
        ds = two_cluster(60, 15)
        with pytest.warns(UserWarning, match="cannot stratify"):
            result = bench.ablate_data_fraction(ds, ["vanilla"], [0.05, 1.0],
                                                seed=0, splits=3, repeats=1)
        assert result.fractions == [1.0]
        assert result.skipped[0][0] == 0.05

    def test_out_of_range_fraction_skipped(self):
        ds = two_cluster(60, 15)
        with pytest.warns(UserWarning, match="outside"):
            result = bench.ablate_data_fraction(ds, ["vanilla"], [1.5, 1.0],
                                                seed=0, splits=3, repeats=1)
        assert result.fractions == [1.0]

    def test_slopes_match_the_table(self):
        ds = two_cluster(120, 30)
        result = bench.ablate_data_fraction(ds, ["vanilla"], [0.5, 0.75, 1.0],
                                            seed=2, splits=3, repeats=1)
        ys = [result.table[f]["vanilla"] for f in result.fractions]
        assert result.slopes["vanilla"] == pytest.approx(
            bench.least_squares_slope(result.fractions, ys), abs=1e-15)

    def test_deterministic_across_calls(self):
        ds = two_cluster(60, 15)
        a = bench.ablate_data_fraction(ds, ["vanilla"], [0.6, 1.0], seed=1,
                                       splits=3, repeats=1)
        b = bench.ablate_data_fraction(ds, ["vanilla"], [0.6, 1.0], seed=1,
                                       splits=3, repeats=1)
        assert a.table == b.table and a.slopes == b.slopes


class TestEmission:

    def run_two(self, tmp_path):
        ds_a = two_cluster(60, 15, name="a")
        ds_b = two_cluster(60, 15, seed=2, shift=0.9, name="b")
        rep = bench.run_benchmark([ds_a, ds_b], ["vanilla", "smote"], 3, 2, seed=6)
        out = tmp_path / "out"
        return rep, bench.emit_report(rep, str(out))

    def test_expected_files_written(self, tmp_path):
        _, written = self.run_two(tmp_path)
        names = sorted(p.rsplit("/", 1)[1] for p in written)
        assert names == ["correlation.csv", "correlation.md",
                         "results_auc.csv", "results_auc.md",
                         "results_f1.csv", "results_f1.md",
                         "results_g.csv", "results_g.md",
                         "timing.csv", "timing.md",
                         "top_gains.csv", "top_gains.md"]

    def test_markdown_row_count_is_datasets_plus_average(self, tmp_path):
        rep, written = self.run_two(tmp_path)
        path = next(p for p in written if p.endswith("results_auc.md"))
        lines = open(path).read().splitlines()
        body = lines[2:]    # header + separator precede the body
        assert len(body) == len(rep.datasets) + 1
        assert body[-1].startswith("| average |")

    def test_average_row_equals_column_means(self, tmp_path):
        rep, written = self.run_two(tmp_path)
        path = next(p for p in written if p.endswith("results_auc.csv"))
        lines = open(path).read().splitlines()
        header = lines[0].split(",")
        rows = [line.split(",") for line in lines[1:]]
        assert rows[-1][0] == "average"
        for j, col in enumerate(header[1:], start=1):
            if not col.endswith("_mean"):
                continue
            body = [float(r[j]) for r in rows[:-1]]
            assert float(rows[-1][j]) == pytest.approx(np.mean(body), abs=5e-5)

    def test_bold_marks_per_row_maxima(self, tmp_path):
        rep, written = self.run_two(tmp_path)
        path = next(p for p in written if p.endswith("results_auc.md"))
        for i, line in enumerate(open(path).read().splitlines()[2:]):
            cells = [c.strip() for c in line.strip("|").split("|")]
            name = cells[0]
            means = ([rep.tables["auc"][name][m][0] for m in rep.methods]
                     if name != "average"
                     else [rep.averages["auc"][m] for m in rep.methods])
            top = max(means)
            for cell, mean in zip(cells[1:], means):
                assert cell.startswith("**") == (mean == top)

    def test_reruns_are_byte_identical_except_timing(self, tmp_path):
        ds_a = two_cluster(60, 15, name="a")
        ds_b = two_cluster(60, 15, seed=2, name="b")
        sides = []
        for sub in ("one", "two"):
            rep = bench.run_benchmark([ds_a, ds_b], ["vanilla", "smote"],
                                      3, 2, seed=6)
            sides.append(bench.emit_report(rep, str(tmp_path / sub)))
        for left, right in zip(*sides):
            tail = left.rsplit("/", 1)[1]
            assert tail == right.rsplit("/", 1)[1]
            if tail.startswith("timing."):
                # wall clock varies; structure must not
                def shape(path):
                    return [line.split("|")[1].strip() if line.startswith("|")
                            else line.split(",")[0] for line in open(path)]
                assert shape(left) == shape(right)
            else:
                assert open(left, "rb").read() == open(right, "rb").read()

    def test_rejects_unknown_format(self, tmp_path):
        rep, _ = self.run_two(tmp_path)
        with pytest.raises(ConfigError):
            bench.emit_report(rep, str(tmp_path / "x"), formats=("yaml",))

    def test_ablation_emission(self, tmp_path):
        ds = two_cluster(60, 15)
        result = bench.ablate_data_fraction(ds, ["vanilla"], [0.6, 1.0],
                                            seed=1, splits=3, repeats=1)
        written = bench.emit_ablation(result, str(tmp_path))
        csv_path = next(p for p in written if p.endswith("ablation.csv"))
        lines = open(csv_path).read().splitlines()
        assert lines[0] == "fraction,vanilla"
        assert lines[1].startswith("0.6,") and lines[2].startswith("1,")
        assert lines[3].startswith("slope,")

    def test_single_fraction_ablation_emits_na_slope(self, tmp_path):
        ds = two_cluster(60, 15)
        result = bench.ablate_data_fraction(ds, ["vanilla"], [1.0],
                                            seed=1, splits=3, repeats=1)
        written = bench.emit_ablation(result, str(tmp_path))
        csv_path = next(p for p in written if p.endswith("ablation.csv"))
        assert open(csv_path).read().splitlines()[-1] == "slope,NA"
