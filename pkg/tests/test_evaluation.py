import json
import math
from pathlib import Path

import numpy as np
import pytest
from _brute_metrics import brute_pearson, brute_rmse, brute_srcc
from hypothesis import given, settings
from hypothesis import strategies as st

from vrabench.errors import SchemaError, SplitError, UndefinedMetricError
from vrabench.evaluation import (
    BenchmarkConfig,
    EvaluationReport,
    LogisticFit,
    average_ranks,
    evaluate_predictions,
    fit_logistic4,
    load_report,
    make_split,
    method_aggregate,
    plcc,
    random_predictions,
    report_from_dict,
    report_to_dict,
    rmse,
    run_benchmark,
    run_inter_subset,
    save_report,
    srcc,
)
from vrabench.fusion import DesignMatrix
from vrabench.synth import make_benchmark_dataset

DATA = Path(__file__).parent / "data"


class TestMetrics:
    def test_monotone_identity(self):
        assert srcc([1, 2, 3], [10, 20, 30]) == 1.0
        assert srcc([1, 2, 3], [3, 2, 1]) == -1.0

    def test_ties_value(self):
        assert srcc([1, 2, 2, 3], [1, 2, 3, 4]) == pytest.approx(
            math.sqrt(0.9), abs=1e-12)

    def test_plcc_affine_invariance(self):
        x = np.array([0.3, 1.7, 2.2, 5.0, 3.1])
        assert plcc(2 * x + 1, x) == pytest.approx(1.0, abs=1e-12)
        assert plcc(-3 * x + 4, x) == pytest.approx(-1.0, abs=1e-12)

    def test_rmse_values(self):
        assert rmse([0, 0], [3, 4]) == pytest.approx(math.sqrt(12.5), abs=1e-12)
        assert rmse([1, 2], [1, 2]) == 0.0
        assert plcc([1, 2], [1, 2]) == pytest.approx(1.0)

    def test_constant_inputs_raise(self):
        with pytest.raises(UndefinedMetricError):
            srcc([1, 2, 3], [5, 5, 5])
        with pytest.raises(UndefinedMetricError):
            srcc([5, 5, 5], [1, 2, 3])
        with pytest.raises(UndefinedMetricError):
            plcc([1, 1], [1, 2])

    def test_length_mismatch(self):
        with pytest.raises(SchemaError):
            srcc([1, 2, 3], [1, 2])

    def test_against_brute_force(self):
        rng = np.random.default_rng(0)
        for trial in range(300):
            n = int(rng.integers(3, 40))
            pred = rng.normal(size=n)
            gt = rng.normal(size=n)
            if trial % 3 == 0:   # force ties
                pred = np.round(pred * 2) / 2
                gt = np.round(gt * 2) / 2
            if np.ptp(gt) == 0 or np.ptp(pred) == 0:
                continue
            assert srcc(pred, gt) == pytest.approx(brute_srcc(pred, gt), abs=1e-10)
            assert plcc(pred, gt) == pytest.approx(brute_pearson(pred, gt), abs=1e-10)
            assert rmse(pred, gt) == pytest.approx(brute_rmse(pred, gt), abs=1e-10)

    @settings(max_examples=50)
    @given(st.lists(st.floats(-100, 100).map(lambda v: round(v, 6)),
                    min_size=3, max_size=25, unique=True),
           st.lists(st.floats(-100, 100).map(lambda v: round(v, 6)),
                    min_size=3, max_size=25, unique=True))
    def test_monotone_transform_invariance_exact(self, pred, gt):
        # rounding keeps values far enough apart that cubing stays
        # strictly monotone in float arithmetic
        n = min(len(pred), len(gt))
        pred, gt = np.array(pred[:n]), np.array(gt[:n])
        if np.ptp(pred) == 0 or np.ptp(gt) == 0:
            return
        base = srcc(pred, gt)
        assert srcc(pred ** 3, gt) == base   # strictly increasing on R

    def test_rank_ties(self):
        assert average_ranks(np.array([10.0, 20.0, 20.0, 30.0])).tolist() == \
            [1.0, 2.5, 2.5, 4.0]


class TestLogistic:
    def test_exact_recovery(self):
        rng = np.random.default_rng(0)
        pred = rng.uniform(-3, 3, size=200)
        truth = LogisticFit(5.0, 1.0, 0.0, 1.0)
        gt = truth(pred)
        fit, remapped = fit_logistic4(pred, gt)
        assert fit is not None
        assert rmse(remapped, gt) < 1e-6

    def test_noisy_recovery(self):
        rng = np.random.default_rng(1)
        pred = rng.uniform(-3, 3, size=1000)
        gt = LogisticFit(5.0, 1.0, 0.0, 1.0)(pred) + rng.normal(0, 0.1, size=1000)
        fit, remapped = fit_logistic4(pred, gt)
        assert rmse(remapped, gt) == pytest.approx(0.1, rel=0.1)

    def test_identity_never_hurts(self):
        rng = np.random.default_rng(2)
        pred = rng.uniform(1, 5, size=50)
        gt = pred.copy()
        fit, remapped = fit_logistic4(pred, gt)
        assert rmse(remapped, gt) <= rmse(pred, gt) + 1e-15

    def test_constant_gt_flat_curve(self):
        rng = np.random.default_rng(3)
        pred = rng.uniform(0, 1, size=40)
        gt = np.full(40, 2.5)
        fit, remapped = fit_logistic4(pred, gt)
        assert np.allclose(remapped, 2.5, atol=1e-6)

    def test_constant_pred_rejected(self):
        with pytest.raises(UndefinedMetricError):
            fit_logistic4(np.ones(10), np.arange(10.0))

    def test_monotone_curve(self):
        fit = LogisticFit(4.0, 1.0, 0.3, -0.7)
        xs = np.linspace(-5, 5, 100)
        assert np.all(np.diff(fit(xs)) >= 0.0)

    def test_srcc_invariant_under_fitted_logistic(self):
        rng = np.random.default_rng(4)
        pred = rng.uniform(-2, 2, size=60)
        gt = 1.5 * pred + rng.normal(0, 0.3, size=60)
        fit, remapped = fit_logistic4(pred, gt)
        if fit is not None and np.unique(remapped).size == remapped.size:
            assert srcc(remapped, gt) == srcc(pred, gt)


class TestSplits:
    def test_sizes_on_c3_shape(self):
        records, _, _ = make_benchmark_dataset(0)
        for seed in (0, 17, 99):
            s = make_split(records, "facial_id", seed)
            assert len(s.test_ids) == 128 and len(s.train_ids) == 512
            assert len(s.held_out) == 4
            s = make_split(records, "submit_id", seed)
            assert len(s.test_ids) == 120 and len(s.train_ids) == 520
            assert len(s.held_out) == 3

    def test_group_integrity(self):
        records, _, _ = make_benchmark_dataset(0)
        by_id = {r.video_id: r for r in records}
        s = make_split(records, "facial_id", 3)
        train_pairs = {by_id[v].facial_id_pair for v in s.train_ids}
        test_pairs = {by_id[v].facial_id_pair for v in s.test_ids}
        assert not (train_pairs & test_pairs)
        assert set(s.test_ids).isdisjoint(s.train_ids)

    def test_determinism(self):
        records, _, _ = make_benchmark_dataset(0)
        assert make_split(records, "submit_id", 7) == make_split(records, "submit_id", 7)

    def test_golden_splits(self):
        payload = json.loads((DATA / "golden_splits.json").read_text())
        records, _, _ = make_benchmark_dataset(payload["dataset_seed"])
        for row in payload["splits"]:
            s = make_split(records, row["protocol"], row["seed"])
            assert list(s.held_out) == row["held_out"]
            assert len(s.train_ids) == row["n_train"]
            assert len(s.test_ids) == row["n_test"]
            assert list(s.test_ids[:5]) == row["test_ids_first5"]
            assert list(s.test_ids[-5:]) == row["test_ids_last5"]

    def test_too_few_groups(self, tiny_records):
        with pytest.raises(SplitError):
            make_split(tiny_records, "facial_id", 0)   # only 2 pairs

    def test_mixed_subsets_rejected(self, tiny_records):
        from vrabench.datamodel import VideoRecord

        other = VideoRecord.from_ratings("x", "C1", "p", "s", "x.mp4", [3, 3, 3, 3, 3])
        with pytest.raises(SplitError):
            make_split(tiny_records + [other], "submit_id", 0)


class TestMethodAggregate:
    def test_group_means(self):
        mp, mg = method_aggregate([3, 4, 1, 2], [3, 4, 1, 2], ["A", "A", "B", "B"])
        assert mp.tolist() == [3.5, 1.5]
        assert mg.tolist() == [3.5, 1.5]

    def test_singleton_groups_identity(self):
        mp, mg = method_aggregate([1.0, 2.0], [3.0, 4.0], ["A", "B"])
        assert mp.tolist() == [1.0, 2.0] and mg.tolist() == [3.0, 4.0]

    def test_single_group_rejected(self):
        with pytest.raises(UndefinedMetricError):
            method_aggregate([1, 2], [1, 2], ["A", "A"])

    def test_averaging_beats_video_level(self):
        # noise-averaging oracle: per-method means denoise predictions
        rng = np.random.default_rng(0)
        wins = 0
        for seed in range(50):
            gt = np.repeat(np.linspace(1, 5, 8), 10)
            ids = [f"m{i}" for i in np.repeat(np.arange(8), 10)]
            pred = gt + rng.normal(0, 1.0, size=gt.size)
            v = srcc(pred, gt)
            mp, mg = method_aggregate(pred, gt, ids)
            wins += srcc(mp, mg) >= v
        assert wins >= 40


def small_design(records, seed=0, d=4, noise=0.05):
    rng = np.random.default_rng(seed)
    names = tuple(f"f{i}" for i in range(d))
    y = np.array([r.mos for r in records])
    cols = [y * (1 + 0.1 * i) + rng.normal(0, noise, len(records)) for i in range(d - 1)]
    cols.append(rng.normal(size=len(records)))
    X = np.column_stack(cols)
    return DesignMatrix(X, y, names, tuple(r.video_id for r in records))


class TestBenchmark:
    def test_single_iteration_aggregate(self):
        records, vectors, _ = make_benchmark_dataset(1)
        design = DesignMatrix(np.vstack([v.values for v in vectors]),
                              np.array([r.mos for r in records]),
                              vectors[0].feature_names,
                              tuple(r.video_id for r in records))
        config = BenchmarkConfig(c_grid=(1.0,), gamma_grid=(0.1,), jobs=1)
        report = run_benchmark(design, records, "facial_id", iterations=1,
                               config=config, feature_model="synth")
        assert len(report.iterations) == 1
        agg = report.aggregate()
        it = report.iterations[0]
        assert agg["srcc"]["mean"] == it.video.srcc
        assert agg["srcc"]["std"] == 0.0
        assert agg["method"]["srcc"]["mean"] == it.method.srcc

    def test_aggregate_recomputable(self):
        records, vectors, _ = make_benchmark_dataset(2)
        design = DesignMatrix(np.vstack([v.values for v in vectors]),
                              np.array([r.mos for r in records]),
                              vectors[0].feature_names,
                              tuple(r.video_id for r in records))
        config = BenchmarkConfig(c_grid=(1.0,), gamma_grid=(0.1,), jobs=1)
        report = run_benchmark(design, records, "submit_id", iterations=3, config=config)
        agg = report.aggregate()
        vals = [it.video.plcc for it in report.iterations]
        assert agg["plcc"]["mean"] == pytest.approx(np.mean(vals), abs=1e-15)
        assert agg["plcc"]["std"] == pytest.approx(np.std(vals, ddof=1), abs=1e-15)

    def test_random_predictor_near_zero(self):
        records, vectors, _ = make_benchmark_dataset(3)
        design = DesignMatrix(np.vstack([v.values for v in vectors]),
                              np.array([r.mos for r in records]),
                              vectors[0].feature_names,
                              tuple(r.video_id for r in records))
        config = BenchmarkConfig(predictor="random", jobs=1)
        report = run_benchmark(design, records, "facial_id", iterations=20, config=config)
        assert abs(report.aggregate()["srcc"]["mean"]) < 0.1

    def test_jobs_parity(self):
        records, vectors, _ = make_benchmark_dataset(4)
        design = DesignMatrix(np.vstack([v.values for v in vectors]),
                              np.array([r.mos for r in records]),
                              vectors[0].feature_names,
                              tuple(r.video_id for r in records))
        config1 = BenchmarkConfig(c_grid=(1.0,), gamma_grid=(0.1,), jobs=1)
        config2 = BenchmarkConfig(c_grid=(1.0,), gamma_grid=(0.1,), jobs=2)
        r1 = run_benchmark(design, records, "submit_id", iterations=2, config=config1)
        r2 = run_benchmark(design, records, "submit_id", iterations=2, config=config2)
        assert report_to_dict(r1) == report_to_dict(r2)

    def test_skip_policy(self, tiny_records):
        # constant MOS inside a held-out group -> skipped with reason
        from vrabench.datamodel import VideoRecord

        records = []
        for s in ("s1", "s2", "s3", "s4"):
            for p in ("pA", "pB"):
                for v in range(2):
                    records.append(VideoRecord.from_ratings(
                        f"{s}{p}{v}", "C3", p, s, "x.mp4", [3, 3, 3, 3, 3]))
        design = small_design(records)
        config = BenchmarkConfig(c_grid=(1.0,), gamma_grid=(0.1,), jobs=1)
        report = run_benchmark(design, records, "submit_id", iterations=2, config=config)
        assert len(report.skipped) == 2
        assert all("constant" in reason for _, reason in report.skipped)

    def test_report_roundtrip(self, tmp_path):
        records, vectors, _ = make_benchmark_dataset(5)
        design = DesignMatrix(np.vstack([v.values for v in vectors]),
                              np.array([r.mos for r in records]),
                              vectors[0].feature_names,
                              tuple(r.video_id for r in records))
        config = BenchmarkConfig(predictor="random", jobs=1)
        report = run_benchmark(design, records, "facial_id", iterations=2, config=config)
        save_report(report, tmp_path / "r.json")
        again = load_report(tmp_path / "r.json")
        assert report_to_dict(again) == report_to_dict(report)


class TestInterSubset:
    def designs(self):
        records, vectors, _ = make_benchmark_dataset(6)
        X = np.vstack([v.values for v in vectors])
        y = np.array([r.mos for r in records])
        names = vectors[0].feature_names
        ids = tuple(r.video_id for r in records)
        half = len(records) // 2
        train = DesignMatrix(X[:half], y[:half], names, ids[:half])
        test = DesignMatrix(X[half:], y[half:], names, ids[half:])
        return records, train, test

    def test_identical_train_test_consistency(self):
        records, train, _ = self.designs()
        report = run_inter_subset(train, train, records, C=10.0, gamma=0.1)
        it = report.iterations[0]
        assert it.video.srcc > 0.9     # fitting metrics on its own train set
        assert report.protocol == "inter_subset"

    def test_random_baseline_near_zero(self):
        records, train, test = self.designs()
        report = run_inter_subset(train, test, records, C=1.0, gamma=0.1,
                                  predictor="random")
        assert abs(report.iterations[0].video.srcc) < 0.15

    def test_name_mismatch_rejected(self):
        records, train, test = self.designs()
        bad = DesignMatrix(test.X, test.y, tuple(f"z{i}" for i in range(test.X.shape[1])),
                           test.video_ids)
        with pytest.raises(SchemaError):
            run_inter_subset(train, bad, records, C=1.0, gamma=0.1)


class TestRandomPredictions:
    def test_range_and_determinism(self):
        a = random_predictions(100, 7)
        b = random_predictions(100, 7)
        assert np.array_equal(a, b)
        assert np.all((a >= 1.0) & (a <= 5.0))
        assert np.ptp(a) > 1.0

    def test_evaluate_predictions_helper(self, tiny_records):
        design = small_design(tiny_records)
        report = evaluate_predictions(design.y, design, tiny_records, "perfect")
        assert report.iterations[0].video.srcc == 1.0
