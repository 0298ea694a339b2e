import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from commitprio.config import FeatureConfig
from commitprio.corpus import CommitRecord, CoverageMap, FileDiff, TestSuiteId, load_corpus, load_project
from commitprio.errors import TooFewMinority, UnimputableField
from commitprio.features import (FEATURE_NAMES, Dataset, PastRun, build_dataset, build_observations,
                                 churn_similarity, cov_diff_signal, diff_features, ewma, global_medians,
                                 impute, prev_pass_rate, read_dataset_csv, rebalance_smote_undersample,
                                 weighted_pass_rate, write_dataset_csv)
from conftest import java, write_project

SUITE = TestSuiteId("P", "x.ABTest")


def commit(*changes, seq=0):
    return CommitRecord(f"c{seq}", seq, seq, tuple(
        FileDiff(f"src/main/java/x/{c}.java", a, r) for c, a, r in changes))


def coverage_of(*classes):
    return {SUITE: CoverageMap(SUITE, frozenset(f"x.{c}" for c in classes), 0.5)}


class TestDiffFeatures:
    def test_partial_overlap(self):
        got = diff_features(SUITE, commit(("A", 5, 2), ("C", 9, 9)), {}, coverage_of("A", "B"))
        assert got == (1, 5, 2, 7)

    def test_no_overlap_is_zero(self):
        assert diff_features(SUITE, commit(("C", 9, 9)), {}, coverage_of("A", "B")) == (0, 0, 0, 0)

    def test_two_covered_files(self):
        got = diff_features(SUITE, commit(("A", 1, 0), ("B", 2, 3)), {}, coverage_of("A", "B"))
        assert got == (2, 3, 3, 6)

    def test_unmapped_is_missing_not_zero(self):
        assert diff_features(SUITE, commit(("A", 1, 0)), {}, {}) is None
        assert cov_diff_signal(SUITE, commit(("A", 1, 0)), {}, {}) is None

    def test_name_mapping_used_without_coverage(self):
        mapping = {SUITE: frozenset({"x.A"})}
        assert diff_features(SUITE, commit(("A", 4, 1)), mapping, {}) == (1, 4, 1, 5)

    def test_test_sources_are_not_production_changes(self):
        c = CommitRecord("c", 0, 0, (FileDiff("src/test/java/x/ATest.java", 10, 0),
                                     FileDiff("src/main/java/x/A.java", 1, 1)))
        assert diff_features(SUITE, c, {}, coverage_of("A")) == (1, 1, 1, 2)


class TestCovDiffSignal:
    def test_only_modified_class(self):
        assert cov_diff_signal(SUITE, commit(("A", 3, 1)), {}, coverage_of("A")) == 1.0

    def test_untouched(self):
        assert cov_diff_signal(SUITE, commit(("C", 3, 1)), {}, coverage_of("A")) == 0.0

    def test_churn_share(self):
        assert cov_diff_signal(SUITE, commit(("A", 4, 2), ("C", 10, 8)), {}, coverage_of("A")) == 0.25

    def test_zero_churn_commit(self):
        c = CommitRecord("c", 0, 0, (FileDiff("src/main/java/x/A.java", 0, 0),))
        assert cov_diff_signal(SUITE, c, {}, coverage_of("A")) == 0.0

    @settings(max_examples=100, deadline=None)
    @given(st.integers(0, 50), st.integers(0, 50), st.integers(0, 50), st.integers(1, 30))
    def test_adding_covered_churn_never_lowers(self, a, r, other, extra):
        cov = coverage_of("A")
        before = commit(("A", a, r), ("C", other, 1))
        after = commit(("A", a + extra, r), ("C", other, 1))
        assert diff_features(SUITE, after, {}, cov)[3] >= diff_features(SUITE, before, {}, cov)[3]
        assert cov_diff_signal(SUITE, after, {}, cov) >= cov_diff_signal(SUITE, before, {}, cov)


class TestHistory:
    def test_prev_pass_rate(self):
        assert prev_pass_rate([PastRun(0, True, 1)], 1) == 1.0
        assert prev_pass_rate([PastRun(0, True, 1), PastRun(1, False, 1)], 2) == 0.0
        assert prev_pass_rate([], 0) is None

    def test_future_runs_ignored(self):
        runs = [PastRun(0, True, 1), PastRun(3, False, 1)]
        assert prev_pass_rate(runs, 2) == 1.0
        assert weighted_pass_rate(runs, 2, 1) == 1.0

    def test_single_prior_pass(self):
        assert weighted_pass_rate([PastRun(0, True, 40)], 5, 3, decay=0.8) == 1.0

    def test_hand_computed_decay(self):
        runs = [PastRun(0, True, 7), PastRun(1, False, 7)]
        assert weighted_pass_rate(runs, 2, 7, decay=0.5) == pytest.approx(1 / 3, abs=1e-15)

    def test_all_fail(self):
        runs = [PastRun(i, False, i) for i in range(10)]
        assert weighted_pass_rate(runs, 10, 4) == 0.0

    def test_window_limits_runs(self):
        runs = [PastRun(0, False, 1)] + [PastRun(i, True, 1) for i in range(1, 4)]
        assert weighted_pass_rate(runs, 4, 1, window=3) == 1.0
        assert weighted_pass_rate(runs, 4, 1, window=4) < 1.0

    def test_similarity(self):
        assert churn_similarity(10, 10) == 1.0
        assert churn_similarity(0, 0) == 1.0
        assert churn_similarity(3, 15) == churn_similarity(15, 3) == pytest.approx(1 / (1 + math.log(4)))

    @settings(max_examples=200, deadline=None)
    @given(st.lists(st.tuples(st.booleans(), st.integers(0, 500)), min_size=1, max_size=15),
           st.integers(0, 500), st.floats(0.05, 0.95))
    def test_wpr_within_observed_range(self, runs, churn, decay):
        past = [PastRun(i, p, c) for i, (p, c) in enumerate(runs)]
        v = weighted_pass_rate(past, len(runs), churn, decay, window=10)
        window = [p for p, _ in runs[-10:]]
        assert min(window) - 1e-12 <= v <= max(window) + 1e-12


def make_ds(rows):
    """rows: (project, seq, suite, values) with None for missing."""
    n = len(rows)
    X = np.array([[np.nan if v is None else v for v in r[3]] for r in rows], dtype=float)
    return Dataset(X=X, mask=np.zeros_like(X, dtype=bool), y=np.zeros(n, dtype=int),
                   project=np.array([r[0] for r in rows], dtype=object),
                   commit_id=np.array([f"c{r[1]}" for r in rows], dtype=object),
                   sequence_index=np.array([r[1] for r in rows]),
                   suite=np.array([r[2] for r in rows], dtype=object),
                   order_index=np.arange(n), feature_names=("v",))


class TestImpute:
    def test_ewma_recurrence(self):
        assert ewma([2, 4], 0.5) == 3.0

    def test_suite_history_first(self):
        ds = make_ds([("P", 0, "s", [2.0]), ("P", 1, "s", [4.0]), ("P", 2, "s", [None]), ("P", 2, "t", [100.0])])
        out = impute(ds, alpha=0.5)
        assert out.X[2, 0] == 3.0 and out.mask[2, 0] and not out.mask[0, 0]

    def test_commit_local_median(self):
        ds = make_ds([("P", 0, "a", [1.0]), ("P", 0, "b", [3.0]), ("P", 0, "c", [5.0]), ("P", 0, "d", [None])])
        assert impute(ds).X[3, 0] == 3.0

    def test_global_fallback(self):
        ds = make_ds([("P", 0, "a", [None])])
        assert impute(ds, medians=np.array([0.0])).X[0, 0] == 0.0

    def test_unimputable(self):
        with pytest.raises(UnimputableField):
            impute(make_ds([("P", 0, "a", [None])]))

    def test_history_does_not_cross_projects(self):
        ds = make_ds([("P", 0, "s", [9.0]), ("Q", 1, "s", [None]), ("Q", 1, "t", [1.0])])
        assert impute(ds).X[1, 0] == 1.0

    @settings(max_examples=100, deadline=None)
    @given(st.lists(st.one_of(st.none(), st.floats(-1e3, 1e3)), min_size=2, max_size=12))
    def test_range_preserving(self, values):
        if all(v is None for v in values):
            values[0] = 0.0
        ds = make_ds([("P", i // 3, f"s{i % 3}", [v]) for i, v in enumerate(values)])
        obs = [v for v in values if v is not None]
        out = impute(ds)
        assert not np.isnan(out.X).any()
        assert out.X.min() >= min(obs) - 1e-9 and out.X.max() <= max(obs) + 1e-9

    def test_churn_identity_after_imputation(self, small_synth):
        data = build_dataset(small_synth.projects.values())
        full = impute(data)
        assert not np.isnan(full.X).any()
        assert np.array_equal(full.column("churn"), full.column("lines_added") + full.column("lines_removed"))


class TestAssembly:
    def test_tiny_project_features(self, tiny_corpus):
        alpha = load_corpus(tiny_corpus).projects["Alpha"]
        obs = {(o.commit_id, o.suite.class_path): o for o in build_observations(alpha)}
        foo0 = obs[("a0", "org.p.FooTest")].features
        assert (foo0.n_files_changed, foo0.lines_added, foo0.lines_removed, foo0.churn) == (1, 5, 2, 7)
        assert foo0.cov_diff_signal == pytest.approx(7 / 25)
        assert math.isnan(foo0.prev_pass_rate) and math.isnan(foo0.weighted_pass_rate)
        assert foo0.coverage_ratio == pytest.approx(1 / 3)
        bar1 = obs[("a1", "org.p.BarTest")].features
        assert bar1.prev_pass_rate == 0.0 and bar1.cov_diff_signal == 1.0
        smoke = obs[("a0", "org.p.SmokeIT")].features
        assert math.isnan(smoke.churn) and math.isnan(smoke.coverage_ratio)
        assert obs[("a2", "org.p.SmokeIT")].label == 1

    def test_class_first_seen_later_does_not_shape_earlier_mapping(self, tmp_path):
        write_project(tmp_path, "P",
                      commits=[("c0", [java("x.Foo", 2, 0)]), ("c1", [java("x.Widget", 3, 1)])],
                      executions=[("c0", "x.WidgetTest", "pass", 0), ("c0", "x.FooTest", "pass", 1),
                                  ("c1", "x.WidgetTest", "fail", 0), ("c1", "x.FooTest", "pass", 1)],
                      coverage=[("x.FooTest", "x.Foo")])
        obs = {(o.commit_id, o.suite.class_path): o.features for o in build_observations(load_project(tmp_path / "P"))}
        assert math.isnan(obs[("c0", "x.WidgetTest")].churn)
        assert obs[("c1", "x.WidgetTest")].churn == 4.0
        # the derived coverage ratio tracks the universe known at each commit
        assert obs[("c0", "x.FooTest")].coverage_ratio == 1.0
        assert obs[("c1", "x.FooTest")].coverage_ratio == 0.5

    def test_features_in_range_after_imputation(self, small_synth):
        full = impute(build_dataset(small_synth.projects.values()))
        for name in ("prev_pass_rate", "weighted_pass_rate", "coverage_ratio", "cov_diff_signal"):
            col = full.column(name)
            assert col.min() >= 0.0 and col.max() <= 1.0, name
        assert full.X.min() >= 0.0

    def test_dataset_csv_round_trip(self, small_synth, tmp_path):
        data = impute(build_dataset(small_synth.projects.values()))
        write_dataset_csv(data, tmp_path / "d.csv")
        back = read_dataset_csv(tmp_path / "d.csv")
        assert np.array_equal(back.X, data.X) and np.array_equal(back.mask, data.mask)
        assert np.array_equal(back.y, data.y) and list(back.suite) == list(data.suite)
        header = (tmp_path / "d.csv").read_text().splitlines()[0].split(",")
        assert header[5:5 + len(FEATURE_NAMES)] == list(FEATURE_NAMES)


def check_rebalanced(X, y, out):
    n_syn = len(out.weights)
    syn = out.X[len(out.kept):]
    assert syn.shape[0] == n_syn
    for row, (a, b) in zip(syn, out.parents):
        lo, hi = np.minimum(X[a], X[b]), np.maximum(X[a], X[b])
        assert np.all(row >= lo - 1e-12) and np.all(row <= hi + 1e-12)
    assert np.array_equal(out.X[: len(out.kept)], X[out.kept])


class TestRebalance:
    def test_segment_between_two_points(self):
        X = np.array([[0.0, 0.0], [1.0, 1.0]] + [[5.0, float(i)] for i in range(10)])
        y = np.array([1, 1] + [0] * 10)
        out = rebalance_smote_undersample(X, y, k=1, target_ratio=1.0, oversample_ratio=1.0, seed=1)
        syn = out.X[len(out.kept):]
        assert len(syn) > 0
        assert np.allclose(syn[:, 0], syn[:, 1]) and syn.min() >= 0 and syn.max() <= 1
        check_rebalanced(X, y, out)

    def test_ten_to_hundred_at_half(self):
        rng = np.random.default_rng(0)
        X = rng.normal(size=(110, 3))
        y = np.array([1] * 10 + [0] * 100)
        out = rebalance_smote_undersample(X, y, k=5, target_ratio=0.5, oversample_ratio=0.5)
        assert (out.y == 1).sum() == 50 and (out.y == 0).sum() == 100

    def test_default_pipeline_reaches_one_to_one(self):
        rng = np.random.default_rng(1)
        X = rng.normal(size=(110, 3))
        y = np.array([1] * 10 + [0] * 100)
        out = rebalance_smote_undersample(X, y, k=5)
        assert (out.y == 1).sum() == 50 and (out.y == 0).sum() == 50
        check_rebalanced(X, y, out)

    def test_balanced_identity(self):
        X = np.arange(20, dtype=float).reshape(10, 2)
        y = np.array([0, 1] * 5)
        out = rebalance_smote_undersample(X, y, k=2)
        assert out.X.shape == X.shape and len(out.weights) == 0

    def test_too_few_minority_duplicates(self):
        X = np.arange(24, dtype=float).reshape(12, 2)
        y = np.array([1, 1] + [0] * 10)
        with pytest.warns(TooFewMinority):
            out = rebalance_smote_undersample(X, y, k=5)
        assert (out.y == 1).sum() == 5

    def test_deterministic(self):
        rng = np.random.default_rng(2)
        X, y = rng.normal(size=(80, 4)), (rng.random(80) < 0.15).astype(int)
        a = rebalance_smote_undersample(X, y, seed=9)
        b = rebalance_smote_undersample(X, y, seed=9)
        assert np.array_equal(a.X, b.X) and np.array_equal(a.y, b.y)

    def test_input_rows_untouched(self):
        rng = np.random.default_rng(3)
        X, y = rng.normal(size=(60, 3)), np.array([1] * 12 + [0] * 48)
        X0 = X.copy()
        rebalance_smote_undersample(X, y)
        assert np.array_equal(X, X0)


def test_feature_config_validation():
    with pytest.raises(ValueError):
        FeatureConfig(decay=1.0)
    with pytest.raises(ValueError):
        FeatureConfig(window=0)
