import json

import numpy as np
import pytest

from autorad.core.types import DataError, FeatureTable
from autorad.evaluate.cv import (
    ExperimentSettings,
    make_split_plan,
    patient_counts,
    permuted_labels,
    run_experiment,
    stratified_test_counts,
    summarize,
)
from autorad.evaluate.insight import rank_typicality, univariate_screen
from autorad.evaluate.report import (
    build_report,
    hashed_region,
    read_report,
    render_table,
    write_report,
    write_roc_csv,
)
from autorad.pipeline.space import load_space
from autorad.search import SearchSettings


def toy_table(rng, n_per_class=10, signal=2.0, with_missing=True):
    ids = [f"p{i:02d}" for i in range(2 * n_per_class)]
    y = np.repeat([0, 1], n_per_class)
    X = rng.normal(size=(2 * n_per_class, 5))
    X[:, :2] += signal * y[:, None]
    if with_missing:
        X[rng.random(X.shape) < 0.05] = np.nan
    names = ["hf_mean", "hf_std", "hf_max", "volf_volume_ml", "hf_min"]
    return FeatureTable(ids, names, X), dict(zip(ids, y.tolist()))


def settings(**kw):
    base = dict(search=SearchSettings(load_space(), budget=6, ensemble=2, inner_folds=2), seed=4)
    base.update(kw)
    return ExperimentSettings(**base)


class TestSplits:
    def test_cohort_counts(self):
        assert stratified_test_counts([125, 122], 0.2) == [25, 24]

    def test_exact_halves(self):
        plan = make_split_plan(list("abcdefgh"), [0, 0, 0, 0, 1, 1, 1, 1], n_iter=10, test_fraction=0.5)
        lab = dict(zip("abcdefgh", [0, 0, 0, 0, 1, 1, 1, 1]))
        for tr, te in plan.splits:
            assert sorted(lab[p] for p in te) == [0, 0, 1, 1]
            assert set(tr).isdisjoint(te) and len(tr) + len(te) == 8

    def test_leave_one_out(self):
        ids = [f"p{i}" for i in range(247)]
        plan = make_split_plan(ids, [i % 2 for i in range(247)], mode="leave-one-out")
        assert plan.n_iter == 247 and all(len(te) == 1 for _, te in plan.splits)

    def test_prefix_and_determinism(self):
        ids, y = [f"p{i}" for i in range(20)], [0] * 10 + [1] * 10
        long = make_split_plan(ids, y, n_iter=8, seed=3)
        assert make_split_plan(ids, y, n_iter=3, seed=3).splits == long.splits[:3]
        assert make_split_plan(ids, y, n_iter=8, seed=4).splits != long.splits

    @pytest.mark.parametrize("sizes,f", [([10, 3], 0.2), ([2, 50], 0.9), ([7, 7], 0.35)])
    def test_counts_keep_training_rows(self, sizes, f):
        counts = stratified_test_counts(sizes, f)
        assert all(0 <= k < n for k, n in zip(counts, sizes))

    def test_too_small_class(self):
        with pytest.raises(DataError):
            make_split_plan(["a", "b", "c"], [0, 0, 1])


@pytest.fixture(scope="module")
def result():
    rng = np.random.default_rng(1)
    table, labels = toy_table(rng)
    plan = make_split_plan(table.ids, [labels[i] for i in table.ids], n_iter=3, seed=2)
    batches = {p: "A" if k % 2 else "B" for k, p in enumerate(table.ids)}
    return run_experiment(table, labels, plan, settings(combat_batches=batches, audit_hygiene=True))


class TestExperiment:

    def test_structure(self, result):
        assert result["n_iter"] == 3 and len(result["iterations"]) == 3
        assert set(result["summary"]) >= {"auc", "bca", "sensitivity", "specificity", "roc"}
        it = result["iterations"][0]
        assert it["n_test"] == 4 and len(it["probabilities"]) == 4

    def test_no_test_row_reaches_a_fit(self, result):
        for it in result["iterations"]:
            assert it["hygiene"]["test_rows_read"] == 0
            assert "combat" in it["hygiene"]["steps"] and "classifier" in it["hygiene"]["steps"]

    def test_signal_is_found(self, result):
        assert result["summary"]["auc"]["mean"] > 0.7

    def test_deterministic(self, result):
        rng = np.random.default_rng(1)
        table, labels = toy_table(rng)
        plan = make_split_plan(table.ids, [labels[i] for i in table.ids], n_iter=3, seed=2)
        batches = {p: "A" if k % 2 else "B" for k, p in enumerate(table.ids)}
        again = run_experiment(table, labels, plan, settings(combat_batches=batches, audit_hygiene=True))
        assert json.dumps(again, sort_keys=True) == json.dumps(result, sort_keys=True)

    def test_no_signal_interval_covers_half(self):
        rng = np.random.default_rng(5)
        table, labels = toy_table(rng, n_per_class=12, signal=0.0, with_missing=False)
        plan = make_split_plan(table.ids, [labels[i] for i in table.ids], n_iter=6, seed=1)
        s = run_experiment(table, labels, plan, settings())["summary"]["auc"]
        assert s["lower"] <= 0.5 <= s["upper"]

    def test_unlabelled_patient(self):
        rng = np.random.default_rng(1)
        table, labels = toy_table(rng)
        plan = make_split_plan(table.ids, [labels[i] for i in table.ids], n_iter=1)
        del labels["p00"]
        with pytest.raises(DataError):
            run_experiment(table, labels, plan, settings())


class TestSummaries:
    def test_leave_one_out_pools(self):
        its = [{"probabilities": [p], "labels": [y]} for p, y in [(0.9, 1), (0.2, 0), (0.8, 0), (0.7, 1)]]
        s = summarize(its, "leave-one-out")
        assert s["pooled"]["auc"] == 0.75
        assert s["pooled"]["sensitivity"] == 1.0 and s["pooled"]["specificity"] == 0.5

    def test_patient_counts(self):
        its = [
            {"test_ids": ["a", "b"], "probabilities": [0.9, 0.9], "labels": [1, 0]},
            {"test_ids": ["a"], "probabilities": [0.1], "labels": [1]},
        ]
        assert patient_counts(its) == {"a": {"correct": 1, "total": 2}, "b": {"correct": 0, "total": 1}}

    def test_permuted_labels_keep_prevalence(self):
        labels = {f"p{i}": int(i < 7) for i in range(20)}
        perm = permuted_labels(labels, 0)
        assert sorted(perm.values()) == sorted(labels.values()) and perm != labels
        assert permuted_labels(labels, 0) == perm


class TestInsight:
    def test_typicality(self):
        counts = {
            "a": {"correct": 10, "total": 10},
            "b": {"correct": 0, "total": 10},
            "c": {"correct": 5, "total": 10},
            "d": {"correct": 0, "total": 0},
        }
        r = rank_typicality(counts, n_ambiguous=1)
        assert r["typical"] == ["a"] and r["atypical"] == ["b"]
        assert r["ambiguous"] == [{"id": "c", "fraction": 0.5}]

    def test_univariate_screen(self, rng):
        y = np.repeat([0, 1], 15)
        X = np.column_stack([y + rng.normal(0, 0.1, 30), rng.normal(size=30), (np.arange(30) % 2).astype(float)])
        t = FeatureTable([f"p{i}" for i in range(30)], ["hf_mean", "hf_std", "semf_sex"], X)
        rows = univariate_screen(t, y)
        assert rows[0]["feature"] == "hf_mean" and rows[0]["significant"]
        sex = next(r for r in rows if r["feature"] == "semf_sex")
        assert sex["test"] == "chi-square"
        assert all(r["p_bonferroni"] == min(1.0, 3 * r["p"]) for r in rows)


class TestReport:
    @pytest.fixture
    def report(self):
        its = [
            {"auc": a, "bca": a, "sensitivity": a, "specificity": a, "n_train": 8, "n_test": 2, "roc_tpr": [0.0, a, 1.0]}
            for a in (0.9, 0.95, 1.0)
        ]
        result = {"summary": summarize(its), "iterations": its}
        return build_report("evaluate", {"seed": 1}, result, meta={"threads": 3})

    def test_hash_ignores_meta(self, report):
        other = build_report("evaluate", {"seed": 1}, report["result"], meta={"threads": 1})
        assert other["result_sha256"] == report["result_sha256"]
        assert hashed_region(other) == hashed_region(report)
        assert build_report("evaluate", {"seed": 2}, report["result"])["result_sha256"] != report["result_sha256"]

    def test_round_trip_and_schema(self, report, tmp_path):
        write_report(report, tmp_path / "r.json")
        assert read_report(tmp_path / "r.json") == report
        bad = dict(report, schema_version=99)
        (tmp_path / "bad.json").write_text(json.dumps(bad))
        with pytest.raises(DataError):
            read_report(tmp_path / "bad.json")

    def test_table_rendering(self, report):
        text = render_table([report], ["combined"])
        assert "combined" in text and ">1.00" in text
        assert text.splitlines()[2].startswith("AUC")

    def test_roc_csv_clamps_band(self, report, tmp_path):
        write_roc_csv(report["result"], tmp_path / "roc.csv")
        rows = [line.split(",") for line in (tmp_path / "roc.csv").read_text().splitlines()]
        assert rows[0] == ["fpr", "mean_tpr", "lower", "upper"]
        assert all(0.0 <= float(r[2]) <= float(r[3]) <= 1.0 for r in rows[1:])

    def test_non_finite_values_become_null(self):
        rep = build_report("x", {}, {"v": float("nan"), "w": np.float32(2.5)})
        assert rep["result"] == {"v": None, "w": 2.5}
