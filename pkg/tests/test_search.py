import copy
from dataclasses import replace

import numpy as np
import pytest

from autorad.core.names import ALL_GROUPS
from autorad.core.types import DataError
from autorad.evaluate.stats import f1_score
from autorad.pipeline.audit import audit_fits
from autorad.pipeline.preprocess import DegenerateWorkflow
from autorad.pipeline.space import WorkflowConfig, load_space, sample_config, sample_workflows, validate_space
from autorad.pipeline.workflow import fit_workflow, fitted_digest
from autorad.search import (
    DEFAULT_BUDGET,
    DEFAULT_ENSEMBLE,
    EnsembleModel,
    ScoredWorkflow,
    SearchSettings,
    build_ensemble,
    ensemble_predict,
    inner_splits,
    load_model,
    rank,
    read_model_header,
    run_search,
    save_model,
    score_workflow,
    train_ensemble,
)


@pytest.fixture(scope="module")
def space():
    return load_space()


@pytest.fixture
def data(rng):
    n = 24
    y = np.repeat([0, 1], n // 2)
    X = rng.normal(size=(n, 6))
    X[:, :3] += 1.5 * y[:, None]
    X[rng.random(X.shape) < 0.05] = np.nan
    groups = ("histogram", "histogram", "GLCM", "GLCM", "shape", "volume")
    return X, y, groups


def single_point_space(space):
    s = copy.deepcopy(space)
    s["imputer"] = {"choices": ["median"], "knn_k": {"type": "int_uniform", "low": 3, "high": 3}}
    s["scaler"] = {"p_on": 1.0}
    s["groupwise"] = {"p_use": 0.0, "p_group_on": 0.5}
    s["univariate"] = {"p_on": 0.0, "p_threshold": {"type": "uniform", "low": 0.05, "high": 0.05}}
    s["pca"] = {"modes": ["off"], "k": {"type": "int_uniform", "low": 10, "high": 10}}
    s["resampler"] = {"choices": ["none"], "nearmiss_version": [1]}
    s["classifier"] = {"choices": ["logistic"], "logistic": {"l2": {"type": "uniform", "low": 1.0, "high": 1.0}}}
    return s


class TestSpace:
    def test_defaults(self):
        assert DEFAULT_BUDGET == 25_000 and DEFAULT_ENSEMBLE == 50

    def test_same_seed_same_list(self, space):
        assert sample_workflows(space, 30, 5) == sample_workflows(space, 30, 5)
        assert sample_workflows(space, 30, 5) != sample_workflows(space, 30, 6)

    def test_smaller_budget_is_prefix(self, space):
        assert sample_workflows(space, 10, 2) == sample_workflows(space, 40, 2)[:10]
        assert sample_config(space, 2, 33) == sample_workflows(space, 40, 2)[33]

    def test_single_point_space(self, space):
        configs = sample_workflows(single_point_space(space), 5, 0)
        assert len({replace(c, index=0) for c in configs}) == 1

    def test_every_method_reachable(self, space):
        configs = sample_workflows(space, 400, 1)
        assert {c.classifier for c in configs} == set(space["classifier"]["choices"])
        assert {c.resampler for c in configs} == set(space["resampler"]["choices"])
        assert {c.imputer for c in configs} == set(space["imputer"]["choices"])

    def test_config_dict_round_trip(self, space):
        c = sample_config(space, 9, 4)
        assert WorkflowConfig.from_dict(c.to_dict()) == c

    def test_invalid_space(self, space):
        bad = copy.deepcopy(space)
        del bad["classifier"]
        with pytest.raises((ValueError, DataError)):
            validate_space(bad)
        bad = copy.deepcopy(space)
        bad["classifier"]["choices"] = ["perceptron"]
        with pytest.raises((ValueError, DataError)):
            validate_space(bad)


class TestF1:
    def test_perfect(self):
        assert f1_score([0.9, 0.1, 0.8], [1, 0, 1]) == 1.0

    def test_half(self):
        # TP = 1, FP = 1, FN = 1
        assert f1_score([0.9, 0.8, 0.1, 0.2], [1, 0, 1, 0]) == 0.5


class TestWorkflow:
    def test_all_groups_off_is_degenerate(self, data):
        X, y, groups = data
        cfg = WorkflowConfig(0, 0, group_flags=tuple((g, False) for g in ALL_GROUPS))
        with pytest.raises(DegenerateWorkflow):
            fit_workflow(cfg, X, y, groups)
        s = score_workflow(cfg, X, y, groups, inner_splits(y, 2, 0.15, 0))
        assert s.degenerate and s.score == -np.inf

    def test_deterministic(self, space, data):
        X, y, groups = data
        for cfg in sample_workflows(space, 15, 3):
            try:
                a = fit_workflow(cfg, X, y, groups)
            except DegenerateWorkflow:
                continue
            b = fit_workflow(cfg, X, y, groups)
            assert np.array_equal(a.predict_proba(X), b.predict_proba(X))

    def test_predict_does_not_change_state(self, space, data, rng):
        X, y, groups = data
        fw = fit_workflow(WorkflowConfig(1, 0, imputer="knn", pca_mode="variance95", resampler="smote"), X, y, groups)
        before = fitted_digest(fw)
        fw.predict_proba(rng.normal(size=(5, 6)))
        assert fitted_digest(fw) == before

    def test_audit_records_training_ids_only(self, data):
        X, y, groups = data
        ids = [f"p{i}" for i in range(len(y))]
        with audit_fits() as rec:
            fit_workflow(WorkflowConfig(0, 0, univariate=True, p_threshold=0.5, pca_mode="fixed"), X[:20], y[:20], groups, row_ids=ids[:20])
        assert rec.ids_seen() == set(ids[:20])
        assert {"scaler", "imputer", "variance", "groupwise", "univariate", "pca", "resampler", "classifier"} <= rec.steps()


class TestSearch:
    def test_inner_split_sizes(self):
        y = np.repeat([0, 1], [20, 7])
        for tr, va in inner_splits(y, 5, 0.15, 0):
            assert np.bincount(y[va]).tolist() == [3, 1]
            assert np.intersect1d(tr, va).size == 0 and tr.size + va.size == 27

    def test_threads_do_not_change_scores(self, space, data):
        X, y, groups = data
        configs = sample_workflows(space, 12, 4)
        splits = inner_splits(y, 3, 0.15, 1)
        a = run_search(configs, X, y, groups, splits, threads=1)
        b = run_search(configs, X, y, groups, splits, threads=2)
        assert a == b

    def test_tie_goes_to_lower_index(self):
        mk = lambda i, f: ScoredWorkflow(WorkflowConfig(i, 0), (f,))
        ranked = rank([mk(3, 0.8), mk(1, 0.8), mk(2, 0.9), ScoredWorkflow(WorkflowConfig(0, 0), (), True)])
        assert [s.config.index for s in ranked] == [2, 1, 3]

    def test_k1_ensemble_equals_member(self, space, data):
        X, y, groups = data
        scored = [ScoredWorkflow(WorkflowConfig(0, 0), (1.0,))]
        model = build_ensemble(scored, X, y, groups, [f"f{i}" for i in range(6)], k=1)
        assert np.array_equal(model.predict_proba(X), fit_workflow(WorkflowConfig(0, 0), X, y, groups).predict_proba(X))

    def test_ensemble_mean(self):
        class Const:
            def __init__(self, p):
                self.p = p

            def predict_proba(self, X):
                return np.full(len(X), self.p)

        m = EnsembleModel((Const(0.2), Const(0.4), Const(0.6)), ("a",), ("histogram",))
        assert ensemble_predict(m, np.zeros((2, 1))) == pytest.approx([0.4, 0.4])

    def test_all_degenerate(self, data):
        X, y, groups = data
        with pytest.raises(DataError):
            build_ensemble([ScoredWorkflow(WorkflowConfig(0, 0), (), True)], X, y, groups, list("abcdef"))

    def test_train_save_load(self, space, data, tmp_path):
        X, y, groups = data
        names = [f"f{i}" for i in range(6)]
        model, scored = train_ensemble(X, y, groups, names, SearchSettings(space, budget=10, ensemble=3, inner_folds=2), seed=1)
        assert len(scored) == 10 and 1 <= model.size <= 3
        save_model(model, tmp_path / "m.bin", run_config={"seed": 1})
        back = load_model(tmp_path / "m.bin")
        assert np.array_equal(back.predict_proba(X), model.predict_proba(X))
        assert read_model_header(tmp_path / "m.bin")["run_config"] == {"seed": 1}
        with pytest.raises(DataError):
            ensemble_predict(back, np.zeros((1, 3)))

    def test_bad_model_file(self, tmp_path):
        (tmp_path / "x.bin").write_bytes(b"junk")
        with pytest.raises(DataError):
            load_model(tmp_path / "x.bin")
