import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from autorad.core.io import read_manifest
from autorad.core.types import DataError, FeatureTable, PatientRecord
from autorad.harmonize import batch_labels, combat_apply, combat_fit, dice, icc, icc_filter
from autorad.pipeline import audit


def shifted_batches(rng, n=40, p=20, shift=5.0):
    X = rng.normal(size=(2 * n, p)) * rng.uniform(0.5, 2.0, size=p)
    X[n:] += shift
    return X, ["A"] * n + ["B"] * n


class TestCombat:
    def test_single_batch_is_identity(self, rng):
        X = rng.normal(size=(30, 6))
        m = combat_fit(X, ["A"] * 30, allow_single_batch=True)
        np.testing.assert_allclose(combat_apply(m, X, ["A"] * 30), X, atol=1e-10)

    def test_needs_two_batches(self, rng):
        with pytest.raises(DataError):
            combat_fit(rng.normal(size=(10, 3)), ["A"] * 10)

    def test_singleton_batch(self, rng):
        with pytest.raises(DataError):
            combat_fit(rng.normal(size=(5, 3)), ["A"] * 4 + ["B"])

    def test_unseen_batch(self, rng):
        X, b = shifted_batches(rng, n=5, p=3)
        m = combat_fit(X, b)
        with pytest.raises(DataError):
            combat_apply(m, X[:2], ["A", "C"])

    def test_residual_gap_matches_shrinkage(self, rng):
        X, b = shifted_batches(rng)
        b = np.array(b)
        m = combat_fit(X, b)
        Z = (X - m.grand_mean) / m.pooled_std
        Zadj = (combat_apply(m, X, b) - m.grand_mean) / m.pooled_std
        for k, name in enumerate(m.batches):
            rows = b == name
            n = rows.sum()
            g_hat = Z[rows].mean(axis=0)
            g_bar, t2 = g_hat.mean(), g_hat.var(ddof=1)
            d_star = m.delta[k]
            # posterior mean of the location under the normal prior
            expected_gamma = (n * t2 * g_hat + d_star * g_bar) / (n * t2 + d_star)
            np.testing.assert_allclose(m.gamma[k], expected_gamma, rtol=1e-5, atol=1e-8)
            gap = d_star / (n * t2 + d_star) * (g_hat - g_bar) / np.sqrt(d_star)
            np.testing.assert_allclose(Zadj[rows].mean(axis=0), gap, rtol=1e-5, atol=1e-8)

    def test_unshrunk_single_feature_removes_gap(self, rng):
        X, b = shifted_batches(rng, p=1)
        Y = combat_fit(X, b).apply(X, b)
        assert abs(Y[:40].mean() - Y[40:].mean()) < 1e-10

    def test_nan_cells_stay_nan(self, rng):
        X, b = shifted_batches(rng, n=10, p=4)
        X[3, 1] = np.nan
        Y = combat_fit(X, b).apply(X, b)
        assert np.isnan(Y[3, 1]) and np.isfinite(np.delete(Y.ravel(), 3 * 4 + 1)).all()

    def test_constant_feature_passes_through(self, rng):
        X, b = shifted_batches(rng, n=10, p=3)
        X[:, 0] = 7.0
        np.testing.assert_array_equal(combat_fit(X, b).apply(X, b)[:, 0], 7.0)

    def test_audit_sees_rows(self, rng):
        X, b = shifted_batches(rng, n=4, p=3)
        with audit.audit_fits() as log:
            combat_fit(X, b, row_ids=[f"r{i}" for i in range(8)])
        assert "combat" in log.steps() and len(log.ids_seen()) == 8


class TestIcc:
    def test_identical(self, rng):
        a = rng.normal(size=20)
        assert icc(a, a) == 1.0
        assert icc(np.ones(5), np.ones(5)) == 1.0

    def test_hand_example(self):
        # rows mean square 10/3, observer mean square 2, no residual
        assert icc([1, 2, 3, 4], [2, 3, 4, 5]) == pytest.approx(10 / 13)

    def test_large_offset_kills_agreement(self, rng):
        a = rng.normal(size=30)
        assert icc(a, a + 100.0) < 0.01

    def test_independent(self, rng):
        assert abs(icc(rng.normal(size=500), rng.normal(size=500))) < 0.15

    @settings(max_examples=50, deadline=None)
    @given(st.integers(3, 30), st.integers(0, 10_000))
    def test_matches_two_way_anova(self, n, seed):
        r = np.random.default_rng(seed)
        Y = r.normal(size=(n, 2)) + r.normal(size=(n, 1)) * 2
        g = Y.mean()
        ss_r = 2 * np.sum((Y.mean(axis=1) - g) ** 2)
        ss_c = n * np.sum((Y.mean(axis=0) - g) ** 2)
        ss_e = np.sum((Y - g) ** 2) - ss_r - ss_c
        ms_r, ms_c, ms_e = ss_r / (n - 1), ss_c, ss_e / (n - 1)
        ref = (ms_r - ms_e) / (ms_r + ms_e + 2 * (ms_c - ms_e) / n)
        assert icc(Y[:, 0], Y[:, 1]) == pytest.approx(ref, abs=1e-10)

    def test_missing_pairs_dropped(self):
        assert icc([1, 2, np.nan, 4], [1, 2, 3, 4]) == 1.0

    @settings(max_examples=30, deadline=None)
    @given(st.floats(0.0, 1.0), st.integers(0, 10_000))
    def test_filter_only_keeps_features_above_threshold(self, thr, seed):
        r = np.random.default_rng(seed)
        ids = [f"p{i}" for i in range(12)]
        A = r.normal(size=(12, 6))
        B = A + r.normal(size=(12, 6)) * np.linspace(0, 2, 6)
        names = [f"hf_f{j}" for j in range(6)]
        keep = icc_filter(FeatureTable(ids, names, A), FeatureTable(ids, names, B), thr)
        assert set(keep) <= set(names)
        for j, n in enumerate(names):
            assert (n in keep) == (icc(A[:, j], B[:, j]) > thr)


class TestDice:
    def test_identities(self):
        a = np.zeros((4, 4, 1), bool)
        a[:2, :2] = True
        b = np.zeros_like(a)
        b[2:, 2:] = True
        assert dice(a, a) == 1.0
        assert dice(a, b) == 0.0
        assert dice(np.zeros_like(a), np.zeros_like(a)) == 1.0

    def test_half_overlap(self):
        a = np.zeros((4, 4, 1), bool)
        b = np.zeros_like(a)
        a[0, :] = True
        b[0, :2] = b[1, :2] = True
        assert dice(a, b) == 0.5

    def test_shape_mismatch(self):
        with pytest.raises(DataError):
            dice(np.zeros((2, 2, 1)), np.zeros((2, 3, 1)))


class TestBatchLabels:
    def test_manufacturer(self):
        recs = [PatientRecord(id="a", label=0, batch="GE"), PatientRecord(id="b", label=1, batch="Siemens")]
        assert batch_labels(recs) == ["GE", "Siemens"]

    def test_missing_batch(self):
        with pytest.raises(DataError):
            batch_labels([PatientRecord(id="a", label=0, batch="")])

    def test_protocol_splits_on_thickness(self, written_cohort):
        labels = batch_labels(read_manifest(written_cohort / "manifest.csv"), "protocol")
        assert all("|" in x for x in labels)
