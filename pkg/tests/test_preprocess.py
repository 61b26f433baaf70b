import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from autorad.pipeline.preprocess import (
    DegenerateWorkflow,
    _column_quantiles,
    fit_imputer,
    fit_pca,
    fit_robust_zscore,
    groupwise_select,
    univariate_select,
    variance_threshold,
)


class TestRobustZScore:
    def test_trimmed_mean_of_ramp(self):
        x = np.arange(101.0)[:, None]
        z = fit_robust_zscore(x)
        assert z.mean[0] == 50.0
        assert z.std[0] == pytest.approx(np.arange(5, 96).std())

    def test_constant_column_gives_zeros(self):
        x = np.full((6, 1), 3.3)
        z = fit_robust_zscore(x)
        assert np.all(z.apply(x) == 0)

    def test_training_data_trimmed_mean_zero(self, rng):
        x = rng.lognormal(size=(80, 4))
        out = fit_robust_zscore(x).apply(x)
        again = fit_robust_zscore(out)
        assert np.all(np.abs(again.mean) < 1e-10)

    def test_ignores_missing(self):
        x = np.array([[0.0], [np.nan], [10.0], [20.0]])
        z = fit_robust_zscore(x)
        assert z.mean[0] == 10.0

    @settings(max_examples=50, deadline=None)
    @given(arrays(np.float64, (7, 3), elements=st.one_of(st.floats(-1e3, 1e3), st.just(np.nan))))
    def test_quantiles_match_numpy(self, X):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            ref = np.nanpercentile(X, [5, 95], axis=0)
        lo, hi = _column_quantiles(X, (0.05, 0.95))
        np.testing.assert_allclose(lo, ref[0], rtol=1e-12, atol=1e-9, equal_nan=True)
        np.testing.assert_allclose(hi, ref[1], rtol=1e-12, atol=1e-9, equal_nan=True)


class TestImputer:
    def test_mean(self):
        x = np.array([[1.0], [np.nan], [3.0]])
        assert fit_imputer(x, "mean").apply(x).ravel().tolist() == [1, 2, 3]

    def test_median(self):
        x = np.array([[1.0], [np.nan], [3.0], [10.0]])
        assert fit_imputer(x, "median").apply(x)[1, 0] == 3.0

    def test_most_frequent(self):
        x = np.array([[1.0], [1.0], [2.0], [np.nan]])
        assert fit_imputer(x, "most_frequent").apply(x)[3, 0] == 1.0

    def test_most_frequent_tie_takes_smallest(self):
        x = np.array([[5.0], [2.0], [5.0], [2.0], [np.nan]])
        assert fit_imputer(x, "most_frequent").fill[0] == 2.0

    def test_knn_nearest_row(self):
        train = np.array([[0.0, 0.0], [10.0, 8.0]])
        imp = fit_imputer(train, "knn", k=1)
        assert imp.apply(np.array([[10.0, np.nan]]))[0, 1] == 8.0

    def test_never_observed_column_filled_with_zero(self):
        x = np.array([[1.0, np.nan], [2.0, np.nan]])
        assert fit_imputer(x).apply(x)[:, 1].tolist() == [0.0, 0.0]

    def test_apply_uses_training_statistics(self):
        imp = fit_imputer(np.array([[1.0], [3.0]]))
        assert imp.apply(np.array([[np.nan], [100.0]]))[0, 0] == 2.0

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            fit_imputer(np.ones((2, 1)), "mode")


class TestSelection:
    def test_variance_threshold(self):
        alt = np.tile([1.0, -1.0], 10)
        X = np.column_stack([np.full(20, 4.0), alt, alt * np.sqrt(0.0099)])
        assert variance_threshold(X).columns.tolist() == [1]

    def test_variance_all_removed_is_degenerate(self):
        with pytest.raises(DegenerateWorkflow):
            variance_threshold(np.ones((5, 3)))

    def test_groupwise(self):
        groups = ("shape", "GLCM", "shape", "volume")
        sel = groupwise_select(groups, {"shape": True, "GLCM": False, "volume": True})
        assert sel.columns.tolist() == [0, 2, 3]
        assert groupwise_select(groups, dict.fromkeys(groups, True)).columns.tolist() == [0, 1, 2, 3]
        with pytest.raises(ValueError):
            groupwise_select(groups, {"shape": True})

    def test_univariate(self, rng):
        y = np.repeat([0, 1], 20)
        X = np.column_stack([y + rng.normal(0, 1e-3, 40), np.tile(np.arange(20.0), 2)])
        sel = univariate_select(X, y, 0.5)
        assert sel.columns.tolist() == [0]
        with pytest.raises(DegenerateWorkflow):
            univariate_select(X[:, 1:], y, 0.5)


class TestPCA:
    def test_line_keeps_one_component(self, rng):
        t = rng.normal(size=(30, 1))
        X = t * np.array([[1.0, 2.0, -1.0, 0.5, 3.0]]) + 7.0
        assert fit_pca(X).components.shape == (1, 5)

    def test_orthonormal_and_lossless(self, rng):
        X = rng.normal(size=(12, 5))
        p = fit_pca(X, "fixed", k=10)
        C = p.components
        np.testing.assert_allclose(C @ C.T, np.eye(C.shape[0]), atol=1e-10)
        np.testing.assert_allclose(p.inverse(p.apply(X)), X, atol=1e-10)

    def test_constant_input_degenerate(self):
        with pytest.raises(DegenerateWorkflow):
            fit_pca(np.ones((4, 3)))
