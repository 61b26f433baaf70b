import math
from itertools import combinations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from autorad.evaluate.stats import (
    auc,
    bca,
    bonferroni,
    chi_square,
    cohens_kappa,
    confusion_metrics,
    corrected_resampled_ci,
    delong_test,
    format_ci,
    kappa_from_confusion,
    mann_whitney_columns,
    mann_whitney_u,
    roc_band,
    roc_on_grid,
    roc_points,
)
from oracles import BOOTSTRAP_P, DELONG_A, DELONG_B, DELONG_LABELS


def exact_mwu_p(x, y):
    """Two-sided exact p by enumerating every split of the pooled mid-ranks."""
    pooled = np.r_[x, y]
    r = sps.rankdata(pooled)
    n, N = len(x), len(pooled)
    mean_u = n * (N - n) / 2
    u_obs = r[:n].sum() - n * (n + 1) / 2
    us = [r[list(c)].sum() - n * (n + 1) / 2 for c in combinations(range(N), n)]
    return sum(abs(u - mean_u) >= abs(u_obs - mean_u) - 1e-9 for u in us) / len(us)


class TestMetrics:
    def test_auc_examples(self):
        assert auc([0.9, 0.8, 0.1, 0.2], [1, 1, 0, 0]) == 1.0
        assert auc([0.5] * 4, [1, 0, 1, 0]) == 0.5
        assert auc([0.8, 0.4, 0.6, 0.2], [1, 1, 0, 0]) == 0.75

    @settings(max_examples=60, deadline=None)
    @given(st.lists(st.integers(0, 5), min_size=2, max_size=20), st.data())
    def test_auc_matches_pair_count(self, scores, data):
        labels = data.draw(st.lists(st.integers(0, 1), min_size=len(scores), max_size=len(scores)))
        if len(set(labels)) < 2:
            return
        pos = [s for s, l in zip(scores, labels) if l]
        neg = [s for s, l in zip(scores, labels) if not l]
        pairs = sum((p > n) + 0.5 * (p == n) for p in pos for n in neg)
        assert auc(scores, labels) == pytest.approx(pairs / (len(pos) * len(neg)), abs=1e-12)

    @pytest.mark.parametrize(
        "sens,spec,expected",
        [(0.74, 0.60, 0.67), (0.90, 0.44, 0.67), (0.78, 0.74, 0.76), (0.58, 0.75, 0.665), (0.30, 0.71, 0.505), (1, 1, 1.0)],
    )
    def test_bca(self, sens, spec, expected):
        assert bca(sens, spec) == pytest.approx(expected, abs=1e-12)

    def test_confusion_threshold_is_inclusive(self):
        sens, spec, _ = confusion_metrics([0.5, 0.49], [1, 0])
        assert sens == 1.0 and spec == 1.0

    def test_missing_class_gives_nan(self):
        sens, spec, _ = confusion_metrics([0.9, 0.1], [1, 1])
        assert math.isnan(spec)


class TestInterval:
    def test_hand_example(self):
        lo, hi = corrected_resampled_ci([0.7, 0.8], n_train=4, n_test=1)
        half = sps.t.ppf(0.975, 1) * math.sqrt((0.5 + 0.25) * 0.005)
        assert (lo, hi) == pytest.approx((0.75 - half, 0.75 + half), abs=1e-12)
        assert (lo, hi) == pytest.approx((-0.028, 1.528), abs=1e-3)

    def test_identical_values(self):
        assert corrected_resampled_ci([0.6] * 5, 80, 20) == pytest.approx((0.6, 0.6))

    def test_rendering_markers(self):
        assert format_ci(0.97, 0.91, 1.03) == "0.97 [0.91, >1.00]"
        assert format_ci(0.2, -0.1, 0.5) == "0.20 [<0.00, 0.50]"

    def test_needs_two_values(self):
        with pytest.raises(ValueError):
            corrected_resampled_ci([0.5], 4, 1)


class TestROC:
    def test_staircase(self):
        fpr, tpr = roc_points([0.9, 0.8, 0.7, 0.1], [1, 0, 1, 0])
        assert fpr.tolist() == [0, 0, 0.5, 0.5, 1] and tpr.tolist() == [0, 0.5, 0.5, 1, 1]

    def test_grid_is_monotone_and_ends_at_one(self, rng):
        y = rng.integers(0, 2, 40)
        y[:2] = [0, 1]
        g = roc_on_grid(rng.random(40), y)
        assert np.all(np.diff(g) >= 0) and g[-1] == 1.0

    def test_band_identical_curves(self):
        c = np.linspace(0, 1, 11)
        mean, w = roc_band([c, c, c])
        assert w == 0 and np.array_equal(mean, c)

    def test_band_two_offset_curves(self):
        c = np.full(11, 0.5)
        _, w = roc_band([c - 0.05, c + 0.05])
        assert w == pytest.approx(0.05)


class TestDeLong:
    def test_identical_scores(self, rng):
        s = rng.random(20)
        r = delong_test(s, s, DELONG_LABELS)
        assert r.p == 1.0 and r.auc_a == r.auc_b

    def test_symmetric(self):
        assert delong_test(DELONG_A, DELONG_B, DELONG_LABELS).p == delong_test(DELONG_B, DELONG_A, DELONG_LABELS).p

    def test_against_bootstrap(self):
        r = delong_test(DELONG_A, DELONG_B, DELONG_LABELS)
        assert r.auc_a == pytest.approx(0.885) and r.auc_b == pytest.approx(0.745)
        assert abs(r.p - BOOTSTRAP_P) <= 0.02

    def test_strong_vs_weak_marker(self, rng):
        y = np.repeat([0, 1], 100)
        strong = np.r_[rng.normal(3, 1, 100), rng.normal(6, 1, 100)]
        weak = np.r_[rng.normal(3, 1, 100), rng.normal(3.5, 1.5, 100)]
        assert delong_test(strong, weak, y).p < 0.01


class TestKappa:
    def test_identities(self):
        assert cohens_kappa([1, 2, 3, 1], [1, 2, 3, 1]) == 1.0
        assert kappa_from_confusion([[5, 5], [5, 5]]) == 0.0
        assert cohens_kappa([2, 2, 2], [2, 2, 2]) == 1.0

    def test_hand_example(self):
        assert kappa_from_confusion([[45, 15], [25, 15]]) == pytest.approx((0.6 - 0.54) / 0.46, abs=1e-12)

    def test_matches_sklearn(self, rng):
        from sklearn.metrics import cohen_kappa_score

        a, b = rng.integers(1, 11, 50), rng.integers(1, 11, 50)
        assert cohens_kappa(a, b) == pytest.approx(cohen_kappa_score(a, b), abs=1e-12)


class TestMannWhitney:
    def test_exact_separated(self):
        u, p = mann_whitney_u([1, 2, 3], [4, 5, 6])
        assert u == 0 and abs(p - 0.1) <= 1e-12

    def test_identical_samples(self):
        u, p = mann_whitney_u([1, 2, 3], [1, 2, 3])
        assert u == 4.5 and p == pytest.approx(1.0)

    @settings(max_examples=40, deadline=None)
    @given(st.lists(st.integers(0, 4), min_size=1, max_size=6), st.lists(st.integers(0, 4), min_size=1, max_size=6))
    def test_exact_with_ties_matches_enumeration(self, x, y):
        _, p = mann_whitney_u(x, y)
        assert p == pytest.approx(exact_mwu_p(x, y), abs=1e-12)

    def test_large_matches_scipy(self, rng):
        x, y = rng.normal(size=30), rng.normal(0.5, 1, 25)
        u, p = mann_whitney_u(x, y)
        ref = sps.mannwhitneyu(x, y, alternative="two-sided", method="asymptotic", use_continuity=True)
        assert u == ref.statistic and p == pytest.approx(ref.pvalue, rel=1e-10)

    def test_columns_agree_with_single(self, rng):
        X1, X0 = rng.integers(0, 5, (5, 4)).astype(float), rng.integers(0, 5, (6, 4)).astype(float)
        u, p = mann_whitney_columns(X1, X0)
        for j in range(4):
            assert (u[j], p[j]) == pytest.approx(mann_whitney_u(X1[:, j], X0[:, j]))

    def test_bonferroni(self):
        p = np.full(565, 1.0)
        p[0] = 0.0001
        assert bonferroni(p)[0] == pytest.approx(0.0565)
        assert bonferroni(p)[1] == 1.0


class TestChiSquare:
    def test_matches_scipy(self):
        T = [[12, 5], [4, 11]]
        assert chi_square(T) == pytest.approx(sps.chi2_contingency(T, correction=True)[1])
        T3 = [[5, 3, 8], [2, 9, 4]]
        assert chi_square(T3) == pytest.approx(sps.chi2_contingency(T3)[1])

    def test_degenerate_table(self):
        assert chi_square([[4, 0], [6, 0]]) == 1.0
