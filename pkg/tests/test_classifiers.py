import numpy as np
import pytest
from scipy.optimize import brentq
from scipy.stats import norm

from autorad.pipeline.classifiers import (
    CLASSIFIERS,
    fit_discriminant,
    fit_logistic,
    fit_naive_bayes,
    fit_random_forest,
    fit_svm,
    logistic_loss_grad,
    platt_fit,
    train_classifier,
)
from autorad.pipeline.space import load_space


@pytest.fixture
def blobs(rng):
    X = np.vstack([rng.normal(-3, 0.5, (50, 2)), rng.normal(3, 0.5, (50, 2))])
    y = np.repeat([0, 1], 50)
    return X, y


@pytest.fixture
def overlapping(rng):
    X = np.vstack([rng.normal(0, 1, (60, 3)), rng.normal(1, 1.5, (60, 3))])
    y = np.repeat([0, 1], 60)
    return X, y


class TestLogistic:
    def test_separable_training_accuracy(self, blobs):
        X, y = blobs
        m = fit_logistic(X, y, l2=1.0)
        assert np.all((m.predict_proba(X) >= 0.5) == y)

    def test_gradient_matches_finite_differences(self, overlapping, rng):
        X, y = overlapping
        params = rng.normal(size=X.shape[1] + 1)
        _, g = logistic_loss_grad(params, X, y, 0.7)
        h = 1e-6
        fd = np.array([
            (logistic_loss_grad(params + h * e, X, y, 0.7)[0] - logistic_loss_grad(params - h * e, X, y, 0.7)[0]) / (2 * h)
            for e in np.eye(params.size)
        ])
        np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-6)

    def test_optimum_has_zero_gradient(self, overlapping):
        X, y = overlapping
        m = fit_logistic(X, y, l2=0.5)
        _, g = logistic_loss_grad(np.r_[m.coef, m.intercept], X, y, 0.5)
        assert np.linalg.norm(g) < 1e-6

    def test_wide_data_solution_in_row_space(self, rng):
        X = rng.normal(size=(10, 40))
        y = np.repeat([0, 1], 5)
        m = fit_logistic(X, y, l2=1.0)
        _, g = logistic_loss_grad(np.r_[m.coef, m.intercept], X, y, 1.0)
        assert np.linalg.norm(g) < 1e-6


class TestNaiveBayes:
    def test_boundary_near_bayes_optimum(self):
        rng = np.random.default_rng(8)
        x = np.r_[rng.normal(0, 1, 1000), rng.normal(2, 1.5, 1000)][:, None]
        y = np.repeat([0, 1], 1000)
        m = fit_naive_bayes(x, y)
        # analytic boundary of the generating densities, between the two means
        true = brentq(lambda t: norm.pdf(t, 0, 1) - norm.pdf(t, 2, 1.5), 0, 2)
        grid = np.linspace(0, 2, 2001)[:, None]
        p = m.predict_proba(grid)
        fitted = grid[np.argmin(np.abs(p - 0.5)), 0]
        assert abs(fitted - true) < 0.1

    def test_probabilities_sum_correctly(self, overlapping):
        X, y = overlapping
        p = fit_naive_bayes(X, y).predict_proba(X)
        assert np.all((p >= 0) & (p <= 1))


class TestDiscriminant:
    def test_lda_matches_sklearn(self, overlapping):
        from sklearn.discriminant_analysis import LinearDiscriminantAnalysis

        X, y = overlapping
        ref = LinearDiscriminantAnalysis(solver="lsqr").fit(X, y)
        np.testing.assert_allclose(fit_discriminant(X, y, "lda").predict_proba(X), ref.predict_proba(X)[:, 1], atol=1e-4)

    def test_qda_matches_gaussian_densities(self, overlapping):
        from scipy.stats import multivariate_normal

        X, y = overlapping
        # maximum-likelihood class covariances, equal priors here
        dens = [multivariate_normal(X[y == c].mean(0), np.cov(X[y == c].T, bias=True)).pdf(X) for c in (0, 1)]
        ref = dens[1] / (dens[0] + dens[1])
        np.testing.assert_allclose(fit_discriminant(X, y, "qda").predict_proba(X), ref, atol=1e-4)

    def test_ridge_handles_singular_covariance(self, rng):
        X = np.column_stack([rng.normal(size=20), np.zeros(20)])
        y = np.repeat([0, 1], 10)
        p = fit_discriminant(X, y, "qda", ridge=0.0).predict_proba(X)
        assert np.isfinite(p).all()


class TestForestAndSVM:
    def test_forest_fits_blobs_and_is_seeded(self, blobs):
        X, y = blobs
        a = fit_random_forest(X, y, n_trees=20, max_depth=4, seed=3)
        b = fit_random_forest(X, y, n_trees=20, max_depth=4, seed=3)
        assert a.n_trees == 20
        assert np.array_equal(a.predict_proba(X), b.predict_proba(X))
        assert np.all((a.predict_proba(X) >= 0.5) == y)

    def test_svm_probabilities_follow_margin(self, overlapping):
        X, y = overlapping
        m = fit_svm(X, y, kernel="rbf", C=1.0, gamma=0.1)
        f = m.svc.decision_function(X)
        p = m.predict_proba(X)
        order = np.argsort(f)
        assert np.all(np.diff(p[order]) >= -1e-12)

    def test_platt_recovers_sigmoid(self, rng):
        f = rng.normal(0, 2, 4000)
        y = (rng.random(4000) < 1 / (1 + np.exp(-1.5 * f + 0.5))).astype(float)
        a, b = platt_fit(f, y)
        assert a == pytest.approx(-1.5, abs=0.15) and b == pytest.approx(0.5, abs=0.15)


class TestDispatch:
    @pytest.mark.parametrize("kind", CLASSIFIERS)
    def test_every_classifier_trains(self, overlapping, kind):
        X, y = overlapping
        m = train_classifier(kind, {}, X, y, seed=1)
        p = m.predict_proba(X)
        assert p.shape == (len(y),) and np.all((p >= 0) & (p <= 1))

    def test_shipped_space_covers_all_classifiers(self):
        assert set(load_space()["classifier"]["choices"]) == set(CLASSIFIERS)
