"""Binary classifiers returning positive-class probabilities.

Logistic regression, naive Bayes, LDA/QDA and the random forest are
implemented here; the SVM margin comes from scikit-learn's ``SVC`` and is
calibrated with a logistic (Platt) fit on the training margins.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import expit, logsumexp
from sklearn.exceptions import ConvergenceWarning
from sklearn.svm import SVC

from . import _forest

CLASSIFIERS = ("logistic", "svm", "random_forest", "naive_bayes", "lda", "qda")

LR_MAX_ITER = 500
SVM_MAX_ITER = 100_000
LR_GRAD_TOL = 1e-8
COV_FLOOR = 1e-6  # relative diagonal floor keeping LDA/QDA covariances invertible


def _frozen(a):
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


def two_column(p: np.ndarray) -> np.ndarray:
    """``[1 - p, p]`` per row."""
    p = np.asarray(p, dtype=np.float64)
    return np.column_stack([1.0 - p, p])


# --------------------------------------------------------------------------- logistic regression

def logistic_loss_grad(params: np.ndarray, X: np.ndarray, y: np.ndarray, lam: float):
    """Penalised negative log-likelihood and its gradient.

    ``params = [w..., b]``; the intercept ``b`` is not penalised.
    """
    w, b = params[:-1], params[-1]
    z = X @ w + b
    loss = float(np.sum(np.logaddexp(0.0, z) - y * z) + 0.5 * lam * w @ w)
    r = expit(z) - y
    grad = np.r_[X.T @ r + lam * w, r.sum()]
    return loss, grad


def _newton_logistic(X, y, lam):
    n, d = X.shape
    A = np.column_stack([X, np.ones(n)])
    params = np.zeros(d + 1)
    pen = np.r_[np.full(d, lam), 0.0]
    loss, grad = logistic_loss_grad(params, X, y, lam)
    for _ in range(LR_MAX_ITER):
        if np.linalg.norm(grad) < LR_GRAD_TOL:
            break
        p = expit(A @ params)
        H = (A * (p * (1 - p))[:, None]).T @ A + np.diag(pen)
        H[np.diag_indices_from(H)] += 1e-12
        try:
            step = np.linalg.solve(H, grad)
        except np.linalg.LinAlgError:
            step = np.linalg.lstsq(H, grad, rcond=None)[0]
        t = 1.0
        while t >= 1e-10:
            cand = params - t * step
            cl, cg = logistic_loss_grad(cand, X, y, lam)
            if cl < loss or (cl == loss and np.linalg.norm(cg) < np.linalg.norm(grad)):
                break
            t *= 0.5
        if t < 1e-10:
            break  # no further progress at machine precision
        params, loss, grad = cand, cl, cg
    return params


@dataclass(frozen=True, eq=False)
class LogisticRegression:
    coef: np.ndarray
    intercept: float

    def decision(self, X):
        return X @ self.coef + self.intercept

    def predict_proba(self, X):
        return expit(self.decision(X))


def fit_logistic(X, y, l2: float = 1.0) -> LogisticRegression:
    """L2-penalised logistic regression by damped Newton iteration.

    When there are more features than rows the problem is solved in the
    row space of ``X``, which contains the penalised optimum.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if X.shape[1] > X.shape[0]:
        _, s, vt = np.linalg.svd(X, full_matrices=False)
        r = int(np.sum(s > s.max() * max(X.shape) * np.finfo(float).eps)) if s.size else 0
        basis = vt[:r]
        params = _newton_logistic(X @ basis.T, y, l2)
        w = basis.T @ params[:-1]
    else:
        params = _newton_logistic(X, y, l2)
        w = params[:-1]
    return LogisticRegression(_frozen(w), float(params[-1]))


# --------------------------------------------------------------------------- SVM

def platt_fit(f: np.ndarray, y: np.ndarray, max_iter: int = 100):
    """Sigmoid ``1 / (1 + exp(A f + B))`` fitted to smoothed 0/1 targets."""
    f = np.asarray(f, dtype=np.float64)
    y = np.asarray(y)
    n_pos = float(np.sum(y == 1))
    n_neg = float(y.size - n_pos)
    t = np.where(y == 1, (n_pos + 1.0) / (n_pos + 2.0), 1.0 / (n_neg + 2.0))
    A, B = 0.0, math.log((n_neg + 1.0) / (n_pos + 1.0))

    def objective(a, b):
        z = a * f + b
        # -[t log p + (1-t) log(1-p)] with p = 1/(1+e^z)
        return float(np.sum(np.logaddexp(0.0, z) - (1 - t) * z))

    obj = objective(A, B)
    for _ in range(max_iter):
        z = A * f + B
        p = expit(-z)
        d1 = t - p  # derivative of the objective w.r.t. z
        g = np.array([np.dot(d1, f), d1.sum()])
        w = p * (1 - p)
        H = np.array([[np.dot(w, f * f), np.dot(w, f)], [np.dot(w, f), w.sum()]]) + 1e-12 * np.eye(2)
        if np.abs(g).max() < 1e-10:
            break
        step = np.linalg.solve(H, g)
        s = 1.0
        while s >= 1e-10:
            na, nb = A - s * step[0], B - s * step[1]
            nobj = objective(na, nb)
            if nobj < obj + 1e-4 * s * float(g @ -step):
                break
            s *= 0.5
        if s < 1e-10:
            break
        A, B, obj = na, nb, nobj
    return A, B


@dataclass(frozen=True, eq=False)
class CalibratedSVM:
    svc: SVC
    a: float
    b: float

    def predict_proba(self, X):
        return expit(-(self.a * self.svc.decision_function(X) + self.b))


def fit_svm(X, y, kernel: str = "rbf", C: float = 1.0, gamma: float = 0.1) -> CalibratedSVM:
    # libsvm can stall on unscaled inputs with a large C; cap its iterations
    svc = SVC(kernel=kernel, C=C, gamma=gamma if kernel == "rbf" else "scale", max_iter=SVM_MAX_ITER)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConvergenceWarning)
        svc.fit(X, y)
    a, b = platt_fit(svc.decision_function(X), y)
    return CalibratedSVM(svc, a, b)


# --------------------------------------------------------------------------- random forest

@dataclass(frozen=True, eq=False)
class RandomForest:
    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    value: np.ndarray
    offsets: np.ndarray

    @property
    def n_trees(self) -> int:
        return self.offsets.size - 1

    def predict_proba(self, X):
        X = np.ascontiguousarray(X, dtype=np.float64)
        return _forest.predict_votes(X, self.feature, self.threshold, self.left, self.right, self.value, self.offsets)


def fit_random_forest(X, y, n_trees: int = 100, max_depth: int = 10, seed=0) -> RandomForest:
    """Bootstrap Gini trees on sqrt(d) random features per split.

    Tree ``k`` is seeded by word ``k`` of the seed sequence's state, so every
    tree has its own stream.
    """
    X = np.ascontiguousarray(X, dtype=np.float64)
    yf = np.asarray(y, dtype=np.float64)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    tree_seeds = (ss.generate_state(int(n_trees), dtype=np.uint32) & 0x7FFFFFFF).astype(np.int64)
    max_features = max(1, int(math.sqrt(X.shape[1])))
    *cat, offsets = _forest.build_forest(X, yf, tree_seeds, int(max_depth), max_features)
    return RandomForest(*(_frozen(c) for c in cat), _frozen(offsets))


# --------------------------------------------------------------------------- naive Bayes

@dataclass(frozen=True, eq=False)
class GaussianNB:
    means: np.ndarray  # (2, d)
    variances: np.ndarray  # (2, d)
    log_prior: np.ndarray  # (2,)

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        ll = np.stack(
            [
                self.log_prior[c]
                - 0.5 * np.sum(np.log(2 * np.pi * self.variances[c]))
                - 0.5 * np.sum((X - self.means[c]) ** 2 / self.variances[c], axis=1)
                for c in (0, 1)
            ],
            axis=1,
        )
        return np.exp(ll[:, 1] - logsumexp(ll, axis=1))


def fit_naive_bayes(X, y, var_smoothing: float = 1e-9) -> GaussianNB:
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    eps = var_smoothing * max(float(np.var(X, axis=0).max()), 1e-300)
    means = np.stack([X[y == c].mean(axis=0) for c in (0, 1)])
    var = np.stack([X[y == c].var(axis=0) for c in (0, 1)]) + eps
    prior = np.array([np.mean(y == 0), np.mean(y == 1)])
    return GaussianNB(_frozen(means), _frozen(var), _frozen(np.log(prior)))


# --------------------------------------------------------------------------- discriminant analysis

@dataclass(frozen=True, eq=False)
class _Gaussian:
    """Covariance ``V diag(e) V^T + rho I`` stored in factored form."""

    mean: np.ndarray
    basis: np.ndarray  # (r, d) orthonormal rows
    evals: np.ndarray  # (r,)
    rho: float

    def log_density(self, X):
        D = X - self.mean
        proj = D @ self.basis.T
        sq = np.sum(D * D, axis=1)
        q = np.sum(proj**2 / (self.evals + self.rho), axis=1) + (sq - np.sum(proj**2, axis=1)) / self.rho
        d = X.shape[1]
        logdet = np.sum(np.log(self.evals + self.rho)) + (d - self.evals.size) * math.log(self.rho)
        return -0.5 * (q + logdet + d * math.log(2 * math.pi))


def _factored(centred: np.ndarray, n: int, mean: np.ndarray, ridge: float, scale: float) -> _Gaussian:
    d = centred.shape[1]
    _, s, vt = np.linalg.svd(centred, full_matrices=False)
    evals = s**2 / n
    keep = evals > evals.max() * 1e-12 if evals.size else np.zeros(0, bool)
    trace = float(evals.sum())
    base = trace / d if trace > 1e-12 * scale else scale
    rho = (ridge + COV_FLOOR) * base
    if rho <= 0:
        rho = 1e-12
    return _Gaussian(_frozen(mean), _frozen(vt[keep]), _frozen(evals[keep]), float(rho))


@dataclass(frozen=True, eq=False)
class DiscriminantAnalysis:
    kind: str
    gaussians: tuple
    log_prior: np.ndarray

    def predict_proba(self, X):
        X = np.asarray(X, dtype=np.float64)
        ll = np.column_stack([self.log_prior[c] + self.gaussians[c].log_density(X) for c in (0, 1)])
        return np.exp(ll[:, 1] - logsumexp(ll, axis=1))


def fit_discriminant(X, y, kind: str = "lda", ridge: float = 0.0) -> DiscriminantAnalysis:
    """LDA (shared covariance) or QDA (per-class covariance).

    ``ridge * trace / d`` is added to each covariance diagonal, plus a small
    floor so that singular covariances never abort a fit.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y)
    d = X.shape[1]
    means = [X[y == c].mean(axis=0) for c in (0, 1)]
    total_scale = float(np.var(X, axis=0).sum()) / d
    total_scale = total_scale if total_scale > 0 else 1.0
    prior = np.log(np.array([np.mean(y == 0), np.mean(y == 1)]))
    if kind == "lda":
        centred = np.vstack([X[y == c] - means[c] for c in (0, 1)])
        g = _factored(centred, X.shape[0], None, ridge, total_scale)
        gs = tuple(_Gaussian(_frozen(means[c]), g.basis, g.evals, g.rho) for c in (0, 1))
    elif kind == "qda":
        gs = tuple(
            _factored(X[y == c] - means[c], int(np.sum(y == c)), means[c], ridge, total_scale) for c in (0, 1)
        )
    else:
        raise ValueError(f"unknown discriminant kind {kind!r}")
    return DiscriminantAnalysis(kind, gs, _frozen(prior))


# --------------------------------------------------------------------------- dispatch

def train_classifier(kind: str, params: dict, X, y, seed=0):
    """Fit a classifier of ``kind`` with hyperparameters ``params``."""
    y = np.asarray(y).astype(int)
    if len(np.unique(y)) < 2:
        raise ValueError("classifier needs both classes")
    if kind == "logistic":
        return fit_logistic(X, y, l2=params.get("l2", 1.0))
    if kind == "svm":
        return fit_svm(X, y, kernel=params.get("kernel", "rbf"), C=params.get("C", 1.0), gamma=params.get("gamma", 0.1))
    if kind == "random_forest":
        return fit_random_forest(X, y, params.get("n_trees", 100), params.get("max_depth", 10), seed)
    if kind == "naive_bayes":
        return fit_naive_bayes(X, y)
    if kind in ("lda", "qda"):
        return fit_discriminant(X, y, kind, params.get("ridge", 0.0))
    raise ValueError(f"unknown classifier {kind!r}")
