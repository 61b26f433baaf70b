"""Classification metrics, confidence intervals and statistical tests."""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from functools import lru_cache
from itertools import combinations

import numpy as np
from scipy import stats as sps

THRESHOLD = 0.5
ROC_GRID = np.linspace(0.0, 1.0, 101)
EXACT_MWU_MAX_N = 12


def _binary(scores, labels):
    s = np.asarray(scores, dtype=np.float64).ravel()
    y = np.asarray(labels).ravel().astype(int)
    if s.shape != y.shape:
        raise ValueError("scores and labels differ in length")
    if not np.isin(y, (0, 1)).all():
        raise ValueError("labels must be 0/1")
    return s, y


def predict_labels(scores, threshold: float = THRESHOLD) -> np.ndarray:
    """Hard labels; a probability equal to the threshold counts as positive."""
    return (np.asarray(scores, dtype=np.float64) >= threshold).astype(int)


# --------------------------------------------------------------------------- metrics

def auc(scores, labels) -> float:
    """ROC AUC as the fraction of concordant positive/negative pairs, ties counting 1/2."""
    s, y = _binary(scores, labels)
    n1, n0 = int(y.sum()), int((1 - y).sum())
    if n1 == 0 or n0 == 0:
        raise ValueError("AUC needs both classes")
    r = sps.rankdata(s)
    return float((r[y == 1].sum() - n1 * (n1 + 1) / 2.0) / (n1 * n0))


def bca(sensitivity: float, specificity: float) -> float:
    """Balanced classification accuracy of a binary task."""
    return (sensitivity + specificity) / 2.0


def confusion_counts(scores, labels, threshold: float = THRESHOLD):
    s, y = _binary(scores, labels)
    p = predict_labels(s, threshold)
    tp = int(np.sum((p == 1) & (y == 1)))
    fp = int(np.sum((p == 1) & (y == 0)))
    fn = int(np.sum((p == 0) & (y == 1)))
    tn = int(np.sum((p == 0) & (y == 0)))
    return tp, fp, fn, tn


def confusion_metrics(scores, labels, threshold: float = THRESHOLD):
    """(sensitivity, specificity, BCA); a metric without its class is NaN."""
    tp, fp, fn, tn = confusion_counts(scores, labels, threshold)
    sens = tp / (tp + fn) if tp + fn else math.nan
    spec = tn / (tn + fp) if tn + fp else math.nan
    return sens, spec, bca(sens, spec)


def f1_score(scores, labels, threshold: float = THRESHOLD) -> float:
    """F1 of the positive class; 0 when there are no positives at all."""
    tp, fp, fn, _ = confusion_counts(scores, labels, threshold)
    denom = 2 * tp + fp + fn
    return 2.0 * tp / denom if denom else 0.0


# --------------------------------------------------------------------------- intervals

def corrected_resampled_ci(values, n_train: int, n_test: int, level: float = 0.95):
    """Confidence interval with the corrected resampled t-test variance.

    The sample variance is inflated by ``1/k + n_test/n_train`` to account
    for the overlap between cross-validation training sets.  Bounds are not
    clipped to [0, 1].
    """
    v = np.asarray(values, dtype=np.float64)
    k = v.size
    if k == 0:
        raise ValueError("no iterations to summarise")
    if k < 2:
        raise ValueError("need at least two values for an interval")
    mean = float(v.mean())
    s2 = float(v.var(ddof=1))
    t = sps.t.ppf(0.5 + level / 2.0, k - 1)
    half = t * math.sqrt((1.0 / k + n_test / n_train) * s2)
    return mean - half, mean + half


def format_value(x: float) -> str:
    if x < 0:
        return "<0.00"
    if x > 1:
        return ">1.00"
    return f"{x:.2f}"


def format_ci(mean: float, lower: float, upper: float) -> str:
    """Table-style rendering, e.g. ``0.97 [0.91, >1.00]``."""
    return f"{mean:.2f} [{format_value(lower)}, {format_value(upper)}]"


# --------------------------------------------------------------------------- ROC

def roc_points(scores, labels):
    """Vertices of the empirical ROC staircase, from (0, 0) to (1, 1)."""
    s, y = _binary(scores, labels)
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    distinct = np.r_[np.flatnonzero(np.diff(s)), s.size - 1]
    tps = np.cumsum(y)[distinct]
    fps = (distinct + 1) - tps
    P, N = y.sum(), y.size - y.sum()
    tpr = np.r_[0.0, tps / P] if P else np.r_[0.0, np.zeros(distinct.size)]
    fpr = np.r_[0.0, fps / N] if N else np.r_[0.0, np.zeros(distinct.size)]
    return fpr, tpr


def roc_on_grid(scores, labels, grid=ROC_GRID) -> np.ndarray:
    """Highest TPR reachable at each false-positive rate of ``grid``."""
    fpr, tpr = roc_points(scores, labels)
    idx = np.searchsorted(fpr, grid, side="right") - 1
    best = np.maximum.accumulate(tpr)
    return best[np.clip(idx, 0, None)]


def roc_band(curves, level: float = 0.95):
    """Mean ROC curve and fixed-width band half-width.

    The half-width is the smallest ``w`` such that at least ``level`` of the
    curves lie within ``mean +/- w`` everywhere on the grid.
    """
    C = np.asarray(curves, dtype=np.float64)
    if C.ndim != 2 or C.shape[0] < 2:
        raise ValueError("need at least two curves")
    if np.all(C == C[0]):
        return C[0].copy(), 0.0  # exact, free of summation rounding
    mean = C.mean(axis=0)
    dev = np.sort(np.max(np.abs(C - mean), axis=1))
    need = max(1, math.ceil(level * C.shape[0] - 1e-9))
    return mean, float(dev[need - 1])


# --------------------------------------------------------------------------- DeLong

@dataclass(frozen=True)
class DeLongResult:
    auc_a: float
    auc_b: float
    p: float
    z: float
    degenerate: bool = False

    def __iter__(self):
        yield from (self.auc_a, self.auc_b, self.p)


def _placements(s: np.ndarray, y: np.ndarray):
    pos, neg = s[y == 1], s[y == 0]
    psi = (pos[:, None] > neg[None, :]) + 0.5 * (pos[:, None] == neg[None, :])
    return psi.mean(axis=1), psi.mean(axis=0)  # per positive, per negative


def delong_test(scores_a, scores_b, labels) -> DeLongResult:
    """Two-sided DeLong test for two correlated ROC AUCs.

    Identical score vectors give ``p = 1``.  If the variance of the AUC
    difference vanishes while the AUCs differ, ``p`` is the limit 0 and the
    result is flagged ``degenerate``.
    """
    a, y = _binary(scores_a, labels)
    b, _ = _binary(scores_b, labels)
    if a.shape != b.shape:
        raise ValueError("score vectors must be paired")
    m, n = int(y.sum()), int((1 - y).sum())
    if m == 0 or n == 0:
        raise ValueError("DeLong test needs both classes")
    va10, va01 = _placements(a, y)
    vb10, vb01 = _placements(b, y)
    auc_a, auc_b = float(va10.mean()), float(vb10.mean())
    if np.array_equal(a, b):
        return DeLongResult(auc_a, auc_b, 1.0, 0.0)
    d10, d01 = va10 - vb10, va01 - vb01
    var = (d10.var(ddof=1) if m > 1 else 0.0) / m + (d01.var(ddof=1) if n > 1 else 0.0) / n
    diff = auc_a - auc_b
    if var <= 1e-15 * max(1.0, diff * diff):
        if abs(diff) <= 1e-15:
            return DeLongResult(auc_a, auc_b, 1.0, 0.0)
        warnings.warn("DeLong variance is zero while the AUCs differ; reporting p = 0", RuntimeWarning)
        return DeLongResult(auc_a, auc_b, 0.0, math.copysign(math.inf, diff), degenerate=True)
    z = diff / math.sqrt(var)
    return DeLongResult(auc_a, auc_b, float(min(1.0, 2 * sps.norm.sf(abs(z)))), z)


# --------------------------------------------------------------------------- agreement

def cohens_kappa(ratings_a, ratings_b) -> float:
    """Cohen's kappa; two constant, equal raters give 1."""
    a = np.asarray(ratings_a)
    b = np.asarray(ratings_b)
    if a.shape != b.shape or a.size == 0:
        raise ValueError("ratings must be paired and non-empty")
    cats = np.unique(np.r_[a, b])
    ia = np.searchsorted(cats, a)
    ib = np.searchsorted(cats, b)
    M = np.zeros((cats.size, cats.size))
    np.add.at(M, (ia, ib), 1)
    return kappa_from_confusion(M)


def kappa_from_confusion(M) -> float:
    M = np.asarray(M, dtype=np.float64)
    n = M.sum()
    po = np.trace(M) / n
    pe = float(M.sum(axis=1) @ M.sum(axis=0)) / n**2
    if pe >= 1.0 - 1e-15:
        return 1.0
    return float((po - pe) / (1.0 - pe))


# --------------------------------------------------------------------------- univariate tests

def _tie_term(ranks_min: np.ndarray, ranks_max: np.ndarray) -> np.ndarray:
    t = ranks_max - ranks_min + 1.0
    return np.sum(t * t - 1.0, axis=0)  # equals sum over tie groups of t^3 - t


def mann_whitney_u(x, y):
    """Two-sided Mann-Whitney U test, returning (U of ``x``, p).

    Small samples (``len(x) + len(y) <= 12``) use the exact permutation
    distribution of the observed mid-ranks; larger ones the normal
    approximation with tie-corrected variance and continuity correction.
    """
    x = np.asarray(x, dtype=np.float64).ravel()
    y = np.asarray(y, dtype=np.float64).ravel()
    n, m = x.size, y.size
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    pooled = np.r_[x, y]
    ranks = sps.rankdata(pooled)
    u = float(ranks[:n].sum() - n * (n + 1) / 2.0)
    if n + m <= EXACT_MWU_MAX_N:
        return u, _exact_mwu_p(ranks, n, u)
    tie = _tie_term(sps.rankdata(pooled, method="min"), sps.rankdata(pooled, method="max"))
    return u, float(_normal_mwu_p(np.array([u]), n, m, np.array([tie]))[0])


@lru_cache(maxsize=64)
def _subsets(N: int, n: int) -> np.ndarray:
    """Every size-``n`` subset of ``range(N)``, one per row."""
    return np.array(list(combinations(range(N), n)), dtype=np.intp).reshape(-1, n)


def _exact_mwu_p(ranks: np.ndarray, n: int, u):
    """Exact two-sided p over all relabellings; ``ranks`` is (N,) or (N, p)."""
    N = ranks.shape[0]
    centre = n * (N - n) / 2.0
    obs = np.abs(np.asarray(u, dtype=np.float64) - centre)
    stats = ranks[_subsets(N, n)].sum(axis=1) - n * (n + 1) / 2.0  # (combos,) or (combos, p)
    hits = np.sum(np.abs(stats - centre) >= obs - 1e-9, axis=0)
    p = hits / stats.shape[0]
    return float(p) if np.ndim(p) == 0 else p


def _normal_mwu_p(u: np.ndarray, n: int, m: int, tie: np.ndarray) -> np.ndarray:
    N = n + m
    mu = n * m / 2.0
    var = n * m / 12.0 * ((N + 1) - tie / (N * (N - 1)))
    sd = np.sqrt(np.maximum(var, 0.0))
    with np.errstate(divide="ignore", invalid="ignore"):
        z = np.where(sd > 0, (np.abs(u - mu) - 0.5) / sd, 0.0)
    z = np.maximum(z, 0.0)
    return np.minimum(1.0, 2.0 * sps.norm.sf(z))


def mann_whitney_columns(X1, X0):
    """Column-wise Mann-Whitney U test of ``X1`` against ``X0`` (U, p arrays)."""
    X1 = np.asarray(X1, dtype=np.float64)
    X0 = np.asarray(X0, dtype=np.float64)
    n, m = X1.shape[0], X0.shape[0]
    if n == 0 or m == 0:
        raise ValueError("both samples must be non-empty")
    Z = np.vstack([X1, X0])
    if n + m <= EXACT_MWU_MAX_N:
        ranks = sps.rankdata(Z, axis=0)
        u = ranks[:n].sum(axis=0) - n * (n + 1) / 2.0
        return u, _exact_mwu_p(ranks, n, u)
    rmin = sps.rankdata(Z, method="min", axis=0)
    rmax = sps.rankdata(Z, method="max", axis=0)
    ranks = (rmin + rmax) / 2.0
    u = ranks[:n].sum(axis=0) - n * (n + 1) / 2.0
    return u, _normal_mwu_p(u, n, m, _tie_term(rmin, rmax))


def chi_square(contingency) -> float:
    """p-value of Pearson's chi-square test of independence.

    2x2 tables use Yates' continuity correction; empty rows and columns are
    dropped first.
    """
    T = np.asarray(contingency, dtype=np.float64)
    if T.ndim != 2 or (T < 0).any():
        raise ValueError("contingency table must be 2-D with non-negative counts")
    T = T[T.sum(axis=1) > 0][:, T.sum(axis=0) > 0]
    if T.shape[0] < 2 or T.shape[1] < 2:
        return 1.0
    E = np.outer(T.sum(axis=1), T.sum(axis=0)) / T.sum()
    dev = np.abs(T - E)
    if T.shape == (2, 2):
        dev = np.maximum(dev - 0.5, 0.0)
    stat = float(np.sum(dev * dev / E))
    dof = (T.shape[0] - 1) * (T.shape[1] - 1)
    return float(sps.chi2.sf(stat, dof))


def bonferroni(p_values):
    p = np.asarray(p_values, dtype=np.float64)
    return np.minimum(1.0, p * p.size)
