"""Scaling, imputation and feature-selection steps.

Every step has a ``fit_*`` function returning an immutable fitted object
whose ``apply`` method only uses the stored parameters.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from ..evaluate.stats import mann_whitney_columns

VARIANCE_THRESHOLD = 0.01
IMPUTERS = ("mean", "median", "most_frequent", "knn")


class DegenerateWorkflow(Exception):
    """A workflow step left nothing to work with; the search discards it."""


def _frozen(a) -> np.ndarray:
    a = np.array(a, copy=True)
    a.flags.writeable = False
    return a


# --------------------------------------------------------------------------- scaling

@dataclass(frozen=True, eq=False)
class RobustZScore:
    mean: np.ndarray
    std: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) / self.std


def _column_quantiles(X: np.ndarray, qs) -> list[np.ndarray]:
    """Linear-interpolation quantiles of the finite values of each column.

    Same result as ``np.nanpercentile`` but vectorised when NaNs are present;
    all-missing columns give NaN.
    """
    S = np.sort(np.where(np.isfinite(X), X, np.nan), axis=0)  # NaN sorts last
    n = np.isfinite(S).sum(axis=0)
    cols = np.arange(X.shape[1])
    out = []
    for q in qs:
        pos = q * np.maximum(n - 1, 0)
        i = np.floor(pos).astype(int)
        j = np.minimum(i + 1, np.maximum(n - 1, 0))
        frac = pos - i
        a, b = S[i, cols], S[j, cols]
        v = a + (b - a) * frac
        out.append(np.where(n > 0, v, np.nan))
    return out


def fit_robust_zscore(X: np.ndarray) -> RobustZScore:
    """Per-feature mean and std over values inside the [P5, P95] range.

    Missing values are ignored; a zero std is replaced by 1.
    """
    X = np.asarray(X, dtype=np.float64)
    lo, hi = _column_quantiles(X, (0.05, 0.95))
    inside = (X >= lo) & (X <= hi)
    count = inside.sum(axis=0)
    safe = np.maximum(count, 1)
    V = np.where(inside, X, 0.0)
    mean = np.where(count > 0, V.sum(axis=0) / safe, 0.0)
    dev = np.where(inside, X - mean, 0.0)
    std = np.sqrt((dev * dev).sum(axis=0) / safe)
    # a column constant inside [P5, P95] is centred on that value exactly
    flat = (count > 0) & (lo == hi)
    mean = np.where(flat, lo, mean)
    tiny = std <= 1e-12 * np.maximum(np.abs(mean), 1.0)
    std = np.where((count > 0) & ~flat & ~tiny, std, 1.0)
    return RobustZScore(_frozen(mean), _frozen(std))


# --------------------------------------------------------------------------- imputation

def _most_frequent_columns(X: np.ndarray, observed: np.ndarray) -> np.ndarray:
    """Per-column mode of the observed values; ties go to the smallest value."""
    S = np.sort(np.where(observed, X, np.inf), axis=0)
    lo = rankdata(S, method="min", axis=0)
    hi = rankdata(S, method="max", axis=0)
    count = np.where(np.isfinite(S), hi - lo + 1, 0)
    best = np.argmax(count, axis=0)  # first, i.e. smallest, value with the top count
    return S[best, np.arange(X.shape[1])]


@dataclass(frozen=True, eq=False)
class Imputer:
    kind: str
    fill: np.ndarray
    k: int = 5
    donors: np.ndarray | None = None

    def apply(self, X: np.ndarray) -> np.ndarray:
        X = np.array(X, dtype=np.float64, copy=True)
        miss = ~np.isfinite(X)
        if not miss.any():
            return X
        if self.kind == "knn":
            for i in np.flatnonzero(miss.any(axis=1)):
                X[i] = self._knn_row(X[i], miss[i])
            miss = ~np.isfinite(X)
        rows, cols = np.nonzero(miss)
        X[rows, cols] = self.fill[cols]
        return X

    def _knn_row(self, row: np.ndarray, row_miss: np.ndarray) -> np.ndarray:
        D = self.donors
        obs = ~row_miss
        dobs = np.isfinite(D)
        co = dobs & obs
        diff = np.where(co, D - np.where(obs, row, 0.0), 0.0)
        dist = np.sqrt(np.sum(diff * diff, axis=1))
        dist[~co.any(axis=1)] = np.inf  # no shared feature: not a neighbour
        out = row.copy()
        for j in np.flatnonzero(row_miss):
            cand = np.flatnonzero(dobs[:, j] & np.isfinite(dist))
            if cand.size == 0:
                continue  # falls back to the column fill
            order = cand[np.lexsort((cand, dist[cand]))][: self.k]
            out[j] = D[order, j].mean()
        return out


def fit_imputer(X: np.ndarray, kind: str = "mean", k: int = 5) -> Imputer:
    """Fit a missing-value imputer.

    ``knn`` replaces a missing cell by the mean of that feature over the
    ``k`` nearest training rows (Euclidean over co-observed features) that
    observe it.  Features never observed in training are filled with 0.
    """
    if kind not in IMPUTERS:
        raise ValueError(f"unknown imputer {kind!r}")
    X = np.asarray(X, dtype=np.float64)
    observed = np.isfinite(X)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-missing columns
        if kind == "median":
            fill = np.nanmedian(X, axis=0)
        elif kind == "most_frequent":
            fill = _most_frequent_columns(X, observed)
        else:
            fill = np.nanmean(X, axis=0)
    fill = np.where(observed.any(axis=0), fill, 0.0)
    donors = _frozen(X) if kind == "knn" else None
    return Imputer(kind, _frozen(fill), int(k), donors)


# --------------------------------------------------------------------------- selection

@dataclass(frozen=True, eq=False)
class ColumnSelector:
    kind: str
    columns: np.ndarray  # integer positions into the input

    def apply(self, X: np.ndarray) -> np.ndarray:
        return X[:, self.columns]


def _selector(kind: str, keep: np.ndarray) -> ColumnSelector:
    cols = np.flatnonzero(keep)
    if cols.size == 0:
        raise DegenerateWorkflow(f"{kind} removed every feature")
    return ColumnSelector(kind, _frozen(cols))


def variance_threshold(X: np.ndarray, threshold: float = VARIANCE_THRESHOLD) -> ColumnSelector:
    """Keep columns whose (population) variance is at least ``threshold``."""
    with np.errstate(invalid="ignore"):
        var = np.var(np.asarray(X, dtype=np.float64), axis=0)
    return _selector("variance", np.nan_to_num(var, nan=0.0) >= threshold)


def groupwise_select(groups, flags: dict) -> ColumnSelector:
    """Keep columns whose group tag has its flag switched on."""
    missing = sorted({g for g in groups if g not in flags})
    if missing:
        raise ValueError(f"no on/off flag for groups {missing}")
    return _selector("groupwise", np.array([bool(flags[g]) for g in groups], dtype=bool))


def univariate_select(X: np.ndarray, y: np.ndarray, p_threshold: float) -> ColumnSelector:
    """Keep columns whose two-sided Mann-Whitney p-value is below ``p_threshold``."""
    y = np.asarray(y)
    if len(np.unique(y)) < 2:
        raise ValueError("univariate selection needs both classes")
    _, p = mann_whitney_columns(X[y == 1], X[y == 0])
    return _selector("univariate", p < p_threshold)


# --------------------------------------------------------------------------- PCA

@dataclass(frozen=True, eq=False)
class PCA:
    mean: np.ndarray
    components: np.ndarray  # (k, d), orthonormal rows
    explained_variance: np.ndarray

    def apply(self, X: np.ndarray) -> np.ndarray:
        return (X - self.mean) @ self.components.T

    def inverse(self, Z: np.ndarray) -> np.ndarray:
        return Z @ self.components + self.mean


def fit_pca(X: np.ndarray, mode: str = "variance95", k: int = 10) -> PCA:
    """Centred PCA.

    ``variance95`` keeps the fewest components reaching 95 % explained
    variance; ``fixed`` keeps ``min(k, rank)`` components.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise ValueError("PCA needs at least two rows")
    mean = X.mean(axis=0)
    _, s, vt = np.linalg.svd(X - mean, full_matrices=False)
    var = s**2 / (X.shape[0] - 1)
    tol = s.max() * max(X.shape) * np.finfo(float).eps if s.size else 0.0
    rank = int(np.sum(s > tol))
    if rank == 0:
        raise DegenerateWorkflow("PCA input has zero variance")
    if mode == "variance95":
        ratio = np.cumsum(var[:rank]) / var[:rank].sum()
        n = int(np.searchsorted(ratio, 0.95 - 1e-12) + 1)
    elif mode == "fixed":
        n = min(int(k), rank)
    else:
        raise ValueError(f"unknown PCA mode {mode!r}")
    return PCA(_frozen(mean), _frozen(vt[:n]), _frozen(var[:n]))
