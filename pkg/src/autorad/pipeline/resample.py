"""Class-imbalance resampling: random, near-miss, cleaning rules and SMOTE variants.

All methods balance the two classes fully.  Synthetic rows are appended
after the original (kept) rows.  Neighbour searches use Euclidean distance
with ties broken by row order.
"""
from __future__ import annotations

import logging

import numpy as np
from scipy.spatial.distance import cdist

log = logging.getLogger(__name__)

RESAMPLERS = (
    "none",
    "random_over",
    "random_under",
    "nearmiss",
    "ncr",
    "adasyn",
    "smote",
    "borderline_smote",
    "smote_tomek",
    "smote_enn",
)

SMOTE_K = 5
CLEAN_K = 3
NEARMISS_K = 3
BORDERLINE_M = 10

# minority neighbours each method needs; smaller minorities fall back to random over-sampling
_NEEDS_K = {
    "nearmiss": NEARMISS_K,
    "adasyn": SMOTE_K,
    "smote": SMOTE_K,
    "borderline_smote": SMOTE_K,
    "smote_tomek": SMOTE_K,
    "smote_enn": SMOTE_K,
}


def _knn(A: np.ndarray, B: np.ndarray, k: int, exclude_self: bool = False) -> np.ndarray:
    """Indices into ``B`` of the ``k`` nearest rows for every row of ``A``."""
    D = cdist(A, B)
    if exclude_self:
        np.fill_diagonal(D, np.inf)
    order = np.argsort(D, axis=1, kind="stable")
    return order[:, :k]


def _classes(y: np.ndarray):
    counts = np.bincount(y, minlength=2)
    if counts.min() == 0:
        raise ValueError("resampling needs both classes")
    minority = int(np.argmin(counts)) if counts[0] != counts[1] else 1
    return minority, 1 - minority, counts


def _synth(rng, base: np.ndarray, Xmin: np.ndarray, nn: np.ndarray, n_new: int, choose=None) -> np.ndarray:
    """SMOTE interpolation from rows of ``base`` towards their minority neighbours."""
    if n_new <= 0:
        return np.zeros((0, Xmin.shape[1]))
    rows = choose if choose is not None else rng.integers(base.shape[0], size=n_new)
    cols = rng.integers(nn.shape[1], size=n_new)
    gap = rng.random(n_new)[:, None]
    nb = Xmin[nn[rows, cols]]
    return base[rows] + gap * (nb - base[rows])


def random_over(X, y, rng):
    mi, ma, counts = _classes(y)
    extra = rng.choice(np.flatnonzero(y == mi), size=counts[ma] - counts[mi], replace=True)
    return np.vstack([X, X[extra]]), np.r_[y, y[extra]]


def random_under(X, y, rng):
    mi, ma, counts = _classes(y)
    keep_ma = np.sort(rng.choice(np.flatnonzero(y == ma), size=counts[mi], replace=False))
    keep = np.sort(np.r_[np.flatnonzero(y == mi), keep_ma])
    return X[keep], y[keep]


def nearmiss(X, y, rng, version: int = 1, k: int = NEARMISS_K):
    """Keep the majority rows closest to the minority class (NearMiss 1/2/3)."""
    mi, ma, counts = _classes(y)
    imin, imaj = np.flatnonzero(y == mi), np.flatnonzero(y == ma)
    D = cdist(X[imaj], X[imin])
    if version == 1:
        score = np.sort(D, axis=1)[:, :k].mean(axis=1)
        cand = np.arange(imaj.size)
    elif version == 2:
        score = np.sort(D, axis=1)[:, -k:].mean(axis=1)
        cand = np.arange(imaj.size)
    elif version == 3:
        near = np.argsort(D.T, axis=1, kind="stable")[:, : min(k, imaj.size)]
        cand = np.unique(near)
        # among candidates prefer those far from their nearest minority rows
        score = -np.sort(D[cand], axis=1)[:, :k].mean(axis=1)
    else:
        raise ValueError(f"unknown NearMiss version {version}")
    order = cand[np.lexsort((cand, score))]
    keep_ma = imaj[np.sort(order[: counts[mi]])]
    keep = np.sort(np.r_[imin, keep_ma])
    return X[keep], y[keep]


def _enn_drop(X, y, candidates, k, kind="mode"):
    """Rows among ``candidates`` whose neighbourhood disagrees with their label."""
    if X.shape[0] <= k:
        return np.zeros(0, dtype=int)
    nn = _knn(X[candidates], X, k + 1)
    drop = []
    for r, i in enumerate(candidates):
        nb = [j for j in nn[r] if j != i][:k]
        same = np.sum(y[nb] == y[i])
        if (kind == "all" and same < k) or (kind == "mode" and same <= k / 2):
            drop.append(i)
    return np.array(drop, dtype=int)


def _safe_remove(y, drop):
    """Removal mask that never empties a class."""
    keep = np.ones(y.size, dtype=bool)
    keep[drop] = False
    for c in (0, 1):
        if not keep[y == c].any():
            keep[y == c] = True
    return keep


def ncr(X, y, rng, k: int = CLEAN_K):
    """Neighbourhood cleaning rule: edit noisy majority rows, then clean around misclassified minority rows."""
    mi, ma, counts = _classes(y)
    drop = set(_enn_drop(X, y, np.flatnonzero(y == ma), k).tolist())
    if counts[ma] >= 0.5 * counts[mi] and X.shape[0] > k:
        imin = np.flatnonzero(y == mi)
        nn = _knn(X[imin], X, k + 1)
        for r, i in enumerate(imin):
            nb = np.array([j for j in nn[r] if j != i][:k])
            if np.sum(y[nb] == ma) > k / 2:
                drop.update(nb[y[nb] == ma].tolist())
    keep = _safe_remove(y, np.array(sorted(drop), dtype=int))
    return X[keep], y[keep]


def smote(X, y, rng, k: int = SMOTE_K):
    mi, ma, counts = _classes(y)
    Xmin = X[y == mi]
    nn = _knn(Xmin, Xmin, k, exclude_self=True)
    new = _synth(rng, Xmin, Xmin, nn, counts[ma] - counts[mi])
    return np.vstack([X, new]), np.r_[y, np.full(new.shape[0], mi)]


def _largest_remainder(weights: np.ndarray, total: int) -> np.ndarray:
    raw = weights / weights.sum() * total
    out = np.floor(raw).astype(int)
    rest = total - out.sum()
    if rest > 0:
        order = np.lexsort((np.arange(raw.size), -(raw - out)))
        out[order[:rest]] += 1
    return out


def adasyn(X, y, rng, k: int = SMOTE_K):
    """ADASYN: more synthetics around minority rows with many majority neighbours."""
    mi, ma, counts = _classes(y)
    imin = np.flatnonzero(y == mi)
    G = counts[ma] - counts[mi]
    nn_all = _knn(X[imin], X, k + 1)
    ratio = np.array([np.sum(y[[j for j in nn_all[r] if j != i][:k]] == ma) / k for r, i in enumerate(imin)])
    if ratio.sum() == 0 or G == 0:
        log.debug("ADASYN found no hard minority rows; using SMOTE")
        return smote(X, y, rng, k)
    per_row = _largest_remainder(ratio, G)
    Xmin = X[imin]
    nn = _knn(Xmin, Xmin, k, exclude_self=True)
    new = _synth(rng, Xmin, Xmin, nn, G, choose=np.repeat(np.arange(imin.size), per_row))
    return np.vstack([X, new]), np.r_[y, np.full(G, mi)]


def borderline_smote(X, y, rng, k: int = SMOTE_K, m: int = BORDERLINE_M):
    """Borderline-SMOTE 1: synthesize only from minority rows in danger."""
    mi, ma, counts = _classes(y)
    imin = np.flatnonzero(y == mi)
    m = min(m, X.shape[0] - 1)
    nn_all = _knn(X[imin], X, m + 1)
    n_maj = np.array([np.sum(y[[j for j in nn_all[r] if j != i][:m]] == ma) for r, i in enumerate(imin)])
    danger = (n_maj >= m / 2) & (n_maj < m)
    if not danger.any():
        log.debug("Borderline-SMOTE found no rows in danger; using SMOTE")
        return smote(X, y, rng, k)
    Xmin = X[imin]
    nn = _knn(Xmin[danger], Xmin, k + 1)
    # drop each danger row from its own neighbour list
    own = np.flatnonzero(danger)
    nn = np.array([[j for j in nn[r] if j != own[r]][:k] for r in range(own.size)])
    new = _synth(rng, Xmin[danger], Xmin, nn, counts[ma] - counts[mi])
    return np.vstack([X, new]), np.r_[y, np.full(new.shape[0], mi)]


def _tomek_links(X, y):
    nn = _knn(X, X, 1, exclude_self=True)[:, 0]
    linked = (nn[nn] == np.arange(X.shape[0])) & (y != y[nn])
    return np.flatnonzero(linked)


def smote_tomek(X, y, rng, k: int = SMOTE_K):
    Xs, ys = smote(X, y, rng, k)
    keep = _safe_remove(ys, _tomek_links(Xs, ys))
    return Xs[keep], ys[keep]


def smote_enn(X, y, rng, k: int = SMOTE_K):
    Xs, ys = smote(X, y, rng, k)
    drop = _enn_drop(Xs, ys, np.arange(ys.size), CLEAN_K, kind="all")
    keep = _safe_remove(ys, drop)
    return Xs[keep], ys[keep]


def resample(X, y, kind: str, seed, nearmiss_version: int = 1):
    """Rebalance ``(X, y)``.

    Returns ``(X', y', note)`` where ``note`` describes a fallback to random
    over-sampling (minority too small for the neighbour count), else None.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if kind not in RESAMPLERS:
        raise ValueError(f"unknown resampler {kind!r}")
    mi, _, counts = _classes(y)
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if kind == "none":
        return X, y, None
    note = None
    need = _NEEDS_K.get(kind)
    if need is not None and counts[mi] <= need:
        note = f"{kind}: minority of {counts[mi]} <= k={need}, used random over-sampling"
        log.debug(note)
        kind = "random_over"
    if kind == "ncr" and X.shape[0] <= CLEAN_K:
        note = f"ncr: {X.shape[0]} rows <= k={CLEAN_K}, used random over-sampling"
        kind = "random_over"
    if kind == "nearmiss":
        Xr, yr = nearmiss(X, y, rng, version=nearmiss_version)
    else:
        Xr, yr = _METHODS[kind](X, y, rng)
    return Xr, yr, note


_METHODS = {
    "random_over": random_over,
    "random_under": random_under,
    "ncr": ncr,
    "adasyn": adasyn,
    "smote": smote,
    "borderline_smote": borderline_smote,
    "smote_tomek": smote_tomek,
    "smote_enn": smote_enn,
}
