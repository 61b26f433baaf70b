"""Batch harmonization (ComBat), inter-observer ICC and Dice overlap."""
from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

from .core.io import read_spacing
from .core.types import DataError, FeatureTable, RoiMask
from .pipeline import audit

log = logging.getLogger(__name__)

ICC_THRESHOLDS = (0.75, 0.90)
GROUP_KEYS = ("manufacturer", "protocol")

_EB_TOL = 1e-6
_EB_MAX_ITER = 1000


# --------------------------------------------------------------------------- ComBat

@dataclass(frozen=True, eq=False)
class BatchModel:
    """Fitted parametric empirical-Bayes ComBat parameters.

    ``gamma`` and ``delta`` are per-batch (rows) and per-feature (columns)
    location and scale estimates on the standardized scale.  Features in
    ``passthrough`` had too little data and are returned unchanged.
    """

    batches: tuple
    grand_mean: np.ndarray
    pooled_std: np.ndarray
    gamma: np.ndarray
    delta: np.ndarray
    passthrough: np.ndarray

    def apply(self, X: np.ndarray, batches) -> np.ndarray:
        return combat_apply(self, X, batches)


def _eb_location_scale(Z: np.ndarray, idx: np.ndarray):
    """Shrunk (gamma*, delta*) for one batch; ``Z`` is standardized, NaN-aware."""
    Zb = Z[idx]
    obs = np.isfinite(Zb)
    n = obs.sum(axis=0).astype(np.float64)
    with np.errstate(invalid="ignore", divide="ignore"):
        g_hat = np.nansum(Zb, axis=0) / n
        d_hat = np.nansum((Zb - g_hat) ** 2, axis=0) / (n - 1)
    ok = np.isfinite(g_hat) & np.isfinite(d_hat) & (d_hat > 0)
    g_star = np.where(ok, g_hat, 0.0)
    d_star = np.where(ok, d_hat, 1.0)
    if ok.sum() < 2:
        return g_star, d_star

    # Normal prior on gamma, inverse-gamma prior on delta, both moment matched
    g_bar = g_hat[ok].mean()
    t2 = g_hat[ok].var(ddof=1)
    m = d_hat[ok].mean()
    s2 = d_hat[ok].var(ddof=1)
    if not (t2 > 0 and s2 > 0):
        return g_star, d_star
    a = (2.0 * s2 + m * m) / s2
    b = (m * s2 + m**3) / s2

    gh, nn, Zo = g_hat[ok], n[ok], Zb[:, ok]
    g_new, d_new = gh.copy(), d_hat[ok].copy()
    for _ in range(_EB_MAX_ITER):
        g_next = (nn * t2 * gh + d_new * g_bar) / (nn * t2 + d_new)
        ssr = np.nansum((Zo - g_next) ** 2, axis=0)
        d_next = (b + 0.5 * ssr) / (nn / 2.0 + a - 1.0)
        change = max(
            np.max(np.abs(g_next - g_new) / np.maximum(np.abs(g_new), 1e-12)),
            np.max(np.abs(d_next - d_new) / np.maximum(d_new, 1e-12)),
        )
        g_new, d_new = g_next, d_next
        if change < _EB_TOL:
            break
    g_star[ok] = g_new
    d_star[ok] = d_new
    return g_star, d_star


def _check_batches(batches, n):
    b = np.asarray([str(x) if x is not None else "" for x in batches])
    if b.shape != (n,):
        raise DataError(f"need one batch label per row ({n}), got {b.shape[0]}")
    if np.any(b == ""):
        raise DataError("every row needs a batch label")
    return b


def combat_fit(X, batches, allow_single_batch: bool = False, row_ids=None) -> BatchModel:
    """Fit parametric empirical-Bayes ComBat without covariates.

    Parameters
    ----------
    X : (n, p) array
        Features; NaN cells are ignored and stay NaN.
    batches : sequence of str
        Batch label of each row.
    allow_single_batch : bool
        Testing hook: accept a single batch, which makes the fit a no-op.
    row_ids : sequence, optional
        Row identities reported to an active fit audit.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise DataError("ComBat needs a 2-D feature matrix")
    b = _check_batches(batches, X.shape[0])
    names, counts = np.unique(b, return_counts=True)
    if len(names) < 2 and not allow_single_batch:
        raise DataError(f"ComBat needs at least two batches, got {list(names)}")
    small = names[counts < 2]
    if small.size:
        raise DataError(f"ComBat batches need at least two rows; singleton batches: {list(small)}")
    if row_ids is not None:
        audit.record("combat", row_ids)

    obs = np.isfinite(X)
    n_obs = obs.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        # batch-size weighted mean of batch means == mean over all observed rows
        grand = np.nansum(X, axis=0) / n_obs
        resid = np.zeros_like(X)
        for name in names:
            rows = b == name
            bm = np.nansum(X[rows], axis=0) / obs[rows].sum(axis=0)
            resid[rows] = X[rows] - bm
        var = np.nansum(resid**2, axis=0) / n_obs
    std = np.sqrt(var)
    passthrough = ~(np.isfinite(std) & (std > 0))
    std = np.where(passthrough, 1.0, std)
    grand = np.where(np.isfinite(grand), grand, 0.0)
    Z = (X - grand) / std

    gamma = np.zeros((len(names), X.shape[1]))
    delta = np.ones((len(names), X.shape[1]))
    if len(names) >= 2:
        for k, name in enumerate(names):
            gamma[k], delta[k] = _eb_location_scale(Z, np.flatnonzero(b == name))
    gamma[:, passthrough] = 0.0
    delta[:, passthrough] = 1.0
    return BatchModel(tuple(names.tolist()), grand, std, gamma, delta, passthrough)


def combat_apply(model: BatchModel, X, batches) -> np.ndarray:
    """Remove the fitted batch effects from ``X`` using stored parameters only."""
    X = np.asarray(X, dtype=np.float64)
    b = _check_batches(batches, X.shape[0])
    pos = {name: k for k, name in enumerate(model.batches)}
    unseen = sorted(set(b.tolist()) - set(pos))
    if unseen:
        raise DataError(f"batches not seen when ComBat was fitted: {unseen}")
    k = np.array([pos[x] for x in b], dtype=int)
    Z = (X - model.grand_mean) / model.pooled_std
    Zadj = (Z - model.gamma[k]) / np.sqrt(model.delta[k])
    out = Zadj * model.pooled_std + model.grand_mean
    return np.where(model.passthrough, X, out)


def combat_table(table: FeatureTable, batches) -> FeatureTable:
    """Fit and apply ComBat on one table (no train/test split)."""
    model = combat_fit(table.values, batches)
    return FeatureTable(table.ids, table.names, combat_apply(model, table.values, batches), table.groups)


def batch_labels(records, group_by: str = "manufacturer") -> list[str]:
    """Harmonization group of each record.

    ``manufacturer`` is the manifest batch; ``protocol`` combines it with the
    slice thickness being above or below the median thickness of ``records``.
    """
    if group_by not in GROUP_KEYS:
        raise ValueError(f"group_by must be one of {GROUP_KEYS}, got {group_by!r}")
    missing = [r.id for r in records if not r.batch]
    if missing:
        raise DataError(f"patients without a batch label: {missing[:5]}")
    if group_by == "manufacturer":
        return [r.batch for r in records]
    thick = []
    for r in records:
        if not r.image_path:
            raise DataError(f"patient {r.id} has no image path; slice thickness unknown")
        thick.append(read_spacing(r.image_path)[2])
    med = float(np.median(thick))
    return [f"{r.batch}|{'thick' if t > med else 'thin'}" for r, t in zip(records, thick)]


# --------------------------------------------------------------------------- ICC

def icc(ratings_a, ratings_b) -> float:
    """Two-way, absolute-agreement, single-rater ICC for two observers.

    Missing pairs are dropped.  Identical values everywhere give 1.
    """
    a = np.asarray(ratings_a, dtype=np.float64)
    b = np.asarray(ratings_b, dtype=np.float64)
    if a.shape != b.shape:
        raise ValueError("observers must rate the same subjects")
    ok = np.isfinite(a) & np.isfinite(b)
    a, b = a[ok], b[ok]
    n, k = a.size, 2
    if n < 2:
        raise ValueError("ICC needs at least two subjects rated by both observers")
    # two-rater sums of squares from pair means and pair differences, which are
    # exactly zero for identical observers
    m = (a + b) / 2.0
    d = a - b
    ms_r = k * np.sum((m - m.mean()) ** 2) / (n - 1)
    ms_c = n * d.mean() ** 2 / 2.0
    ms_e = np.sum((d - d.mean()) ** 2) / 2.0 / (n - 1)
    den = ms_r + (k - 1) * ms_e + k * (ms_c - ms_e) / n
    scale = max(np.abs(a).max(), np.abs(b).max(), 1.0) ** 2
    if den <= 1e-24 * scale:
        return 1.0  # all values identical
    return float((ms_r - ms_e) / den)


def icc_table(table_a: FeatureTable, table_b: FeatureTable) -> dict[str, float]:
    """Per-feature ICC between two extractions of the same subjects.

    Features missing for too many subjects get NaN.
    """
    common = [i for i in table_a.ids if i in set(table_b.ids)]
    if len(common) < 2:
        raise DataError("the two feature tables share fewer than two patients")
    names = [n for n in table_a.names if n in set(table_b.names)]
    A = table_a.select_rows(common).select_columns(names).values
    B = table_b.select_rows(common).select_columns(names).values
    out = {}
    for j, name in enumerate(names):
        try:
            out[name] = icc(A[:, j], B[:, j])
        except ValueError:
            out[name] = float("nan")
    return out


def icc_filter(table_a: FeatureTable, table_b: FeatureTable, threshold: float = 0.75) -> list[str]:
    """Names of features whose ICC strictly exceeds ``threshold``."""
    values = icc_table(table_a, table_b)
    return [n for n, v in values.items() if np.isfinite(v) and v > threshold]


# --------------------------------------------------------------------------- Dice

def dice(mask_a, mask_b) -> float:
    """Dice overlap 2|A∩B| / (|A|+|B|); two empty masks give 1."""
    a = mask_a.voxels if isinstance(mask_a, RoiMask) else np.asarray(mask_a)
    b = mask_b.voxels if isinstance(mask_b, RoiMask) else np.asarray(mask_b)
    if a.shape != b.shape:
        raise DataError(f"mask dims differ: {a.shape} vs {b.shape}")
    a, b = a.astype(bool), b.astype(bool)
    total = int(a.sum()) + int(b.sum())
    if total == 0:
        return 1.0
    return 2.0 * int(np.logical_and(a, b).sum()) / total
