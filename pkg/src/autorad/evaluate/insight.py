"""Model insight: univariate feature screen and patient typicality."""
from __future__ import annotations

import logging

import numpy as np

from ..core.types import FeatureTable
from .stats import bonferroni, chi_square, mann_whitney_u

log = logging.getLogger(__name__)

CATEGORICAL_GROUPS = ("clinical-sex", "clinical-location")


def univariate_screen(table: FeatureTable, labels, alpha: float = 0.05) -> list[dict]:
    """Per-feature class-association test with Bonferroni correction.

    Categorical columns get a chi-square test on the category x label table;
    all others a two-sided Mann-Whitney U test.  Missing cells are dropped
    per feature.  Rows are sorted by raw p-value, then name.
    """
    y = np.asarray(labels).astype(int)
    rows = []
    for j, (name, group) in enumerate(zip(table.names, table.groups)):
        x = table.values[:, j]
        ok = np.isfinite(x)
        x1, x0 = x[ok & (y == 1)], x[ok & (y == 0)]
        if x1.size == 0 or x0.size == 0:
            continue
        if group in CATEGORICAL_GROUPS:
            cats = np.unique(x[ok])
            T = [[np.sum(x0 == c), np.sum(x1 == c)] for c in cats]
            test, stat, p = "chi-square", None, chi_square(T)
        else:
            stat, p = mann_whitney_u(x1, x0)
            test, stat = "mann-whitney", float(stat)
        rows.append({"feature": name, "group": group, "test": test, "statistic": stat, "p": float(p)})
    corrected = bonferroni([r["p"] for r in rows]) if rows else []
    for r, c in zip(rows, corrected):
        r["p_bonferroni"] = float(c)
        r["significant"] = bool(c < alpha)
    return sorted(rows, key=lambda r: (r["p"], r["feature"]))


def rank_typicality(counts: dict, n_ambiguous: int = 5) -> dict:
    """Split patients by how consistently they were classified correctly.

    ``counts`` maps patient id to ``{"correct": c, "total": t}``.  Typical
    patients were right in every test appearance, atypical ones in none;
    ambiguous are the ``n_ambiguous`` fractions closest to 1/2 (ties by id).
    Patients never tested are left out with a warning.
    """
    frac = {}
    for pid, c in counts.items():
        if c["total"] <= 0:
            log.warning("patient %s never appeared in a test set; left out of the ranking", pid)
            continue
        frac[pid] = c["correct"] / c["total"]
    typical = sorted(p for p, f in frac.items() if f == 1.0)
    atypical = sorted(p for p, f in frac.items() if f == 0.0)
    by_middle = sorted(frac, key=lambda p: (abs(frac[p] - 0.5), p))
    ambiguous = [{"id": p, "fraction": frac[p]} for p in by_middle[:n_ambiguous]]
    return {"typical": typical, "atypical": atypical, "ambiguous": ambiguous}
