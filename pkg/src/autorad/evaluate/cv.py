"""Outer cross-validation: split plans and the full train/test experiment loop."""
from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from ..core.types import DataError, FeatureTable
from ..pipeline import audit
from .stats import (
    ROC_GRID,
    auc,
    confusion_metrics,
    corrected_resampled_ci,
    format_ci,
    predict_labels,
    roc_band,
    roc_on_grid,
)

log = logging.getLogger(__name__)

DEFAULT_ITERS = 100
DEFAULT_TEST_FRACTION = 0.2
METRICS = ("auc", "bca", "sensitivity", "specificity")
SPLIT_MODES = ("random-split", "leave-one-out")


@dataclass(frozen=True)
class SplitPlan:
    mode: str
    splits: tuple  # ((train_ids, test_ids), ...) as sorted tuples of ids

    @property
    def n_iter(self) -> int:
        return len(self.splits)


def stratified_test_counts(class_sizes, test_fraction: float) -> list[int]:
    """Per-class test sizes: floors, then leftover slots by largest remainder.

    The total is ``round(test_fraction * N)``; remainder ties go to the
    class listed first.  Every class keeps at least one training row.
    """
    sizes = [int(n) for n in class_sizes]
    exact = [test_fraction * n for n in sizes]
    counts = [int(math.floor(e)) for e in exact]
    total = int(round(test_fraction * sum(sizes)))
    order = sorted(range(len(sizes)), key=lambda c: (-(exact[c] - counts[c]), c))
    for c in order[: max(0, total - sum(counts))]:
        counts[c] += 1
    return [min(k, n - 1) for k, n in zip(counts, sizes)]


def make_split_plan(ids, labels, n_iter: int = DEFAULT_ITERS, test_fraction: float = DEFAULT_TEST_FRACTION,
                    seed: int = 0, mode: str = "random-split") -> SplitPlan:
    """Stratified random train/test splits, or leave-one-out.

    Iteration ``i`` draws from its own stream ``(seed, i)`` so a plan with
    fewer iterations is a prefix of a longer one.
    """
    ids = [str(i) for i in ids]
    y = np.asarray(labels).astype(int)
    if len(ids) != y.size:
        raise DataError("ids and labels differ in length")
    if mode not in SPLIT_MODES:
        raise ValueError(f"mode must be one of {SPLIT_MODES}")
    if mode == "leave-one-out":
        splits = tuple((tuple(sorted(ids[:k] + ids[k + 1:])), (ids[k],)) for k in range(len(ids)))
        return SplitPlan(mode, splits)
    if n_iter < 1:
        raise ValueError("need at least one iteration")
    if not 0 < test_fraction < 1:
        raise ValueError("test fraction must lie in (0, 1)")
    members = [np.flatnonzero(y == c) for c in (0, 1)]
    for c, m in enumerate(members):
        if m.size < 2:
            raise DataError(f"class {c} has {m.size} patients; random splits need at least 2")
    counts = stratified_test_counts([m.size for m in members], test_fraction)
    splits = []
    for i in range(n_iter):
        rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(5, i)))
        test = []
        for m, k in zip(members, counts):
            test.extend(rng.permutation(m)[:k].tolist())
        test_set = {ids[t] for t in test}
        splits.append((tuple(sorted(set(ids) - test_set)), tuple(sorted(test_set))))
    return SplitPlan(mode, tuple(splits))


# --------------------------------------------------------------------------- experiment

@dataclass(frozen=True)
class ExperimentSettings:
    """Everything besides the data that determines an experiment.

    ``combat_batches`` maps patient id to harmonization batch; when given,
    ComBat is fitted on each training split and applied to its test split.
    """

    search: object  # search.SearchSettings
    seed: int = 0
    combat_batches: dict | None = None
    audit_hygiene: bool = False
    extra: dict = field(default_factory=dict)


def iteration_seed(seed: int, i: int) -> int:
    return int(np.random.SeedSequence(int(seed), spawn_key=(4, int(i))).generate_state(1)[0])


def _run_iteration(i, train_ids, test_ids, table: FeatureTable, labels: dict, settings: ExperimentSettings):
    from ..harmonize import combat_apply, combat_fit
    from ..search import train_ensemble

    Xtr = table.select_rows(train_ids).values
    Xte = table.select_rows(test_ids).values
    ytr = np.array([labels[p] for p in train_ids], dtype=int)
    yte = np.array([labels[p] for p in test_ids], dtype=int)
    if settings.combat_batches is not None:
        btr = [settings.combat_batches[p] for p in train_ids]
        bte = [settings.combat_batches[p] for p in test_ids]
        model = combat_fit(Xtr, btr, row_ids=train_ids)
        Xtr, Xte = combat_apply(model, Xtr, btr), combat_apply(model, Xte, bte)
    ens, scored = train_ensemble(
        Xtr, ytr, table.groups, table.names, settings.search, iteration_seed(settings.seed, i), row_ids=list(train_ids)
    )
    prob = ens.predict_proba(Xte)
    rec = {
        "iteration": i,
        "n_train": len(train_ids),
        "n_test": len(test_ids),
        "test_ids": list(test_ids),
        "probabilities": [float(p) for p in prob],
        "labels": [int(v) for v in yte],
        "ensemble_size": ens.size,
        "degenerate_workflows": int(sum(s.degenerate for s in scored)),
    }
    if len(set(yte.tolist())) == 2:
        sens, spec, b = confusion_metrics(prob, yte)
        rec.update(auc=auc(prob, yte), bca=b, sensitivity=sens, specificity=spec)
        rec["roc_tpr"] = [float(v) for v in roc_on_grid(prob, yte)]
    else:
        rec.update(auc=None, bca=None, sensitivity=None, specificity=None)
    return rec


def run_experiment(table: FeatureTable, labels: dict, plan: SplitPlan, settings: ExperimentSettings,
                   progress=None) -> dict:
    """Train an ensemble on every training split and score its test split.

    Returns a JSON-ready result dict with per-iteration records, metric
    summaries with corrected resampled CIs, the ROC band and per-patient
    correct-classification counts.  With ``settings.audit_hygiene`` each
    iteration also reports how many test rows reached any fitting step.
    """
    missing = [p for split in plan.splits for p in split[0] + split[1] if p not in labels]
    if missing:
        raise DataError(f"patients without labels: {sorted(set(missing))[:5]}")
    iterations = []
    for i, (train_ids, test_ids) in enumerate(plan.splits):
        t0 = time.perf_counter()
        try:
            if settings.audit_hygiene:
                with audit.audit_fits() as rec_audit:
                    rec = _run_iteration(i, train_ids, test_ids, table, labels, settings)
                seen = rec_audit.ids_seen()
                rec["hygiene"] = {
                    "test_rows_read": len(seen & set(test_ids)),
                    "fit_events": len(rec_audit.events),
                    "steps": sorted(rec_audit.steps()),
                }
            else:
                rec = _run_iteration(i, train_ids, test_ids, table, labels, settings)
        except DataError as exc:
            raise DataError(f"iteration {i}: {exc}") from None
        iterations.append(rec)
        if progress is not None:
            progress(i, rec, time.perf_counter() - t0)
    return {
        "mode": plan.mode,
        "n_iter": plan.n_iter,
        "iterations": iterations,
        "summary": summarize(iterations, plan.mode),
        "patients": patient_counts(iterations),
    }


def summarize(iterations, mode: str = "random-split") -> dict:
    """Metric means with CIs; leave-one-out pools every test prediction instead."""
    if mode == "leave-one-out":
        prob = np.array([p for r in iterations for p in r["probabilities"]])
        y = np.array([v for r in iterations for v in r["labels"]])
        sens, spec, b = confusion_metrics(prob, y)
        pooled = {"auc": auc(prob, y), "bca": b, "sensitivity": sens, "specificity": spec}
        return {"pooled": pooled, "roc": {"fpr": ROC_GRID.tolist(), "tpr": roc_on_grid(prob, y).tolist()}}
    out = {}
    n_train = int(np.mean([r["n_train"] for r in iterations]))
    n_test = int(np.mean([r["n_test"] for r in iterations]))
    for m in METRICS:
        vals = np.array([r[m] for r in iterations if r[m] is not None and np.isfinite(r[m])])
        entry = {"n": int(vals.size)}
        if vals.size:
            entry["mean"] = float(vals.mean())
        if vals.size >= 2:
            lo, hi = corrected_resampled_ci(vals, n_train, n_test)
            entry.update(lower=lo, upper=hi, rendered=format_ci(entry["mean"], lo, hi))
        out[m] = entry
    curves = [r["roc_tpr"] for r in iterations if r.get("roc_tpr") is not None]
    if len(curves) >= 2:
        mean, half = roc_band(np.array(curves))
        out["roc"] = {"fpr": ROC_GRID.tolist(), "mean_tpr": np.asarray(mean).tolist(), "half_width": float(half)}
    return out


def patient_counts(iterations) -> dict:
    """Per patient: number of test appearances and correct hard labels."""
    counts: dict = {}
    for r in iterations:
        hard = predict_labels(r["probabilities"])
        for pid, h, y in zip(r["test_ids"], hard, r["labels"]):
            c = counts.setdefault(pid, {"correct": 0, "total": 0})
            c["total"] += 1
            c["correct"] += int(h == y)
    return {pid: counts[pid] for pid in sorted(counts)}


def permuted_labels(labels: dict, seed: int) -> dict:
    """Labels shuffled across patients with a fixed stream (null experiment)."""
    ids = sorted(labels)
    rng = np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(6,)))
    vals = rng.permutation([labels[p] for p in ids])
    return {p: int(v) for p, v in zip(ids, vals)}
