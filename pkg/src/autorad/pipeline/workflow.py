"""Fit a complete workflow on training rows and apply it to new rows.

Step order: robust z-scoring (optional), imputation, variance threshold,
group-wise selection, univariate selection (optional), PCA (optional),
resampling, classifier.
"""
from __future__ import annotations

import hashlib
import pickle
from dataclasses import dataclass

import numpy as np

from . import audit
from .classifiers import train_classifier
from .preprocess import (
    DegenerateWorkflow,
    fit_imputer,
    fit_pca,
    fit_robust_zscore,
    groupwise_select,
    univariate_select,
    variance_threshold,
)
from .resample import resample
from .space import WorkflowConfig

FINAL_FIT = 1_000_000  # stream tag for a refit on the whole training split


@dataclass(frozen=True, eq=False)
class FittedWorkflow:
    config: WorkflowConfig
    steps: tuple  # fitted transforms applied in order
    classifier: object
    notes: tuple = ()

    def transform(self, X: np.ndarray) -> np.ndarray:
        Z = np.asarray(X, dtype=np.float64)
        for s in self.steps:
            Z = s.apply(Z)
        return Z

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        p = self.classifier.predict_proba(self.transform(X))
        return np.clip(np.nan_to_num(p, nan=0.5), 0.0, 1.0)


def _stream(config: WorkflowConfig, purpose: int, fold: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(config.seed), spawn_key=(purpose, int(config.index), int(fold)))


def fit_workflow(config: WorkflowConfig, X, y, groups, fold: int = FINAL_FIT, row_ids=None) -> FittedWorkflow:
    """Fit every step of ``config`` on ``(X, y)``.

    ``groups`` holds the group tag of each column.  ``fold`` selects the
    random stream so inner folds and the final refit are independent but
    reproducible.  Raises :class:`DegenerateWorkflow` when a step leaves no
    features or a single class.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if len(np.unique(y)) < 2:
        raise DegenerateWorkflow("training rows hold a single class")
    ids = list(row_ids) if row_ids is not None else None
    steps = []
    Z = X

    def add(name, step):
        nonlocal Z
        audit.record(name, ids)
        steps.append(step)
        Z = step.apply(Z)

    groups = list(groups)
    if config.scaler:
        add("scaler", fit_robust_zscore(Z))
    add("imputer", fit_imputer(Z, config.imputer, config.imputer_k))
    var_sel = variance_threshold(Z)
    add("variance", var_sel)
    groups = [groups[c] for c in var_sel.columns]
    present = set(groups)
    flags = {g: config.flags.get(g, True) for g in present}
    add("groupwise", groupwise_select(groups, flags))
    if config.univariate:
        add("univariate", univariate_select(Z, y, config.p_threshold))
    if config.pca_mode != "off":
        add("pca", fit_pca(Z, config.pca_mode, config.pca_k))
    if not np.all(np.isfinite(Z)):
        raise DegenerateWorkflow("non-finite values after preprocessing")

    audit.record("resampler", ids)
    Zr, yr, note = resample(
        Z, y, config.resampler, np.random.default_rng(_stream(config, 1, fold)), config.nearmiss_version
    )
    if len(np.unique(yr)) < 2:
        raise DegenerateWorkflow("resampling left a single class")
    if config.classifier in ("lda", "qda") and np.bincount(yr, minlength=2).min() < 2:
        raise DegenerateWorkflow("discriminant analysis needs two rows per class")
    audit.record("classifier", ids)
    try:
        clf = train_classifier(config.classifier, config.params, Zr, yr, seed=_stream(config, 2, fold))
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise DegenerateWorkflow(f"classifier failed: {exc}") from None
    return FittedWorkflow(config, tuple(steps), clf, (note,) if note else ())


def fitted_digest(obj) -> str:
    """SHA-256 of the pickled fitted state, for before/after comparisons."""
    return hashlib.sha256(pickle.dumps(obj, protocol=4)).hexdigest()
