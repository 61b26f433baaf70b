"""Random search over workflows, inner-validation scoring and top-k ensembling."""
from __future__ import annotations

import json
import logging
import math
import pickle
import struct
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core.types import DataError, FeatureTable
from .evaluate.stats import f1_score
from .pipeline import audit
from .pipeline.preprocess import DegenerateWorkflow
from .pipeline.space import WorkflowConfig, sample_workflows
from .pipeline.workflow import FINAL_FIT, fit_workflow

log = logging.getLogger(__name__)

DEFAULT_BUDGET = 25_000
DEFAULT_ENSEMBLE = 50
DEFAULT_INNER_FOLDS = 5
DEFAULT_VAL_FRACTION = 0.15

MODEL_MAGIC = b"AUTORAD-ENSEMBLE\n"
MODEL_VERSION = 1


@dataclass(frozen=True)
class ScoredWorkflow:
    config: WorkflowConfig
    fold_f1: tuple
    degenerate: bool = False
    reason: str = ""

    @property
    def score(self) -> float:
        if self.degenerate:
            return -math.inf
        return float(np.mean(self.fold_f1))


# --------------------------------------------------------------------------- inner splits

def inner_splits(y, n_splits: int = DEFAULT_INNER_FOLDS, val_fraction: float = DEFAULT_VAL_FRACTION, seed=0):
    """Stratified random train/validation splits.

    Each class is shuffled and ``max(1, floor(val_fraction * n_class))`` of its
    rows go to validation; the rest train.
    """
    y = np.asarray(y).astype(int)
    ss = seed if isinstance(seed, np.random.SeedSequence) else np.random.SeedSequence(seed)
    rng = np.random.default_rng(ss)
    out = []
    for _ in range(n_splits):
        val = []
        for c in (0, 1):
            idx = np.flatnonzero(y == c)
            if idx.size < 2:
                raise DataError(f"class {c} needs at least two training rows for inner validation")
            n_val = max(1, int(math.floor(val_fraction * idx.size)))
            val.extend(rng.permutation(idx)[:n_val].tolist())
        val = np.sort(np.array(val))
        train = np.setdiff1d(np.arange(y.size), val)
        out.append((train, val))
    return out


# --------------------------------------------------------------------------- scoring

def score_workflow(config: WorkflowConfig, X, y, groups, splits, row_ids=None) -> ScoredWorkflow:
    """Mean validation F1 over ``splits``; degenerate workflows score -inf."""
    folds = []
    for k, (tr, va) in enumerate(splits):
        ids = None if row_ids is None else [row_ids[i] for i in tr]
        try:
            fw = fit_workflow(config, X[tr], y[tr], groups, fold=k, row_ids=ids)
        except DegenerateWorkflow as exc:
            return ScoredWorkflow(config, tuple(folds), True, str(exc))
        folds.append(f1_score(fw.predict_proba(X[va]), y[va]))
    return ScoredWorkflow(config, tuple(folds))


_SHARED: dict = {}


def _init_worker(X, y, groups, splits):
    _SHARED.update(X=X, y=y, groups=groups, splits=splits)


def _score_chunk(configs):
    s = _SHARED
    return [score_workflow(c, s["X"], s["y"], s["groups"], s["splits"]) for c in configs]


def run_search(configs, X, y, groups, splits, threads: int = 1, row_ids=None) -> list[ScoredWorkflow]:
    """Score every config; results keep the order of ``configs``."""
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    if threads <= 1 or len(configs) < 2 or audit.active():
        return [score_workflow(c, X, y, groups, splits, row_ids) for c in configs]
    n_chunks = threads * 4
    size = max(1, math.ceil(len(configs) / n_chunks))
    chunks = [configs[i : i + size] for i in range(0, len(configs), size)]
    with ProcessPoolExecutor(max_workers=threads, initializer=_init_worker, initargs=(X, y, list(groups), splits)) as pool:
        results = list(pool.map(_score_chunk, chunks))
    return [r for chunk in results for r in chunk]


def rank(scored) -> list[ScoredWorkflow]:
    """Non-degenerate workflows by mean F1 (descending), ties by config index."""
    ok = [s for s in scored if not s.degenerate]
    return sorted(ok, key=lambda s: (-s.score, s.config.index))


# --------------------------------------------------------------------------- ensemble

@dataclass(frozen=True, eq=False)
class EnsembleModel:
    members: tuple  # FittedWorkflow, best first
    feature_names: tuple
    groups: tuple
    positive_class: str = "label == 1"
    requested: int = DEFAULT_ENSEMBLE
    scores: tuple = ()
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return len(self.members)

    def member_probabilities(self, X) -> np.ndarray:
        return np.vstack([m.predict_proba(X) for m in self.members])

    def predict_proba(self, X) -> np.ndarray:
        return self.member_probabilities(X).mean(axis=0)


def build_ensemble(scored, X, y, groups, feature_names, k: int = DEFAULT_ENSEMBLE, row_ids=None) -> EnsembleModel:
    """Refit the ``k`` best workflows on the whole training split.

    Workflows that turn degenerate on the full split are skipped and the
    next ranked one is used instead.
    """
    ranked = rank(scored)
    if not ranked:
        raise DataError("every sampled workflow was degenerate")
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y).astype(int)
    members, scores = [], []
    for s in ranked:
        if len(members) == k:
            break
        try:
            members.append(fit_workflow(s.config, X, y, groups, fold=FINAL_FIT, row_ids=row_ids))
            scores.append(s.score)
        except DegenerateWorkflow as exc:
            log.info("workflow %d degenerate on the full split: %s", s.config.index, exc)
    if not members:
        raise DataError("no workflow could be refitted on the full training split")
    if len(members) < k:
        log.info("ensemble holds %d of %d requested workflows", len(members), k)
    return EnsembleModel(tuple(members), tuple(feature_names), tuple(groups), requested=k, scores=tuple(scores))


def ensemble_predict(model: EnsembleModel, rows) -> np.ndarray:
    """Mean member probability for each row.

    ``rows`` is a FeatureTable (columns matched by name) or an array whose
    columns already follow ``model.feature_names``.
    """
    if isinstance(rows, FeatureTable):
        missing = [n for n in model.feature_names if n not in rows.names]
        if missing:
            raise DataError(f"feature table lacks {len(missing)} model features, e.g. {missing[:3]}")
        X = rows.select_columns(model.feature_names).values
    else:
        X = np.asarray(rows, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != len(model.feature_names):
            raise DataError(f"expected {len(model.feature_names)} feature columns, got {X.shape}")
    return model.predict_proba(X)


@dataclass(frozen=True)
class SearchSettings:
    space: dict
    budget: int = DEFAULT_BUDGET
    ensemble: int = DEFAULT_ENSEMBLE
    inner_folds: int = DEFAULT_INNER_FOLDS
    val_fraction: float = DEFAULT_VAL_FRACTION
    threads: int = 1


def train_ensemble(X, y, groups, feature_names, settings: SearchSettings, seed: int, row_ids=None):
    """Search ``settings.budget`` workflows and return ``(model, scored)``."""
    y = np.asarray(y).astype(int)
    configs = sample_workflows(settings.space, settings.budget, seed)
    splits = inner_splits(y, settings.inner_folds, settings.val_fraction, np.random.SeedSequence(seed, spawn_key=(3,)))
    scored = run_search(configs, X, y, groups, splits, settings.threads, row_ids)
    model = build_ensemble(scored, X, y, groups, feature_names, settings.ensemble, row_ids)
    return model, scored


# --------------------------------------------------------------------------- serialization

def save_model(model: EnsembleModel, path, run_config=None) -> None:
    """Versioned container: magic, version, JSON header, pickled members."""
    header = {
        "format_version": MODEL_VERSION,
        "feature_names": list(model.feature_names),
        "groups": list(model.groups),
        "positive_class": model.positive_class,
        "requested": model.requested,
        "members": [m.config.to_dict() for m in model.members],
        "scores": list(model.scores),
        "run_config": run_config,
    }
    hbytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = pickle.dumps(model, protocol=4)
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC)
        fh.write(struct.pack("<IQ", MODEL_VERSION, len(hbytes)))
        fh.write(hbytes)
        fh.write(payload)


def read_model_header(path) -> dict:
    return _read_model(path, header_only=True)


def load_model(path) -> EnsembleModel:
    return _read_model(path, header_only=False)


def _read_model(path, header_only):
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, "rb") as fh:
        if fh.read(len(MODEL_MAGIC)) != MODEL_MAGIC:
            raise DataError(f"{path}: not a model file")
        version, n = struct.unpack("<IQ", fh.read(12))
        if version != MODEL_VERSION:
            raise DataError(f"{path}: model format version {version} != {MODEL_VERSION}")
        header = json.loads(fh.read(n).decode("utf-8"))
        if header_only:
            return header
        model = pickle.loads(fh.read())
    if not isinstance(model, EnsembleModel):
        raise DataError(f"{path}: payload is not an ensemble model")
    return model
