"""Workflow configurations and the search-space document they are drawn from."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from ..core.names import ALL_GROUPS
from ..core.types import DataError
from .classifiers import CLASSIFIERS
from .preprocess import IMPUTERS
from .resample import RESAMPLERS

SPACE_SCHEMA_VERSION = 1
PCA_MODES = ("off", "variance95", "fixed")


@dataclass(frozen=True)
class WorkflowConfig:
    """One point of the workflow space.

    ``index`` orders configs for tie-breaking; ``seed`` together with
    ``index`` names the random stream used when the workflow is fitted.
    """

    index: int
    seed: int
    imputer: str = "mean"
    imputer_k: int = 5
    scaler: bool = True
    group_flags: tuple = tuple((g, True) for g in ALL_GROUPS)
    univariate: bool = False
    p_threshold: float = 0.05
    pca_mode: str = "off"
    pca_k: int = 10
    resampler: str = "none"
    nearmiss_version: int = 1
    classifier: str = "logistic"
    classifier_params: tuple = ()

    def __post_init__(self):
        if self.imputer not in IMPUTERS:
            raise ValueError(f"unknown imputer {self.imputer!r}")
        if self.pca_mode not in PCA_MODES:
            raise ValueError(f"unknown PCA mode {self.pca_mode!r}")
        if self.resampler not in RESAMPLERS:
            raise ValueError(f"unknown resampler {self.resampler!r}")
        if self.classifier not in CLASSIFIERS:
            raise ValueError(f"unknown classifier {self.classifier!r}")
        object.__setattr__(self, "group_flags", tuple((str(g), bool(v)) for g, v in self.group_flags))
        object.__setattr__(self, "classifier_params", tuple(sorted((str(k), v) for k, v in self.classifier_params)))

    @property
    def flags(self) -> dict:
        return dict(self.group_flags)

    @property
    def params(self) -> dict:
        return dict(self.classifier_params)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["group_flags"] = dict(self.group_flags)
        d["classifier_params"] = dict(self.classifier_params)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "WorkflowConfig":
        d = dict(d)
        d["group_flags"] = tuple(d.get("group_flags", {}).items())
        d["classifier_params"] = tuple(d.get("classifier_params", {}).items())
        return cls(**d)


# --------------------------------------------------------------------------- space document

def default_space_path() -> Path:
    return Path(str(resources.files("autorad") / "data" / "search_space.json"))


def load_space(path=None) -> dict:
    """Read and validate a search-space JSON document."""
    p = Path(path) if path is not None else default_space_path()
    if not p.exists():
        raise DataError(f"missing file: {p}")
    try:
        space = json.loads(p.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{p}: not valid JSON ({exc})") from None
    validate_space(space, p)
    return space


def validate_space(space: dict, where="search space") -> None:
    if space.get("schema_version") != SPACE_SCHEMA_VERSION:
        raise DataError(f"{where}: schema_version {space.get('schema_version')!r} != {SPACE_SCHEMA_VERSION}")
    for key in ("imputer", "scaler", "groupwise", "univariate", "pca", "resampler", "classifier"):
        if key not in space:
            raise DataError(f"{where}: missing section {key!r}")
    checks = [
        (space["imputer"]["choices"], IMPUTERS, "imputer"),
        (space["pca"]["modes"], PCA_MODES, "PCA mode"),
        (space["resampler"]["choices"], RESAMPLERS, "resampler"),
        (space["classifier"]["choices"], CLASSIFIERS, "classifier"),
    ]
    for chosen, allowed, what in checks:
        if not chosen:
            raise DataError(f"{where}: empty {what} choices")
        bad = [c for c in chosen if c not in allowed]
        if bad:
            raise DataError(f"{where}: unknown {what} {bad}")


def _draw(rng: np.random.Generator, dist):
    kind = dist["type"]
    lo, hi = dist["low"], dist["high"]
    if kind == "uniform":
        return float(rng.uniform(lo, hi))
    if kind == "log_uniform":
        return float(math.exp(rng.uniform(math.log(lo), math.log(hi))))
    if kind == "int_uniform":
        return int(rng.integers(lo, hi + 1))
    raise DataError(f"unknown distribution type {kind!r}")


def _pick(rng, choices, weights=None):
    if weights is None:
        return choices[int(rng.integers(len(choices)))]
    w = np.asarray(weights, dtype=np.float64)
    return choices[int(rng.choice(len(choices), p=w / w.sum()))]


def sample_config(space: dict, master_seed: int, index: int) -> WorkflowConfig:
    """Config ``index`` of the stream named by ``master_seed``; a pure function of both."""
    rng = np.random.default_rng(np.random.SeedSequence(int(master_seed), spawn_key=(0, int(index))))
    imp = space["imputer"]
    imputer = _pick(rng, imp["choices"])
    imputer_k = _draw(rng, imp["knn_k"])
    scaler = bool(rng.random() < space["scaler"]["p_on"])
    gw = space["groupwise"]
    use_groups = rng.random() < gw["p_use"]
    on = rng.random(len(ALL_GROUPS)) < gw["p_group_on"]
    flags = tuple((g, bool(o) if use_groups else True) for g, o in zip(ALL_GROUPS, on))
    uni = space["univariate"]
    univariate = bool(rng.random() < uni["p_on"])
    p_threshold = _draw(rng, uni["p_threshold"])
    pca = space["pca"]
    pca_mode = _pick(rng, pca["modes"], pca.get("weights"))
    pca_k = _draw(rng, pca["k"])
    res = space["resampler"]
    resampler = _pick(rng, res["choices"])
    nearmiss_version = int(_pick(rng, res.get("nearmiss_version", [1])))
    cl = space["classifier"]
    classifier = _pick(rng, cl["choices"])
    params = {}
    for name, dist in sorted(cl.get(classifier, {}).items()):
        params[name] = _pick(rng, dist) if isinstance(dist, list) else _draw(rng, dist)
    return WorkflowConfig(
        index=int(index),
        seed=int(master_seed),
        imputer=imputer,
        imputer_k=imputer_k,
        scaler=scaler,
        group_flags=flags,
        univariate=univariate,
        p_threshold=p_threshold,
        pca_mode=pca_mode,
        pca_k=pca_k,
        resampler=resampler,
        nearmiss_version=nearmiss_version,
        classifier=classifier,
        classifier_params=tuple(params.items()),
    )


def sample_workflows(space: dict, n: int, master_seed: int) -> list[WorkflowConfig]:
    """``n`` independent configs; a smaller budget yields a prefix of a larger one."""
    if n < 1:
        raise ValueError("need at least one workflow")
    validate_space(space)
    return [sample_config(space, master_seed, i) for i in range(n)]
