"""Versioned JSON reports, ROC CSV export and table rendering."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from datetime import datetime, timezone
from pathlib import Path

import numpy as np

from ..core.types import DataError
from .stats import format_ci, format_value

REPORT_SCHEMA_VERSION = 1
HASHED_KEYS = ("schema_version", "kind", "run_config", "result")
METRIC_LABELS = (("auc", "AUC"), ("bca", "BCA"), ("sensitivity", "Sensitivity"), ("specificity", "Specificity"))


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, (np.bool_,)):
        return bool(obj)
    return obj


def canonical_json(obj) -> str:
    return json.dumps(_clean(obj), sort_keys=True, separators=(",", ":"), allow_nan=False)


def hashed_region(report: dict) -> str:
    """Canonical text of the deterministic part of a report (no timestamps)."""
    return canonical_json({k: report.get(k) for k in HASHED_KEYS})


def build_report(kind: str, run_config: dict, result: dict, meta: dict | None = None) -> dict:
    """Assemble a report; ``meta`` holds run-dependent facts kept out of the hash."""
    rep = {
        "schema_version": REPORT_SCHEMA_VERSION,
        "kind": kind,
        "run_config": _clean(run_config),
        "result": _clean(result),
    }
    rep["result_sha256"] = hashlib.sha256(hashed_region(rep).encode("utf-8")).hexdigest()
    rep["meta"] = _clean({"created": datetime.now(timezone.utc).isoformat(timespec="seconds"), **(meta or {})})
    return rep


def write_report(report: dict, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(report, sort_keys=True, indent=1, allow_nan=False) + "\n", encoding="utf-8")


def read_report(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    try:
        rep = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}: not valid JSON ({exc})") from None
    if rep.get("schema_version") != REPORT_SCHEMA_VERSION:
        raise DataError(f"{path}: report schema_version {rep.get('schema_version')!r} != {REPORT_SCHEMA_VERSION}")
    return rep


def write_roc_csv(result: dict, path) -> None:
    """Mean ROC curve with band limits (random splits) or the pooled curve (leave-one-out)."""
    summary = result["summary"]
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        if "pooled" in summary:
            w.writerow(["fpr", "tpr"])
            for f, t in zip(summary["roc"]["fpr"], summary["roc"]["tpr"]):
                w.writerow([repr(f), repr(t)])
            return
        roc = summary.get("roc")
        if roc is None:
            raise DataError("report has fewer than two ROC curves")
        h = roc["half_width"]
        w.writerow(["fpr", "mean_tpr", "lower", "upper"])
        for f, t in zip(roc["fpr"], roc["mean_tpr"]):
            # band endpoints are clamped to [0, 1] only when rendered
            w.writerow([repr(f), repr(t), repr(max(0.0, t - h)), repr(min(1.0, t + h))])


def _cell(entry) -> str:
    if entry is None or "mean" not in entry:
        return "n/a"
    if "lower" not in entry:
        return f"{entry['mean']:.2f}"
    return format_ci(entry["mean"], entry["lower"], entry["upper"])


def render_table(reports, titles=None) -> str:
    """Metric rows by model columns, e.g. ``0.97 [0.91, >1.00]``."""
    reports = list(reports)
    titles = list(titles) if titles else [f"model {k + 1}" for k in range(len(reports))]
    header = ["Metric"] + titles
    rows = []
    for key, label in METRIC_LABELS:
        row = [label]
        for rep in reports:
            s = rep["result"]["summary"]
            if "pooled" in s:
                v = s["pooled"].get(key)
                row.append("n/a" if v is None else format_value(v))
            else:
                row.append(_cell(s.get(key)))
        rows.append(row)
    widths = [max(len(r[c]) for r in [header] + rows) for c in range(len(header))]
    lines = ["  ".join(cell.ljust(w) for cell, w in zip(r, widths)).rstrip() for r in [header] + rows]
    lines.insert(1, "  ".join("-" * w for w in widths))
    return "\n".join(lines) + "\n"
