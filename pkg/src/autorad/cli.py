"""Command-line entry point.

Exit codes: 0 success, 1 usage error, 2 data error.  Every artifact a
command writes embeds the resolved run configuration that produced it.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from .core.io import read_feature_table, read_manifest, read_mask, write_feature_table
from .core.names import CLINICAL_GROUPS, LOCATION_PREFIX, expand_groups
from .core.types import DataError, FeatureTable

log = logging.getLogger("autorad")

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
DEFAULT_SEED = 0
ALL_COMMANDS = ("phantom", "extract", "train", "predict", "evaluate", "compare", "combat", "icc", "dice", "report")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _groups_arg(text: str) -> tuple:
    try:
        groups = expand_groups(text.split(","))
    except ValueError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None
    if not groups:
        raise argparse.ArgumentTypeError("no feature group given")
    return groups


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError(f"must be >= 1, got {v}")
    return v


def _fraction(text: str) -> float:
    v = float(text)
    if not 0 < v < 1:
        raise argparse.ArgumentTypeError(f"must lie in (0, 1), got {v}")
    return v


# --------------------------------------------------------------------------- parser

def build_parser() -> argparse.ArgumentParser:
    from .evaluate.cv import DEFAULT_ITERS, DEFAULT_TEST_FRACTION
    from .harmonize import GROUP_KEYS
    from .search import DEFAULT_BUDGET, DEFAULT_ENSEMBLE, DEFAULT_INNER_FOLDS, DEFAULT_VAL_FRACTION

    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="autorad", description="Radiomics feature extraction, workflow search and evaluation.")
    p.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)

    def command(name, help_text):
        c = sub.add_parser(name, help=help_text, description=help_text, formatter_class=fmt)
        c.add_argument("--threads", type=_positive_int, default=1, help="worker processes")
        return c

    def search_flags(c):
        c.add_argument("--manifest", required=True, help="patient manifest CSV")
        c.add_argument("--features", required=True, help="feature table CSV")
        c.add_argument("--space", default=None, help="search-space JSON (default: the packaged space)")
        c.add_argument("--budget", type=_positive_int, default=DEFAULT_BUDGET, help="workflows sampled per search")
        c.add_argument("--ensemble", type=_positive_int, default=DEFAULT_ENSEMBLE, help="workflows kept in the ensemble")
        c.add_argument("--inner-folds", type=_positive_int, default=DEFAULT_INNER_FOLDS, help="inner validation splits")
        c.add_argument("--val-fraction", type=_fraction, default=DEFAULT_VAL_FRACTION, help="inner validation fraction")
        c.add_argument("--seed", type=int, default=DEFAULT_SEED, help="master random seed")
        c.add_argument("--groups", type=_groups_arg, default="all",
                       help="comma-separated feature groups or aliases (imaging, clinical, age, sex, location, volume, all)")

    c = command("phantom", "write a synthetic labelled cohort")
    c.add_argument("--n", type=_positive_int, default=30, help="patients per class")
    c.add_argument("--seed", type=int, default=DEFAULT_SEED)
    c.add_argument("--out", required=True, help="output directory")
    c.add_argument("--dims", type=_positive_int, nargs=3, default=(32, 32, 32))
    c.add_argument("--spacing", type=float, nargs=3, default=(1.0, 1.0, 1.0))
    c.add_argument("--null", action="store_true", help="zero class contrast (both classes identically distributed)")
    c.add_argument("--batch-shifts", type=float, nargs="+", default=(0.0,), help="additive HU offset per scanner batch")
    c.add_argument("--observer2", type=float, default=None, help="also write second-observer masks at this perturbation magnitude")

    c = command("extract", "extract the radiomics feature table")
    c.add_argument("--manifest", required=True)
    c.add_argument("--out", required=True, help="feature table CSV")
    c.add_argument("--groups", type=_groups_arg, default="imaging,volume",
                   help="imaging families and/or volume to emit")

    c = command("train", "search workflows on all patients and save the ensemble")
    search_flags(c)
    c.add_argument("--out", required=True, help="model file")

    c = command("predict", "apply a saved ensemble")
    c.add_argument("--model", required=True)
    c.add_argument("--manifest", required=True)
    c.add_argument("--features", required=True)
    c.add_argument("--out", required=True, help="scores CSV")

    c = command("evaluate", "repeated train/test evaluation")
    search_flags(c)
    c.add_argument("--iters", type=_positive_int, default=DEFAULT_ITERS, help="outer random splits")
    c.add_argument("--test-fraction", type=_fraction, default=DEFAULT_TEST_FRACTION, help="test share of each class")
    c.add_argument("--loo", action="store_true", help="leave-one-out instead of random splits")
    c.add_argument("--combat-by", choices=GROUP_KEYS, default=None, help="harmonize inside every training split")
    c.add_argument("--permute-labels", action="store_true", help="shuffle labels (null experiment)")
    c.add_argument("--audit", action="store_true", help="record and report which rows every fit consumed")
    c.add_argument("--out", required=True, help="report JSON")
    c.add_argument("--roc-out", default=None, help="ROC CSV; None writes it next to the report as .roc.csv")

    c = command("compare", "DeLong test and Cohen's kappa on two external score vectors")
    c.add_argument("--scores-a", required=True, help="CSV patient_id,score")
    c.add_argument("--scores-b", required=True, help="CSV patient_id,score")
    c.add_argument("--labels", required=True, help="CSV patient_id,label")
    c.add_argument("--threshold", type=float, default=0.5, help="hard-label threshold for kappa on non-integer scores")
    c.add_argument("--out", default=None, help="JSON result (default: stdout)")

    c = command("combat", "harmonize a feature table across batches")
    c.add_argument("--features", required=True)
    c.add_argument("--manifest", required=True)
    c.add_argument("--group-by", choices=GROUP_KEYS, default="manufacturer")
    c.add_argument("--out", required=True)

    c = command("icc", "per-feature inter-observer ICC")
    c.add_argument("--features-a", required=True)
    c.add_argument("--features-b", required=True)
    c.add_argument("--out", required=True, help="CSV feature,icc,above_0.75,above_0.90")

    c = command("dice", "Dice overlap of two masks")
    c.add_argument("--mask-a", required=True)
    c.add_argument("--mask-b", required=True)

    c = command("report", "render report JSON files as a metric table")
    c.add_argument("reports", nargs="+")
    c.add_argument("--titles", default=None, help="comma-separated column titles")
    c.add_argument("--out", default=None, help="text file (default: stdout)")
    return p


def run_config(args) -> dict:
    cfg = {"subcommand": args.command}
    for k, v in sorted(vars(args).items()):
        if k in ("command", "log_level"):
            continue
        cfg[k] = list(v) if isinstance(v, tuple) else v
    return cfg


# --------------------------------------------------------------------------- shared helpers

def _labels(records) -> dict:
    return {r.id: r.label for r in records}


def assemble_features(records, table: FeatureTable, groups, location_codes=None) -> FeatureTable:
    """Imaging/volume columns of ``table`` plus clinical columns from the manifest."""
    from .features.clinical import clinical_table

    groups = tuple(groups)
    file_groups = [g for g in groups if g not in CLINICAL_GROUPS]
    ids = [r.id for r in records]
    parts = table.select_rows(ids).select_groups(file_groups)
    present = set(parts.groups)
    absent = [g for g in file_groups if g not in present]
    if absent and set(groups) != set(expand_groups(["all"])):
        raise DataError(f"feature table lacks requested groups {absent}")
    clinical = [g for g in groups if g in CLINICAL_GROUPS]
    if clinical:
        parts = parts.hstack(clinical_table(records, clinical, location_codes))
    if not parts.names:
        raise DataError("no feature columns selected")
    return parts


def _search_settings(args):
    from .pipeline.space import load_space
    from .search import SearchSettings

    return SearchSettings(load_space(args.space), args.budget, args.ensemble, args.inner_folds, args.val_fraction,
                          args.threads)


def _read_scores(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = [r for r in csv.reader(fh) if r and not r[0].startswith("#")]
    if len(rows) < 2 or len(rows[0]) < 2:
        raise DataError(f"{path}: expected a header and rows of patient_id,value")
    out = {}
    for lineno, r in enumerate(rows[1:], start=2):
        try:
            out[r[0]] = float(r[1])
        except (ValueError, IndexError):
            raise DataError(f"{path}: line {lineno}: bad value {r[1:2]}") from None
    return out


def _emit(obj, out):
    text = json.dumps(obj, indent=1, sort_keys=True) + "\n"
    if out:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


# --------------------------------------------------------------------------- commands

def cmd_phantom(args, cfg):
    from .phantom import PhantomSpec, write_dataset

    kw = dict(n_per_class=args.n, dims=tuple(args.dims), spacing=tuple(args.spacing),
              batch_shifts=tuple(args.batch_shifts), seed=args.seed)
    spec = PhantomSpec.null(**kw) if args.null else PhantomSpec(**kw)
    recs = write_dataset(spec, args.out, args.observer2, run_config=cfg)
    print(f"wrote {len(recs)} patients to {args.out}")


def cmd_extract(args, cfg):
    from .features.extract import extract_table

    records = read_manifest(args.manifest)
    table = extract_table(records, args.groups, threads=args.threads)
    write_feature_table(table, args.out, run_config=cfg)
    print(f"wrote {table.shape[0]} x {table.shape[1]} features to {args.out}")


def cmd_train(args, cfg):
    from .search import save_model, train_ensemble

    records = read_manifest(args.manifest)
    table = assemble_features(records, read_feature_table(args.features), args.groups)
    y = np.array([r.label for r in records])
    model, scored = train_ensemble(table.values, y, table.groups, table.names, _search_settings(args), args.seed,
                                   row_ids=table.ids)
    save_model(model, args.out, run_config=cfg)
    print(f"ensemble of {model.size} workflows ({sum(s.degenerate for s in scored)} degenerate) saved to {args.out}")


def cmd_predict(args, cfg):
    from .search import ensemble_predict, load_model

    model = load_model(args.model)
    records = read_manifest(args.manifest)
    groups = tuple(dict.fromkeys(model.groups))
    codes = [n[len(LOCATION_PREFIX):] for n in model.feature_names if n.startswith(LOCATION_PREFIX)]
    table = assemble_features(records, read_feature_table(args.features), groups, location_codes=codes)
    prob = ensemble_predict(model, table)
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps({"run_config": cfg}, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["patient_id", "probability", "predicted"])
        for pid, p in zip(table.ids, prob):
            w.writerow([pid, repr(float(p)), int(p >= 0.5)])
    print(f"wrote {len(prob)} predictions to {out}")


def cmd_evaluate(args, cfg):
    from .evaluate.cv import ExperimentSettings, make_split_plan, permuted_labels, run_experiment
    from .evaluate.insight import rank_typicality
    from .evaluate.report import build_report, write_report, write_roc_csv
    from .harmonize import batch_labels

    records = read_manifest(args.manifest)
    table = assemble_features(records, read_feature_table(args.features), args.groups)
    labels = _labels(records)
    if args.permute_labels:
        labels = permuted_labels(labels, args.seed)
    ids = [r.id for r in records]
    mode = "leave-one-out" if args.loo else "random-split"
    plan = make_split_plan(ids, [labels[i] for i in ids], args.iters, args.test_fraction, args.seed, mode)
    combat = None
    if args.combat_by:
        combat = dict(zip(ids, batch_labels(records, args.combat_by)))
    settings = ExperimentSettings(_search_settings(args), args.seed, combat, args.audit)

    def progress(i, rec, dt):
        log.info("iteration %d/%d: auc=%s (%.1f s)", i + 1, plan.n_iter, rec.get("auc"), dt)

    t0 = time.perf_counter()
    result = run_experiment(table, labels, plan, settings, progress)
    result["typicality"] = rank_typicality(result["patients"])
    result["features"] = {"n": len(table.names), "groups": sorted(set(table.groups))}
    # execution-only settings do not change results; keep them out of the hash
    unhashed = ("threads", "out", "roc_out")
    hashed_cfg = {k: v for k, v in cfg.items() if k not in unhashed}
    meta = {k: cfg[k] for k in unhashed}
    meta["elapsed_seconds"] = round(time.perf_counter() - t0, 3)
    report = build_report("evaluation", hashed_cfg, result, meta)
    write_report(report, args.out)
    roc_out = args.roc_out or str(Path(args.out).with_suffix(".roc.csv"))
    write_roc_csv(report["result"], roc_out)
    s = result["summary"]
    line = s["pooled"] if "pooled" in s else {k: s[k].get("rendered", s[k].get("mean")) for k in ("auc", "bca")}
    print(f"report written to {args.out}; {line}")


def cmd_compare(args, cfg):
    from .evaluate.stats import cohens_kappa, delong_test, predict_labels

    a, b, lab = _read_scores(args.scores_a), _read_scores(args.scores_b), _read_scores(args.labels)
    ids = sorted(lab)
    missing = [i for i in ids if i not in a or i not in b]
    if missing:
        raise DataError(f"patients without both scores: {missing[:5]}")
    sa = np.array([a[i] for i in ids])
    sb = np.array([b[i] for i in ids])
    y = np.array([lab[i] for i in ids])
    if not np.isin(y, (0, 1)).all():
        raise DataError(f"{args.labels}: labels must be 0 or 1")
    res = delong_test(sa, sb, y.astype(int))
    integral = np.all(sa == np.round(sa)) and np.all(sb == np.round(sb))
    ra, rb = (sa, sb) if integral else (predict_labels(sa, args.threshold), predict_labels(sb, args.threshold))
    out = {
        "run_config": cfg,
        "n": len(ids),
        "auc_a": res.auc_a,
        "auc_b": res.auc_b,
        "delong_p": res.p,
        "delong_z": res.z if np.isfinite(res.z) else None,
        "delong_degenerate": res.degenerate,
        "kappa": cohens_kappa(ra, rb),
        "kappa_on": "scores" if integral else f"labels at threshold {args.threshold}",
    }
    _emit(out, args.out)


def cmd_combat(args, cfg):
    from .harmonize import batch_labels, combat_table

    records = read_manifest(args.manifest)
    table = read_feature_table(args.features).select_rows([r.id for r in records])
    harmonized = combat_table(table, batch_labels(records, args.group_by))
    write_feature_table(harmonized, args.out, run_config=cfg)
    print(f"harmonized {table.shape[1]} features over {table.shape[0]} patients into {args.out}")


def cmd_icc(args, cfg):
    from .harmonize import ICC_THRESHOLDS, icc_table

    values = icc_table(read_feature_table(args.features_a), read_feature_table(args.features_b))
    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    with open(out, "w", encoding="utf-8", newline="") as fh:
        fh.write("# " + json.dumps({"run_config": cfg}, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["feature", "icc"] + [f"above_{t:.2f}" for t in ICC_THRESHOLDS])
        for name, v in values.items():
            w.writerow([name, "NaN" if not np.isfinite(v) else repr(v)] + [int(np.isfinite(v) and v > t) for t in ICC_THRESHOLDS])
    counts = {f"{t:.2f}": sum(1 for v in values.values() if np.isfinite(v) and v > t) for t in ICC_THRESHOLDS}
    print(f"{len(values)} features; above threshold: {counts}")


def cmd_dice(args, cfg):
    from .harmonize import dice

    value = dice(read_mask(args.mask_a), read_mask(args.mask_b))
    _emit({"run_config": cfg, "dice": value}, None)


def cmd_report(args, cfg):
    from .evaluate.report import read_report, render_table

    reports = [read_report(p) for p in args.reports]
    titles = args.titles.split(",") if args.titles else [Path(p).stem for p in args.reports]
    if len(titles) != len(reports):
        raise UsageError(f"{len(titles)} titles for {len(reports)} reports")
    text = render_table(reports, titles)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)


COMMANDS = {name: globals()[f"cmd_{name}"] for name in ALL_COMMANDS}


def main(argv=None) -> int:
    try:
        args = build_parser().parse_args(argv)
        if args.command is None:
            raise UsageError(f"autorad: a command is required ({', '.join(ALL_COMMANDS)})")
        logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
        COMMANDS[args.command](args, run_config(args))
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (DataError, FileNotFoundError, OSError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
