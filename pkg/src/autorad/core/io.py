"""File formats: MetaImage volumes, feature-table CSV, patient manifests."""
from __future__ import annotations

import csv
import json
import math
import os
from pathlib import Path

import numpy as np

from .types import DataError, FeatureTable, ImageVolume, PatientRecord, RoiMask

_MET_TYPES = {
    "MET_SHORT": np.dtype("<i2"),
    "MET_FLOAT": np.dtype("<f4"),
    "MET_UCHAR": np.dtype("u1"),
}
_DTYPE_TO_MET = {np.dtype(v).newbyteorder("="): k for k, v in _MET_TYPES.items()}

MISSING_TOKEN = "NaN"
MANIFEST_COLUMNS = ("patient_id", "label", "age", "sex", "location", "batch", "image_path", "mask_path")


# --------------------------------------------------------------------------- MetaImage

def read_header(path) -> dict[str, str]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    header: dict[str, str] = {}
    with open(path, "rb") as fh:
        for raw in fh:
            line = raw.decode("ascii", errors="replace").strip()
            if not line:
                continue
            if "=" not in line:
                raise DataError(f"{path}: malformed header line {line!r}")
            key, val = (s.strip() for s in line.split("=", 1))
            header[key] = val
            if key == "ElementDataFile":
                break
    return header


def _parse_header(path: Path) -> tuple[tuple[int, ...], tuple[float, ...], np.dtype, Path | None, int]:
    header = read_header(path)
    for key in ("NDims", "DimSize", "ElementType", "ElementDataFile"):
        if key not in header:
            raise DataError(f"{path}: header key {key} missing")
    if int(header["NDims"]) != 3:
        raise DataError(f"{path}: only NDims = 3 is supported")
    dims = tuple(int(v) for v in header["DimSize"].split())
    if len(dims) != 3 or min(dims) <= 0:
        raise DataError(f"{path}: bad DimSize {header['DimSize']!r}")
    spacing_key = "ElementSpacing" if "ElementSpacing" in header else "ElementSize"
    if spacing_key not in header:
        raise DataError(f"{path}: header key ElementSpacing missing")
    spacing = tuple(float(v) for v in header[spacing_key].split())
    etype = header["ElementType"]
    if etype not in _MET_TYPES:
        raise DataError(f"{path}: unsupported ElementType {etype}")
    if header.get("ElementByteOrderMSB", "False").lower() == "true":
        raise DataError(f"{path}: big-endian payloads are not supported")
    if header.get("CompressedData", "False").lower() == "true":
        raise DataError(f"{path}: compressed payloads are not supported")
    datafile = header["ElementDataFile"]
    if datafile == "LOCAL":
        return dims, spacing, _MET_TYPES[etype], None, 0
    return dims, spacing, _MET_TYPES[etype], path.parent / datafile, 0


def _read_voxels(path) -> tuple[np.ndarray, tuple[float, ...]]:
    path = Path(path)
    dims, spacing, dtype, datafile, _ = _parse_header(path)
    if datafile is None:
        blob = path.read_bytes()
        end = blob.find(b"ElementDataFile")
        end = blob.index(b"\n", end) + 1
        payload = blob[end:]
    else:
        if not datafile.exists():
            raise DataError(f"{path}: data file {datafile} missing")
        payload = datafile.read_bytes()
    count = dims[0] * dims[1] * dims[2]
    if len(payload) != count * dtype.itemsize:
        raise DataError(
            f"{path}: expected {count} elements ({count * dtype.itemsize} bytes), "
            f"found {len(payload)} bytes"
        )
    flat = np.frombuffer(payload, dtype=dtype)
    # x is the fastest-varying index on disk
    vox = flat.reshape(dims[::-1]).transpose(2, 1, 0).astype(dtype.newbyteorder("="))
    return vox, spacing


def read_image(path) -> ImageVolume:
    vox, spacing = _read_voxels(path)
    return ImageVolume(vox, spacing)


def read_mask(path) -> RoiMask:
    vox, spacing = _read_voxels(path)
    return RoiMask(vox > 0, spacing)


def read_spacing(path) -> tuple[float, float, float]:
    return _parse_header(Path(path))[1]


def write_image(volume: ImageVolume | RoiMask, path) -> None:
    """Write ``path`` (.mhd) plus a sibling .raw payload."""
    path = Path(path)
    vox = volume.voxels
    if vox.dtype == np.bool_:
        vox = vox.astype(np.uint8)
    dt = vox.dtype.newbyteorder("=")
    if dt not in _DTYPE_TO_MET:
        raise DataError(f"cannot write voxel dtype {vox.dtype}; use int16, float32 or uint8")
    met = _DTYPE_TO_MET[dt]
    raw = path.with_suffix(".raw")
    nx, ny, nz = vox.shape
    header = [
        "ObjectType = Image",
        "NDims = 3",
        "BinaryData = True",
        "BinaryDataByteOrderMSB = False",
        f"DimSize = {nx} {ny} {nz}",
        "ElementSpacing = " + " ".join(repr(float(s)) for s in volume.spacing),
        f"ElementType = {met}",
        f"ElementDataFile = {raw.name}",
    ]
    path.parent.mkdir(parents=True, exist_ok=True)
    raw.write_bytes(np.ascontiguousarray(vox.transpose(2, 1, 0)).astype(_MET_TYPES[met]).tobytes())
    path.write_text("\n".join(header) + "\n", encoding="ascii")


write_mask = write_image


# --------------------------------------------------------------------------- feature tables

def _fmt(v: float) -> str:
    if math.isnan(v):
        return MISSING_TOKEN
    return repr(float(v))


def write_feature_table(table: FeatureTable, path, run_config: dict | None = None) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        if run_config is not None:
            fh.write("# " + json.dumps({"run_config": run_config}, sort_keys=True) + "\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("patient_id",) + table.names)
        for pid, row in zip(table.ids, table.values):
            w.writerow([pid] + [_fmt(v) for v in row])


def _data_lines(fh):
    for line in fh:
        if line.startswith("#"):
            continue
        yield line


def read_feature_table(path) -> FeatureTable:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        rows = list(csv.reader(_data_lines(fh)))
    if not rows or not rows[0] or rows[0][0] != "patient_id":
        raise DataError(f"{path}: first column must be patient_id")
    names = tuple(rows[0][1:])
    ids, vals = [], []
    for lineno, row in enumerate(rows[1:], start=2):
        if not row:
            continue
        if len(row) != len(names) + 1:
            raise DataError(f"{path}: line {lineno} has {len(row)} cells, header has {len(names) + 1}")
        ids.append(row[0])
        try:
            vals.append([float(c) if c not in ("", MISSING_TOKEN) else math.nan for c in row[1:]])
        except ValueError as exc:
            raise DataError(f"{path}: line {lineno}: {exc}") from None
    if len(set(ids)) != len(ids):
        dup = sorted({i for i in ids if ids.count(i) > 1})
        raise DataError(f"{path}: duplicate patient ids {dup}")
    values = np.array(vals, dtype=np.float64).reshape(len(ids), len(names))
    return FeatureTable(tuple(ids), names, values)


# --------------------------------------------------------------------------- manifests

def _opt(s: str):
    return s if s != "" else None


def read_manifest(path) -> list[PatientRecord]:
    path = Path(path)
    if not path.exists():
        raise DataError(f"missing file: {path}")
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(_data_lines(fh))
        missing = [c for c in ("patient_id", "label") if c not in (reader.fieldnames or [])]
        if missing:
            raise DataError(f"{path}: manifest lacks columns {missing}")
        records = []
        for row in reader:
            def resolve(p):
                if not p:
                    return None
                return p if os.path.isabs(p) else str(path.parent / p)

            try:
                label = int(row["label"])
                age = float(row["age"]) if row.get("age") else None
            except ValueError as exc:
                raise DataError(f"{path}: patient {row.get('patient_id')!r}: {exc}") from None
            records.append(
                PatientRecord(
                    id=row["patient_id"],
                    label=label,
                    age=age,
                    sex=_opt(row.get("sex", "")),
                    location=_opt(row.get("location", "")),
                    batch=_opt(row.get("batch", "")),
                    image_path=resolve(row.get("image_path", "")),
                    mask_path=resolve(row.get("mask_path", "")),
                )
            )
    ids = [r.id for r in records]
    if len(set(ids)) != len(ids):
        raise DataError(f"{path}: duplicate patient ids in manifest")
    return records


def write_manifest(records, path) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)

    def rel(p):
        if p is None:
            return ""
        try:
            return os.path.relpath(p, path.parent)
        except ValueError:
            return p

    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MANIFEST_COLUMNS)
        for r in records:
            w.writerow(
                [
                    r.id,
                    r.label,
                    "" if r.age is None else repr(float(r.age)),
                    r.sex or "",
                    r.location or "",
                    r.batch or "",
                    rel(r.image_path),
                    rel(r.mask_path),
                ]
            )
