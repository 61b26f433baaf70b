"""Full feature vector for one lesion, and feature tables for a cohort."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor

import numpy as np

from ..core.io import read_image, read_mask
from ..core.names import (
    FAMILY_SIZES,
    IMAGING_GROUPS,
    VOLUME_FEATURE,
    VOLUME_GROUP,
    canonical_feature_names,
    family_feature_names,
)
from ..core.types import DataError, FeatureTable, ImageVolume, RoiMask, check_pair
from .filters import filter_bank_features
from .firstorder import histogram_features
from .shape import orientation_features, shape_features
from .texture import glcm_features_from_levels, matrix_family_features_from_levels, quantized_levels

log = logging.getLogger(__name__)

_FILTER_FAMILIES = ("LBP", "Gabor", "LoG", "vessel", "local-phase")
_MATRIX_FAMILIES = ("GLSZM", "GLRLM", "GLDM", "NGTDM")


def _nan(group: str) -> np.ndarray:
    return np.full(FAMILY_SIZES[group], np.nan)


def volume_ml(mask: RoiMask) -> float:
    """Lesion volume in millilitres (voxel count times voxel volume)."""
    sx, sy, sz = mask.spacing
    return float(mask.voxels.sum()) * sx * sy * sz / 1000.0


def extract_families(image: ImageVolume, mask: RoiMask, groups=IMAGING_GROUPS) -> dict[str, np.ndarray]:
    """Compute the requested imaging families.

    A family whose computation degenerates (for example a lesion with no
    in-plane pixel pair) is returned as NaN rather than raising.
    """
    check_pair(image, mask)
    if not mask.voxels.any():
        raise DataError("empty mask")
    groups = [g for g in IMAGING_GROUPS if g in set(groups)]
    out: dict[str, np.ndarray] = {}
    if "histogram" in groups:
        out["histogram"] = histogram_features(image, mask)
    if "shape" in groups:
        out["shape"] = shape_features(mask)
    if "orientation" in groups:
        out["orientation"] = orientation_features(mask)

    need_levels = [g for g in ("GLCM",) + _MATRIX_FAMILIES if g in groups]
    if need_levels:
        lev = quantized_levels(image, mask)
        if "GLCM" in groups:
            try:
                out["GLCM"] = glcm_features_from_levels(lev)
            except DataError as exc:
                log.info("GLCM degenerate: %s", exc)
                out["GLCM"] = _nan("GLCM")
        if any(g in groups for g in _MATRIX_FAMILIES):
            with np.errstate(all="ignore"):
                mats = matrix_family_features_from_levels(lev)
            out.update({g: mats[g] for g in _MATRIX_FAMILIES if g in groups})

    wanted_filters = [g for g in _FILTER_FAMILIES if g in groups]
    if wanted_filters:
        out.update(filter_bank_features(image, mask, wanted_filters))

    for g, v in out.items():
        v = np.asarray(v, dtype=np.float64)
        if v.shape != (FAMILY_SIZES[g],):
            raise AssertionError(f"{g}: expected {FAMILY_SIZES[g]} values, got {v.shape}")
        v[~np.isfinite(v)] = np.nan
        out[g] = v
    return out


def extract_all(image: ImageVolume, mask: RoiMask) -> np.ndarray:
    """The 564 imaging features in canonical order."""
    fam = extract_families(image, mask)
    return np.concatenate([fam[g] for g in IMAGING_GROUPS])


def feature_names_for(groups) -> list[str]:
    """Column names emitted by :func:`extract_row` for ``groups``."""
    names = []
    for g in IMAGING_GROUPS:
        if g in groups:
            names += family_feature_names(g)
    if VOLUME_GROUP in groups:
        names.append(VOLUME_FEATURE)
    return names


def extract_row(image: ImageVolume, mask: RoiMask, groups=IMAGING_GROUPS + (VOLUME_GROUP,)) -> np.ndarray:
    groups = set(groups)
    fam = extract_families(image, mask, groups)
    parts = [fam[g] for g in IMAGING_GROUPS if g in groups]
    if VOLUME_GROUP in groups:
        parts.append(np.array([volume_ml(mask)]))
    return np.concatenate(parts) if parts else np.zeros(0)


def _extract_record(args):
    image_path, mask_path, groups = args
    image = read_image(image_path)
    mask = read_mask(mask_path)
    return extract_row(image, mask, groups)


def extract_table(records, groups=IMAGING_GROUPS + (VOLUME_GROUP,), threads: int = 1) -> FeatureTable:
    """Extract features for every manifest record.

    Rows follow the record order; the result does not depend on ``threads``.
    """
    groups = tuple(g for g in IMAGING_GROUPS + (VOLUME_GROUP,) if g in set(groups))
    if not groups:
        raise DataError("no imaging or volume group requested")
    jobs = [(r.image_path, r.mask_path, groups) for r in records]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            rows = list(pool.map(_extract_record, jobs))
    else:
        rows = [_extract_record(j) for j in jobs]
    names = feature_names_for(groups)
    values = np.vstack(rows) if rows else np.zeros((0, len(names)))
    return FeatureTable([r.id for r in records], names, values)


__all__ = [
    "canonical_feature_names",
    "extract_all",
    "extract_families",
    "extract_row",
    "extract_table",
    "feature_names_for",
    "volume_ml",
]
