"""Domain types shared across the package."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .names import IMAGING_GROUPS, canonical_feature_names, group_of


class DataError(ValueError):
    """Raised for malformed or inconsistent input data."""


def _as_spacing(spacing) -> tuple[float, float, float]:
    sp = tuple(float(s) for s in spacing)
    if len(sp) != 3:
        raise DataError(f"spacing must have 3 entries, got {sp}")
    if not all(np.isfinite(s) and s > 0 for s in sp):
        raise DataError(f"spacing must be strictly positive, got {sp}")
    return sp


def _freeze(arr: np.ndarray) -> np.ndarray:
    arr = np.array(arr, copy=True)
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class ImageVolume:
    """A 3-D scalar grid indexed ``[x, y, z]``; z is the axial slice axis."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.ndim != 3 or 0 in v.shape:
            raise DataError(f"image must be a non-empty 3-D array, got shape {v.shape}")
        if not np.issubdtype(v.dtype, np.number) or v.dtype == np.bool_:
            raise DataError(f"unsupported voxel dtype {v.dtype}")
        if not np.all(np.isfinite(v)):
            raise DataError("image contains non-finite voxels")
        object.__setattr__(self, "voxels", _freeze(v))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.voxels.shape)

    def __eq__(self, other):
        if not isinstance(other, ImageVolume):
            return NotImplemented
        return (
            self.spacing == other.spacing
            and self.voxels.dtype == other.voxels.dtype
            and np.array_equal(self.voxels, other.voxels)
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class RoiMask:
    """Binary lesion mask on the same grid as its image."""

    voxels: np.ndarray
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)

    def __post_init__(self):
        v = np.asarray(self.voxels)
        if v.ndim != 3:
            raise DataError(f"mask must be 3-D, got shape {v.shape}")
        v = v > 0 if v.dtype != np.bool_ else v
        if not v.any():
            raise DataError("mask has no foreground voxels")
        object.__setattr__(self, "voxels", _freeze(v))
        object.__setattr__(self, "spacing", _as_spacing(self.spacing))

    @property
    def dims(self) -> tuple[int, int, int]:
        return tuple(int(d) for d in self.voxels.shape)

    def __eq__(self, other):
        if not isinstance(other, RoiMask):
            return NotImplemented
        return self.spacing == other.spacing and np.array_equal(self.voxels, other.voxels)

    __hash__ = None


def check_pair(image: ImageVolume, mask: RoiMask) -> None:
    if image.dims != mask.dims:
        raise DataError(f"image dims {image.dims} != mask dims {mask.dims}")
    if not np.allclose(image.spacing, mask.spacing, rtol=0, atol=1e-9):
        raise DataError(f"image spacing {image.spacing} != mask spacing {mask.spacing}")


@dataclass(frozen=True)
class PatientRecord:
    id: str
    label: int
    age: float | None = None
    sex: str | None = None
    location: str | None = None
    batch: str | None = None
    image_path: str | None = None
    mask_path: str | None = None

    def __post_init__(self):
        if not self.id:
            raise DataError("patient id must be non-empty")
        if self.label not in (0, 1):
            raise DataError(f"label must be 0 or 1, got {self.label!r} for {self.id}")
        if self.sex not in (None, "M", "F"):
            raise DataError(f"sex must be M, F or missing, got {self.sex!r} for {self.id}")


@dataclass(frozen=True, eq=False)
class FeatureTable:
    """Patients x features matrix; NaN marks a missing value."""

    ids: tuple[str, ...]
    names: tuple[str, ...]
    values: np.ndarray
    groups: tuple[str, ...] = field(default=())

    def __post_init__(self):
        ids = tuple(str(i) for i in self.ids)
        names = tuple(str(n) for n in self.names)
        vals = np.asarray(self.values, dtype=np.float64)
        if vals.ndim == 1 and len(ids) == 0:
            vals = vals.reshape(0, len(names))
        if vals.shape != (len(ids), len(names)):
            raise DataError(f"values shape {vals.shape} != ({len(ids)}, {len(names)})")
        if len(set(ids)) != len(ids):
            dup = sorted({i for i in ids if ids.count(i) > 1})
            raise DataError(f"duplicate patient ids: {dup}")
        if len(set(names)) != len(names):
            dup = sorted({n for n in names if names.count(n) > 1})
            raise DataError(f"duplicate feature names: {dup}")
        groups = tuple(self.groups) if self.groups else tuple(_guess_group(n) for n in names)
        if len(groups) != len(names):
            raise DataError("every feature needs a group tag")
        imaging = [n for n, g in zip(names, groups) if g in IMAGING_GROUPS]
        if len(imaging) == len(canonical_feature_names()) and imaging != canonical_feature_names():
            raise DataError("imaging block is not in canonical order")
        object.__setattr__(self, "ids", ids)
        object.__setattr__(self, "names", names)
        object.__setattr__(self, "values", _freeze(vals))
        object.__setattr__(self, "groups", groups)

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    def column(self, name: str) -> np.ndarray:
        return self.values[:, self.names.index(name)]

    def select_rows(self, ids) -> "FeatureTable":
        pos = {i: k for k, i in enumerate(self.ids)}
        try:
            rows = [pos[i] for i in ids]
        except KeyError as exc:
            raise DataError(f"patient {exc.args[0]!r} not in feature table") from None
        return FeatureTable(tuple(ids), self.names, self.values[rows], self.groups)

    def select_columns(self, names) -> "FeatureTable":
        pos = {n: k for k, n in enumerate(self.names)}
        cols = [pos[n] for n in names]
        return FeatureTable(self.ids, tuple(names), self.values[:, cols], tuple(self.groups[c] for c in cols))

    def select_groups(self, groups) -> "FeatureTable":
        keep = set(groups)
        return self.select_columns([n for n, g in zip(self.names, self.groups) if g in keep])

    def hstack(self, other: "FeatureTable") -> "FeatureTable":
        if other.ids != self.ids:
            other = other.select_rows(self.ids)
        return FeatureTable(
            self.ids,
            self.names + other.names,
            np.hstack([self.values, other.values]),
            self.groups + other.groups,
        )

    def __eq__(self, other):
        if not isinstance(other, FeatureTable):
            return NotImplemented
        return (
            self.ids == other.ids
            and self.names == other.names
            and self.groups == other.groups
            and np.array_equal(self.values, other.values, equal_nan=True)
        )

    __hash__ = None


def _guess_group(name: str) -> str:
    try:
        return group_of(name)
    except KeyError:
        return "other"
