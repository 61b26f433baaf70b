"""Canonical feature dictionary.

Every imaging feature has a fixed name and a group tag.  The group tag is
recoverable from the name alone, so feature tables stored as plain CSV do
not need a side channel for tags.
"""
from __future__ import annotations

from functools import lru_cache

STAT_NAMES = (
    "min",
    "max",
    "mean",
    "median",
    "std",
    "skewness",
    "kurtosis",
    "peak",
    "peak_position",
    "range",
    "energy",
    "quartile_range",
    "entropy",
)

GLCM_FEATURES = ("contrast", "dissimilarity", "homogeneity", "ASM", "energy", "correlation")
GLCM_ANGLES = (0, 45, 90, 135)
GLCM_DISTANCES = (1, 3)

GLSZM_FEATURES = (
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "GrayLevelVariance",
    "HighGrayLevelZoneEmphasis",
    "LargeAreaEmphasis",
    "LargeAreaHighGrayLevelEmphasis",
    "LargeAreaLowGrayLevelEmphasis",
    "LowGrayLevelZoneEmphasis",
    "SizeZoneNonUniformity",
    "SizeZoneNonUniformityNormalized",
    "SmallAreaEmphasis",
    "SmallAreaHighGrayLevelEmphasis",
    "SmallAreaLowGrayLevelEmphasis",
    "ZoneEntropy",
    "ZonePercentage",
    "ZoneVariance",
)

GLRLM_FEATURES = (
    "GrayLevelNonUniformity",
    "GrayLevelNonUniformityNormalized",
    "GrayLevelVariance",
    "HighGrayLevelRunEmphasis",
    "LongRunEmphasis",
    "LongRunHighGrayLevelEmphasis",
    "LongRunLowGrayLevelEmphasis",
    "LowGrayLevelRunEmphasis",
    "RunEntropy",
    "RunLengthNonUniformity",
    "RunLengthNonUniformityNormalized",
    "RunPercentage",
    "RunVariance",
    "ShortRunEmphasis",
    "ShortRunHighGrayLevelEmphasis",
    "ShortRunLowGrayLevelEmphasis",
)

GLDM_FEATURES = (
    "DependenceEntropy",
    "DependenceNonUniformity",
    "DependenceNonUniformityNormalized",
    "DependenceVariance",
    "GrayLevelNonUniformity",
    "GrayLevelVariance",
    "HighGrayLevelEmphasis",
    "LargeDependenceEmphasis",
    "LargeDependenceHighGrayLevelEmphasis",
    "LargeDependenceLowGrayLevelEmphasis",
    "LowGrayLevelEmphasis",
    "SmallDependenceEmphasis",
    "SmallDependenceHighGrayLevelEmphasis",
    "SmallDependenceLowGrayLevelEmphasis",
)

NGTDM_FEATURES = ("Busyness", "Coarseness", "Complexity", "Contrast", "Strength")

SHAPE_2D_DESCRIPTORS = (
    "compactness",
    "rad_dist",
    "roughness",
    "convexity",
    "cvar",
    "prax",
    "evar",
    "solidity",
)

SHAPE_3D_FEATURES = (
    "sf_area_avg_2D",
    "sf_area_std_2D",
    "sf_area_min_2D",
    "sf_area_max_2D",
    "sf_volume_total",
    "sf_volume_mesh",
    "sf_volume_voxel",
    "sf_shape_Elongation",
    "sf_shape_Flatness",
    "sf_shape_LeastAxisLength",
    "sf_shape_MajorAxisLength",
    "sf_shape_MinorAxisLength",
    "sf_shape_Maximum3DDiameter",
    "sf_shape_Maximum2DDiameterRow",
    "sf_shape_Maximum2DDiameterColumn",
    "sf_shape_Maximum2DDiameterSlice",
    "sf_shape_Sphericity",
    "sf_shape_SurfaceArea",
    "sf_shape_SurfaceVolumeRatio",
)

ORIENTATION_FEATURES = (
    "of_theta_x",
    "of_theta_y",
    "of_theta_z",
    "of_COM_Index_x",
    "of_COM_Index_y",
    "of_COM_Index_z",
    "of_COM_x",
    "of_COM_y",
    "of_COM_z",
)

LBP_PARAMS = ((1, 8), (2, 12), (3, 16))  # (radius, neighbours)
GABOR_FREQUENCIES = (0.05, 0.2, 0.5)
GABOR_ANGLES = (0.0, 0.79, 1.57, 2.36)  # radians, as printed in labels
LOG_SIGMAS = (1.0, 5.0, 10.0)
VESSEL_REGIONS = ("full", "edge", "inner")
VESSEL_LABEL = "SR(1.0. 10.0)_SS2.0"
PHASE_KINDS = ("monogenic", "phasecong", "phasesym")

# Imaging families in canonical order, with their expected sizes.
FAMILY_SIZES = {
    "histogram": 13,
    "shape": 35,
    "orientation": 9,
    "GLCM": 144,
    "GLSZM": 16,
    "GLRLM": 16,
    "GLDM": 14,
    "NGTDM": 5,
    "LBP": 39,
    "Gabor": 156,
    "LoG": 39,
    "vessel": 39,
    "local-phase": 39,
}
IMAGING_GROUPS = tuple(FAMILY_SIZES)

CLINICAL_GROUPS = ("clinical-age", "clinical-sex", "clinical-location")
VOLUME_GROUP = "volume"
ALL_GROUPS = IMAGING_GROUPS + CLINICAL_GROUPS + (VOLUME_GROUP,)

# Short aliases accepted wherever a list of groups is given.
GROUP_ALIASES = {
    "imaging": IMAGING_GROUPS,
    "age": ("clinical-age",),
    "sex": ("clinical-sex",),
    "location": ("clinical-location",),
    "clinical": CLINICAL_GROUPS,
    "volume": (VOLUME_GROUP,),
    "all": ALL_GROUPS,
}

VOLUME_FEATURE = "volf_volume_ml"
AGE_FEATURE = "semf_age"
SEX_FEATURE = "semf_sex"
LOCATION_PREFIX = "semf_location_"


def _family_names() -> dict[str, list[str]]:
    fam: dict[str, list[str]] = {}
    fam["histogram"] = [f"hf_{s}" for s in STAT_NAMES]

    shape = []
    for d in SHAPE_2D_DESCRIPTORS:
        shape += [f"sf_{d}_avg_2D", f"sf_{d}_std_2D"]
    fam["shape"] = shape + list(SHAPE_3D_FEATURES)

    fam["orientation"] = list(ORIENTATION_FEATURES)

    glcm = []
    for feat in GLCM_FEATURES:
        for d in GLCM_DISTANCES:
            for a in GLCM_ANGLES:
                glcm.append(f"tf_GLCM_{feat}d{d:.1f}A{a}")
                glcm.append(f"tf_GLCMMS_{feat}d{d:.1f}A{a}mean")
                glcm.append(f"tf_GLCMMS_{feat}d{d:.1f}A{a}std")
    fam["GLCM"] = glcm

    fam["GLSZM"] = [f"tf_GLSZM_{f}" for f in GLSZM_FEATURES]
    fam["GLRLM"] = [f"tf_GLRLM_{f}" for f in GLRLM_FEATURES]
    fam["GLDM"] = [f"tf_GLDM_{f}" for f in GLDM_FEATURES]
    fam["NGTDM"] = [f"tf_NGTDM_{f}" for f in NGTDM_FEATURES]
    fam["LBP"] = [f"tf_LBP_{s}_R{r}_P{p}" for r, p in LBP_PARAMS for s in STAT_NAMES]
    fam["Gabor"] = [
        f"tf_Gabor_{s}_F{f}_A{a}" for f in GABOR_FREQUENCIES for a in GABOR_ANGLES for s in STAT_NAMES
    ]
    fam["LoG"] = [f"logf_{s}_sigma{sg:.0f}" for sg in LOG_SIGMAS for s in STAT_NAMES]
    fam["vessel"] = [f"vf_Frangi_{r}_{s}_{VESSEL_LABEL}" for r in VESSEL_REGIONS for s in STAT_NAMES]
    fam["local-phase"] = [f"phasef_{k}_{s}" for k in PHASE_KINDS for s in STAT_NAMES]
    return fam


@lru_cache(maxsize=1)
def _cached() -> tuple[tuple[str, ...], dict[str, str], dict[str, tuple[str, ...]]]:
    fam = _family_names()
    names: list[str] = []
    tags: dict[str, str] = {}
    for group in IMAGING_GROUPS:
        for n in fam[group]:
            names.append(n)
            tags[n] = group
    return tuple(names), tags, {g: tuple(v) for g, v in fam.items()}


def canonical_feature_names() -> list[str]:
    """The 564 imaging feature names in canonical order."""
    return list(_cached()[0])


def family_feature_names(group: str) -> list[str]:
    return list(_cached()[2][group])


def group_of(name: str) -> str:
    """Group tag of a feature name; raises KeyError for unknown names."""
    tags = _cached()[1]
    if name in tags:
        return tags[name]
    if name == VOLUME_FEATURE:
        return VOLUME_GROUP
    if name == AGE_FEATURE:
        return "clinical-age"
    if name == SEX_FEATURE:
        return "clinical-sex"
    if name.startswith(LOCATION_PREFIX):
        return "clinical-location"
    raise KeyError(f"unknown feature name: {name!r}")


def expand_groups(groups) -> tuple[str, ...]:
    """Resolve aliases ('imaging', 'age', ...) into a sorted-by-canonical tuple of tags."""
    out: set[str] = set()
    for g in groups:
        g = g.strip()
        if not g:
            continue
        if g in GROUP_ALIASES:
            out.update(GROUP_ALIASES[g])
        elif g in ALL_GROUPS:
            out.add(g)
        else:
            raise ValueError(f"unknown feature group: {g!r}")
    return tuple(g for g in ALL_GROUPS if g in out)
