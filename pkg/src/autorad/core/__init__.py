from .io import (
    read_feature_table,
    read_image,
    read_manifest,
    read_mask,
    write_feature_table,
    write_image,
    write_manifest,
    write_mask,
)
from .names import canonical_feature_names, expand_groups, family_feature_names, group_of
from .types import DataError, FeatureTable, ImageVolume, PatientRecord, RoiMask, check_pair

__all__ = [
    "DataError",
    "FeatureTable",
    "ImageVolume",
    "PatientRecord",
    "RoiMask",
    "canonical_feature_names",
    "check_pair",
    "expand_groups",
    "family_feature_names",
    "group_of",
    "read_feature_table",
    "read_image",
    "read_manifest",
    "read_mask",
    "write_feature_table",
    "write_image",
    "write_manifest",
    "write_mask",
]
