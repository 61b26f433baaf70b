from .clinical import clinical_table
from .extract import extract_all, extract_families, extract_row, extract_table, feature_names_for, volume_ml
from .filters import filter_bank_features
from .firstorder import histogram_features, quantize, stats13
from .shape import orientation_features, shape_features
from .texture import glcm_features, matrix_family_features

__all__ = [
    "clinical_table",
    "extract_all",
    "extract_families",
    "extract_row",
    "extract_table",
    "feature_names_for",
    "filter_bank_features",
    "glcm_features",
    "histogram_features",
    "matrix_family_features",
    "orientation_features",
    "quantize",
    "shape_features",
    "stats13",
    "volume_ml",
]
