"""Clinical covariates from the manifest as ordinary tagged feature columns."""
from __future__ import annotations

import math

import numpy as np

from ..core.names import AGE_FEATURE, LOCATION_PREFIX, SEX_FEATURE, expand_groups
from ..core.types import FeatureTable


def clinical_table(records, groups=("clinical",), location_codes=None) -> FeatureTable:
    """Age, sex (M=1, F=0) and one-hot location columns for ``records``.

    Missing manifest cells become NaN; a missing location is NaN in every
    location column.  Location codes are sorted so the column order only
    depends on the set of codes present; pass ``location_codes`` to fix the
    columns instead (as a trained model expects).
    """
    tags = set(expand_groups(groups))
    names, cols, col_groups = [], [], []
    if "clinical-age" in tags:
        names.append(AGE_FEATURE)
        col_groups.append("clinical-age")
        cols.append([math.nan if r.age is None else float(r.age) for r in records])
    if "clinical-sex" in tags:
        names.append(SEX_FEATURE)
        col_groups.append("clinical-sex")
        cols.append([math.nan if r.sex is None else float(r.sex == "M") for r in records])
    if "clinical-location" in tags:
        if location_codes is None:
            location_codes = sorted({r.location for r in records if r.location is not None})
        for code in location_codes:
            names.append(LOCATION_PREFIX + code)
            col_groups.append("clinical-location")
            cols.append([math.nan if r.location is None else float(r.location == code) for r in records])
    values = np.array(cols, dtype=np.float64).T if cols else np.zeros((len(records), 0))
    return FeatureTable([r.id for r in records], names, values, tuple(col_groups))
