"""Quantization and first-order statistics."""
from __future__ import annotations

import numpy as np

from ..core.names import STAT_NAMES
from ..core.types import DataError, ImageVolume, RoiMask, check_pair

N_HIST_BINS = 50


def quantize(values, n_levels: int = 16) -> np.ndarray:
    """Equal-width binning between min and max into levels ``0..n_levels-1``.

    The maximum value is clamped into the top bin; a constant input maps to
    level 0.
    """
    v = np.asarray(values, dtype=np.float64)
    if v.size == 0:
        raise DataError("cannot quantize an empty set of values")
    lo, hi = v.min(), v.max()
    if hi <= lo:
        return np.zeros(v.shape, dtype=np.intp)
    width = (hi - lo) / n_levels
    lev = np.floor((v - lo) / width).astype(np.intp)
    return np.clip(lev, 0, n_levels - 1)


def stats13(values) -> np.ndarray:
    """The 13 first-order statistics, ordered as ``STAT_NAMES``.

    Moments use the population (biased) estimators; kurtosis is excess
    kurtosis.  Skewness and kurtosis are 0 when the standard deviation is 0.
    Peak, peak position and entropy come from a 50-bin histogram spanning
    the value range.
    """
    v = np.asarray(values, dtype=np.float64).ravel()
    if v.size == 0:
        raise DataError("stats13 needs at least one value")
    vmin, vmax = v.min(), v.max()
    mean = v.mean()
    dev = v - mean
    var = np.mean(dev * dev)
    std = np.sqrt(var)
    if std > 0 and std > 1e-12 * max(abs(mean), 1.0):
        m3 = np.mean(dev**3)
        m4 = np.mean(dev**4)
        skew = m3 / var**1.5
        kurt = m4 / var**2 - 3.0
    else:
        std, skew, kurt = 0.0, 0.0, 0.0
    p25, median, p75 = np.percentile(v, [25, 50, 75])
    if vmax > vmin:
        counts, edges = np.histogram(v, bins=N_HIST_BINS, range=(vmin, vmax))
        k = int(np.argmax(counts))
        peak = float(counts[k])
        peak_pos = 0.5 * (edges[k] + edges[k + 1])
        p = counts[counts > 0] / v.size
        entropy = float(-np.sum(p * np.log2(p)))
    else:
        peak, peak_pos, entropy = float(v.size), vmin, 0.0
    return np.array(
        [
            vmin,
            vmax,
            mean,
            median,
            std,
            skew,
            kurt,
            peak,
            peak_pos,
            vmax - vmin,
            float(np.dot(v, v)),
            p75 - p25,
            entropy,
        ],
        dtype=np.float64,
    )


def stats13_dict(values) -> dict[str, float]:
    return dict(zip(STAT_NAMES, stats13(values)))


def histogram_features(image: ImageVolume, mask: RoiMask) -> np.ndarray:
    check_pair(image, mask)
    return stats13(image.voxels[mask.voxels].astype(np.float64))
