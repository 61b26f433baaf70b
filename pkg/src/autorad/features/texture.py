"""Gray-level texture matrices computed per axial slice.

All matrices are built on a single quantization of the pooled 3-D ROI.
Pixels outside the mask carry level -1 and never take part in a pair,
run, zone or neighbourhood.
"""
from __future__ import annotations

import numpy as np
from scipy import ndimage

from ..core.names import GLCM_ANGLES, GLCM_DISTANCES, GLCM_FEATURES
from ..core.types import DataError, ImageVolume, RoiMask, check_pair
from .firstorder import quantize

N_LEVELS = 16

# (dx, dy) unit steps in [x, y] index space
ANGLE_STEPS = {0: (1, 0), 45: (1, 1), 90: (0, 1), 135: (-1, 1)}
_NEIGHBOURS8 = [(dx, dy) for dx in (-1, 0, 1) for dy in (-1, 0, 1) if (dx, dy) != (0, 0)]


def quantized_levels(image: ImageVolume, mask: RoiMask, n_levels: int = N_LEVELS) -> np.ndarray:
    """Integer level volume, -1 outside the mask."""
    check_pair(image, mask)
    m = mask.voxels
    if not m.any():
        raise DataError("empty mask")
    lev = np.full(m.shape, -1, dtype=np.intp)
    lev[m] = quantize(image.voxels[m].astype(np.float64), n_levels)
    return lev


def _roi_slices(lev: np.ndarray):
    for z in range(lev.shape[2]):
        sl = lev[:, :, z]
        if (sl >= 0).any():
            yield sl


def _shift(sl: np.ndarray, dx: int, dy: int) -> np.ndarray:
    """``out[x, y] = sl[x + dx, y + dy]``, -1 where that falls outside the slice."""
    nx, ny = sl.shape
    out = np.full_like(sl, -1)
    xs = slice(max(0, -dx), min(nx, nx - dx))
    ys = slice(max(0, -dy), min(ny, ny - dy))
    xd = slice(max(0, dx), min(nx, nx + dx))
    yd = slice(max(0, dy), min(ny, ny + dy))
    if xs.start < xs.stop and ys.start < ys.stop:
        out[xs, ys] = sl[xd, yd]
    return out


# --------------------------------------------------------------------------- GLCM

def glcm_slice(sl: np.ndarray, dx: int, dy: int, n_levels: int) -> np.ndarray:
    """Symmetric co-occurrence counts for one offset on one slice."""
    other = _shift(sl, dx, dy)
    ok = (sl >= 0) & (other >= 0)
    a, b = sl[ok], other[ok]
    P = np.bincount(a * n_levels + b, minlength=n_levels * n_levels).reshape(n_levels, n_levels)
    return (P + P.T).astype(np.float64)


def haralick(P: np.ndarray) -> np.ndarray:
    """contrast, dissimilarity, homogeneity, ASM, energy, correlation of a count matrix."""
    total = P.sum()
    if total <= 0:
        return np.full(len(GLCM_FEATURES), np.nan)
    p = P / total
    n = p.shape[0]
    i, j = np.indices((n, n), dtype=np.float64)
    diff = i - j
    contrast = np.sum(p * diff**2)
    dissim = np.sum(p * np.abs(diff))
    homog = np.sum(p / (1.0 + diff**2))
    asm = np.sum(p * p)
    energy = np.sqrt(asm)
    mu_i, mu_j = np.sum(i * p), np.sum(j * p)
    var_i = np.sum(p * (i - mu_i) ** 2)
    var_j = np.sum(p * (j - mu_j) ** 2)
    if var_i <= 1e-15 or var_j <= 1e-15:
        corr = np.nan
    else:
        corr = np.sum(p * (i - mu_i) * (j - mu_j)) / np.sqrt(var_i * var_j)
    return np.array([contrast, dissim, homog, asm, energy, corr])


def glcm_features_from_levels(lev: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    slices = list(_roi_slices(lev))
    # results[(d, a)] = (normal[6], ms_mean[6], ms_std[6])
    results = {}
    any_pair = False
    for d in GLCM_DISTANCES:
        for a in GLCM_ANGLES:
            ux, uy = ANGLE_STEPS[a]
            total = np.zeros((n_levels, n_levels))
            per_slice = []
            for sl in slices:
                P = glcm_slice(sl, ux * d, uy * d, n_levels)
                if P.sum() > 0:
                    total += P
                    per_slice.append(haralick(P))
            if per_slice:
                any_pair = True
                ps = np.array(per_slice)
                with np.errstate(all="ignore"):
                    ms_mean = np.array([np.nanmean(c) if np.isfinite(c).any() else np.nan for c in ps.T])
                    ms_std = np.array([np.nanstd(c) if np.isfinite(c).any() else np.nan for c in ps.T])
                results[(d, a)] = (haralick(total), ms_mean, ms_std)
            else:
                nan = np.full(len(GLCM_FEATURES), np.nan)
                results[(d, a)] = (nan, nan, nan)
    if not any_pair:
        raise DataError("no valid pixel pair in any slice")
    out = []
    for f in range(len(GLCM_FEATURES)):
        for d in GLCM_DISTANCES:
            for a in GLCM_ANGLES:
                normal, ms_mean, ms_std = results[(d, a)]
                out += [normal[f], ms_mean[f], ms_std[f]]
    return np.array(out)


def glcm_features(image: ImageVolume, mask: RoiMask, n_levels: int = N_LEVELS) -> np.ndarray:
    """144 co-occurrence features in canonical order."""
    return glcm_features_from_levels(quantized_levels(image, mask, n_levels), n_levels)


# --------------------------------------------------------------------------- GLRLM

def _lines(sl: np.ndarray, angle: int) -> list[np.ndarray]:
    if angle == 0:
        return list(sl.T)
    if angle == 90:
        return list(sl)
    src = sl if angle == 45 else sl[::-1, :]
    return [np.diagonal(src, k) for k in range(-src.shape[0] + 1, src.shape[1])]


def _run_lengths(line: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(levels, lengths) of maximal constant runs of non-negative entries."""
    if line.size == 0:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    change = np.flatnonzero(np.diff(line)) + 1
    starts = np.r_[0, change]
    ends = np.r_[change, line.size]
    vals = line[starts]
    keep = vals >= 0
    return vals[keep], (ends - starts)[keep]


def glrlm_slice(sl: np.ndarray, angle: int) -> tuple[np.ndarray, np.ndarray]:
    sep = np.array([-1], dtype=sl.dtype)
    joined = np.concatenate([np.concatenate([ln, sep]) for ln in _lines(sl, angle)])
    return _run_lengths(joined)


def glrlm_matrix(lev: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    """Run-length counts summed over the four angles and all slices."""
    max_len = max(lev.shape[0], lev.shape[1])
    P = np.zeros((n_levels, max_len))
    for sl in _roi_slices(lev):
        for a in GLCM_ANGLES:
            vals, lens = glrlm_slice(sl, a)
            np.add.at(P, (vals, lens - 1), 1)
    return P


def _size_matrix_features(P: np.ndarray, n_units: float) -> dict[str, float]:
    """Shared run/zone statistics; j indexes run length or zone size."""
    Nr = P.sum()
    ng, nj = P.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = np.arange(1, nj + 1, dtype=np.float64)[None, :]
    p = P / Nr
    pi = P.sum(axis=1)
    pj = P.sum(axis=0)
    mu_i = np.sum(p * i)
    mu_j = np.sum(p * j)
    nz = p[p > 0]
    return {
        "gln": np.sum(pi**2) / Nr,
        "glnn": np.sum(pi**2) / Nr**2,
        "glv": np.sum(p * (i - mu_i) ** 2),
        "hgle": np.sum(p * i**2),
        "le": np.sum(p * j**2),
        "lhgle": np.sum(p * i**2 * j**2),
        "llgle": np.sum(p * j**2 / i**2),
        "lgle": np.sum(p / i**2),
        "entropy": -np.sum(nz * np.log2(nz)),
        "sn": np.sum(pj**2) / Nr,
        "snn": np.sum(pj**2) / Nr**2,
        "percentage": Nr / n_units,
        "var": np.sum(p * (j - mu_j) ** 2),
        "se": np.sum(p / j**2),
        "shgle": np.sum(p * i**2 / j**2),
        "slgle": np.sum(p / (i**2 * j**2)),
    }


def glrlm_features_from_matrix(P: np.ndarray) -> np.ndarray:
    if P.sum() <= 0:
        return np.full(16, np.nan)
    run_units = np.sum(P * np.arange(1, P.shape[1] + 1))  # pixels x angles
    f = _size_matrix_features(P, run_units)
    return np.array(
        [f["gln"], f["glnn"], f["glv"], f["hgle"], f["le"], f["lhgle"], f["llgle"], f["lgle"],
         f["entropy"], f["sn"], f["snn"], f["percentage"], f["var"], f["se"], f["shgle"], f["slgle"]]
    )


# --------------------------------------------------------------------------- GLSZM

_STRUCT8 = np.ones((3, 3), dtype=bool)


def glszm_slice(sl: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(levels, sizes) of 8-connected equal-level zones in one slice."""
    levels, sizes = [], []
    for g in np.unique(sl[sl >= 0]):
        lab, n = ndimage.label(sl == g, structure=_STRUCT8)
        sz = np.bincount(lab.ravel())[1:]
        levels.append(np.full(n, g))
        sizes.append(sz)
    if not levels:
        return np.empty(0, np.intp), np.empty(0, np.intp)
    return np.concatenate(levels), np.concatenate(sizes)


def glszm_matrix(lev: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    max_size = lev.shape[0] * lev.shape[1]
    P = np.zeros((n_levels, max_size))
    for sl in _roi_slices(lev):
        vals, sizes = glszm_slice(sl)
        np.add.at(P, (vals, sizes - 1), 1)
    return P


def glszm_features_from_matrix(P: np.ndarray, n_pixels: int) -> np.ndarray:
    if P.sum() <= 0:
        return np.full(16, np.nan)
    f = _size_matrix_features(P, n_pixels)
    return np.array(
        [f["gln"], f["glnn"], f["glv"], f["hgle"], f["le"], f["lhgle"], f["llgle"], f["lgle"],
         f["sn"], f["snn"], f["se"], f["shgle"], f["slgle"], f["entropy"], f["percentage"], f["var"]]
    )


# --------------------------------------------------------------------------- GLDM

def gldm_slice(sl: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(levels, dependence) per in-mask pixel; dependence = 1 + equal-level neighbours."""
    inside = sl >= 0
    dep = np.ones(sl.shape, dtype=np.intp)
    for dx, dy in _NEIGHBOURS8:
        dep += (_shift(sl, dx, dy) == sl) & inside
    return sl[inside], dep[inside]


def gldm_matrix(lev: np.ndarray, n_levels: int = N_LEVELS) -> np.ndarray:
    P = np.zeros((n_levels, 9))
    for sl in _roi_slices(lev):
        vals, dep = gldm_slice(sl)
        np.add.at(P, (vals, dep - 1), 1)
    return P


def gldm_features_from_matrix(P: np.ndarray) -> np.ndarray:
    Nz = P.sum()
    if Nz <= 0:
        return np.full(14, np.nan)
    ng, nj = P.shape
    i = np.arange(1, ng + 1, dtype=np.float64)[:, None]
    j = np.arange(1, nj + 1, dtype=np.float64)[None, :]
    p = P / Nz
    pi, pj = P.sum(axis=1), P.sum(axis=0)
    mu_i, mu_j = np.sum(p * i), np.sum(p * j)
    nz = p[p > 0]
    return np.array(
        [
            -np.sum(nz * np.log2(nz)),
            np.sum(pj**2) / Nz,
            np.sum(pj**2) / Nz**2,
            np.sum(p * (j - mu_j) ** 2),
            np.sum(pi**2) / Nz,
            np.sum(p * (i - mu_i) ** 2),
            np.sum(p * i**2),
            np.sum(p * j**2),
            np.sum(p * i**2 * j**2),
            np.sum(p * j**2 / i**2),
            np.sum(p / i**2),
            np.sum(p / j**2),
            np.sum(p * i**2 / j**2),
            np.sum(p / (i**2 * j**2)),
        ]
    )


# --------------------------------------------------------------------------- NGTDM

def ngtdm_slice(sl: np.ndarray, n_levels: int) -> tuple[np.ndarray, np.ndarray]:
    """Per-level (count, sum |i - neighbourhood mean|) for one slice."""
    inside = sl >= 0
    total = np.zeros(sl.shape)
    count = np.zeros(sl.shape)
    for dx, dy in _NEIGHBOURS8:
        nb = _shift(sl, dx, dy)
        ok = nb >= 0
        total += np.where(ok, nb, 0)
        count += ok
    valid = inside & (count > 0)
    lv = sl[valid]
    avg = total[valid] / count[valid]
    n = np.bincount(lv, minlength=n_levels).astype(np.float64)
    s = np.bincount(lv, weights=np.abs(lv - avg), minlength=n_levels)
    return n, s


def ngtdm_features_from_vectors(n: np.ndarray, s: np.ndarray) -> np.ndarray:
    """Busyness, coarseness, complexity, contrast, strength."""
    nvp = n.sum()
    if nvp <= 0:
        return np.full(5, np.nan)
    p = n / nvp
    present = p > 0
    g = np.arange(1, len(n) + 1, dtype=np.float64)[present]
    pp, sp = p[present], s[present]
    ngp = len(pp)
    ps_sum = np.sum(pp * sp)
    coarseness = 1.0 / ps_sum if ps_sum > 0 else np.nan

    gi, gj = g[:, None], g[None, :]
    pi, pj = pp[:, None], pp[None, :]
    si, sj = sp[:, None], sp[None, :]
    if ngp > 1:
        contrast = np.sum(pi * pj * (gi - gj) ** 2) / (ngp * (ngp - 1)) * (sp.sum() / nvp)
    else:
        contrast = 0.0
    denom = np.sum(np.abs(gi * pi - gj * pj))
    busyness = ps_sum / denom if denom > 0 else np.nan
    complexity = np.sum(np.abs(gi - gj) * (pi * si + pj * sj) / (pi + pj)) / nvp
    strength = np.sum((pi + pj) * (gi - gj) ** 2) / sp.sum() if sp.sum() > 0 else np.nan
    return np.array([busyness, coarseness, complexity, contrast, strength])


def ngtdm_vectors(lev: np.ndarray, n_levels: int = N_LEVELS):
    n = np.zeros(n_levels)
    s = np.zeros(n_levels)
    for sl in _roi_slices(lev):
        dn, ds = ngtdm_slice(sl, n_levels)
        n += dn
        s += ds
    return n, s


# --------------------------------------------------------------------------- combined

def matrix_family_features(image: ImageVolume, mask: RoiMask, n_levels: int = N_LEVELS) -> dict[str, np.ndarray]:
    """GLSZM (16), GLRLM (16), GLDM (14) and NGTDM (5) features."""
    lev = quantized_levels(image, mask, n_levels)
    return matrix_family_features_from_levels(lev, n_levels)


def matrix_family_features_from_levels(lev: np.ndarray, n_levels: int = N_LEVELS) -> dict[str, np.ndarray]:
    n_pixels = int((lev >= 0).sum())
    return {
        "GLSZM": glszm_features_from_matrix(glszm_matrix(lev, n_levels), n_pixels),
        "GLRLM": glrlm_features_from_matrix(glrlm_matrix(lev, n_levels)),
        "GLDM": gldm_features_from_matrix(gldm_matrix(lev, n_levels)),
        "NGTDM": ngtdm_features_from_vectors(*ngtdm_vectors(lev, n_levels)),
    }
