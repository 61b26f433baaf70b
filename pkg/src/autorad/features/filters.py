"""Per-slice filter bank: LBP, Gabor, LoG, Frangi vesselness and local phase.

Every filter runs on an axial slice cropped to the ROI bounding box plus
``MARGIN`` pixels.  The margin covers the largest spatial support in the
bank (LoG at sigma 10 truncated at 4 sigma), so spatial filters give the
same in-mask response as on the full slice.  Image borders are handled by
mirror padding.
"""
from __future__ import annotations

import math
import warnings

import numpy as np
from scipy import ndimage
from scipy.signal import fftconvolve
from skimage.feature import local_binary_pattern
from skimage.filters import gabor_kernel

from ..core.names import GABOR_ANGLES, GABOR_FREQUENCIES, LBP_PARAMS, LOG_SIGMAS, PHASE_KINDS
from ..core.types import DataError, ImageVolume, RoiMask, check_pair
from .firstorder import stats13

MARGIN = 40
TRUNCATE = 4.0

FRANGI_SIGMAS = tuple(np.arange(1.0, 10.0, 2.0))  # scale range (1, 10), step 2
FRANGI_BETA = 0.5
FRANGI_ALPHA = 0.5  # plate-vs-line term; only used by 3-D vesselness, kept for the record

PHASE_NSCALE = 4
PHASE_MIN_WAVELENGTH = 3.0
PHASE_MULT = 2.1
PHASE_SIGMA_ON_F = 0.55
PHASE_EPS = 1e-4


def _pad(img: np.ndarray, r: int) -> np.ndarray:
    # numpy "reflect" is the mirror mode without edge repetition
    return np.pad(img, r, mode="reflect")


# --------------------------------------------------------------------------- kernels

def _gauss_1d(sigma: float):
    r = int(math.ceil(TRUNCATE * sigma))
    x = np.arange(-r, r + 1, dtype=np.float64)
    g = np.exp(-0.5 * x * x / sigma**2)
    g /= g.sum()
    d1 = -x / sigma**2 * g
    d2 = (x * x / sigma**4 - 1.0 / sigma**2) * g
    d2 -= g * d2.sum()  # exact zero response to constants
    return r, g, d1, d2


def _sep(img: np.ndarray, kx: np.ndarray, ky: np.ndarray) -> np.ndarray:
    out = ndimage.correlate1d(img, kx, axis=0, mode="nearest")
    return ndimage.correlate1d(out, ky, axis=1, mode="nearest")


def hessian_2d(img: np.ndarray, sigma: float):
    """Scale-normalised Hessian (hxx, hxy, hyy) with mirror borders."""
    r, g, d1, d2 = _gauss_1d(sigma)
    p = _pad(img, r)
    core = (slice(r, r + img.shape[0]), slice(r, r + img.shape[1]))
    s2 = sigma**2
    hxx = _sep(p, d2, g)[core] * s2
    hyy = _sep(p, g, d2)[core] * s2
    hxy = _sep(p, d1, d1)[core] * s2
    return hxx, hxy, hyy


def log_filter(img: np.ndarray, sigma: float) -> np.ndarray:
    """Scale-normalised Laplacian of Gaussian."""
    hxx, _, hyy = hessian_2d(img, sigma)
    return hxx + hyy


_GABOR_CACHE: dict = {}


def _gabor(frequency: float, theta: float) -> np.ndarray:
    key = (frequency, theta)
    if key not in _GABOR_CACHE:
        k = gabor_kernel(frequency, theta=theta)
        env = np.abs(k)
        # remove the DC component so constant regions give zero response
        re = k.real - env * (k.real.sum() / env.sum())
        im = k.imag - env * (k.imag.sum() / env.sum())
        _GABOR_CACHE[key] = re + 1j * im
    return _GABOR_CACHE[key]


def gabor_magnitude(img: np.ndarray, frequency: float, theta: float) -> np.ndarray:
    k = _gabor(frequency, theta)
    r = max(k.shape) // 2
    p = _pad(img, r)
    re = fftconvolve(p, k.real, mode="valid")
    im = fftconvolve(p, k.imag, mode="valid")
    rx = (re.shape[0] - img.shape[0]) // 2
    ry = (re.shape[1] - img.shape[1]) // 2
    mag = np.hypot(re, im)
    return mag[rx : rx + img.shape[0], ry : ry + img.shape[1]]


def frangi_2d(img: np.ndarray, sigmas=FRANGI_SIGMAS, beta: float = FRANGI_BETA) -> np.ndarray:
    """Bright-ridge Frangi vesselness, maximum over scales.

    The structureness constant is half the largest Hessian norm at each scale.
    """
    scale = float(np.max(np.abs(img))) + 1.0
    out = np.zeros(img.shape)
    for sigma in sigmas:
        hxx, hxy, hyy = hessian_2d(img, sigma)
        tmp = np.sqrt((hxx - hyy) ** 2 + 4 * hxy**2)
        mu1 = 0.5 * (hxx + hyy + tmp)
        mu2 = 0.5 * (hxx + hyy - tmp)
        swap = np.abs(mu1) > np.abs(mu2)
        l1 = np.where(swap, mu2, mu1)  # |l1| <= |l2|
        l2 = np.where(swap, mu1, mu2)
        s = np.sqrt(l1**2 + l2**2)
        smax = s.max()
        if smax <= 1e-9 * scale:
            continue
        c = 0.5 * smax
        with np.errstate(divide="ignore", invalid="ignore"):
            rb = np.where(l2 != 0, l1 / l2, 0.0)
        v = np.exp(-(rb**2) / (2 * beta**2)) * (1.0 - np.exp(-(s**2) / (2 * c**2)))
        v[l2 >= 0] = 0.0
        np.maximum(out, v, out=out)
    return out


def monogenic_channels(img: np.ndarray) -> dict[str, np.ndarray]:
    """Monogenic phase, phase congruency and phase symmetry via log-Gabor + Riesz filters."""
    r = PHASE_NSCALE * 8
    p = _pad(img.astype(np.float64), r)
    nx, ny = p.shape
    u = np.fft.fftfreq(nx)[:, None]
    v = np.fft.fftfreq(ny)[None, :]
    radius = np.sqrt(u * u + v * v)
    radius[0, 0] = 1.0
    h1 = 1j * u / radius
    h2 = 1j * v / radius
    lowpass = 1.0 / (1.0 + (radius / 0.45) ** 30)
    F = np.fft.fft2(p)

    sum_f = np.zeros(p.shape)
    sum_h1 = np.zeros(p.shape)
    sum_h2 = np.zeros(p.shape)
    sum_amp = np.zeros(p.shape)
    sym = np.zeros(p.shape)
    log_sig = 2.0 * math.log(PHASE_SIGMA_ON_F) ** 2
    for s in range(PHASE_NSCALE):
        f0 = 1.0 / (PHASE_MIN_WAVELENGTH * PHASE_MULT**s)
        lg = np.exp(-(np.log(radius / f0) ** 2) / log_sig) * lowpass
        lg[0, 0] = 0.0
        band = F * lg
        f = np.fft.ifft2(band).real
        o1 = np.fft.ifft2(band * h1).real
        o2 = np.fft.ifft2(band * h2).real
        odd = np.sqrt(o1 * o1 + o2 * o2)
        sum_f += f
        sum_h1 += o1
        sum_h2 += o2
        sum_amp += np.sqrt(f * f + odd * odd)
        sym += np.abs(f) - odd

    core = (slice(r, r + img.shape[0]), slice(r, r + img.shape[1]))
    odd_sum = np.sqrt(sum_h1**2 + sum_h2**2)
    phase = np.arctan2(odd_sum, sum_f)
    phase[(odd_sum == 0) & (sum_f == 0)] = 0.0
    energy = np.sqrt(sum_f**2 + odd_sum**2)
    pc = energy / (sum_amp + PHASE_EPS)
    ps = np.maximum(sym, 0.0) / (sum_amp + PHASE_EPS)
    return {"monogenic": phase[core], "phasecong": pc[core], "phasesym": ps[core]}


def lbp(img: np.ndarray, radius: int, points: int) -> np.ndarray:
    # mirror padding so border pixels see image content rather than zeros
    r = radius + 1
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        codes = local_binary_pattern(_pad(img.astype(np.float64), r), points, radius, method="uniform")
    return codes[r:-r, r:-r]


# --------------------------------------------------------------------------- extraction

def roi_fill(img: np.ndarray, msl: np.ndarray) -> np.ndarray:
    """Copy of ``img`` whose out-of-mask pixels take the nearest in-mask value.

    Filter responses then depend on the ROI voxels alone.
    """
    _, (ix, iy) = ndimage.distance_transform_edt(~msl, return_indices=True)
    return img[ix, iy]


def _crop_box(mask: np.ndarray):
    xs, ys, _ = np.nonzero(mask)
    nx, ny = mask.shape[:2]
    return (
        max(0, xs.min() - MARGIN),
        min(nx, xs.max() + MARGIN + 1),
        max(0, ys.min() - MARGIN),
        min(ny, ys.max() + MARGIN + 1),
    )


def filter_bank_features(image: ImageVolume, mask: RoiMask, families=None) -> dict[str, np.ndarray]:
    """Stats over in-mask filter responses, pooled across slices.

    Returns arrays for the families LBP (39), Gabor (156), LoG (39),
    vessel (39) and local-phase (39), restricted to ``families`` if given.
    """
    check_pair(image, mask)
    m = mask.voxels
    if not m.any():
        raise DataError("empty mask")
    want = set(families) if families is not None else {"LBP", "Gabor", "LoG", "vessel", "local-phase"}
    x0, x1, y0, y1 = _crop_box(m)
    vox = image.voxels

    lbp_vals = {p: [] for p in LBP_PARAMS}
    gabor_vals = {(f, a): [] for f in GABOR_FREQUENCIES for a in GABOR_ANGLES}
    log_vals = {s: [] for s in LOG_SIGMAS}
    vessel_vals = {"full": [], "edge": [], "inner": []}
    phase_vals = {k: [] for k in PHASE_KINDS}

    for z in range(m.shape[2]):
        msl = m[x0:x1, y0:y1, z]
        if not msl.any():
            continue
        img = roi_fill(vox[x0:x1, y0:y1, z].astype(np.float64), msl)
        if "LBP" in want:
            for rad, pts in LBP_PARAMS:
                lbp_vals[(rad, pts)].append(lbp(img, rad, pts)[msl])
        if "Gabor" in want:
            for f in GABOR_FREQUENCIES:
                for a in GABOR_ANGLES:
                    theta = {0.0: 0.0, 0.79: math.pi / 4, 1.57: math.pi / 2, 2.36: 3 * math.pi / 4}[a]
                    gabor_vals[(f, a)].append(gabor_magnitude(img, f, theta)[msl])
        if "LoG" in want:
            for s in LOG_SIGMAS:
                log_vals[s].append(log_filter(img, s)[msl])
        if "vessel" in want:
            vs = frangi_2d(img)
            inner = ndimage.binary_erosion(msl, structure=np.ones((3, 3), bool), border_value=0)
            vessel_vals["full"].append(vs[msl])
            vessel_vals["edge"].append(vs[msl & ~inner])
            vessel_vals["inner"].append(vs[inner])
        if "local-phase" in want:
            ch = monogenic_channels(img)
            for k in PHASE_KINDS:
                phase_vals[k].append(ch[k][msl])

    cat = np.concatenate
    out: dict[str, np.ndarray] = {}
    if "LBP" in want:
        out["LBP"] = cat([stats13(cat(lbp_vals[p])) for p in LBP_PARAMS])
    if "Gabor" in want:
        out["Gabor"] = cat([stats13(cat(gabor_vals[(f, a)])) for f in GABOR_FREQUENCIES for a in GABOR_ANGLES])
    if "LoG" in want:
        out["LoG"] = cat([stats13(cat(log_vals[s])) for s in LOG_SIGMAS])
    if "vessel" in want:
        inner = cat(vessel_vals["inner"])
        if inner.size == 0:
            inner = cat(vessel_vals["full"])
        out["vessel"] = cat([stats13(cat(vessel_vals["full"])), stats13(cat(vessel_vals["edge"])), stats13(inner)])
    if "local-phase" in want:
        out["local-phase"] = cat([stats13(cat(phase_vals[k])) for k in PHASE_KINDS])
    return out
