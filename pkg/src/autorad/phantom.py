"""Synthetic labelled lesion datasets with tunable class separability.

Every patient is drawn from its own random stream derived from
``(master_seed, patient_index)``, so a dataset does not depend on the order
or parallelism of generation.
"""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np
from scipy import ndimage

from .core.io import write_image, write_manifest, write_mask
from .core.types import DataError, ImageVolume, PatientRecord, RoiMask

LOCATIONS = ("stomach", "small-bowel", "colorectal", "other")
BACKGROUND_HU = 40.0
LESION_HU = 70.0
NECROSIS_DROP_HU = 45.0  # how far below the lesion the necrotic core sits
BASE_NOISE_HU = 8.0  # scanner noise on every voxel, both classes
TEXTURE_SMOOTHING = 1.0  # Gaussian sigma (voxels) of the band-limited texture
_JITTER = 2  # voxels of random lesion-centre displacement


@dataclass(frozen=True)
class PhantomSpec:
    """Parameters of a synthetic cohort.

    Parameters
    ----------
    n_per_class : int
        Patients per class; the dataset holds ``2 * n_per_class`` patients.
    dims, spacing : tuple
        Volume grid and voxel size in mm.
    radius_range : tuple of float
        Range of ellipsoid semi-axes, in voxels.
    necrotic_core_fraction : float
        Relative size of the low-intensity core in positive lesions (0 = none).
    texture_noise : float
        Amplitude (HU) of the extra band-limited texture in positive lesions.
    intensity_offset : float
        Mean intensity shift (HU) of positive lesions.
    lobulation : float
        Relative amplitude of the sinusoidal boundary of positive lesions.
    batch_shifts : tuple of float
        Additive intensity offset per scanner batch; batches are assigned
        at random, independently of the label.
    seed : int
        Master seed.
    """

    n_per_class: int = 30
    dims: tuple[int, int, int] = (32, 32, 32)
    spacing: tuple[float, float, float] = (1.0, 1.0, 1.0)
    radius_range: tuple[float, float] = (5.0, 8.0)
    necrotic_core_fraction: float = 0.5
    texture_noise: float = 25.0
    intensity_offset: float = 10.0
    lobulation: float = 0.15
    batch_shifts: tuple[float, ...] = (0.0,)
    seed: int = 0

    def __post_init__(self):
        if int(self.n_per_class) < 1:
            raise DataError("n_per_class must be >= 1")
        if len(self.dims) != 3 or min(self.dims) < 4:
            raise DataError(f"dims must be three sizes >= 4, got {self.dims}")
        if len(self.spacing) != 3 or min(self.spacing) <= 0:
            raise DataError(f"spacing must be three positive values, got {self.spacing}")
        lo, hi = self.radius_range
        if not (0 < lo <= hi):
            raise DataError(f"invalid radius range {self.radius_range}")
        knobs = (self.necrotic_core_fraction, self.texture_noise, self.intensity_offset, self.lobulation)
        if not all(np.isfinite(k) for k in knobs + tuple(self.batch_shifts)):
            raise DataError("phantom knobs must be finite")
        if not 0 <= self.necrotic_core_fraction < 1:
            raise DataError("necrotic_core_fraction must be in [0, 1)")
        if not 0 <= self.lobulation < 1:
            raise DataError("lobulation must be in [0, 1)")
        if not self.batch_shifts:
            raise DataError("need at least one batch")
        # largest extent of a lesion plus centre jitter must stay inside the grid
        reach = hi * (1 + self.lobulation) + _JITTER + 1
        if 2 * reach > min(self.dims):
            raise DataError(f"lesion of radius {hi} does not fit in volume {self.dims}")

    @classmethod
    def null(cls, **kw) -> "PhantomSpec":
        """Spec whose two classes are drawn from the same distribution."""
        base = dict(necrotic_core_fraction=0.0, texture_noise=0.0, intensity_offset=0.0, lobulation=0.0)
        base.update(kw)
        return cls(**base)

    def to_dict(self) -> dict:
        return asdict(self)


def batch_names(spec: PhantomSpec) -> list[str]:
    return [f"scanner-{chr(ord('A') + i)}" for i in range(len(spec.batch_shifts))]


def _largest_component(m: np.ndarray) -> np.ndarray:
    lab, n = ndimage.label(m)
    if n <= 1:
        return m
    sizes = np.bincount(lab.ravel())[1:]
    return lab == (1 + int(np.argmax(sizes)))


def _patient(spec: PhantomSpec, index: int):
    rng = np.random.default_rng(np.random.SeedSequence(spec.seed, spawn_key=(index,)))
    label = int(index >= spec.n_per_class)
    dims = spec.dims
    centre = np.array(dims) / 2.0 - 0.5 + rng.integers(-_JITTER, _JITTER + 1, size=3)
    axes = rng.uniform(*spec.radius_range, size=3)
    n_lobes = int(rng.integers(3, 6))
    lobe_phase = rng.uniform(0, 2 * np.pi)

    x, y, z = np.meshgrid(*(np.arange(d, dtype=np.float64) for d in dims), indexing="ij")
    u = (x - centre[0]) / axes[0]
    v = (y - centre[1]) / axes[1]
    w = (z - centre[2]) / axes[2]
    dist = np.sqrt(u * u + v * v + w * w)
    boundary = np.ones(dims)
    if label == 1 and spec.lobulation > 0:
        phi = np.arctan2(v, u)
        sin_theta = np.sqrt(u * u + v * v) / np.maximum(dist, 1e-12)
        boundary = 1.0 + spec.lobulation * np.cos(n_lobes * phi + lobe_phase) * sin_theta
    mask = _largest_component(dist <= boundary)

    # draws are made for both classes so the streams stay aligned
    noise = rng.normal(0.0, BASE_NOISE_HU, size=dims)
    texture = ndimage.gaussian_filter(rng.normal(size=dims), TEXTURE_SMOOTHING, mode="reflect")
    texture /= texture.std()
    batch = int(rng.integers(len(spec.batch_shifts)))
    age = float(np.round(rng.normal(62.0, 11.0)))
    sex = "M" if rng.random() < 0.5 else "F"
    location = LOCATIONS[int(rng.integers(len(LOCATIONS)))]

    img = np.full(dims, BACKGROUND_HU) + noise
    lesion = LESION_HU
    if label == 1:
        lesion += spec.intensity_offset
    img[mask] += lesion - BACKGROUND_HU
    if label == 1:
        img[mask] += spec.texture_noise * texture[mask]
        if spec.necrotic_core_fraction > 0:
            core = mask & (dist <= spec.necrotic_core_fraction * boundary)
            img[core] -= NECROSIS_DROP_HU
    img += spec.batch_shifts[batch]
    img = np.clip(np.round(img), -1024, 3071).astype(np.int16)

    record = PatientRecord(
        id=f"P{index + 1:04d}",
        label=label,
        age=age,
        sex=sex,
        location=location,
        batch=batch_names(spec)[batch],
    )
    return ImageVolume(img, spec.spacing), RoiMask(mask, spec.spacing), record


def generate_dataset(spec: PhantomSpec):
    """Generate images, masks and patient records for ``spec``.

    Patients ``0 .. n_per_class-1`` are negatives, the rest positives.
    """
    images, masks, records = [], [], []
    for i in range(2 * spec.n_per_class):
        im, m, r = _patient(spec, i)
        images.append(im)
        masks.append(m)
        records.append(r)
    return images, masks, records


def perturb_mask(mask: RoiMask, magnitude: float, seed: int) -> RoiMask:
    """Simulate a second observer by randomly moving the lesion boundary.

    Each voxel of the inner boundary shell is removed with probability
    ``magnitude``; each voxel just outside the mask that touches a surviving
    voxel is added with the same probability.  Only the largest connected
    component is kept.
    """
    if not 0 <= magnitude <= 1:
        raise DataError(f"magnitude must be in [0, 1], got {magnitude}")
    m = mask.voxels
    if magnitude == 0:
        return RoiMask(m.copy(), mask.spacing)
    rng = np.random.default_rng(seed)
    inner = m & ~ndimage.binary_erosion(m)
    outer = ndimage.binary_dilation(m) & ~m
    drop = inner & (rng.random(m.shape) < magnitude)
    kept = m & ~drop
    grow = outer & ndimage.binary_dilation(kept) & (rng.random(m.shape) < magnitude)
    out = _largest_component(kept | grow)
    if not out.any():
        raise DataError("perturbation removed every mask voxel")
    return RoiMask(out, mask.spacing)


def write_dataset(spec: PhantomSpec, out_dir, observer2_magnitude: float | None = None, run_config=None):
    """Write a phantom cohort as MetaImage files plus manifest.

    Layout: ``images/``, ``masks/``, ``manifest.csv`` and ``run_config.json``;
    with ``observer2_magnitude`` also ``masks_observer2/`` and
    ``manifest_observer2.csv`` (perturbed masks, same images).
    """
    out = Path(out_dir)
    (out / "images").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    images, masks, records = generate_dataset(spec)
    written, second = [], []
    for k, (im, m, r) in enumerate(zip(images, masks, records)):
        ip = out / "images" / f"{r.id}.mhd"
        mp = out / "masks" / f"{r.id}.mhd"
        write_image(im, ip)
        write_mask(m, mp)
        written.append(replace(r, image_path=str(ip), mask_path=str(mp)))
        if observer2_magnitude is not None:
            (out / "masks_observer2").mkdir(exist_ok=True)
            m2 = perturb_mask(m, observer2_magnitude, seed=spec.seed * 100003 + k)
            mp2 = out / "masks_observer2" / f"{r.id}.mhd"
            write_mask(m2, mp2)
            second.append(replace(r, image_path=str(ip), mask_path=str(mp2)))
    write_manifest(written, out / "manifest.csv")
    if second:
        write_manifest(second, out / "manifest_observer2.csv")
    config = {"phantom": spec.to_dict(), "observer2_magnitude": observer2_magnitude}
    if run_config is not None:
        config["run_config"] = run_config
    (out / "run_config.json").write_text(json.dumps(config, indent=2, sort_keys=True) + "\n")
    return written
