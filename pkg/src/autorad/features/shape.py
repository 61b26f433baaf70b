"""Mask-only descriptors: per-slice 2-D shape, 3-D shape and orientation."""
from __future__ import annotations

import numpy as np
from scipy.spatial import ConvexHull, QhullError
from scipy.spatial.distance import pdist
from skimage.measure import find_contours, marching_cubes, mesh_surface_area
from skimage.morphology import convex_hull_image

from ..core.types import DataError, RoiMask

# Relative eigenvalue gap below which principal axes are considered undefined.
_DEGENERATE_AXES = 1e-8


def _max_pairwise(points: np.ndarray) -> float:
    if len(points) < 2:
        return 0.0
    if len(points) > 3:
        try:
            points = points[ConvexHull(points).vertices]
        except QhullError:
            pass  # collinear / coplanar: fall back to all points
    return float(pdist(points).max())


def _slice_contour(sl: np.ndarray) -> np.ndarray:
    """Longest boundary contour of a 2-D mask, pixel units, (n, 2)."""
    padded = np.pad(sl.astype(np.float64), 1)
    contours = find_contours(padded, 0.5)
    c = max(contours, key=len) - 1.0
    if np.allclose(c[0], c[-1]):
        c = c[:-1]
    return c


def _polygon_perimeter(pts: np.ndarray) -> float:
    return float(np.sum(np.linalg.norm(np.roll(pts, -1, axis=0) - pts, axis=1)))


def slice_descriptors(sl: np.ndarray, spacing2d) -> np.ndarray:
    """Eight contour descriptors of one axial slice.

    compactness, mean radial distance, roughness, convexity, circular
    variance, principal axes ratio, elliptic variance, solidity.
    """
    sx, sy = spacing2d
    area = sl.sum() * sx * sy
    pts = _slice_contour(sl) * np.array([sx, sy])
    perim = _polygon_perimeter(pts)
    centre = pts.mean(axis=0)
    rel = pts - centre
    r = np.linalg.norm(rel, axis=1)
    mu_r = r.mean()

    compactness = 4.0 * np.pi * area / perim**2 if perim > 0 else 1.0
    roughness = float(np.mean(np.abs(np.diff(np.r_[r, r[0]]))))
    cvar = float(np.mean((r - mu_r) ** 2) / mu_r**2) if mu_r > 0 else 0.0

    try:
        hull = ConvexHull(pts)
        hull_perim = hull.area  # 2-D: "area" is the perimeter
    except QhullError:
        hull_perim = perim
    convexity = hull_perim / perim if perim > 0 else 1.0

    cov = np.cov(rel.T, bias=True)
    ev = np.linalg.eigvalsh(cov)
    prax = float(np.sqrt(ev[0] / ev[1])) if ev[1] > 0 else 1.0
    if ev[0] > 1e-12 * max(ev[1], 1e-300):
        inv = np.linalg.inv(cov)
        d = np.sqrt(np.einsum("ij,jk,ik->i", rel, inv, rel))
        mu_d = d.mean()
        evar = float(np.mean((d - mu_d) ** 2) / mu_d**2)
    else:
        evar = 0.0

    hull_img = convex_hull_image(sl) if sl.sum() > 2 else sl
    solidity = float(sl.sum() / max(hull_img.sum(), 1))
    return np.array([compactness, mu_r, roughness, convexity, cvar, prax, evar, solidity])


def _principal_axes(coords: np.ndarray):
    cov = np.cov(coords.T, bias=True) if len(coords) > 1 else np.zeros((3, 3))
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    return np.clip(evals[order], 0.0, None), evecs[:, order]


def _mesh(mask: np.ndarray, spacing):
    padded = np.pad(mask.astype(np.float64), 1)
    verts, faces, _, _ = marching_cubes(padded, 0.5, spacing=spacing)
    verts = verts - np.asarray(spacing)  # undo the padding offset
    return verts, faces


def _mesh_volume(verts, faces) -> float:
    a, b, c = verts[faces[:, 0]], verts[faces[:, 1]], verts[faces[:, 2]]
    return float(abs(np.sum(np.einsum("ij,ij->i", a, np.cross(b, c))) / 6.0))


def _max_planar_diameter(mask: np.ndarray, spacing, axis: int) -> float:
    """Largest in-plane extent over all planes orthogonal to ``axis`` (pixel corners)."""
    other = [a for a in range(3) if a != axis]
    sp = np.array([spacing[a] for a in other])
    corners = np.array([[-0.5, -0.5], [-0.5, 0.5], [0.5, -0.5], [0.5, 0.5]])
    best = 0.0
    for k in range(mask.shape[axis]):
        plane = np.take(mask, k, axis=axis)
        if not plane.any():
            continue
        ij = np.argwhere(plane).astype(np.float64)
        pts = (ij[:, None, :] + corners[None]).reshape(-1, 2) * sp
        best = max(best, _max_pairwise(np.unique(pts, axis=0)))
    return best


def shape_features(mask: RoiMask, spacing=None) -> np.ndarray:
    """35 shape features in canonical order."""
    m = mask.voxels
    spacing = tuple(mask.spacing if spacing is None else spacing)
    if not m.any():
        raise DataError("empty mask")
    sx, sy, sz = spacing

    per_slice, areas = [], []
    for z in range(m.shape[2]):
        sl = m[:, :, z]
        if sl.any():
            per_slice.append(slice_descriptors(sl, (sx, sy)))
            areas.append(sl.sum() * sx * sy)
    per_slice = np.array(per_slice)
    areas = np.array(areas)
    out = []
    for k in range(per_slice.shape[1]):
        out += [per_slice[:, k].mean(), per_slice[:, k].std()]
    out += [areas.mean(), areas.std(), areas.min(), areas.max()]

    n_vox = float(m.sum())
    verts, faces = _mesh(m, spacing)
    mesh_vol = _mesh_volume(verts, faces)
    surface = float(mesh_surface_area(verts, faces))
    out += [n_vox, mesh_vol, n_vox * sx * sy * sz]

    coords = np.argwhere(m) * np.array(spacing)
    ev, _ = _principal_axes(coords)
    l1, l2, l3 = ev
    elongation = 1.0 - np.sqrt(l2 / l1) if l1 > 0 else 0.0
    flatness = 1.0 - np.sqrt(l3 / l1) if l1 > 0 else 0.0
    out += [elongation, flatness, 4 * np.sqrt(l3), 4 * np.sqrt(l1), 4 * np.sqrt(l2)]

    out.append(_max_pairwise(verts))
    # rows: planes of fixed y, columns: fixed x, slices: fixed z
    out += [_max_planar_diameter(m, spacing, 1), _max_planar_diameter(m, spacing, 0),
            _max_planar_diameter(m, spacing, 2)]

    sphericity = (np.pi ** (1 / 3) * (6 * mesh_vol) ** (2 / 3)) / surface if surface > 0 else np.nan
    out += [sphericity, surface, surface / mesh_vol if mesh_vol > 0 else np.nan]
    return np.array(out, dtype=np.float64)


def orientation_features(mask: RoiMask) -> np.ndarray:
    """Principal-axis angles (degrees) and centre of mass (index and mm)."""
    m = mask.voxels
    if not m.any():
        raise DataError("empty mask")
    idx = np.argwhere(m).astype(np.float64)
    com_idx = idx.mean(axis=0)
    com_mm = com_idx * np.array(mask.spacing)
    ev, vecs = _principal_axes(idx * np.array(mask.spacing))
    if ev[0] <= 0 or (ev[0] - ev[1]) <= _DEGENERATE_AXES * ev[0]:
        thetas = np.zeros(3)
    else:
        major = vecs[:, 0]
        thetas = np.degrees(np.arccos(np.clip(np.abs(major), 0.0, 1.0)))
    return np.concatenate([thetas, com_idx, com_mm])
