"""Projective TSDF fusion of posed depth maps and zero-crossing point readout."""

from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, VolumeTooLarge
from .geometry import CameraExtrinsics, CameraIntrinsics, DepthMap, PointCloud

WEIGHT_CAP = 255
DEFAULT_VOXEL_BUDGET = 512**3
_SLAB_VOXELS = 1 << 21


@dataclass(frozen=True)
class DatasetPreset:
    name: str
    f1_threshold: float  # metres
    voxel_size: float  # metres


PRESETS = {
    "hiroom": DatasetPreset("hiroom", 0.05, 0.007),
    "eth3d": DatasetPreset("eth3d", 0.25, 0.039),
    "7scenes": DatasetPreset("7scenes", 0.05, 0.007),
    "scannetpp": DatasetPreset("scannetpp", 0.05, 0.02),
}


def worker_count():
    """Worker cap from ``GEOM_THREADS`` (default: logical cores)."""
    env = os.environ.get("GEOM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            pass
    return os.cpu_count() or 1


def _f32(x):
    return float(np.float32(x))


@dataclass
class TsdfVolume:
    """Dense voxel grid; arrays are indexed ``[ix, iy, iz]``.

    Voxel ``(i, j, k)`` is centered at ``origin + (ijk + 0.5) * voxel_size``.
    Scalar parameters are held at float32 precision so the on-disk container
    round-trips exactly.
    """

    origin: np.ndarray
    voxel_size: float
    truncation: float
    tsdf: np.ndarray  # float32, normalized by truncation
    weight: np.ndarray  # uint8

    def __post_init__(self):
        self.origin = np.asarray(self.origin, dtype=np.float32).astype(np.float64)
        self.voxel_size = _f32(self.voxel_size)
        self.truncation = _f32(self.truncation)
        if not self.voxel_size > 0:
            raise GeometryError("voxel size must be positive")
        if self.truncation < self.voxel_size:
            raise GeometryError("truncation must be at least one voxel")
        if self.tsdf.shape != self.weight.shape or self.tsdf.ndim != 3:
            raise GeometryError("tsdf and weight grids must be 3-D with equal shape")

    @property
    def dims(self):
        return tuple(int(n) for n in self.tsdf.shape)

    @property
    def bounds(self):
        return self.origin, self.origin + np.array(self.dims) * self.voxel_size

    def copy(self):
        return TsdfVolume(self.origin.copy(), self.voxel_size, self.truncation, self.tsdf.copy(), self.weight.copy())

    def voxel_centers(self, ix):
        """World coordinates of the voxel centers in x-slab range ``ix``, shape ``(n, ny, nz, 3)``."""
        nx, ny, nz = self.dims
        i, j, k = np.meshgrid(np.arange(nx)[ix], np.arange(ny), np.arange(nz), indexing="ij")
        idx = np.stack([i, j, k], axis=-1).astype(np.float64)
        return self.origin + (idx + 0.5) * self.voxel_size


def tsdf_new(bounds_min, bounds_max, voxel_size, truncation=None, voxel_budget=DEFAULT_VOXEL_BUDGET) -> TsdfVolume:
    lo = np.asarray(bounds_min, dtype=np.float64).reshape(3)
    hi = np.asarray(bounds_max, dtype=np.float64).reshape(3)
    if not voxel_size > 0:
        raise GeometryError("voxel size must be positive")
    if np.any(hi <= lo):
        raise GeometryError("bounds_max must exceed bounds_min on every axis")
    truncation = 4.0 * voxel_size if truncation is None else truncation
    vs = _f32(voxel_size)
    dims = tuple(max(1, math.ceil((h - l) / vs - 1e-4)) for l, h in zip(lo, hi))
    if dims[0] * dims[1] * dims[2] > voxel_budget:
        raise VolumeTooLarge(f"volume {dims} exceeds budget of {voxel_budget} voxels")
    return TsdfVolume(
        origin=lo,
        voxel_size=vs,
        truncation=truncation,
        tsdf=np.ones(dims, dtype=np.float32),
        weight=np.zeros(dims, dtype=np.uint8),
    )


def _integrate_slab(vol, ix, depth, K, R_wc, t_wc):
    h, w = depth.shape
    X = vol.voxel_centers(ix)
    Xc = X @ R_wc.T + t_wc
    z = Xc[..., 2]
    front = z > 0
    zs = np.where(front, z, 1.0)
    u = (K[0, 0] * Xc[..., 0] + K[0, 1] * Xc[..., 1]) / zs + K[0, 2]
    v = K[1, 1] * Xc[..., 1] / zs + K[1, 2]
    # nearest pixel, integer pixel centers
    ui = np.floor(u + 0.5)
    vi = np.floor(v + 0.5)
    inside = front & (ui >= 0) & (ui < w) & (vi >= 0) & (vi < h)
    ui = np.where(inside, ui, 0).astype(np.intp)
    vi = np.where(inside, vi, 0).astype(np.intp)
    valid = inside & depth.mask[vi, ui]
    sdf = np.where(valid, depth.values[vi, ui] - z, -np.inf)
    upd = valid & (sdf >= -vol.truncation)
    if not upd.any():
        return
    tsdf = vol.tsdf[ix]
    wgt = vol.weight[ix]
    new = np.clip(sdf[upd] / vol.truncation, -1.0, 1.0)
    w0 = wgt[upd].astype(np.float64)
    tsdf[upd] = ((tsdf[upd].astype(np.float64) * w0 + new) / (w0 + 1.0)).astype(np.float32)
    wgt[upd] = np.minimum(w0 + 1.0, WEIGHT_CAP).astype(np.uint8)
    vol.tsdf[ix] = tsdf
    vol.weight[ix] = wgt


def tsdf_integrate(vol: TsdfVolume, depth: DepthMap, intr: CameraIntrinsics, extr: CameraExtrinsics) -> TsdfVolume:
    """Fuse one frame in place and return the volume.

    Each voxel center is projected to its nearest pixel; voxels farther than
    the truncation distance behind the observed surface are left untouched.
    """
    if depth.shape != (intr.height, intr.width):
        raise GeometryError("depth map does not match camera size")
    if not depth.mask.any():
        return vol
    R_wc, t_wc = extr.world_to_camera()
    K = intr.K
    nx, ny, nz = vol.dims
    step = max(1, _SLAB_VOXELS // max(1, ny * nz))
    slabs = [slice(i, min(i + step, nx)) for i in range(0, nx, step)]
    workers = min(worker_count(), len(slabs))
    # slabs are disjoint, so the result does not depend on scheduling
    if workers <= 1:
        for ix in slabs:
            _integrate_slab(vol, ix, depth, K, R_wc, t_wc)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(lambda ix: _integrate_slab(vol, ix, depth, K, R_wc, t_wc), slabs))
    return vol


def tsdf_extract_points(vol: TsdfVolume) -> PointCloud:
    """Linear-interpolated zero crossings on grid edges between observed voxels."""
    pts = []
    T = vol.tsdf.astype(np.float64)
    seen = vol.weight > 0
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, -1)
        hi[axis] = slice(1, None)
        lo, hi = tuple(lo), tuple(hi)
        t0, t1 = T[lo], T[hi]
        edge = seen[lo] & seen[hi] & ((t0 >= 0) != (t1 >= 0))
        if not edge.any():
            continue
        idx = np.argwhere(edge).astype(np.float64)
        a, b = t0[edge], t1[edge]
        frac = a / (a - b)
        idx[:, axis] += frac
        pts.append(vol.origin + (idx + 0.5) * vol.voxel_size)
    if not pts:
        return PointCloud(np.zeros((0, 3)))
    P = np.unique(np.concatenate(pts), axis=0)
    return PointCloud(P)
