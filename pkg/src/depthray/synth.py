"""Synthetic scenes with exact ground truth: analytic primitives and posed cameras."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    CameraExtrinsics,
    CameraIntrinsics,
    DepthMap,
    build_ray_map,
    quat_to_matrix,
)
from .rng import Xoshiro256

_EPS = 1e-9


@dataclass(frozen=True)
class Plane:
    """Points with ``normal . x = offset``."""

    normal: tuple
    offset: float

    def intersect(self, o, d):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        denom = d @ n
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = (self.offset - o @ n) / denom
        return np.where((np.abs(denom) > _EPS) & (lam > _EPS), lam, np.inf)

    def residual(self, p):
        n = np.asarray(self.normal, dtype=np.float64)
        n = n / np.linalg.norm(n)
        return p @ n - self.offset

    def to_json(self):
        return {"type": "plane", "normal": list(map(float, self.normal)), "offset": float(self.offset)}


@dataclass(frozen=True)
class Sphere:
    center: tuple
    radius: float

    def intersect(self, o, d):
        c = np.asarray(self.center, dtype=np.float64)
        oc = o - c
        a = (d * d).sum(-1)
        b = 2.0 * (oc * d).sum(-1)
        cc = (oc * oc).sum(-1) - self.radius**2
        disc = b * b - 4 * a * cc
        sq = np.sqrt(np.maximum(disc, 0.0))
        # numerically stable roots
        q = -0.5 * (b + np.copysign(sq, b))
        with np.errstate(divide="ignore", invalid="ignore"):
            r1 = q / a
            r2 = cc / q
        lo = np.minimum(r1, r2)
        hi = np.maximum(r1, r2)
        lam = np.where(lo > _EPS, lo, np.where(hi > _EPS, hi, np.inf))
        return np.where(disc >= 0, lam, np.inf)

    def residual(self, p):
        return np.linalg.norm(p - np.asarray(self.center, dtype=np.float64), axis=-1) - self.radius

    def to_json(self):
        return {"type": "sphere", "center": list(map(float, self.center)), "radius": float(self.radius)}


@dataclass(frozen=True)
class Box:
    """Axis-aligned box."""

    min: tuple
    max: tuple

    def intersect(self, o, d):
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        with np.errstate(divide="ignore", invalid="ignore"):
            inv = 1.0 / d
            t1 = (lo - o) * inv
            t2 = (hi - o) * inv
        t1 = np.where(np.isnan(t1), -np.inf, t1)
        t2 = np.where(np.isnan(t2), np.inf, t2)
        tnear = np.minimum(t1, t2).max(-1)
        tfar = np.maximum(t1, t2).min(-1)
        hit = tnear <= tfar
        lam = np.where(tnear > _EPS, tnear, np.where(tfar > _EPS, tfar, np.inf))
        return np.where(hit, lam, np.inf)

    def residual(self, p):
        """Signed distance to the box surface."""
        lo = np.asarray(self.min, dtype=np.float64)
        hi = np.asarray(self.max, dtype=np.float64)
        c = (lo + hi) / 2
        e = (hi - lo) / 2
        q = np.abs(p - c) - e
        outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
        inside = np.minimum(q.max(-1), 0.0)
        return outside + inside

    def to_json(self):
        return {"type": "box", "min": list(map(float, self.min)), "max": list(map(float, self.max))}


def primitive_from_json(obj):
    kind = obj["type"]
    if kind == "plane":
        return Plane(tuple(obj["normal"]), obj["offset"])
    if kind == "sphere":
        return Sphere(tuple(obj["center"]), obj["radius"])
    if kind == "box":
        return Box(tuple(obj["min"]), tuple(obj["max"]))
    raise ValueError(f"unknown primitive type {kind!r}")


@dataclass(frozen=True)
class SynthScene:
    primitives: list
    cameras: list  # [(CameraIntrinsics, CameraExtrinsics)]
    seed: int = 0

    def to_json(self):
        cams = []
        for intr, extr in self.cameras:
            cams.append(
                {
                    "fx": intr.fx, "fy": intr.fy, "cx": intr.cx, "cy": intr.cy,
                    "skew": intr.skew, "width": intr.width, "height": intr.height,
                    "q": extr.q.tolist(), "t": extr.t.tolist(),
                }
            )
        return {"seed": self.seed, "primitives": [p.to_json() for p in self.primitives], "cameras": cams}

    @classmethod
    def from_json(cls, obj):
        cams = []
        for c in obj["cameras"]:
            intr = CameraIntrinsics(c["fx"], c["fy"], c["cx"], c["cy"], c["width"], c["height"], c.get("skew", 0.0))
            cams.append((intr, CameraExtrinsics(q=c["q"], t=c["t"])))
        return cls([primitive_from_json(p) for p in obj["primitives"]], cams, obj.get("seed", 0))


def look_at(eye, target, up=(0.0, 0.0, 1.0)) -> CameraExtrinsics:
    """Camera at ``eye`` looking at ``target``; image x right, y down, z forward."""
    eye = np.asarray(eye, dtype=np.float64)
    z = np.asarray(target, dtype=np.float64) - eye
    z = z / np.linalg.norm(z)
    up = np.asarray(up, dtype=np.float64)
    if abs(np.dot(z, up) / np.linalg.norm(up)) > 0.999:
        up = np.array([0.0, 1.0, 0.0]) if abs(z[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    x = np.cross(-up, z)
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return CameraExtrinsics.from_matrix(np.stack([x, y, z], axis=1), eye)


def render_depth(scene: SynthScene, index: int) -> DepthMap:
    """Nearest-hit depth ``D`` with ``t + D d`` on a primitive; misses are invalid."""
    intr, extr = scene.cameras[index]
    rays = build_ray_map(intr, extr)
    o, d = rays.origins, rays.directions
    lam = np.full(o.shape[:2], np.inf)
    for prim in scene.primitives:
        lam = np.minimum(lam, prim.intersect(o, d))
    mask = np.isfinite(lam)
    return DepthMap(np.where(mask, lam, np.nan), mask)


def surface_residual(scene: SynthScene, points):
    """Distance-like residual of each point to the closest primitive surface."""
    res = np.stack([np.abs(p.residual(points)) for p in scene.primitives])
    return res.min(axis=0)


# ---------------------------------------------------------------------------
# perturbation


@dataclass(frozen=True)
class NoiseSpec:
    """``rot_deg`` is the RMS rotation angle of the pose perturbation."""

    rot_deg: float = 0.0
    trans: float = 0.0
    depth_rel: float = 0.0
    outlier_fraction: float = 0.0

    def __post_init__(self):
        if min(self.rot_deg, self.trans, self.depth_rel) < 0:
            raise ValueError("noise levels must be non-negative")
        if not 0.0 <= self.outlier_fraction <= 1.0:
            raise ValueError("outlier fraction must lie in [0, 1]")


def _small_rotation(rng, sigma_deg):
    # isotropic axis-angle; per-axis sigma/sqrt(3) gives an RMS angle of sigma
    s = math.radians(sigma_deg) / math.sqrt(3.0)
    w = np.array([rng.normal(), rng.normal(), rng.normal()]) * s
    angle = float(np.linalg.norm(w))
    if angle == 0.0:
        return np.eye(3)
    axis = w / angle
    h = angle / 2.0
    return quat_to_matrix((math.cos(h), *(math.sin(h) * axis)))


def perturb_poses(poses, spec: NoiseSpec, seed=0):
    """Left-multiply each rotation by a random small rotation and jitter centers."""
    if spec.rot_deg == 0 and spec.trans == 0:
        return [CameraExtrinsics(q=e.q.copy(), t=e.t.copy()) for e in poses]
    rng = Xoshiro256(seed)
    out = []
    for e in poses:
        R = e.R
        if spec.rot_deg > 0:
            R = _small_rotation(rng, spec.rot_deg) @ R
        t = e.t
        if spec.trans > 0:
            t = t + spec.trans * np.array([rng.normal(), rng.normal(), rng.normal()])
        out.append(CameraExtrinsics.from_matrix(R, t))
    return out


def perturb_depth(depth: DepthMap, spec: NoiseSpec, seed=0) -> DepthMap:
    """Multiplicative log-normal noise, then exactly floor(f * N_valid) outliers.

    Outliers are drawn uniformly over the valid depth range.
    """
    values = depth.values.copy()
    if spec.depth_rel == 0 and spec.outlier_fraction == 0:
        return DepthMap(values, depth.mask)
    rng = Xoshiro256(seed)
    flat = np.flatnonzero(depth.mask)
    if spec.depth_rel > 0:
        values.flat[flat] *= np.exp(spec.depth_rel * rng.normals(len(flat)))
    n_out = math.floor(spec.outlier_fraction * len(flat))
    if n_out:
        lo, hi = np.nanmin(depth.values), np.nanmax(depth.values)
        pick = flat[rng.sample(len(flat), n_out)]
        junk = lo + (hi - lo) * rng.uniforms(n_out)
        values.flat[pick] = np.maximum(junk, lo)
    return DepthMap(values, depth.mask)


def perturb_scene(scene: SynthScene, spec: NoiseSpec, seed=0) -> SynthScene:
    poses = perturb_poses([e for _, e in scene.cameras], spec, seed)
    return replace(scene, cameras=[(c[0], e) for c, e in zip(scene.cameras, poses)])


# ---------------------------------------------------------------------------
# canned scenes


def desk_scene(n_views=8, width=64, height=48, seed=0, radius=1.6) -> SynthScene:
    """Table plane with a box and a sphere, viewed by a ring of cameras.

    Camera heights and azimuth jitter are seeded; the geometry is fixed.
    """
    rng = Xoshiro256(seed)
    prims = [
        Plane((0.0, 0.0, 1.0), 0.0),
        Box((-0.45, -0.25, 0.0), (-0.05, 0.15, 0.3)),
        Sphere((0.3, 0.1, 0.2), 0.2),
    ]
    f = 0.9 * width
    intr = CameraIntrinsics(f, f, (width - 1) / 2.0, (height - 1) / 2.0, width, height)
    cams = []
    for i in range(n_views):
        az = 2 * math.pi * (i + 0.3 * (rng.random() - 0.5)) / n_views
        elev = 0.6 + 0.5 * rng.random()
        eye = (radius * math.cos(az), radius * math.sin(az), elev)
        target = (0.2 * (rng.random() - 0.5), 0.2 * (rng.random() - 0.5), 0.1)
        cams.append((intr, look_at(eye, target)))
    return SynthScene(prims, cams, seed)
