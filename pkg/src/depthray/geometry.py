"""Camera, ray-map and depth types plus depth-to-point unprojection.

Conventions used everywhere in the package:

* pixels are ``p = (u, v, 1)`` at integer indices, ``u`` = column, ``v`` = row,
  origin at the top-left pixel, no half-pixel offset;
* extrinsics are camera-to-world: ``P_world = R @ P_cam + t``;
* quaternions are stored ``(w, x, y, z)`` with ``w >= 0``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.transform import Rotation

from .errors import GeometryError

_ORTHO_TOL = 1e-6


# ---------------------------------------------------------------------------
# rotations


def canonical_quat(q):
    """Normalize ``q`` and pick the hemisphere with ``w > 0``.

    When ``w == 0`` the first nonzero component is made positive.
    """
    q = np.asarray(q, dtype=np.float64).reshape(4)
    n = np.linalg.norm(q)
    if not np.isfinite(n) or n == 0.0:
        raise GeometryError("quaternion must be finite and nonzero")
    # already-unit input is left untouched so canonicalization is idempotent
    if abs(n - 1.0) > 4 * np.finfo(np.float64).eps:
        q = q / n
    for c in q:
        if c != 0.0:
            if c < 0.0:
                q = -q
            break
    return q


def quat_to_matrix(q):
    w, x, y, z = canonical_quat(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def check_rotation(R, tol=_ORTHO_TOL):
    R = np.asarray(R, dtype=np.float64)
    if R.shape != (3, 3) or not np.all(np.isfinite(R)):
        raise GeometryError("rotation must be a finite 3x3 matrix")
    if np.abs(R.T @ R - np.eye(3)).max() > tol or abs(np.linalg.det(R) - 1.0) > tol:
        raise GeometryError("matrix is not a proper rotation")
    return R


def matrix_to_quat(R):
    R = check_rotation(R)
    x, y, z, w = Rotation.from_matrix(R).as_quat()
    return canonical_quat((w, x, y, z))


def rotation_geodesic_deg(Ra, Rb):
    """Angle of ``Ra.T @ Rb`` in degrees, in [0, 180]."""
    Ra = check_rotation(Ra)
    Rb = check_rotation(Rb)
    c = (np.trace(Ra.T @ Rb) - 1.0) / 2.0
    return math.degrees(math.acos(min(1.0, max(-1.0, c))))


def rot_x(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def rot_y(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def rot_z(deg):
    a = math.radians(deg)
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def random_rotation(rng):
    """Uniformly distributed rotation from a numpy Generator."""
    q = rng.standard_normal(4)
    return quat_to_matrix(q)


# ---------------------------------------------------------------------------
# cameras


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int
    skew: float = 0.0

    def __post_init__(self):
        vals = (self.fx, self.fy, self.cx, self.cy, self.skew)
        if not all(math.isfinite(v) for v in vals):
            raise GeometryError("intrinsics must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise GeometryError("focal lengths must be positive")
        if int(self.width) < 1 or int(self.height) < 1:
            raise GeometryError("image size must be at least 1x1")

    @property
    def K(self):
        return np.array(
            [[self.fx, self.skew, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]]
        )

    @property
    def fov(self):
        """Horizontal and vertical field of view in radians."""
        return (
            2.0 * math.atan(self.width / (2.0 * self.fx)),
            2.0 * math.atan(self.height / (2.0 * self.fy)),
        )

    @classmethod
    def from_matrix(cls, K, width, height):
        K = np.asarray(K, dtype=np.float64)
        if K.shape != (3, 3):
            raise GeometryError("K must be 3x3")
        if abs(K[1, 0]) > 1e-12 or abs(K[2, 0]) > 1e-12 or abs(K[2, 1]) > 1e-12:
            raise GeometryError("K must be upper-triangular")
        K = K / K[2, 2]
        return cls(
            fx=float(K[0, 0]),
            fy=float(K[1, 1]),
            cx=float(K[0, 2]),
            cy=float(K[1, 2]),
            width=int(width),
            height=int(height),
            skew=float(K[0, 1]),
        )


@dataclass(frozen=True)
class CameraExtrinsics:
    """Camera-to-world pose; ``t`` is the camera center in world coordinates."""

    q: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", canonical_quat(self.q))
        t = np.asarray(self.t, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(t)):
            raise GeometryError("translation must be finite")
        object.__setattr__(self, "t", t)

    @property
    def R(self):
        return quat_to_matrix(self.q)

    @property
    def center(self):
        return self.t

    @classmethod
    def from_matrix(cls, R, t):
        return cls(q=matrix_to_quat(R), t=t)

    @classmethod
    def identity(cls):
        return cls(q=(1.0, 0.0, 0.0, 0.0), t=(0.0, 0.0, 0.0))

    def world_to_camera(self):
        """``(R_wc, t_wc)`` such that ``P_cam = R_wc @ P_world + t_wc``."""
        R = self.R
        return R.T, -R.T @ self.t

    @classmethod
    def from_world_to_camera(cls, R_wc, t_wc):
        R_wc = check_rotation(R_wc)
        return cls.from_matrix(R_wc.T, -R_wc.T @ np.asarray(t_wc, dtype=np.float64))

    def __eq__(self, other):
        if not isinstance(other, CameraExtrinsics):
            return NotImplemented
        return np.array_equal(self.q, other.q) and np.array_equal(self.t, other.t)

    __hash__ = None


@dataclass(frozen=True)
class Camera9Dof:
    """Compact camera vector ``(t, q, f)``: translation, quaternion, field of view."""

    t: np.ndarray
    q: np.ndarray
    f: np.ndarray

    @classmethod
    def from_camera(cls, intr: CameraIntrinsics, extr: CameraExtrinsics):
        return cls(t=extr.t.copy(), q=extr.q.copy(), f=np.array(intr.fov))

    def to_camera(self, width, height):
        fov_x, fov_y = self.f
        intr = CameraIntrinsics(
            fx=width / (2.0 * math.tan(fov_x / 2.0)),
            fy=height / (2.0 * math.tan(fov_y / 2.0)),
            cx=width / 2.0,
            cy=height / 2.0,
            width=width,
            height=height,
        )
        return intr, CameraExtrinsics(q=self.q, t=self.t)

    def as_vector(self):
        return np.concatenate([self.t, self.q, self.f])

    @classmethod
    def from_vector(cls, v):
        v = np.asarray(v, dtype=np.float64).reshape(9)
        return cls(t=v[:3].copy(), q=v[3:7].copy(), f=v[7:].copy())


# ---------------------------------------------------------------------------
# dense maps


@dataclass(frozen=True)
class RayMap:
    origins: np.ndarray  # (H, W, 3)
    directions: np.ndarray  # (H, W, 3), unnormalized

    def __post_init__(self):
        o = np.asarray(self.origins, dtype=np.float64)
        d = np.asarray(self.directions, dtype=np.float64)
        if o.ndim != 3 or o.shape[2] != 3 or o.shape != d.shape:
            raise GeometryError(f"ray map arrays must be HxWx3, got {o.shape} and {d.shape}")
        object.__setattr__(self, "origins", o)
        object.__setattr__(self, "directions", d)

    @property
    def height(self):
        return self.origins.shape[0]

    @property
    def width(self):
        return self.origins.shape[1]

    def as_array(self):
        """Stacked ``H x W x 6`` array, origin channels first."""
        return np.concatenate([self.origins, self.directions], axis=-1)

    @classmethod
    def from_array(cls, M):
        M = np.asarray(M, dtype=np.float64)
        if M.ndim != 3 or M.shape[2] != 6:
            raise GeometryError("ray map array must be HxWx6")
        return cls(origins=M[..., :3], directions=M[..., 3:])


@dataclass(frozen=True)
class DepthMap:
    """Depth values with a validity mask; invalid pixels hold NaN."""

    values: np.ndarray
    mask: np.ndarray = field(default=None)

    def __post_init__(self):
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 2:
            raise GeometryError("depth must be a 2-D array")
        good = np.isfinite(v) & (v > 0)
        if self.mask is None:
            m = good
        else:
            m = np.asarray(self.mask, dtype=bool)
            if m.shape != v.shape:
                raise GeometryError("mask shape does not match depth shape")
            if np.any(m & ~good):
                raise GeometryError("masked-valid depth must be finite and positive")
        v[~m] = np.nan
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "mask", m.copy())

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]

    @property
    def shape(self):
        return self.values.shape

    def filled(self, fill=0.0):
        return np.where(self.mask, self.values, fill)


@dataclass(frozen=True)
class PointCloud:
    points: np.ndarray
    colors: np.ndarray | None = None

    def __post_init__(self):
        p = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(p)):
            raise GeometryError("point coordinates must be finite")
        object.__setattr__(self, "points", p)
        if self.colors is not None:
            c = np.asarray(self.colors)
            if c.shape != p.shape or np.any(c < 0) or np.any(c > 255):
                raise GeometryError("colors must be Nx3 in [0, 255]")
            object.__setattr__(self, "colors", c.astype(np.uint8))

    def __len__(self):
        return len(self.points)


# ---------------------------------------------------------------------------
# operations


def pixel_grid(width, height):
    """Homogeneous pixel coordinates ``(u, v, 1)``, shape ``(H, W, 3)``."""
    v, u = np.mgrid[0:height, 0:width].astype(np.float64)
    return np.stack([u, v, np.ones_like(u)], axis=-1)


def build_ray_map(intr: CameraIntrinsics, extr: CameraExtrinsics) -> RayMap:
    p = pixel_grid(intr.width, intr.height)
    M = extr.R @ np.linalg.inv(intr.K)
    directions = p @ M.T
    origins = np.broadcast_to(extr.t, directions.shape).copy()
    return RayMap(origins=origins, directions=directions)


def _check_same_shape(depth, shape):
    if depth.shape != tuple(shape):
        raise GeometryError(f"depth shape {depth.shape} does not match {tuple(shape)}")


def unproject(depth: DepthMap, rays: RayMap) -> PointCloud:
    """World points ``origin + D * direction`` for valid pixels, row-major."""
    _check_same_shape(depth, (rays.height, rays.width))
    m = depth.mask
    pts = rays.origins[m] + depth.values[m][:, None] * rays.directions[m]
    return PointCloud(pts)


def unproject_via_matrix(depth: DepthMap, intr: CameraIntrinsics, extr: CameraExtrinsics) -> PointCloud:
    """Same points as :func:`unproject` but via ``R (D K^-1 p) + t``."""
    _check_same_shape(depth, (intr.height, intr.width))
    m = depth.mask
    p = pixel_grid(intr.width, intr.height)[m]
    cam = depth.values[m][:, None] * (p @ np.linalg.inv(intr.K).T)
    return PointCloud(cam @ extr.R.T + extr.t)
