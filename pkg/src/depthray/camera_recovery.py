"""Recover pinhole intrinsics and pose from a single-camera ray map.

The ray map stores, per pixel ``p``, ``d = R K^-1 p``.  The linear map
``H: p -> d`` is estimated with a normalized DLT, and ``H^-1 = K R^T`` is then
split into its upper-triangular and rotation factors with an RQ decomposition.
"""

from __future__ import annotations

import math

import numpy as np
import scipy.linalg

from .errors import DegenerateRays, GeometryError
from .geometry import CameraExtrinsics, CameraIntrinsics, RayMap, pixel_grid

MAX_DLT_PIXELS = 4096


def recover_center(rays: RayMap) -> np.ndarray:
    if rays.height * rays.width == 0:
        raise GeometryError("empty ray map")
    o = rays.origins.reshape(-1, 3)
    # fsum: exactly rounded, so identical origins average to themselves
    return np.array([math.fsum(o[:, k]) for k in range(3)]) / len(o)


def _subsample(p, d, max_pixels):
    h, w = p.shape[:2]
    if h * w <= max_pixels or (h <= 64 and w <= 64):
        return p.reshape(-1, 3), d.reshape(-1, 3)
    step = math.ceil(math.sqrt(h * w / max_pixels))
    while math.ceil(h / step) * math.ceil(w / step) > max_pixels:
        step += 1
    return p[::step, ::step].reshape(-1, 3), d[::step, ::step].reshape(-1, 3)


def _hartley(xy):
    """Similarity that centers 2-D points and scales mean distance to sqrt(2)."""
    c = xy.mean(axis=0)
    dist = np.linalg.norm(xy - c, axis=1).mean()
    if dist == 0.0:
        raise DegenerateRays("all pixels coincide")
    s = math.sqrt(2.0) / dist
    return np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])


def dlt_system(p, d):
    """Stack two cross-product constraint rows per correspondence ``d ~ H p``.

    Of the three rows of ``[d]_x H p = 0`` the one paired with the largest
    component of ``d`` is dropped; it is a combination of the other two.
    """
    n = len(p)
    zero = np.zeros((n, 3))
    x, y, w = d[:, 0:1], d[:, 1:2], d[:, 2:3]
    # rows of d x (H p) written against vec(H) = (h1, h2, h3) stacked by rows
    r0 = np.hstack([zero, -w * p, y * p])
    r1 = np.hstack([w * p, zero, -x * p])
    r2 = np.hstack([-y * p, x * p, zero])
    rows = np.stack([r0, r1, r2], axis=1)  # (n, 3, 9)
    drop = np.argmax(np.abs(d), axis=1)
    keep = np.ones((n, 3), dtype=bool)
    keep[np.arange(n), drop] = False
    return rows[keep].reshape(2 * n, 9)


def solve_homography_dlt(rays: RayMap, subsample=True) -> np.ndarray:
    """Unit-Frobenius ``H`` (det > 0) minimizing ``sum ||H p x d||^2``."""
    p = pixel_grid(rays.width, rays.height)
    d = rays.directions
    if subsample:
        p, d = _subsample(p, d, MAX_DLT_PIXELS)
    else:
        p, d = p.reshape(-1, 3), d.reshape(-1, 3)
    if len(p) < 4:
        raise DegenerateRays("need at least 4 pixels")
    if not np.all(np.isfinite(d)):
        raise DegenerateRays("non-finite ray directions")
    norms = np.linalg.norm(d, axis=1)
    if np.any(norms == 0.0):
        raise DegenerateRays("zero-length ray direction")
    d = d / norms.mean()

    T = _hartley(p[:, :2])
    A = dlt_system(p @ T.T, d)
    _, sv, vt = np.linalg.svd(A, full_matrices=False)
    if sv[-2] <= 1e-10 * sv[0]:
        raise DegenerateRays("constraint matrix is rank deficient")
    H = vt[-1].reshape(3, 3) @ T
    det = np.linalg.det(H)
    if abs(det) <= 1e-12 * np.linalg.norm(H) ** 3:
        raise DegenerateRays("homography is singular")
    H = H / np.linalg.norm(H)
    if det < 0:
        H = -H
    return H


def rq_decompose(H):
    """``H = K R`` with K upper-triangular, positive diagonal, ``K[2,2] = 1``.

    ``H`` is taken up to sign: a negative-determinant input is negated first
    so that ``R`` is a proper rotation.
    """
    H = np.asarray(H, dtype=np.float64)
    if H.shape != (3, 3) or not np.all(np.isfinite(H)):
        raise GeometryError("H must be a finite 3x3 matrix")
    sv = np.linalg.svd(H, compute_uv=False)
    if sv[-1] <= 1e-12 * sv[0]:
        raise GeometryError("H is singular")
    if np.linalg.det(H) < 0:
        H = -H
    K, R = scipy.linalg.rq(H)
    D = np.diag(np.sign(np.diag(K)))
    K = K @ D
    R = D @ R
    if np.linalg.det(R) < 0:
        # unreachable for det(H) > 0 and positive diag(K); kept as a guard
        K, R = -K, -R
    K = K / K[2, 2]
    K[1, 0] = K[2, 0] = K[2, 1] = 0.0
    return K, R


def recover_camera(rays: RayMap, subsample=True):
    """``(CameraIntrinsics, CameraExtrinsics)`` encoded by a ray map."""
    center = recover_center(rays)
    H = solve_homography_dlt(rays, subsample=subsample)
    K, R_wc = rq_decompose(np.linalg.inv(H))
    intr = CameraIntrinsics(
        fx=float(K[0, 0]),
        fy=float(K[1, 1]),
        cx=float(K[0, 2]),
        cy=float(K[1, 2]),
        width=rays.width,
        height=rays.height,
        skew=float(K[0, 1]),
    )
    return intr, CameraExtrinsics.from_matrix(R_wc.T, center)
