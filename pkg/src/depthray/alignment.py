"""Robust depth scale-shift alignment and Sim3 trajectory alignment."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateFit, GeometryError
from .geometry import CameraExtrinsics, DepthMap, PointCloud, check_rotation
from .rng import Xoshiro256


@dataclass(frozen=True)
class ScaleShift:
    s: float
    t: float

    def __post_init__(self):
        if not (math.isfinite(self.s) and math.isfinite(self.t)) or self.s <= 0:
            raise GeometryError("scale must be positive and both values finite")

    def apply(self, depth: DepthMap) -> DepthMap:
        v = self.s * depth.values + self.t
        mask = depth.mask & (v > 0)
        return DepthMap(np.where(mask, v, np.nan), mask)


@dataclass(frozen=True)
class Sim3:
    """``x -> s R x + t``."""

    s: float
    R: np.ndarray
    t: np.ndarray

    def __post_init__(self):
        if not math.isfinite(self.s) or self.s <= 0:
            raise GeometryError("Sim3 scale must be positive")
        object.__setattr__(self, "R", check_rotation(self.R))
        object.__setattr__(self, "t", np.asarray(self.t, dtype=np.float64).reshape(3))

    @classmethod
    def identity(cls):
        return cls(1.0, np.eye(3), np.zeros(3))

    def apply(self, points):
        return self.s * np.asarray(points, dtype=np.float64) @ self.R.T + self.t

    def apply_pose(self, extr: CameraExtrinsics) -> CameraExtrinsics:
        """Map a camera-to-world pose into the target frame (scale moves the center only)."""
        return CameraExtrinsics.from_matrix(self.R @ extr.R, self.apply(extr.t))

    def inverse(self):
        Rt = self.R.T
        return Sim3(1.0 / self.s, Rt, -(Rt @ self.t) / self.s)

    def compose(self, other):
        """``self ∘ other``."""
        return Sim3(self.s * other.s, self.R @ other.R, self.s * self.R @ other.t + self.t)


@dataclass(frozen=True)
class RansacConfig:
    iterations: int = 256
    sample_size: int = 2
    seed: int = 0
    min_inlier_fraction: float = 0.2

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not 0.0 <= self.min_inlier_fraction <= 1.0:
            raise ValueError("min_inlier_fraction must lie in [0, 1]")


# ---------------------------------------------------------------------------
# depth scale / shift


def _joint_valid(pred: DepthMap, gt: DepthMap):
    if pred.shape != gt.shape:
        raise GeometryError("prediction and ground truth shapes differ")
    m = pred.mask & gt.mask
    return m, pred.values[m], gt.values[m]


def _lsq_1d(x, y):
    if len(x) < 2:
        raise DegenerateFit("need at least two jointly valid pixels")
    mx, my = x.mean(), y.mean()
    dx = x - mx
    var = np.dot(dx, dx)
    if not var > 0.0:
        raise DegenerateFit("prediction has zero variance")
    s = max(np.dot(dx, y - my) / var, 1e-12)
    return s, my - s * mx


def fit_scale_shift_lsq(pred: DepthMap, gt: DepthMap) -> ScaleShift:
    """Closed-form ``argmin sum (s pred + t - gt)^2`` over jointly valid pixels."""
    _, x, y = _joint_valid(pred, gt)
    return ScaleShift(*_lsq_1d(x, y))


def _mad_inliers(r):
    """Residuals within the mean absolute deviation of the residual median."""
    dev = np.abs(r - np.median(r))
    return dev <= dev.mean()


def ransac_scale_shift(pred: DepthMap, gt: DepthMap, cfg: RansacConfig | None = None, max_refine=10):
    """RANSAC scale-shift fit; returns ``(ScaleShift, inlier_mask)``.

    Each two-pixel hypothesis is scored by the number of pixels whose residual
    lies within the mean absolute deviation from the residual median.  The
    winner is refit by least squares and then refined: the band is recomputed
    from the current inliers only (stripping contamination that inflated the
    first threshold) and the model refit, until the inlier set is stable, or
    the next set would fall under ``cfg.min_inlier_fraction`` of the pixels.
    """
    cfg = cfg or RansacConfig()
    m, x, y = _joint_valid(pred, gt)
    n = len(x)
    if n < 2:
        raise DegenerateFit("need at least two jointly valid pixels")
    rng = Xoshiro256(cfg.seed)
    tol = 1e-9 * max(1.0, float(np.abs(y).mean()))

    best = None
    for _ in range(cfg.iterations):
        i, j = rng.sample(n, 2)
        dx = x[i] - x[j]
        if dx == 0.0:
            continue
        s = (y[i] - y[j]) / dx
        t = y[i] - s * x[i]
        if not (s > 0 and math.isfinite(s) and math.isfinite(t)):
            continue
        r = s * x + t - y
        inl = _mad_inliers(r) | (np.abs(r) <= tol)
        count = int(inl.sum())
        rmse = float(np.sqrt(np.mean(r[inl] ** 2)))
        key = (count, -rmse)
        if best is None or key > best[0]:
            best = (key, inl)
    if best is None:
        raise DegenerateFit("no hypothesis produced a positive finite scale")
    inl = best[1]
    if inl.sum() < max(2, cfg.min_inlier_fraction * n):
        raise DegenerateFit("best hypothesis has too few inliers")

    s, t = _lsq_1d(x[inl], y[inl])
    floor = cfg.min_inlier_fraction * n
    for _ in range(max_refine):
        r = s * x + t - y
        dev = np.abs(r - np.median(r[inl]))
        refined = (dev <= dev[inl].mean()) | (np.abs(r) <= tol)
        if np.array_equal(refined, inl) or refined.sum() < max(2, floor):
            break
        try:
            s, t = _lsq_1d(x[refined], y[refined])
        except DegenerateFit:
            break
        inl = refined

    mask = np.zeros(pred.shape, dtype=bool)
    mask[m] = inl
    return ScaleShift(float(s), float(t)), mask


# ---------------------------------------------------------------------------
# Sim3


def _as_points(x):
    if isinstance(x, PointCloud):
        return x.points
    return np.asarray(x, dtype=np.float64).reshape(-1, 3)


def umeyama_sim3(src, dst, with_scale=True) -> Sim3:
    """Least-squares similarity with ``dst ≈ s R src + t`` (Umeyama 1991)."""
    src = _as_points(src)
    dst = _as_points(dst)
    if len(src) != len(dst):
        raise GeometryError("point sets must have equal size")
    n = len(src)
    if n < 3:
        raise DegenerateFit("need at least three correspondences")
    mu_s = src.mean(axis=0)
    mu_d = dst.mean(axis=0)
    xs = src - mu_s
    xd = dst - mu_d
    for pts in (xs, xd):
        sv = np.linalg.svd(pts, compute_uv=False)
        if sv[0] == 0.0 or sv[1] <= 1e-10 * sv[0]:
            raise DegenerateFit("points are coincident or collinear")
    cov = xd.T @ xs / n
    U, D, Vt = np.linalg.svd(cov)
    S = np.eye(3)
    if np.linalg.det(U) * np.linalg.det(Vt) < 0:
        S[2, 2] = -1.0
    R = U @ S @ Vt
    if with_scale:
        var_s = (xs**2).sum() / n
        s = float(np.trace(np.diag(D) @ S) / var_s)
    else:
        s = 1.0
    t = mu_d - s * R @ mu_s
    return Sim3(s, R, t)


@dataclass(frozen=True)
class TrajectoryAlignment:
    sim3: Sim3
    inliers: np.ndarray  # bool per pose
    errors: np.ndarray  # center error per pose under sim3


def ransac_trajectory_align(pred, gt, cfg: RansacConfig | None = None) -> TrajectoryAlignment:
    """RANSAC over pose subsets with Umeyama on camera centers.

    A candidate's inliers are the poses whose center error does not exceed the
    median center error of all poses under that candidate.
    """
    cfg = cfg or RansacConfig(iterations=512, sample_size=3)
    if len(pred) != len(gt):
        raise GeometryError("trajectories have different lengths")
    n = len(pred)
    if n < 3:
        raise DegenerateFit("need at least three poses")
    P = np.array([e.t for e in pred])
    G = np.array([e.t for e in gt])
    k = max(3, math.ceil(n / 5), cfg.sample_size)
    k = min(k, n)
    spread = float(np.sqrt(((G - G.mean(axis=0)) ** 2).sum(axis=1).mean()))
    tol = 1e-9 * max(spread, 1e-12)

    def score(sim):
        err = np.linalg.norm(sim.apply(P) - G, axis=1)
        inl = err <= np.median(err) + tol
        return err, inl

    rng = Xoshiro256(cfg.seed)
    best = None
    iterations = 1 if k == n else cfg.iterations
    for _ in range(iterations):
        idx = sorted(rng.sample(n, k)) if k < n else list(range(n))
        try:
            sim = umeyama_sim3(P[idx], G[idx])
        except DegenerateFit:
            continue
        err, inl = score(sim)
        key = (int(inl.sum()), -float(np.sqrt(np.mean(err[inl] ** 2))))
        if best is None or key > best[0]:
            best = (key, sim, inl)
    if best is None:
        raise DegenerateFit("every sampled pose subset was degenerate")
    _, sim, inl = best
    try:
        refit = umeyama_sim3(P[inl], G[inl])
        sim = refit
    except DegenerateFit:
        pass
    err = np.linalg.norm(sim.apply(P) - G, axis=1)
    return TrajectoryAlignment(sim, inl, err)
