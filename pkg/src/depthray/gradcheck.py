"""Central finite-difference verification of the analytic loss gradients.

Instances are drawn so that every ℓ1 residual stays at least ``KINK_MARGIN``
away from zero, which keeps the central difference off the |.| kink.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import losses as L
from .geometry import CameraExtrinsics, CameraIntrinsics, DepthMap, RayMap, build_ray_map, rot_x, rot_y

H = 1e-6
KINK_MARGIN = 1e-3
SIZE = 8


@dataclass(frozen=True)
class GradCheck:
    name: str
    wrt: str
    rel_error: float
    tolerance: float

    @property
    def ok(self):
        return self.rel_error <= self.tolerance


def fd_gradient(f, x, h=H):
    """Central differences of scalar ``f`` at ``x`` (copied, not modified)."""
    x = np.array(x, dtype=np.float64)
    g = np.zeros_like(x)
    for i in range(x.size):
        old = x.flat[i]
        x.flat[i] = old + h
        fp = f(x)
        x.flat[i] = old - h
        fm = f(x)
        x.flat[i] = old
        g.flat[i] = (fp - fm) / (2 * h)
    return g


def rel_error(analytic, numeric):
    """``max|a - f| / max|f|`` (absolute when the reference is all zero)."""
    scale = np.abs(numeric).max()
    diff = np.abs(np.asarray(analytic) - numeric).max()
    return float(diff / scale) if scale > 0 else float(diff)


def _offsets(rng, shape, lo=0.05, hi=0.5):
    mag = rng.uniform(lo, hi, shape)
    return np.where(rng.random(shape) < 0.5, -mag, mag)


def _mask(rng, shape, holes=3):
    m = np.ones(shape, dtype=bool)
    m.flat[rng.choice(m.size, holes, replace=False)] = False
    return m


def _smooth_depth(rng, n=SIZE):
    v, u = np.mgrid[0:n, 0:n] / (n - 1)
    a = rng.uniform(-0.3, 0.3, 5)
    return 2.0 + a[0] * u + a[1] * v + a[2] * u * u + a[3] * v * v + a[4] * u * v


def _camera_rays(rng, n=SIZE):
    intr = CameraIntrinsics(rng.uniform(6, 12), rng.uniform(6, 12), n / 2, n / 2, n, n)
    R = rot_x(rng.uniform(-20, 20)) @ rot_y(rng.uniform(-20, 20))
    extr = CameraExtrinsics.from_matrix(R, rng.normal(size=3))
    return build_ray_map(intr, extr)


def _gradient_residuals(pred, gt):
    m = gt.mask
    g = gt.filled(0.0)
    rx = (pred[:, 1:] - pred[:, :-1]) - (g[:, 1:] - g[:, :-1])
    ry = (pred[1:, :] - pred[:-1, :]) - (g[1:, :] - g[:-1, :])
    return np.concatenate([rx[m[:, 1:] & m[:, :-1]], ry[m[1:, :] & m[:-1, :]]])


def _far_from_kinks(*residuals):
    return all(np.abs(r).min() > KINK_MARGIN for r in residuals if np.size(r))


def _draw(rng, make):
    for _ in range(1000):
        inst = make(rng)
        if inst is not None:
            return inst
    raise RuntimeError("could not draw an instance away from the kinks")


def check_conf_depth(seed):
    rng = np.random.default_rng(seed)
    gt = DepthMap(np.where(_mask(rng, (SIZE, SIZE)), rng.uniform(1, 3, (SIZE, SIZE)), np.nan))
    pred = gt.filled(2.0) + _offsets(rng, gt.shape)
    conf = rng.uniform(0.5, 2.0, gt.shape)
    out = L.conf_depth_loss(pred, gt, conf)
    fp = fd_gradient(lambda x: L.conf_depth_loss(x, gt, conf).value, pred)
    fc = fd_gradient(lambda x: L.conf_depth_loss(pred, gt, x).value, conf)
    return [
        GradCheck("conf_depth", "pred", rel_error(out.grad_pred, fp), 1e-5),
        GradCheck("conf_depth", "conf", rel_error(out.grads["conf"], fc), 1e-5),
    ]


def check_l1_map(seed):
    rng = np.random.default_rng(seed)
    gt = rng.normal(size=(SIZE, SIZE, 3))
    pred = gt + _offsets(rng, gt.shape)
    m = _mask(rng, (SIZE, SIZE))
    out = L.l1_map_loss(pred, gt, m)
    f = fd_gradient(lambda x: L.l1_map_loss(x, gt, m).value, pred)
    return [GradCheck("l1_map", "pred", rel_error(out.grad_pred, f), 1e-5)]


def check_gradient(seed):
    rng = np.random.default_rng(seed)

    def make(rng):
        gt = DepthMap(np.where(_mask(rng, (SIZE, SIZE)), rng.uniform(1, 3, (SIZE, SIZE)), np.nan))
        pred = gt.filled(2.0) + rng.normal(scale=0.3, size=gt.shape)
        return (gt, pred) if _far_from_kinks(_gradient_residuals(pred, gt)) else None

    gt, pred = _draw(rng, make)
    out = L.gradient_loss(pred, gt)
    f = fd_gradient(lambda x: L.gradient_loss(x, gt).value, pred)
    return [GradCheck("gradient", "pred", rel_error(out.grad_pred, f), 1e-5)]


def check_mask_mse(seed):
    rng = np.random.default_rng(seed)
    gt = (rng.random((SIZE, SIZE)) < 0.5).astype(np.float64)
    pred = rng.random((SIZE, SIZE))
    out = L.mask_mse_loss(pred, gt)
    f = fd_gradient(lambda x: L.mask_mse_loss(x, gt).value, pred)
    return [GradCheck("mask_mse", "pred", rel_error(out.grad_pred, f), 1e-5)]


def check_normal(seed):
    rng = np.random.default_rng(seed)
    rays = _camera_rays(rng)
    gt = DepthMap(np.where(_mask(rng, (SIZE, SIZE), holes=2), _smooth_depth(rng), np.nan))
    pred = _smooth_depth(rng) + 0.02 * rng.normal(size=gt.shape)
    out = L.normal_loss(pred, gt, rays)
    f = fd_gradient(lambda x: L.normal_loss(x, gt, rays).value, pred)
    return [GradCheck("normal", "pred", rel_error(out.grad_pred, f), 1e-4)]


def _total_instance(rng):
    gt_rays = _camera_rays(rng)
    gt_depth = DepthMap(np.where(_mask(rng, (SIZE, SIZE)), _smooth_depth(rng), np.nan))
    target, _ = L.Target(gt_depth, gt_rays, rng.normal(size=9)).normalized()
    depth = target.depth.filled(1.0) + _offsets(rng, gt_depth.shape, 0.02, 0.2)
    rays = target.rays.as_array() + _offsets(rng, (SIZE, SIZE, 6), 0.02, 0.2)
    q = rays[..., :3] + depth[..., None] * rays[..., 3:]
    m = target.depth.mask
    r_p = (q - target.points)[m]
    if not _far_from_kinks(r_p, _gradient_residuals(depth, target.depth)):
        return None
    conf = rng.uniform(0.5, 2.0, gt_depth.shape)
    camera = target.camera + _offsets(rng, 9)
    return L.Prediction(depth, conf, rays, camera), target


def check_total(seed):
    rng = np.random.default_rng(seed)
    pred, gt = _draw(rng, _total_instance)
    out = L.total_da3_loss(pred, gt)

    def with_(**kw):
        p = L.Prediction(pred.depth, pred.conf, pred.rays, pred.camera)
        for k, v in kw.items():
            setattr(p, k, v)
        return L.total_da3_loss(p, gt).value

    checks = []
    for name, ref in (("depth", out.grad_pred), ("conf", out.grads["conf"]), ("rays", out.grads["rays"]),
                      ("camera", out.grads["camera"])):
        key = "depth" if name == "depth" else name
        f = fd_gradient(lambda x, key=key: with_(**{key: x}), getattr(pred, key))
        checks.append(GradCheck("total", name, rel_error(ref, f), 1e-5))
    return checks


CHECKS = (check_conf_depth, check_l1_map, check_gradient, check_mask_mse, check_normal, check_total)


def conf_stationarity(seed, lambda_c=L.DEFAULT_LAMBDA_C):
    """Largest |d L_D / d conf| at ``conf = lambda_c / |pred - gt|`` (analytic and numeric)."""
    rng = np.random.default_rng(seed)
    gt = DepthMap(rng.uniform(1, 3, (SIZE, SIZE)))
    pred = gt.values + _offsets(rng, gt.shape)
    conf = lambda_c / np.abs(pred - gt.values)
    out = L.conf_depth_loss(pred, gt, conf, lambda_c)
    f = fd_gradient(lambda x: L.conf_depth_loss(pred, gt, x, lambda_c).value, conf)
    return float(np.abs(out.grads["conf"]).max()), float(np.abs(f).max())


def run_suite(seed=0):
    """All checks for one seed, in a fixed order."""
    results = []
    for check in CHECKS:
        results.extend(check(seed))
    return results
