"""Training objectives with analytic gradients.

Every loss returns a :class:`LossOutput` holding the scalar value and
``d value / d prediction``; gradients with respect to secondary inputs (depth
confidence, ray maps, camera vectors) go into ``grads``.  ℓ1 terms use the
subgradient convention ``sign(0) = 0``.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import GeometryError
from .geometry import DepthMap, RayMap

DEFAULT_LAMBDA_C = 0.2
CANONICAL_FOCAL = 300.0


@dataclass
class LossOutput:
    value: float
    grad_pred: np.ndarray
    grads: dict = field(default_factory=dict)
    omitted: tuple = ()


def _mask_of(gt):
    return gt.mask if isinstance(gt, DepthMap) else np.isfinite(gt)


def _vals(gt):
    return gt.filled(0.0) if isinstance(gt, DepthMap) else np.nan_to_num(np.asarray(gt, dtype=np.float64))


# ---------------------------------------------------------------------------
# scale normalization


def scale_normalizer(points, masks=None) -> float:
    """Mean Euclidean norm of the valid points across all views.

    ``points`` is one ``(..., 3)`` array or a list of them; ``masks`` selects
    valid entries (all valid when omitted).
    """
    if isinstance(points, np.ndarray):
        points = [points]
        masks = None if masks is None else [masks]
    total = 0.0
    count = 0
    for i, P in enumerate(points):
        P = np.asarray(P, dtype=np.float64).reshape(-1, 3)
        m = np.ones(len(P), dtype=bool) if masks is None else np.asarray(masks[i], dtype=bool).reshape(-1)
        total += np.linalg.norm(P[m], axis=1).sum()
        count += int(m.sum())
    if count == 0:
        raise GeometryError("no valid points")
    return total / count


# ---------------------------------------------------------------------------
# depth, ℓ1 and gradient terms


def conf_depth_loss(pred, gt: DepthMap, conf, lambda_c=DEFAULT_LAMBDA_C) -> LossOutput:
    """Confidence-weighted ℓ1 depth loss with a ``-λ log c`` confidence prior."""
    pred = np.asarray(pred, dtype=np.float64)
    conf = np.asarray(conf, dtype=np.float64)
    if pred.shape != gt.shape or conf.shape != gt.shape:
        raise GeometryError("prediction, confidence and ground truth shapes differ")
    m = gt.mask
    z = int(m.sum())
    if z == 0:
        raise GeometryError("no valid ground-truth pixels")
    if np.any(~(conf[m] > 0)):
        raise ValueError("confidence must be positive on valid pixels")
    diff = np.where(m, pred - gt.filled(0.0), 0.0)
    c = np.where(m, conf, 1.0)
    value = float(np.sum(np.where(m, c * np.abs(diff) - lambda_c * np.log(c), 0.0)) / z)
    grad_pred = np.where(m, c * np.sign(diff), 0.0) / z
    grad_conf = np.where(m, np.abs(diff) - lambda_c / c, 0.0) / z
    return LossOutput(value, grad_pred, {"conf": grad_conf})


def l1_map_loss(pred, gt, mask=None) -> LossOutput:
    """Mean absolute error over valid entries; an ``(H, W)`` mask broadcasts over channels."""
    pred = np.asarray(pred, dtype=np.float64)
    gt = np.asarray(gt, dtype=np.float64)
    if pred.shape != gt.shape:
        raise GeometryError("prediction and target shapes differ")
    if mask is None:
        m = np.ones(pred.shape, dtype=bool)
    else:
        m = np.asarray(mask, dtype=bool)
        while m.ndim < pred.ndim:
            m = m[..., None]
        m = np.broadcast_to(m, pred.shape)
    n = int(m.sum())
    if n == 0:
        raise GeometryError("empty mask")
    diff = np.where(m, pred - np.where(m, gt, 0.0), 0.0)
    return LossOutput(float(np.abs(diff).sum() / n), np.sign(diff) / n)


def _forward_diffs(a, axis):
    if axis == 1:
        return a[:, 1:] - a[:, :-1]
    return a[1:, :] - a[:-1, :]


def gradient_loss(pred, gt: DepthMap) -> LossOutput:
    """ℓ1 mismatch of horizontal and vertical forward differences.

    A difference is used only where both of its pixels are valid; each
    direction is averaged over its own valid pairs.
    """
    pred = np.asarray(pred, dtype=np.float64)
    if pred.shape != gt.shape:
        raise GeometryError("prediction and ground truth shapes differ")
    h, w = pred.shape
    if h < 2 or w < 2:
        raise GeometryError("need at least 2x2 pixels")
    g = gt.filled(0.0)
    m = gt.mask
    value = 0.0
    grad = np.zeros_like(pred)
    used = 0
    for axis in (1, 0):
        if axis == 1:
            pair = m[:, 1:] & m[:, :-1]
        else:
            pair = m[1:, :] & m[:-1, :]
        n = int(pair.sum())
        if n == 0:
            continue
        used += n
        r = np.where(pair, _forward_diffs(pred, axis) - _forward_diffs(g, axis), 0.0)
        value += float(np.abs(r).sum() / n)
        s = np.sign(r) / n
        if axis == 1:
            grad[:, 1:] += s
            grad[:, :-1] -= s
        else:
            grad[1:, :] += s
            grad[:-1, :] -= s
    if used == 0:
        raise GeometryError("no valid difference pairs")
    return LossOutput(value, grad)


def mask_mse_loss(pred_mask, gt_mask) -> LossOutput:
    """Mean squared error between a soft mask prediction and a binary target."""
    p = np.asarray(pred_mask, dtype=np.float64)
    g = np.asarray(gt_mask, dtype=np.float64)
    if p.shape != g.shape:
        raise GeometryError("mask shapes differ")
    n = p.size
    d = p - g
    return LossOutput(float((d * d).sum() / n), 2.0 * d / n)


# ---------------------------------------------------------------------------
# normals


def normal_weights(normals) -> np.ndarray:
    """``w_i = sum_j |n_j| - |n_i|``: long normals (far neighbors) weigh less."""
    n = np.asarray(normals, dtype=np.float64)
    lengths = np.linalg.norm(n, axis=-1)
    return lengths.sum(axis=-1, keepdims=True) - lengths


def mean_normal(normals) -> np.ndarray:
    """Weighted sum of unit normals; zero-length normals are dropped."""
    n = np.asarray(normals, dtype=np.float64).reshape(-1, 3)
    lengths = np.linalg.norm(n, axis=1)
    keep = lengths > 0
    if not keep.any():
        raise GeometryError("all normals are zero")
    n, lengths = n[keep], lengths[keep]
    w = lengths.sum() - lengths
    return (w[:, None] * n / lengths[:, None]).sum(axis=0)


def _angle(a, b):
    """Angle between rows of ``a`` and ``b`` plus its gradient with respect to ``a``.

    Computed as ``atan2(|a x b|, a . b)``, which is exact at zero.  Zero is a
    kink of the angle, so below ``1e-12`` rad the subgradient is taken as zero
    (as ``sign(0) = 0`` for the ℓ1 terms).  Zero vectors get angle 0 and no
    gradient.
    """
    na = np.linalg.norm(a, axis=-1)
    nb = np.linalg.norm(b, axis=-1)
    ok = (na > 0) & (nb > 0)
    cross = np.linalg.norm(np.cross(a, b), axis=-1)
    dot = (a * b).sum(-1)
    theta = np.where(ok, np.arctan2(cross, dot), 0.0)
    na_s = np.where(ok, na, 1.0)
    nb_s = np.where(ok, nb, 1.0)
    ua = a / na_s[..., None]
    ub = b / nb_s[..., None]
    perp = ub - (ua * ub).sum(-1, keepdims=True) * ua
    pn = np.linalg.norm(perp, axis=-1)
    good = ok & (pn > 1e-12)
    grad = np.where(good[..., None], -perp / (np.where(good, pn, 1.0) * na_s)[..., None], 0.0)
    return theta, grad


def _stencil_points(P, valid):
    """Center and E, N, W, S neighbors for interior pixels with a full valid stencil."""
    C = P[1:-1, 1:-1]
    E = P[1:-1, 2:]
    N = P[:-2, 1:-1]
    W = P[1:-1, :-2]
    S = P[2:, 1:-1]
    ok = valid[1:-1, 1:-1] & valid[1:-1, 2:] & valid[:-2, 1:-1] & valid[1:-1, :-2] & valid[2:, 1:-1]
    return (C, E, N, W, S), ok


def neighbor_normals(C, E, N, W, S):
    """Four unnormalized normals from consecutive neighbor-difference pairs, shape ``(..., 4, 3)``."""
    a = [E - C, N - C, W - C, S - C]
    return np.stack([np.cross(a[i], a[(i + 1) % 4]) for i in range(4)], axis=-2), a


def _mean_normal_fwd(n):
    lengths = np.linalg.norm(n, axis=-1)  # (..., 4)
    keep = lengths > 0
    ls = np.where(keep, lengths, 1.0)
    unit = np.where(keep[..., None], n / ls[..., None], 0.0)
    total = np.where(keep, lengths, 0.0).sum(-1, keepdims=True)
    w = np.where(keep, total - lengths, 0.0)
    nm = (w[..., None] * unit).sum(-2)
    return nm, (lengths, keep, ls, unit, w)


def _mean_normal_bwd(g_nm, cache):
    lengths, keep, ls, unit, w = cache
    gw = (g_nm[..., None, :] * unit).sum(-1)  # dL/dw_i
    gw = np.where(keep, gw, 0.0)
    g_len = gw.sum(-1, keepdims=True) - gw  # dL/d|n_j|
    g_unit = w[..., None] * g_nm[..., None, :]
    # d unit / d n = (I - u u^T) / |n|
    proj = g_unit - (g_unit * unit).sum(-1, keepdims=True) * unit
    g_n = proj / ls[..., None] + g_len[..., None] * unit
    return np.where(keep[..., None], g_n, 0.0)


def normal_loss(pred_depth, gt_depth: DepthMap, rays: RayMap) -> LossOutput:
    """Distance-weighted surface-normal loss (angles in radians).

    At each pixel whose 4-neighborhood is fully valid, the predicted and
    ground-truth points build four neighbor normals and their weighted mean;
    the loss is the angle between mean normals plus the four per-normal
    angles, averaged over eligible pixels.
    """
    pred = np.asarray(pred_depth, dtype=np.float64)
    if pred.shape != gt_depth.shape or pred.shape != (rays.height, rays.width):
        raise GeometryError("depth and ray map shapes differ")
    if min(pred.shape) < 3:
        raise GeometryError("need at least 3x3 pixels")
    o, d = rays.origins, rays.directions
    Pp = o + pred[..., None] * d
    Pg = o + gt_depth.filled(0.0)[..., None] * d
    (pts_p, ok) = _stencil_points(Pp, gt_depth.mask)
    (pts_g, _) = _stencil_points(Pg, gt_depth.mask)
    n_eval = int(ok.sum())
    if n_eval == 0:
        raise GeometryError("no pixel has a fully valid neighborhood")

    np_, diffs = neighbor_normals(*pts_p)
    ng, _ = neighbor_normals(*pts_g)
    nm_p, cache = _mean_normal_fwd(np_)
    nm_g, _ = _mean_normal_fwd(ng)

    th_m, g_m = _angle(nm_p, nm_g)
    th_i, g_i = _angle(np_, ng)
    per_pixel = th_m + th_i.sum(-1)
    value = float(np.where(ok, per_pixel, 0.0).sum() / n_eval)

    scale = np.where(ok, 1.0 / n_eval, 0.0)
    g_nm = g_m * scale[..., None]
    g_n = g_i * scale[..., None, None] + _mean_normal_bwd(g_nm, cache)

    # back through n_i = a_i x a_{i+1}
    g_a = [np.zeros_like(diffs[0]) for _ in range(4)]
    for i in range(4):
        j = (i + 1) % 4
        g_a[i] += np.cross(diffs[j], g_n[..., i, :])
        g_a[j] += np.cross(g_n[..., i, :], diffs[i])
    gE, gN, gW, gS = g_a
    gC = -(gE + gN + gW + gS)

    gP = np.zeros_like(Pp)
    gP[1:-1, 1:-1] += gC
    gP[1:-1, 2:] += gE
    gP[:-2, 1:-1] += gN
    gP[1:-1, :-2] += gW
    gP[2:, 1:-1] += gS
    grad = (gP * d).sum(-1)
    return LossOutput(value, grad)


# ---------------------------------------------------------------------------
# composite objectives


@dataclass
class Prediction:
    depth: np.ndarray  # (H, W)
    conf: np.ndarray  # (H, W), positive
    rays: np.ndarray  # (H, W, 6)
    camera: np.ndarray | None = None  # 9-vector


@dataclass
class Target:
    depth: DepthMap
    rays: RayMap
    camera: np.ndarray | None = None

    @property
    def points(self):
        return self.rays.origins + self.depth.filled(0.0)[..., None] * self.rays.directions

    def normalized(self):
        """Copy with depth, ray origins and camera translation divided by the scene scale.

        Directions keep their magnitude: ``P / s = t / s + (D / s) d``.
        """
        s = scale_normalizer(self.points, self.depth.mask)
        depth = DepthMap(self.depth.values / s, self.depth.mask)
        rays = RayMap(self.rays.origins / s, self.rays.directions)
        cam = None
        if self.camera is not None:
            cam = np.asarray(self.camera, dtype=np.float64).copy()
            cam[:3] /= s
        return Target(depth, rays, cam), s


def total_da3_loss(pred: Prediction, gt: Target, alpha=1.0, beta=1.0, lambda_c=DEFAULT_LAMBDA_C) -> LossOutput:
    """``L_D + L_M + L_P + beta L_C + alpha L_grad``.

    ``L_P`` compares ``t + D d`` built from the predicted depth and rays with
    the ground-truth points; ``L_C`` is an ℓ1 loss on the camera vector and is
    skipped when either camera is missing.  ``gt`` should already be scale
    normalized (see :meth:`Target.normalized`).
    """
    depth = np.asarray(pred.depth, dtype=np.float64)
    rays = np.asarray(pred.rays, dtype=np.float64)
    m = gt.depth.mask

    l_d = conf_depth_loss(depth, gt.depth, pred.conf, lambda_c)
    l_m = l1_map_loss(rays, gt.rays.as_array())

    o_hat, d_hat = rays[..., :3], rays[..., 3:]
    q = o_hat + depth[..., None] * d_hat
    l_p = l1_map_loss(q, np.where(m[..., None], gt.points, 0.0), m)
    g_q = l_p.grad_pred

    value = l_d.value + l_m.value + l_p.value
    g_depth = l_d.grad_pred + (g_q * d_hat).sum(-1)
    g_rays = l_m.grad_pred.copy()
    g_rays[..., :3] += g_q
    g_rays[..., 3:] += g_q * depth[..., None]
    grads = {"conf": l_d.grads["conf"], "rays": g_rays}

    if alpha:
        l_g = gradient_loss(depth, gt.depth)
        value += alpha * l_g.value
        g_depth = g_depth + alpha * l_g.grad_pred
    if pred.camera is not None and gt.camera is not None:
        l_c = l1_map_loss(pred.camera, gt.camera)
        value += beta * l_c.value
        grads["camera"] = beta * l_c.grad_pred
    return LossOutput(float(value), g_depth, grads)


def teacher_loss(pred_depth, gt_depth: DepthMap, rays: RayMap, sky=None, obj=None, alpha=0.5) -> LossOutput:
    """Teacher objective without the global-local term.

    ``alpha * L_grad + L_N + L_sky + L_obj``; ``sky`` and ``obj`` are
    ``(predicted_mask, target_mask)`` pairs or None.  The global-local
    alignment term is not implemented; the result lists it in ``omitted``.
    """
    warnings.warn("teacher_loss omits the global-local term", stacklevel=2)
    l_g = gradient_loss(pred_depth, gt_depth)
    l_n = normal_loss(pred_depth, gt_depth, rays)
    value = alpha * l_g.value + l_n.value
    grad = alpha * l_g.grad_pred + l_n.grad_pred
    grads = {}
    for name, pair in (("sky", sky), ("obj", obj)):
        if pair is not None:
            l = mask_mse_loss(*pair)
            value += l.value
            grads[name] = l.grad_pred
    return LossOutput(float(value), grad, grads, omitted=("global_local",))


# ---------------------------------------------------------------------------
# depth parameterizations


def canonical_depth_transform(depth: DepthMap, focal, canonical_focal=CANONICAL_FOCAL) -> DepthMap:
    """Rescale depth by ``canonical_focal / focal``."""
    if not (focal > 0 and canonical_focal > 0):
        raise ValueError("focal lengths must be positive")
    return DepthMap(depth.values * (canonical_focal / focal), depth.mask)


def exp_encode(depth):
    """Network-space value for a depth (natural log)."""
    return np.log(np.asarray(depth, dtype=np.float64))


def exp_decode(x):
    return np.exp(np.asarray(x, dtype=np.float64))
