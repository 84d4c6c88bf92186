"""Pose, reconstruction and depth metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import GeometryError
from .geometry import DepthMap, PointCloud, rotation_geodesic_deg

NEAR_ZERO = 1e-12


@dataclass(frozen=True)
class PoseAucReport:
    auc: float
    threshold_deg: float
    curve: np.ndarray

    def to_json(self):
        return {"auc": self.auc, "threshold_deg": self.threshold_deg, "curve": self.curve.tolist()}


@dataclass(frozen=True)
class ReconReport:
    accuracy_mean: float
    completeness_mean: float
    chamfer: float
    precision: float
    recall: float
    f1: float
    threshold: float

    def to_json(self):
        return {
            "accuracy": self.accuracy_mean,
            "completeness": self.completeness_mean,
            "chamfer": self.chamfer,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "threshold": self.threshold,
        }


@dataclass(frozen=True)
class DepthReport:
    delta1: float
    absrel: float
    sqrel: float

    def to_json(self):
        return {"delta1": self.delta1, "absrel": self.absrel, "sqrel": self.sqrel}


# ---------------------------------------------------------------------------
# pose


def _vector_angle_deg(a, b):
    na, nb = np.linalg.norm(a), np.linalg.norm(b)
    if na < NEAR_ZERO and nb < NEAR_ZERO:
        return 0.0
    if na < NEAR_ZERO or nb < NEAR_ZERO:
        return 180.0
    return math.degrees(math.atan2(np.linalg.norm(np.cross(a, b)), float(np.dot(a, b))))


def relative_pose_errors(pred, gt):
    """``(rra_deg, rta_deg)`` for every unordered pair ``i < j``.

    Relative motion of pair (i, j) is expressed in camera i's frame:
    ``R_i^T R_j`` and ``R_i^T (c_j - c_i)``.
    """
    if len(pred) != len(gt):
        raise GeometryError("trajectories have different lengths")
    n = len(pred)
    if n < 2:
        raise GeometryError("need at least two poses")
    Rp = [e.R for e in pred]
    Rg = [e.R for e in gt]
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            rel_p = Rp[i].T @ Rp[j]
            rel_g = Rg[i].T @ Rg[j]
            tp = Rp[i].T @ (pred[j].t - pred[i].t)
            tg = Rg[i].T @ (gt[j].t - gt[i].t)
            out.append((rotation_geodesic_deg(rel_p, rel_g), _vector_angle_deg(tp, tg)))
    return out


def auc_from_errors(rra, rta, tau_max_deg, steps=1000):
    """Mean of ``min(acc_R, acc_T)`` over the grid ``tau_max/steps .. tau_max``, in percent.

    ``acc(tau)`` is the fraction of pairs with error strictly below ``tau``.
    """
    if tau_max_deg <= 0:
        raise ValueError("tau_max_deg must be positive")
    rra = np.sort(np.asarray(rra, dtype=np.float64))
    rta = np.sort(np.asarray(rta, dtype=np.float64))
    grid = tau_max_deg * np.arange(1, steps + 1) / steps
    acc_r = np.searchsorted(rra, grid, side="left") / len(rra)
    acc_t = np.searchsorted(rta, grid, side="left") / len(rta)
    curve = np.minimum(acc_r, acc_t)
    return 100.0 * float(curve.mean()), curve


def pose_auc(pred, gt, tau_max_deg, steps=1000) -> PoseAucReport:
    errs = np.array(relative_pose_errors(pred, gt))
    auc, curve = auc_from_errors(errs[:, 0], errs[:, 1], tau_max_deg, steps)
    return PoseAucReport(auc=auc, threshold_deg=float(tau_max_deg), curve=curve)


# ---------------------------------------------------------------------------
# point clouds


def _pts(x):
    return x.points if isinstance(x, PointCloud) else np.asarray(x, dtype=np.float64).reshape(-1, 3)


def cloud_nn_distances(a, b):
    """Distance from each point of ``a`` to its nearest neighbor in ``b``."""
    a, b = _pts(a), _pts(b)
    if len(a) == 0 or len(b) == 0:
        raise GeometryError("point clouds must be non-empty")
    _, idx = cKDTree(b).query(a, k=1)
    diff = a - b[idx]
    # recomputed here so the value does not depend on the tree's arithmetic
    return np.sqrt((diff**2).sum(axis=1))


def recon_metrics(recon, gt, threshold) -> ReconReport:
    if threshold <= 0:
        raise ValueError("threshold must be positive")
    d_rg = cloud_nn_distances(recon, gt)
    d_gr = cloud_nn_distances(gt, recon)
    precision = 100.0 * float(np.mean(d_rg < threshold))
    recall = 100.0 * float(np.mean(d_gr < threshold))
    f1 = 0.0 if precision + recall == 0 else 2 * precision * recall / (precision + recall)
    acc = float(d_rg.mean())
    comp = float(d_gr.mean())
    return ReconReport(
        accuracy_mean=acc,
        completeness_mean=comp,
        chamfer=(acc + comp) / 2.0,
        precision=precision,
        recall=recall,
        f1=f1,
        threshold=float(threshold),
    )


# ---------------------------------------------------------------------------
# depth


def depth_metrics(pred: DepthMap, gt: DepthMap) -> DepthReport:
    if pred.shape != gt.shape:
        raise GeometryError("depth shapes differ")
    m = pred.mask & gt.mask
    if not m.any():
        raise GeometryError("no jointly valid pixels")
    p, g = pred.values[m], gt.values[m]
    ratio = np.maximum(p / g, g / p)
    return DepthReport(
        delta1=float(np.mean(ratio < 1.25)),
        absrel=float(np.mean(np.abs(p - g) / g)),
        sqrel=float(np.mean((p - g) ** 2 / g)),
    )
