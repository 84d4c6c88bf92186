"""Benchmark pipeline: align a predicted trajectory, fuse its depths, score pose and geometry."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .alignment import RansacConfig, Sim3, ransac_trajectory_align
from .errors import GeometryError
from .fusion import PRESETS, tsdf_extract_points, tsdf_integrate, tsdf_new
from .geometry import DepthMap, build_ray_map, random_rotation, rotation_geodesic_deg, unproject
from .metrics import pose_auc, recon_metrics
from .synth import NoiseSpec, SynthScene, desk_scene, perturb_depth, perturb_poses, render_depth


@dataclass(frozen=True)
class BenchmarkConfig:
    preset: str = "scannetpp"
    f1_threshold: float | None = None  # preset value when None
    voxel_size: float | None = None
    truncation: float | None = None  # 4 voxels when None
    auc_thresholds: tuple = (3.0, 30.0)
    ransac_seed: int = 0
    stride: int = 1

    def __post_init__(self):
        if self.preset not in PRESETS and (self.f1_threshold is None or self.voxel_size is None):
            raise ValueError(f"unknown preset {self.preset!r} and no explicit threshold/voxel size")
        if any(t <= 0 for t in self.auc_thresholds):
            raise ValueError("AUC thresholds must be positive")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        for v in (self.f1_threshold, self.voxel_size, self.truncation):
            if v is not None and not v > 0:
                raise ValueError("threshold, voxel size and truncation must be positive")

    @property
    def d(self):
        return self.f1_threshold if self.f1_threshold is not None else PRESETS[self.preset].f1_threshold

    @property
    def voxel(self):
        return self.voxel_size if self.voxel_size is not None else PRESETS[self.preset].voxel_size

    @property
    def trunc(self):
        return self.truncation if self.truncation is not None else 4.0 * self.voxel


def fusion_bounds(depths, cameras, margin, limit=None):
    """Bounding box of all unprojected valid pixels, padded by ``margin``.

    ``limit`` (a ``(lo, hi)`` pair) clips the box, which keeps grazing views of
    an unbounded plane from blowing up the volume.
    """
    lo = np.full(3, np.inf)
    hi = np.full(3, -np.inf)
    for depth, (intr, extr) in zip(depths, cameras):
        if not depth.mask.any():
            continue
        P = unproject(depth, build_ray_map(intr, extr)).points
        lo = np.minimum(lo, P.min(axis=0))
        hi = np.maximum(hi, P.max(axis=0))
    if not np.all(np.isfinite(lo)):
        raise GeometryError("no valid depth to bound")
    lo, hi = lo - margin, hi + margin
    if limit is not None:
        lo = np.maximum(lo, limit[0])
        hi = np.minimum(hi, limit[1])
    return lo, hi


def fuse(depths, cameras, bounds, voxel_size, truncation):
    vol = tsdf_new(bounds[0], bounds[1], voxel_size, truncation)
    for depth, (intr, extr) in zip(depths, cameras):
        tsdf_integrate(vol, depth, intr, extr)
    return vol


def align_and_fuse(pred_depths, pred_cams, gt_poses, bounds, cfg: BenchmarkConfig):
    """Align predicted poses to ``gt_poses``, then fuse depths scaled by the Sim3 scale."""
    fit = ransac_trajectory_align([e for _, e in pred_cams], gt_poses, RansacConfig(512, 3, cfg.ransac_seed))
    sim = fit.sim3
    cams = [(intr, sim.apply_pose(extr)) for intr, extr in pred_cams]
    depths = [DepthMap(d.values * sim.s, d.mask) for d in pred_depths]
    return fit, fuse(depths, cams, bounds, cfg.voxel, cfg.trunc)


def random_gauge(seed) -> Sim3:
    """Random similarity used to move predictions into an arbitrary frame."""
    rng = np.random.default_rng(seed)
    return Sim3(float(rng.uniform(0.5, 2.0)), random_rotation(rng), rng.normal(size=3))


@dataclass
class E2EResult:
    report: dict
    gt_points: np.ndarray = field(repr=False)
    pred_points: np.ndarray = field(repr=False)


# the desk plane is unbounded; the benchmark volume stops here
DESK_LIMIT = (np.array([-1.2, -1.2, -0.1]), np.array([1.2, 1.2, 0.7]))


def run_e2e(seed=0, noise: NoiseSpec | None = None, cfg: BenchmarkConfig | None = None,
            n_views=8, width=128, height=96) -> E2EResult:
    """Synthetic benchmark on the desk scene.

    Predictions are ground truth moved by a random Sim3 gauge (depth scaled
    with it) and then perturbed by ``noise``.  The reference cloud is the
    fusion of the ground-truth frames in the same volume.
    """
    noise = noise or NoiseSpec()
    cfg = cfg or BenchmarkConfig()
    scene: SynthScene = desk_scene(n_views, width, height, seed)
    idx = list(range(0, n_views, cfg.stride))
    gt_cams = [scene.cameras[i] for i in idx]
    gt_depths = [render_depth(scene, i) for i in idx]
    gt_poses = [e for _, e in gt_cams]

    gauge = random_gauge(seed)
    pred_poses = perturb_poses([gauge.apply_pose(e) for e in gt_poses], noise, seed + 1)
    pred_cams = [(c[0], e) for c, e in zip(gt_cams, pred_poses)]
    pred_depths = [perturb_depth(DepthMap(d.values * gauge.s, d.mask), noise, seed + 1000 + k)
                   for k, d in enumerate(gt_depths)]

    bounds = fusion_bounds(gt_depths, gt_cams, cfg.trunc, DESK_LIMIT)
    gt_vol = fuse(gt_depths, gt_cams, bounds, cfg.voxel, cfg.trunc)
    gt_pts = tsdf_extract_points(gt_vol).points
    fit, vol = align_and_fuse(pred_depths, pred_cams, gt_poses, bounds, cfg)
    pred_pts = tsdf_extract_points(vol).points
    if len(pred_pts) == 0 or len(gt_pts) == 0:
        raise GeometryError("fusion produced an empty surface")

    recon = recon_metrics(pred_pts, gt_pts, cfg.d)
    auc = {f"{t:g}": pose_auc(pred_poses, gt_poses, t).auc for t in cfg.auc_thresholds}
    inv = gauge.inverse()
    report = {
        "seed": int(seed),
        "preset": cfg.preset,
        "views": len(idx),
        "noise": {
            "rot_deg": noise.rot_deg,
            "trans": noise.trans,
            "depth_rel": noise.depth_rel,
            "outlier_fraction": noise.outlier_fraction,
        },
        "voxel_size": float(vol.voxel_size),
        "alignment": {
            "scale": fit.sim3.s,
            "scale_error": abs(fit.sim3.s - inv.s),
            "rotation_error_deg": rotation_geodesic_deg(fit.sim3.R, inv.R),
            "inliers": int(fit.inliers.sum()),
        },
        "auc": auc,
        "recon": recon.to_json(),
        "points": {"pred": int(len(pred_pts)), "gt": int(len(gt_pts))},
    }
    return E2EResult(report, gt_pts, pred_pts)
