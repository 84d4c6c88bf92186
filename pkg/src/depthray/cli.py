"""``depthray`` command line.

Results go to stdout (or ``--out``) as JSON, diagnostics to stderr.  Exit
codes: 0 success, 1 other failure, 2 parse error, 3 degenerate input.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

import numpy as np

from . import io
from .alignment import RansacConfig, Sim3, fit_scale_shift_lsq, ransac_scale_shift, ransac_trajectory_align
from .camera_recovery import recover_camera
from .dataqa import clip_depth
from .errors import DegenerateFit, DegenerateRays, ParseError
from .fusion import PRESETS, tsdf_extract_points
from .geometry import DepthMap, build_ray_map, unproject
from .metrics import depth_metrics, pose_auc, recon_metrics, relative_pose_errors
from .pipeline import BenchmarkConfig, fuse, fusion_bounds, run_e2e
from .synth import NoiseSpec

EXIT_OK, EXIT_FAIL, EXIT_PARSE, EXIT_DEGENERATE = 0, 1, 2, 3
DEFAULT_QA_THRESHOLD = 0.6


def _emit(obj, out=None):
    text = io.dumps_json(obj) + "\n"
    if out:
        Path(out).write_text(text)
    else:
        sys.stdout.write(text)


def _sim3_json(sim: Sim3):
    return {"s": float(sim.s), "R": sim.R.tolist(), "t": sim.t.tolist()}


def _read_sim3(path):
    obj = io._parse_json(Path(path).read_text(), 0)
    try:
        return Sim3(float(obj["s"]), np.array(obj["R"], dtype=np.float64), np.array(obj["t"], dtype=np.float64))
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(0, "Sim3 object with s, R, t", str(exc)) from None


# ---------------------------------------------------------------------------
# commands


def cmd_raymap(a):
    rec = io.read_camera(a.camera)
    rays = build_ray_map(rec.intrinsics, rec.extrinsics)
    io.write_raymap(a.out, rays)
    _emit({"width": rays.width, "height": rays.height, "out": str(a.out)})


def cmd_recover(a):
    intr, extr = recover_camera(io.read_raymap(a.rays))
    rec = io.CameraRecord(a.frame_id, intr, extr)
    if a.out:
        io.write_camera(a.out, rec)
    _emit(rec.to_json())


def cmd_unproject(a):
    cloud = unproject(io.read_depth(a.depth), io.read_raymap(a.rays))
    io.write_ply(a.out, cloud)
    _emit({"points": int(len(cloud.points)), "out": str(a.out)})


def _scale_shift(pred, gt, mode, seed):
    if mode == "lsq":
        ss = fit_scale_shift_lsq(pred, gt)
        return ss, int((pred.mask & gt.mask).sum())
    ss, inl = ransac_scale_shift(pred, gt, RansacConfig(seed=seed))
    return ss, int(inl.sum())


def cmd_align_depth(a):
    pred, gt = io.read_depth(a.pred), io.read_depth(a.gt)
    ss, n = _scale_shift(pred, gt, a.mode, a.seed)
    if a.apply:
        io.write_depth(a.apply, ss.apply(pred))
    _emit({"s": ss.s, "t": ss.t, "inliers": n})


def _poses(path):
    return [r.extrinsics for r in io.read_trajectory(path)]


def cmd_align_traj(a):
    pred, gt = _poses(a.pred), _poses(a.gt)
    fit = ransac_trajectory_align(pred, gt, RansacConfig(iterations=a.iterations, sample_size=3, seed=a.seed))
    out = _sim3_json(fit.sim3)
    out["inliers"] = [bool(v) for v in fit.inliers]
    out["errors"] = fit.errors.tolist()
    _emit(out, a.out)


def cmd_eval_pose(a):
    pred, gt = _poses(a.pred), _poses(a.gt)
    taus = a.tau or [3.0, 30.0]
    auc = {f"{t:g}": pose_auc(pred, gt, t).auc for t in taus}
    _emit({"auc": auc, "pairs": len(relative_pose_errors(pred, gt))})


def cmd_eval_depth(a):
    pred, gt = io.read_depth(a.pred), io.read_depth(a.gt)
    align = None
    if a.align != "none":
        ss, _ = _scale_shift(pred, gt, a.align, a.seed)
        pred = ss.apply(pred)
        align = {"s": ss.s, "t": ss.t}
    out = depth_metrics(pred, gt).to_json()
    out["align"] = align
    _emit(out)


def _bench_cfg(a):
    return BenchmarkConfig(
        preset=a.preset,
        f1_threshold=getattr(a, "threshold", None),
        voxel_size=getattr(a, "voxel_size", None),
        truncation=getattr(a, "truncation", None),
        ransac_seed=getattr(a, "seed", 0),
        stride=getattr(a, "stride", 1),
    )


def cmd_fuse(a):
    cfg = _bench_cfg(a)
    records = io.read_trajectory(a.traj)[:: cfg.stride]
    depths = [io.read_depth(Path(a.depths) / f"{r.frame_id}.dam1") for r in records]
    if a.max_depth is not None:
        depths = [clip_depth(d, a.max_depth) for d in depths]
    cams = [(r.intrinsics, r.extrinsics) for r in records]
    sim = _read_sim3(a.sim3) if a.sim3 else Sim3.identity()
    aligned = [(i, sim.apply_pose(e)) for i, e in cams]
    scaled = [DepthMap(d.values * sim.s, d.mask) for d in depths]
    if a.bounds_min is not None and a.bounds_max is not None:
        bounds = (np.array(a.bounds_min), np.array(a.bounds_max))
    else:
        bounds = fusion_bounds(scaled, aligned, cfg.trunc)
    vol = fuse(scaled, aligned, bounds, cfg.voxel, cfg.trunc)
    io.write_tsdf(a.out, vol)
    _emit({"dims": list(vol.dims), "voxel_size": vol.voxel_size, "frames": len(records), "out": str(a.out)})


def _read_cloud(path):
    if str(path).endswith(".tsd1"):
        return tsdf_extract_points(io.read_tsdf(path))
    return io.read_ply(path)


def cmd_eval_recon(a):
    d = a.threshold if a.threshold is not None else PRESETS[a.preset].f1_threshold
    _emit(recon_metrics(_read_cloud(a.recon), _read_cloud(a.gt), d).to_json())


def cmd_losses_check(a):
    from .gradcheck import conf_stationarity, run_suite

    checks = run_suite(a.seed)
    stat_a, stat_n = conf_stationarity(a.seed)
    ok = all(c.ok for c in checks) and max(stat_a, stat_n) < 1e-6
    _emit({
        "seed": a.seed,
        "checks": [{"loss": c.name, "wrt": c.wrt, "rel_error": c.rel_error, "tolerance": c.tolerance, "ok": c.ok}
                   for c in checks],
        "conf_stationarity": {"analytic": stat_a, "numeric": stat_n},
        "ok": ok,
    })
    return EXIT_OK if ok else EXIT_FAIL


def _read_gray(path):
    from PIL import Image

    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("L"), dtype=np.float64) / 255.0
    except OSError as exc:
        raise ParseError(0, "image file", str(exc)) from None


def cmd_qa_score(a):
    from .dataqa import alignment_score, canny_edges, depth_edges

    base = Path(a.pairs).parent
    lines = Path(a.pairs).read_text().splitlines()
    offset = 0
    for line in lines:
        parts = line.split()
        if not parts:
            offset += len(line) + 1
            continue
        if len(parts) != 2:
            raise ParseError(offset, "'image depth' pair", line)
        img_path, dep_path = (p if Path(p).is_absolute() else str(base / p) for p in parts)
        res = alignment_score(canny_edges(_read_gray(img_path)), depth_edges(io.read_depth(dep_path)))
        _emit({"path": parts[0], "score": res.score, "i1": res.i1, "i3": res.i3,
               "pass": bool(not res.degenerate and res.score >= a.threshold)})
        offset += len(line) + 1


def cmd_e2e_synth(a):
    noise = NoiseSpec(a.rot_deg, a.trans, a.depth_rel, a.outliers)
    res = run_e2e(a.seed, noise, _bench_cfg(a), n_views=a.views, width=a.width, height=a.height)
    _emit(res.report, a.out)


# ---------------------------------------------------------------------------
# parser


def _positive(x):
    v = float(x)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser():
    p = argparse.ArgumentParser(prog="depthray", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("raymap", help="build a ray map from a camera JSON")
    s.add_argument("--camera", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_raymap)

    s = sub.add_parser("recover", help="recover a camera from a ray map")
    s.add_argument("--rays", required=True)
    s.add_argument("--out")
    s.add_argument("--frame-id", default="0")
    s.set_defaults(func=cmd_recover)

    s = sub.add_parser("unproject", help="depth + rays to a PLY point cloud")
    s.add_argument("--depth", required=True)
    s.add_argument("--rays", required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_unproject)

    s = sub.add_parser("align-depth", help="fit s, t with s * pred + t ~ gt")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--mode", choices=["lsq", "ransac"], default="ransac")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--apply")
    s.set_defaults(func=cmd_align_depth)

    s = sub.add_parser("align-traj", help="RANSAC Sim3 alignment of two trajectories")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--iterations", type=int, default=512)
    s.add_argument("--out")
    s.set_defaults(func=cmd_align_traj)

    s = sub.add_parser("eval-pose", help="relative pose AUC")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--tau", type=_positive, action="append")
    s.set_defaults(func=cmd_eval_pose)

    s = sub.add_parser("eval-depth", help="delta1 / AbsRel / SqRel")
    s.add_argument("--pred", required=True)
    s.add_argument("--gt", required=True)
    s.add_argument("--align", choices=["none", "lsq", "ransac"], default="none")
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_eval_depth)

    s = sub.add_parser("fuse", help="TSDF fusion of a posed depth sequence")
    s.add_argument("--depths", required=True, help="directory of <frame_id>.dam1 files")
    s.add_argument("--traj", required=True)
    s.add_argument("--sim3")
    s.add_argument("--preset", choices=sorted(PRESETS), default="scannetpp")
    s.add_argument("--voxel-size", type=_positive)
    s.add_argument("--truncation", type=_positive)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--max-depth", type=_positive, help="ignore depths beyond this (before the Sim3 scale)")
    s.add_argument("--bounds-min", type=float, nargs=3)
    s.add_argument("--bounds-max", type=float, nargs=3)
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_fuse)

    s = sub.add_parser("eval-recon", help="accuracy / completeness / F1 against a reference cloud")
    s.add_argument("--recon", required=True, help=".tsd1 volume or .ply cloud")
    s.add_argument("--gt", required=True)
    s.add_argument("--threshold", type=_positive)
    s.add_argument("--preset", choices=sorted(PRESETS), default="scannetpp")
    s.set_defaults(func=cmd_eval_recon)

    s = sub.add_parser("losses", help="loss utilities")
    lsub = s.add_subparsers(dest="action", required=True)
    c = lsub.add_parser("check", help="finite-difference gradient checks")
    c.add_argument("--seed", type=int, default=0)
    c.set_defaults(func=cmd_losses_check)

    s = sub.add_parser("qa", help="training-data checks")
    qsub = s.add_subparsers(dest="action", required=True)
    c = qsub.add_parser("score", help="image/depth edge alignment score per pair")
    c.add_argument("--pairs", required=True, help="text file of 'image depth' lines")
    c.add_argument("--threshold", type=float, default=DEFAULT_QA_THRESHOLD)
    c.set_defaults(func=cmd_qa_score)

    s = sub.add_parser("e2e-synth", help="synthetic end-to-end benchmark")
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--preset", choices=sorted(PRESETS), default="scannetpp")
    s.add_argument("--threshold", type=_positive, help="F1 distance (preset value by default)")
    s.add_argument("--voxel-size", type=_positive)
    s.add_argument("--truncation", type=_positive)
    s.add_argument("--stride", type=int, default=1)
    s.add_argument("--views", type=int, default=8)
    s.add_argument("--width", type=int, default=128)
    s.add_argument("--height", type=int, default=96)
    s.add_argument("--rot-deg", type=float, default=0.0)
    s.add_argument("--trans", type=float, default=0.0)
    s.add_argument("--depth-rel", type=float, default=0.0)
    s.add_argument("--outliers", type=float, default=0.0)
    s.add_argument("--out")
    s.set_defaults(func=cmd_e2e_synth)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        code = args.func(args)
    except ParseError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    except (DegenerateFit, DegenerateRays) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DEGENERATE
    except Exception as exc:  # noqa: BLE001 - reported, not swallowed
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_FAIL
    return EXIT_OK if code is None else code


if __name__ == "__main__":
    sys.exit(main())
