"""A small on-disk workspace exercising every CLI command."""

import contextlib
import io as _io
import json
from pathlib import Path

import numpy as np
from PIL import Image

from depthray import io
from depthray.cli import main
from depthray.geometry import DepthMap
from depthray.pipeline import random_gauge
from depthray.synth import desk_scene, render_depth

SCHEMA_DIR = Path(__file__).resolve().parent.parent / "docs" / "schemas"
DESK_BOUNDS = ["--bounds-min", "-1.2", "-1.2", "-0.1", "--bounds-max", "1.2", "1.2", "0.7"]


def build(root: Path):
    root = Path(root)
    scene = desk_scene(8, 64, 48, seed=0)
    recs = [io.CameraRecord(str(i), c[0], c[1]) for i, c in enumerate(scene.cameras)]
    io.write_trajectory(root / "gt.jsonl", recs)
    g = random_gauge(1)
    io.write_trajectory(root / "pred.jsonl",
                        [io.CameraRecord(r.frame_id, r.intrinsics, g.apply_pose(r.extrinsics)) for r in recs])
    io.write_camera(root / "cam.json", recs[0])
    (root / "d").mkdir(exist_ok=True)
    (root / "pd").mkdir(exist_ok=True)
    for i in range(8):
        d = render_depth(scene, i)
        io.write_depth(root / "d" / f"{i}.dam1", d)
        io.write_depth(root / "pd" / f"{i}.dam1", DepthMap(d.values * g.s, d.mask))
    d = render_depth(scene, 0)
    io.write_depth(root / "gt.dam1", d)
    rng = np.random.default_rng(0)
    pred = 0.5 * d.values + 0.1
    junk = rng.random(d.shape) < 0.2
    pred[junk & d.mask] = rng.uniform(0.5, 1.5, (junk & d.mask).sum())
    io.write_depth(root / "pred.dam1", DepthMap(pred))
    Image.fromarray((255 * (d.filled(0) > 1.5)).astype(np.uint8)).save(root / "img.png")
    (root / "pairs.txt").write_text("img.png gt.dam1\n")


def commands(root: Path):
    """``(name, argv, schema)`` for every command; order matters (later ones use earlier outputs)."""
    r = lambda p: str(Path(root) / p)  # noqa: E731
    return [
        ("raymap", ["raymap", "--camera", r("cam.json"), "--out", r("r.ray1")], "raymap"),
        ("recover", ["recover", "--rays", r("r.ray1"), "--out", r("rec.json")], "camera"),
        ("unproject", ["unproject", "--depth", r("gt.dam1"), "--rays", r("r.ray1"), "--out", r("pc.ply")], "unproject"),
        ("align-depth", ["align-depth", "--pred", r("pred.dam1"), "--gt", r("gt.dam1"), "--seed", "3",
                         "--apply", r("aligned.dam1")], "align-depth"),
        ("align-traj", ["align-traj", "--pred", r("pred.jsonl"), "--gt", r("gt.jsonl"), "--seed", "2"], "align-traj"),
        ("eval-pose", ["eval-pose", "--pred", r("pred.jsonl"), "--gt", r("gt.jsonl"), "--tau", "3", "--tau", "30"],
         "eval-pose"),
        ("eval-depth", ["eval-depth", "--pred", r("pred.dam1"), "--gt", r("gt.dam1"), "--align", "ransac"],
         "eval-depth"),
        ("fuse-gt", ["fuse", "--depths", r("d"), "--traj", r("gt.jsonl"), *DESK_BOUNDS, "--out", r("gt.tsd1")], "fuse"),
        ("fuse", ["fuse", "--depths", r("pd"), "--traj", r("pred.jsonl"), "--sim3", r("sim3.json"), *DESK_BOUNDS,
                  "--out", r("vol.tsd1")], "fuse"),
        ("eval-recon", ["eval-recon", "--recon", r("vol.tsd1"), "--gt", r("gt.tsd1")], "eval-recon"),
        ("losses-check", ["losses", "check", "--seed", "4"], "losses-check"),
        ("qa-score", ["qa", "score", "--pairs", r("pairs.txt")], "qa-score"),
        ("e2e-synth", ["e2e-synth", "--seed", "1", "--width", "64", "--height", "48"], "e2e-synth"),
    ]


def run(argv):
    """Run the CLI in-process; returns ``(exit_code, stdout, stderr)``."""
    out, err = _io.StringIO(), _io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = main(argv)
    return code, out.getvalue(), err.getvalue()


def run_all(root: Path):
    """Every command in order; the align-traj result is also saved for ``fuse``.

    Returns ``{name: (code, stdout)}``.
    """
    results = {}
    for name, argv, _ in commands(root):
        code, out, err = run(argv)
        if name == "align-traj" and code == 0:
            (Path(root) / "sim3.json").write_text(out)
        results[name] = (code, out)
    return results


def schema(name):
    return json.loads((SCHEMA_DIR / f"{name}.schema.json").read_text())
