import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from depthray.alignment import Sim3
from depthray.geometry import CameraExtrinsics, DepthMap, random_rotation, rot_z
from depthray.metrics import (
    auc_from_errors,
    cloud_nn_distances,
    depth_metrics,
    pose_auc,
    recon_metrics,
    relative_pose_errors,
)


def _traj(rng, n):
    return [CameraExtrinsics.from_matrix(random_rotation(rng), rng.normal(size=3)) for _ in range(n)]


def test_identical_trajectories(rng):
    gt = _traj(rng, 6)
    errs = np.array(relative_pose_errors(gt, gt))
    assert errs.shape == (15, 2)
    assert errs.max() < 1e-5
    assert pose_auc(gt, gt, 3).auc == 100.0
    assert pose_auc(gt, gt, 30).auc == 100.0


def test_similarity_invariance(rng):
    gt = _traj(rng, 5)
    sim = Sim3(2.5, random_rotation(rng), rng.normal(size=3))
    errs = np.array(relative_pose_errors([sim.apply_pose(e) for e in gt], gt))
    assert errs.max() < 1e-5


def test_hand_built_rotation_error():
    gt = [CameraExtrinsics.from_matrix(np.eye(3), (i, 0.0, 0.0)) for i in range(3)]
    pred = list(gt)
    pred[1] = CameraExtrinsics.from_matrix(rot_z(10), (1.0, 0.0, 0.0))
    rra = [e[0] for e in relative_pose_errors(pred, gt)]
    assert rra == pytest.approx([10, 0, 10], abs=1e-9)  # pairs (1,2), (1,3), (2,3)


def test_auc_step_function():
    e = np.full(10, 15.0)
    assert abs(auc_from_errors(e, e, 30)[0] - 50) <= 100 / 1000


def test_auc_min_dominates():
    assert auc_from_errors([0.0], [180.0], 30)[0] == 0.0


def test_near_zero_translation_rules():
    gt = [CameraExtrinsics.identity(), CameraExtrinsics.identity()]
    pred = [CameraExtrinsics.identity(), CameraExtrinsics(q=(1, 0, 0, 0), t=(1, 0, 0))]
    assert relative_pose_errors(gt, gt)[0][1] == 0.0
    assert relative_pose_errors(pred, gt)[0][1] == 180.0


def test_nn_examples():
    a = np.array([[0.0, 0, 0]])
    b = np.array([[1.0, 0, 0], [0, 2, 0]])
    assert cloud_nn_distances(a, b).tolist() == [1.0]
    assert not cloud_nn_distances(b, b).any()


@given(st.integers(0, 10_000), st.integers(1, 300), st.integers(1, 300))
def test_nn_equals_brute_force(seed, n, m):
    rng = np.random.default_rng(seed)
    a = rng.normal(size=(n, 3))
    b = rng.normal(size=(m, 3))
    brute = np.sqrt(((a[:, None, :] - b[None, :, :]) ** 2).sum(-1)).min(axis=1)
    assert np.array_equal(cloud_nn_distances(a, b), brute)


def test_recon_examples():
    g = np.stack(np.meshgrid(*[np.arange(3.0)] * 2, [0.0], indexing="ij"), -1).reshape(-1, 3)
    r = recon_metrics(g, g, 0.05)
    assert (r.precision, r.recall, r.f1, r.chamfer) == (100.0, 100.0, 100.0, 0.0)
    r = recon_metrics(g + [0.1, 0, 0], g, 0.05)
    assert (r.precision, r.recall, r.f1) == (0.0, 0.0, 0.0)
    r = recon_metrics(np.vstack([g, [[100.0, 0, 0]]]), g, 0.05)
    assert r.precision == 90.0 and r.recall == 100.0
    assert r.f1 == pytest.approx(2 * 90 * 100 / 190)


def test_recon_strict_threshold():
    r = recon_metrics([[0.0, 0, 0]], [[0.5, 0, 0]], 0.5)
    assert r.precision == 0.0


def test_chamfer_identity(rng):
    a, b = rng.normal(size=(50, 3)), rng.normal(size=(70, 3))
    r = recon_metrics(a, b, 0.3)
    assert r.chamfer == (r.accuracy_mean + r.completeness_mean) / 2


def test_depth_examples():
    g = DepthMap(np.array([[2.0, 2.0]]))
    r = depth_metrics(DepthMap(np.array([[1.0, 2.0]])), g)
    assert (r.delta1, r.absrel, r.sqrel) == (0.5, 0.25, 0.25)
    r = depth_metrics(DepthMap(1.3 * g.values), g)
    assert r.delta1 == 0.0 and r.absrel == pytest.approx(0.3)
    assert depth_metrics(g, g).to_json() == {"delta1": 1.0, "absrel": 0.0, "sqrel": 0.0}


def test_depth_ignores_invalid_pixels():
    g = DepthMap(np.array([[2.0, np.nan]]))
    a = depth_metrics(DepthMap(np.array([[1.0, 5.0]])), g)
    b = depth_metrics(DepthMap(np.array([[1.0, 50.0]])), g)
    assert a == b


def test_report_json_keys(rng):
    gt = _traj(rng, 3)
    assert set(pose_auc(gt, gt, 3).to_json()) == {"auc", "threshold_deg", "curve"}
    assert math.isfinite(recon_metrics(gt[0].t[None], gt[1].t[None], 1).to_json()["chamfer"])
