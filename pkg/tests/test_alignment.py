import numpy as np
import pytest
from hypothesis import given, strategies as st

from depthray.alignment import (
    RansacConfig,
    ScaleShift,
    Sim3,
    fit_scale_shift_lsq,
    ransac_scale_shift,
    ransac_trajectory_align,
    umeyama_sim3,
)
from depthray.errors import DegenerateFit, GeometryError
from depthray.geometry import CameraExtrinsics, DepthMap, random_rotation, rotation_geodesic_deg


def _depths(rng, n=10_000):
    return DepthMap(rng.uniform(0.5, 5.0, (100, n // 100)))


def test_lsq_identity_and_affine(rng):
    pred = _depths(rng)
    ss = fit_scale_shift_lsq(pred, pred)
    assert ss.s == pytest.approx(1, abs=1e-12) and ss.t == pytest.approx(0, abs=1e-12)
    ss = fit_scale_shift_lsq(pred, DepthMap(2 * pred.values + 3))
    assert ss.s == pytest.approx(2, abs=1e-12) and ss.t == pytest.approx(3, abs=1e-11)


def test_lsq_noisy(rng):
    pred = _depths(rng)
    gt = DepthMap(0.5 * pred.values - 1 + 2.0 + rng.normal(scale=1e-4, size=pred.shape))
    ss = fit_scale_shift_lsq(pred, gt)
    assert abs(ss.s - 0.5) < 1e-2 and abs(ss.t - 1.0) < 1e-2


def test_lsq_degenerate():
    with pytest.raises(DegenerateFit):
        fit_scale_shift_lsq(DepthMap(np.ones((4, 4))), DepthMap(np.arange(1, 17.0).reshape(4, 4)))


def test_ransac_matches_lsq_on_clean(rng):
    pred = _depths(rng, 2000)
    gt = DepthMap(1.7 * pred.values + 0.4)
    a = fit_scale_shift_lsq(pred, gt)
    b, inl = ransac_scale_shift(pred, gt)
    assert abs(a.s - b.s) < 1e-9 and abs(a.t - b.t) < 1e-9
    assert inl.all()


@pytest.mark.parametrize("seed", range(3))
def test_ransac_rejects_junk(seed):
    rng = np.random.default_rng(seed)
    pred = _depths(rng)
    gt = 2 * pred.values + 3
    junk = np.zeros(gt.size, bool)
    junk[rng.choice(gt.size, 3000, replace=False)] = True
    junk = junk.reshape(gt.shape)
    gt[junk] = rng.uniform(gt.min(), gt.max(), junk.sum())
    ss, inl = ransac_scale_shift(pred, DepthMap(gt), RansacConfig(seed=seed))
    assert abs(ss.s - 2) < 1e-3 and abs(ss.t - 3) < 1e-3
    assert (junk & ~inl).sum() >= 0.95 * junk.sum()


def test_ransac_deterministic(rng):
    pred = _depths(rng, 1000)
    gt = DepthMap(pred.values * 1.5 + rng.normal(scale=0.05, size=pred.shape) + 1)
    a = ransac_scale_shift(pred, gt, RansacConfig(seed=5))
    b = ransac_scale_shift(pred, gt, RansacConfig(seed=5))
    assert a[0] == b[0] and np.array_equal(a[1], b[1])


def test_ransac_degenerate():
    with pytest.raises(DegenerateFit):
        ransac_scale_shift(DepthMap(np.ones((5, 5))), DepthMap(np.ones((5, 5))))


def test_scale_shift_apply_invalidates_nonpositive():
    out = ScaleShift(1.0, -2.0).apply(DepthMap(np.array([[1.0, 3.0]])))
    assert out.mask.tolist() == [[False, True]]


def _sim3(rng):
    return Sim3(float(rng.uniform(0.3, 3)), random_rotation(rng), rng.normal(size=3))


@given(st.integers(0, 10_000))
def test_sim3_inverse_compose(seed):
    rng = np.random.default_rng(seed)
    a, b = _sim3(rng), _sim3(rng)
    x = rng.normal(size=(5, 3))
    assert np.allclose(a.inverse().apply(a.apply(x)), x, atol=1e-9)
    assert np.allclose(a.compose(b).apply(x), a.apply(b.apply(x)), atol=1e-9)


def test_umeyama_identity(rng):
    x = rng.normal(size=(10, 3))
    sim = umeyama_sim3(x, x)
    assert sim.s == pytest.approx(1, abs=1e-12)
    assert np.allclose(sim.R, np.eye(3), atol=1e-12) and np.allclose(sim.t, 0, atol=1e-12)


@given(st.integers(0, 10_000))
def test_umeyama_recovers(seed):
    rng = np.random.default_rng(seed)
    x = rng.normal(size=(12, 3))
    R0, t0 = random_rotation(rng), rng.normal(size=3)
    sim = umeyama_sim3(x, 2 * x @ R0.T + t0)
    assert abs(sim.s - 2) < 1e-9
    assert np.allclose(sim.R, R0, atol=1e-9) and np.allclose(sim.t, t0, atol=1e-9)


def test_umeyama_reflection_guard(rng):
    x = rng.normal(size=(10, 3))
    sim = umeyama_sim3(x, x * np.array([-1.0, 1.0, 1.0]))
    assert np.linalg.det(sim.R) == pytest.approx(1.0)
    assert np.abs(sim.apply(x) - x * [-1, 1, 1]).max() > 1e-3


def test_umeyama_degenerate():
    line = np.outer(np.arange(5.0), [1, 1, 0])
    with pytest.raises(DegenerateFit):
        umeyama_sim3(line, line)
    with pytest.raises(GeometryError):
        umeyama_sim3(np.zeros((3, 3)), np.zeros((4, 3)))


def _traj(rng, n):
    return [CameraExtrinsics.from_matrix(random_rotation(rng), rng.normal(scale=2, size=3)) for _ in range(n)]


def test_traj_identity(rng):
    gt = _traj(rng, 10)
    fit = ransac_trajectory_align(gt, gt)
    assert fit.inliers.all()
    assert fit.sim3.s == pytest.approx(1, abs=1e-12)
    assert np.allclose(fit.sim3.R, np.eye(3), atol=1e-12)


def test_traj_three_poses_equals_umeyama(rng):
    gt = _traj(rng, 3)
    sim0 = _sim3(rng)
    pred = [sim0.apply_pose(e) for e in gt]
    fit = ransac_trajectory_align(pred, gt)
    ref = umeyama_sim3([e.t for e in pred], [e.t for e in gt])
    assert fit.sim3.s == pytest.approx(ref.s, rel=1e-12)
    assert np.allclose(fit.sim3.R, ref.R, atol=1e-12)


@pytest.mark.parametrize("seed", range(3))
def test_traj_with_corruption(seed):
    rng = np.random.default_rng(seed)
    gt = _traj(rng, 20)
    sim0 = _sim3(rng)
    pred = [sim0.apply_pose(e) for e in gt]
    bad = rng.choice(20, 4, replace=False)
    for i in bad:
        pred[i] = CameraExtrinsics(pred[i].q, pred[i].t + rng.normal(scale=5, size=3))
    fit = ransac_trajectory_align(pred, gt, RansacConfig(512, 3, seed))
    inv = sim0.inverse()
    assert abs(fit.sim3.s - inv.s) < 1e-6
    assert rotation_geodesic_deg(fit.sim3.R, inv.R) < 1e-4
    assert not fit.inliers[bad].any()


def test_traj_length_mismatch(rng):
    with pytest.raises(GeometryError):
        ransac_trajectory_align(_traj(rng, 4), _traj(rng, 5))
