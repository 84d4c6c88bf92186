import numpy as np
import pytest

from depthray.errors import GeometryError, VolumeTooLarge
from depthray.fusion import PRESETS, WEIGHT_CAP, tsdf_extract_points, tsdf_integrate, tsdf_new, worker_count
from depthray.geometry import CameraExtrinsics, CameraIntrinsics, DepthMap
from depthray.synth import Plane, Sphere, SynthScene, look_at, render_depth

INTR = CameraIntrinsics(100, 100, 49.5, 49.5, 100, 100)


def _plane_frame():
    scene = SynthScene([Plane((0, 0, 1), 1.0)], [(INTR, CameraExtrinsics.identity())])
    return render_depth(scene, 0)


def test_dims_and_errors():
    assert tsdf_new((0, 0, 0), (1, 1, 1), 0.1).dims == (10, 10, 10)
    with pytest.raises(GeometryError):
        tsdf_new((0, 0, 0), (1, 1, 1), 0.0)
    with pytest.raises(GeometryError):
        tsdf_new((0, 0, 0), (0, 1, 1), 0.1)
    with pytest.raises(VolumeTooLarge):
        tsdf_new((0, 0, 0), (1, 1, 1), 0.001)


def test_hiroom_cube_fits_budget():
    vs = PRESETS["hiroom"].voxel_size
    with pytest.raises(VolumeTooLarge):
        tsdf_new((0, 0, 0), (3, 3, 3), vs, voxel_budget=400**3)
    # a full allocation would be 80M voxels; checking the size rule is enough here
    assert all(abs(n - 3 / np.float32(vs)) < 1 for n in [np.ceil(3 / np.float32(vs) - 1e-4)] * 3)


def test_plane_oracle():
    vol = tsdf_new((-0.3, -0.3, 0.8), (0.3, 0.3, 1.2), 0.01)
    tsdf_integrate(vol, _plane_frame(), INTR, CameraExtrinsics.identity())
    z = vol.voxel_centers(slice(None))[..., 2]
    seen = vol.weight > 0
    assert np.all(vol.tsdf[seen & (z < 1 - vol.truncation)] == 1.0)
    assert not seen[z > 1 + vol.truncation + 1e-9].any()
    P = tsdf_extract_points(vol).points
    assert len(P) > 100
    err = np.abs(P[:, 2] - 1)
    assert err.max() <= vol.voxel_size / 2
    assert np.sqrt(np.mean(err**2)) < vol.voxel_size / 4


def test_repeat_frame_keeps_values_and_caps_weight():
    vol = tsdf_new((-0.2, -0.2, 0.9), (0.2, 0.2, 1.1), 0.02)
    d = _plane_frame()
    tsdf_integrate(vol, d, INTR, CameraExtrinsics.identity())
    once = vol.copy()
    tsdf_integrate(vol, d, INTR, CameraExtrinsics.identity())
    assert np.allclose(vol.tsdf, once.tsdf, atol=1e-7)
    for _ in range(300):
        tsdf_integrate(vol, d, INTR, CameraExtrinsics.identity())
    assert vol.weight.max() == WEIGHT_CAP


def test_empty_frame_and_empty_volume():
    vol = tsdf_new((0, 0, 1), (1, 1, 2), 0.1)
    before = vol.copy()
    tsdf_integrate(vol, DepthMap(np.full((100, 100), np.nan)), INTR, CameraExtrinsics.identity())
    assert np.array_equal(vol.tsdf, before.tsdf) and np.array_equal(vol.weight, before.weight)
    assert len(tsdf_extract_points(vol).points) == 0


def test_depth_size_mismatch():
    vol = tsdf_new((0, 0, 1), (1, 1, 2), 0.1)
    with pytest.raises(GeometryError):
        tsdf_integrate(vol, DepthMap(np.ones((5, 5))), INTR, CameraExtrinsics.identity())


def test_sphere_small():
    sph = Sphere((0, 0, 0), 0.5)
    intr = CameraIntrinsics(120, 120, 63.5, 63.5, 128, 128)
    cams = [(intr, look_at(2.5 * a, (0, 0, 0))) for a in np.vstack([np.eye(3), -np.eye(3)])]
    scene = SynthScene([sph], cams)
    vol = tsdf_new((-0.7,) * 3, (0.7,) * 3, 0.02)
    for i, (ci, ce) in enumerate(cams):
        tsdf_integrate(vol, render_depth(scene, i), ci, ce)
    P = tsdf_extract_points(vol).points
    assert np.abs(sph.residual(P)).max() < vol.voxel_size


def test_thread_count_does_not_change_result(monkeypatch):
    d = _plane_frame()
    out = []
    for n in ("1", "4"):
        monkeypatch.setenv("GEOM_THREADS", n)
        assert worker_count() == int(n)
        vol = tsdf_new((-0.3, -0.3, 0.8), (0.3, 0.3, 1.2), 0.005)
        tsdf_integrate(vol, d, INTR, CameraExtrinsics.identity())
        out.append(vol)
    assert np.array_equal(out[0].tsdf, out[1].tsdf) and np.array_equal(out[0].weight, out[1].weight)


def test_presets():
    assert (PRESETS["eth3d"].voxel_size, PRESETS["eth3d"].f1_threshold) == (0.039, 0.25)
    assert (PRESETS["scannetpp"].voxel_size, PRESETS["scannetpp"].f1_threshold) == (0.02, 0.05)
    assert PRESETS["hiroom"].voxel_size == PRESETS["7scenes"].voxel_size == 0.007
