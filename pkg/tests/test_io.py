import json

import numpy as np
import pytest
from hypothesis import given, strategies as st
from hypothesis.extra.numpy import arrays

from depthray import io
from depthray.errors import ParseError
from depthray.fusion import tsdf_new
from depthray.geometry import CameraExtrinsics, CameraIntrinsics, DepthMap, PointCloud, RayMap, random_rotation

f32 = st.floats(-1e6, 1e6, width=32)


def _record(rng, i):
    intr = CameraIntrinsics(rng.uniform(50, 900), rng.uniform(50, 900), 31.7, 20.2, 64, 40, skew=0.1)
    return io.CameraRecord(f"f{i:03d}", intr, CameraExtrinsics.from_matrix(random_rotation(rng), rng.normal(size=3)))


@given(arrays(np.float32, st.tuples(st.integers(1, 6), st.integers(1, 6)),
              elements=st.one_of(st.floats(0.0009765625, 1048576.0, width=32), st.just(np.nan))))
def test_depth_roundtrip_bitwise(v):
    data = io.encode_depth(DepthMap(v.astype(np.float64)))
    again = io.encode_depth(io.decode_depth(data))
    assert again == data


def test_depth_2x2_exact():
    d = DepthMap(np.array([[1.5, np.nan], [2.25, 1e-3]], dtype=np.float32).astype(np.float64))
    back = io.decode_depth(io.encode_depth(d))
    assert np.array_equal(back.mask, d.mask)
    assert np.array_equal(back.values[d.mask], d.values[d.mask])


def test_depth_rejects_bad_values():
    data = bytearray(io.encode_depth(DepthMap(np.ones((1, 2)))))
    data[12:16] = np.float32(-1).tobytes()
    with pytest.raises(ParseError) as exc:
        io.decode_depth(bytes(data))
    assert exc.value.offset == 12


@given(arrays(np.float32, st.tuples(st.integers(1, 4), st.integers(1, 4), st.just(6)), elements=f32))
def test_raymap_roundtrip_bitwise(a):
    data = io.encode_raymap(RayMap.from_array(a.astype(np.float64)))
    assert io.encode_raymap(io.decode_raymap(data)) == data


def test_tsdf_roundtrip_bitwise(rng):
    vol = tsdf_new((0.1, -0.2, 0.3), (0.5, 0.3, 0.6), 0.05, 0.2)
    vol.tsdf[...] = rng.uniform(-1, 1, vol.dims).astype(np.float32)
    vol.weight[...] = rng.integers(0, 256, vol.dims).astype(np.uint8)
    data = io.encode_tsdf(vol)
    back = io.decode_tsdf(data)
    assert np.array_equal(back.tsdf, vol.tsdf) and np.array_equal(back.weight, vol.weight)
    assert io.encode_tsdf(back) == data


def test_tsdf_layout_is_x_fastest():
    vol = tsdf_new((0, 0, 0), (0.3, 0.2, 0.1), 0.1)
    vol.weight[1, 0, 0] = 7
    data = io.encode_tsdf(vol)
    n = 6
    weights = data[-n:]
    assert weights[1] == 7


def test_ply_three_points():
    pts = np.array([[0, 0, 0], [1, 2, 3], [-1.5, 0.25, 8]], dtype=np.float64)
    back = io.decode_ply(io.encode_ply(PointCloud(pts)))
    assert np.array_equal(back.points, pts) and back.colors is None


def test_ply_colors_and_ascii():
    pc = PointCloud([[0.5, 1, 2]], [[10, 20, 30]])
    back = io.decode_ply(io.encode_ply(pc))
    assert back.colors.tolist() == [[10, 20, 30]]
    text = b"ply\nformat ascii 1.0\ncomment hi\nelement vertex 2\nproperty float x\nproperty float y\n" \
           b"property float z\nend_header\n1 2 3\n4 5 6\n"
    assert io.decode_ply(text).points.tolist() == [[1, 2, 3], [4, 5, 6]]
    with pytest.raises(ParseError):
        io.decode_ply(text + b"7 8 9\n")


def test_ply_big_endian():
    body = np.array([(1.0, 2.0, 3.0)], dtype=[("x", ">f4"), ("y", ">f4"), ("z", ">f4")]).tobytes()
    head = b"ply\nformat binary_big_endian 1.0\nelement vertex 1\nproperty float x\nproperty float y\n" \
           b"property float z\nend_header\n"
    assert io.decode_ply(head + body).points.tolist() == [[1, 2, 3]]


def test_camera_json_roundtrip(tmp_path, rng):
    rec = _record(rng, 0)
    io.write_camera(tmp_path / "c.json", rec)
    back = io.read_camera(tmp_path / "c.json")
    assert back.to_json() == rec.to_json()
    assert back.extrinsics == rec.extrinsics


def test_camera_json_errors():
    with pytest.raises(ParseError):
        io.CameraRecord.from_json({"frame_id": "a"})
    good = _record(np.random.default_rng(0), 0).to_json()
    with pytest.raises(ParseError):
        io.CameraRecord.from_json({**good, "convention": "world2cam"})
    with pytest.raises(ParseError):
        io.CameraRecord.from_json({**good, "fx": -1.0})
    with pytest.raises(ParseError):
        io.CameraRecord.from_json({**good, "q": [1, 0, 0]})


def test_trajectory_roundtrip(rng):
    recs = [_record(rng, i) for i in range(5)]
    data = io.encode_trajectory(recs)
    back = io.decode_trajectory(data)
    assert [r.frame_id for r in back] == [r.frame_id for r in recs]
    assert io.encode_trajectory(back) == data


def test_trajectory_rejects_blank_and_unterminated(rng):
    data = io.encode_trajectory([_record(rng, 0)])
    with pytest.raises(ParseError):
        io.decode_trajectory(data + b"\n")
    with pytest.raises(ParseError) as exc:
        io.decode_trajectory(data[:-1])
    assert exc.value.offset == len(data) - 1


def test_json_floats_shortest_roundtrip():
    x = 0.1 + 0.2
    assert json.loads(io.dumps_json({"x": x}))["x"] == x


def _samples(rng):
    vol = tsdf_new((0, 0, 0), (0.2, 0.1, 0.1), 0.05)
    return {
        "depth": (io.encode_depth(DepthMap(np.array([[1.0, np.nan, 2.0]]))), io.decode_depth),
        "raymap": (io.encode_raymap(RayMap.from_array(np.ones((1, 2, 6)))), io.decode_raymap),
        "tsdf": (io.encode_tsdf(vol), io.decode_tsdf),
        "ply": (io.encode_ply(PointCloud(np.ones((2, 3)), [[1, 2, 3], [4, 5, 6]])), io.decode_ply),
    }


@pytest.mark.parametrize("fmt", ["depth", "raymap", "tsdf", "ply"])
def test_truncation_and_trailing_bytes(fmt, rng):
    data, decode = _samples(rng)[fmt]
    for cut in range(len(data)):
        with pytest.raises(ParseError):
            decode(data[:cut])
    with pytest.raises(ParseError):
        decode(data + b"\x00")


def test_truncated_depth_reports_missing_offset():
    data = io.encode_depth(DepthMap(np.ones((2, 2))))
    with pytest.raises(ParseError) as exc:
        io.decode_depth(data[:-3])
    assert exc.value.offset == len(data) - 3


@given(st.binary(max_size=80))
def test_random_bytes_never_crash(blob):
    for decode in (io.decode_depth, io.decode_raymap, io.decode_tsdf, io.decode_ply, io.decode_trajectory):
        try:
            decode(blob)
        except ParseError:
            pass
