"""Readers and writers for the toolkit's file formats.

Binary layouts (all little-endian, see docs/FORMATS.md):

* ``DAM1`` depth map: magic, u32 width, u32 height, f32[H*W] row-major, NaN = invalid.
* ``RAY1`` ray map: magic, u32 width, u32 height, f32[H*W*6] (origin xyz, direction xyz).
* ``TSD1`` TSDF volume: magic, u32 nx/ny/nz, f32 origin xyz, f32 voxel size,
  f32 truncation, f32 tsdf[nx*ny*nz], u8 weight[nx*ny*nz], x fastest.

Every reader raises :class:`~depthray.errors.ParseError` with the byte offset
at which it gave up; trailing bytes are rejected.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import GeometryError, ParseError
from .fusion import TsdfVolume
from .geometry import CameraExtrinsics, CameraIntrinsics, DepthMap, PointCloud, RayMap

DAM_MAGIC = b"DAM1"
RAY_MAGIC = b"RAY1"
TSD_MAGIC = b"TSD1"


class _Cursor:
    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        end = self.pos + n
        if end > len(self.data):
            raise ParseError(len(self.data), f"{n} bytes of {what}", f"{len(self.data) - self.pos} bytes")
        chunk = self.data[self.pos:end]
        self.pos = end
        return chunk

    def magic(self, magic):
        found = self.data[: len(magic)]
        if found != magic:
            raise ParseError(0, repr(magic), repr(found))
        self.pos = len(magic)

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def f32(self, what):
        return struct.unpack("<f", self.take(4, what))[0]

    def array(self, dtype, count, what):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count, what), dtype=dt).copy()

    def end(self):
        if self.pos != len(self.data):
            raise ParseError(self.pos, "end of file", f"{len(self.data) - self.pos} trailing bytes")


def _read_bytes(path):
    return Path(path).read_bytes()


# ---------------------------------------------------------------------------
# depth / rays


def encode_depth(depth: DepthMap) -> bytes:
    vals = np.where(depth.mask, depth.values, np.nan).astype("<f4")
    return DAM_MAGIC + struct.pack("<II", depth.width, depth.height) + vals.tobytes()


def decode_depth(data: bytes) -> DepthMap:
    cur = _Cursor(data)
    cur.magic(DAM_MAGIC)
    w = cur.u32("width")
    h = cur.u32("height")
    start = cur.pos
    vals = cur.array("<f4", w * h, "depth values")
    cur.end()
    nan = np.isnan(vals)
    bad = ~nan & ~(np.isfinite(vals) & (vals > 0))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(start + 4 * i, "positive finite depth or NaN", repr(float(vals[i])))
    vals = vals.astype(np.float64).reshape(h, w)
    return DepthMap(vals, ~nan.reshape(h, w))


def write_depth(path, depth: DepthMap):
    Path(path).write_bytes(encode_depth(depth))


def read_depth(path) -> DepthMap:
    return decode_depth(_read_bytes(path))


def encode_raymap(rays: RayMap) -> bytes:
    arr = rays.as_array().astype("<f4")
    return RAY_MAGIC + struct.pack("<II", rays.width, rays.height) + arr.tobytes()


def decode_raymap(data: bytes) -> RayMap:
    cur = _Cursor(data)
    cur.magic(RAY_MAGIC)
    w = cur.u32("width")
    h = cur.u32("height")
    start = cur.pos
    vals = cur.array("<f4", w * h * 6, "ray values")
    cur.end()
    if not np.all(np.isfinite(vals)):
        i = int(np.flatnonzero(~np.isfinite(vals))[0])
        raise ParseError(start + 4 * i, "finite ray value", repr(float(vals[i])))
    return RayMap.from_array(vals.astype(np.float64).reshape(h, w, 6))


def write_raymap(path, rays: RayMap):
    Path(path).write_bytes(encode_raymap(rays))


def read_raymap(path) -> RayMap:
    return decode_raymap(_read_bytes(path))


# ---------------------------------------------------------------------------
# TSDF


def encode_tsdf(vol: TsdfVolume) -> bytes:
    head = TSD_MAGIC + struct.pack("<III", *vol.dims)
    head += struct.pack("<fffff", *vol.origin, vol.voxel_size, vol.truncation)
    tsdf = vol.tsdf.astype("<f4").tobytes(order="F")
    weight = vol.weight.astype(np.uint8).tobytes(order="F")
    return head + tsdf + weight


def decode_tsdf(data: bytes) -> TsdfVolume:
    cur = _Cursor(data)
    cur.magic(TSD_MAGIC)
    dims = tuple(cur.u32(f"dim {a}") for a in "xyz")
    origin = [cur.f32(f"origin {a}") for a in "xyz"]
    vpos = cur.pos
    voxel = cur.f32("voxel size")
    trunc = cur.f32("truncation")
    if not all(math.isfinite(v) for v in origin):
        raise ParseError(vpos - 12, "finite origin", repr(origin))
    if not (math.isfinite(voxel) and voxel > 0):
        raise ParseError(vpos, "positive voxel size", repr(voxel))
    if not (math.isfinite(trunc) and trunc >= voxel):
        raise ParseError(vpos + 4, "truncation >= voxel size", repr(trunc))
    if min(dims) < 1:
        raise ParseError(TSD_MAGIC.__len__(), "non-zero dims", repr(dims))
    n = dims[0] * dims[1] * dims[2]
    tpos = cur.pos
    tsdf = cur.array("<f4", n, "tsdf values")
    weight = cur.array(np.uint8, n, "weights")
    cur.end()
    bad = ~(np.abs(tsdf) <= 1.0)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise ParseError(tpos + 4 * i, "tsdf value in [-1, 1]", repr(float(tsdf[i])))
    return TsdfVolume(
        origin=np.array(origin),
        voxel_size=voxel,
        truncation=trunc,
        tsdf=tsdf.astype(np.float32).reshape(dims, order="F"),
        weight=weight.reshape(dims, order="F"),
    )


def write_tsdf(path, vol: TsdfVolume):
    Path(path).write_bytes(encode_tsdf(vol))


def read_tsdf(path) -> TsdfVolume:
    return decode_tsdf(_read_bytes(path))


# ---------------------------------------------------------------------------
# PLY

_PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}


def encode_ply(cloud: PointCloud) -> bytes:
    n = len(cloud)
    head = ["ply", "format binary_little_endian 1.0", f"element vertex {n}",
            "property float x", "property float y", "property float z"]
    fields = [("x", "<f4"), ("y", "<f4"), ("z", "<f4")]
    if cloud.colors is not None:
        head += ["property uchar red", "property uchar green", "property uchar blue"]
        fields += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
    head.append("end_header")
    rec = np.zeros(n, dtype=fields)
    rec["x"], rec["y"], rec["z"] = cloud.points.T
    if cloud.colors is not None:
        rec["red"], rec["green"], rec["blue"] = cloud.colors.T
    return ("\n".join(head) + "\n").encode("ascii") + rec.tobytes()


def _ply_header(data):
    if not data.startswith(b"ply\n"):
        raise ParseError(0, "'ply' magic line", repr(data[:4]))
    end = data.find(b"end_header\n")
    if end < 0:
        raise ParseError(len(data), "'end_header' line", "end of file")
    body = end + len(b"end_header\n")
    fmt = None
    elements = []  # [name, count, [(prop, dtype)], line offset]
    pos = 4
    for raw in data[4:end].split(b"\n"):
        line_off = pos
        pos += len(raw) + 1
        try:
            words = raw.decode("ascii").split()
        except UnicodeDecodeError:
            raise ParseError(line_off, "ascii header line", "non-ascii bytes") from None
        if not words or words[0] in ("comment", "obj_info"):
            continue
        if words[0] == "format":
            if len(words) != 3 or words[2] != "1.0" or words[1] not in ("ascii", "binary_little_endian", "binary_big_endian"):
                raise ParseError(line_off, "supported format line", " ".join(words))
            fmt = words[1]
        elif words[0] == "element":
            if len(words) != 3 or not words[2].isdigit():
                raise ParseError(line_off, "element <name> <count>", " ".join(words))
            elements.append([words[1], int(words[2]), [], line_off])
        elif words[0] == "property":
            if not elements:
                raise ParseError(line_off, "element before property", " ".join(words))
            if len(words) != 3 or words[1] not in _PLY_TYPES:
                raise ParseError(line_off, "scalar property", " ".join(words))
            elements[-1][2].append((words[2], _PLY_TYPES[words[1]]))
        else:
            raise ParseError(line_off, "header keyword", words[0])
    if fmt is None:
        raise ParseError(4, "format line", "none")
    if not elements or elements[0][0] != "vertex":
        raise ParseError(4, "vertex element first", "none")
    for name, count, _, off in elements[1:]:
        if count:
            raise ParseError(off, "no non-vertex data", f"{count} {name} entries")
    name, count, props, off = elements[0]
    names = [p for p, _ in props]
    for axis in "xyz":
        if axis not in names:
            raise ParseError(off, f"vertex property {axis}", "missing")
    return fmt, count, props, body


def _cloud_from_record(rec, names):
    pts = np.stack([rec["x"], rec["y"], rec["z"]], axis=1).astype(np.float64)
    colors = None
    if all(c in names for c in ("red", "green", "blue")):
        colors = np.stack([rec["red"], rec["green"], rec["blue"]], axis=1)
    return pts, colors


def decode_ply(data: bytes) -> PointCloud:
    fmt, count, props, body = _ply_header(data)
    names = [p for p, _ in props]
    if fmt == "ascii":
        rec = _ply_ascii_body(data, body, count, props)
    else:
        order = "<" if fmt == "binary_little_endian" else ">"
        dt = np.dtype([(p, order + t) for p, t in props])
        cur = _Cursor(data)
        cur.pos = body
        rec = np.frombuffer(cur.take(dt.itemsize * count, "vertex records"), dtype=dt)
        cur.end()
    pts, colors = _cloud_from_record(rec, names)
    if not np.all(np.isfinite(pts)):
        raise ParseError(body, "finite vertex coordinates", "non-finite value")
    try:
        return PointCloud(pts, colors)
    except GeometryError as exc:
        raise ParseError(body, "valid point cloud", str(exc)) from None


def _ply_ascii_body(data, body, count, props):
    dt = np.dtype([(p, t) for p, t in props])
    rec = np.zeros(count, dtype=dt)
    lines = data[body:].split(b"\n")
    if data[body:].strip() and not data.endswith(b"\n"):
        # a cut inside the last number would otherwise still parse
        raise ParseError(len(data), "newline after last vertex line", "end of data")
    pos = body
    row = 0
    for raw in lines:
        line_off = pos
        pos += len(raw) + 1
        words = raw.split()
        if not words:
            continue
        if row >= count:
            raise ParseError(line_off, "end of vertex data", "extra line")
        if len(words) != len(props):
            raise ParseError(line_off, f"{len(props)} values", f"{len(words)} values")
        for (p, t), w in zip(props, words):
            try:
                val = float(w) if t.startswith("f") else int(w)
                rec[p][row] = val
            except (ValueError, OverflowError):
                raise ParseError(line_off, f"{t} value", repr(w)) from None
        row += 1
    if row < count:
        raise ParseError(len(data), f"{count} vertex lines", f"{row} lines")
    return rec


def write_ply(path, cloud: PointCloud):
    Path(path).write_bytes(encode_ply(cloud))


def read_ply(path) -> PointCloud:
    return decode_ply(_read_bytes(path))


# ---------------------------------------------------------------------------
# cameras and trajectories


@dataclass(frozen=True)
class CameraRecord:
    frame_id: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics

    def to_json(self):
        i, e = self.intrinsics, self.extrinsics
        return {
            "frame_id": self.frame_id,
            "fx": i.fx, "fy": i.fy, "cx": i.cx, "cy": i.cy, "skew": i.skew,
            "width": i.width, "height": i.height,
            "q": [float(v) for v in e.q],
            "t": [float(v) for v in e.t],
            "convention": "cam2world",
        }

    @classmethod
    def from_json(cls, obj, offset=0):
        def need(key, kind):
            if key not in obj:
                raise ParseError(offset, f"key {key!r}", "missing")
            val = obj[key]
            if kind == "num" and (isinstance(val, bool) or not isinstance(val, (int, float))):
                raise ParseError(offset, f"number for {key!r}", repr(val))
            if kind == "int" and (isinstance(val, bool) or not isinstance(val, int)):
                raise ParseError(offset, f"integer for {key!r}", repr(val))
            if kind == "str" and not isinstance(val, str):
                raise ParseError(offset, f"string for {key!r}", repr(val))
            if kind.startswith("vec"):
                n = int(kind[3:])
                ok = isinstance(val, list) and len(val) == n and all(
                    isinstance(v, (int, float)) and not isinstance(v, bool) for v in val)
                if not ok:
                    raise ParseError(offset, f"{n}-vector for {key!r}", repr(val))
            return val

        if not isinstance(obj, dict):
            raise ParseError(offset, "JSON object", type(obj).__name__)
        if obj.get("convention", "cam2world") != "cam2world":
            raise ParseError(offset, "convention 'cam2world'", repr(obj.get("convention")))
        try:
            intr = CameraIntrinsics(
                fx=need("fx", "num"), fy=need("fy", "num"), cx=need("cx", "num"), cy=need("cy", "num"),
                width=need("width", "int"), height=need("height", "int"),
                skew=obj.get("skew", 0.0),
            )
            extr = CameraExtrinsics(q=need("q", "vec4"), t=need("t", "vec3"))
        except GeometryError as exc:
            raise ParseError(offset, "valid camera", str(exc)) from None
        return cls(str(need("frame_id", "str")), intr, extr)


def dumps_json(obj) -> str:
    """Stable JSON: insertion-ordered keys, shortest round-trip floats."""
    return json.dumps(obj, allow_nan=False)


def _parse_json(text, offset):
    try:
        return json.loads(text)
    except (json.JSONDecodeError, RecursionError) as exc:
        pos = getattr(exc, "pos", 0) or 0
        raise ParseError(offset + pos, "valid JSON", str(exc)) from None


def write_camera(path, record: CameraRecord):
    Path(path).write_bytes(encode_camera(record))


def encode_camera(record: CameraRecord) -> bytes:
    return (dumps_json(record.to_json()) + "\n").encode("utf-8")


def read_camera(path) -> CameraRecord:
    return decode_camera(_read_bytes(path))


def decode_camera(data: bytes) -> CameraRecord:
    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(exc.start, "utf-8 text", "invalid byte") from None
    return CameraRecord.from_json(_parse_json(text, 0))


def encode_trajectory(records) -> bytes:
    return "".join(dumps_json(r.to_json()) + "\n" for r in records).encode("utf-8")


def decode_trajectory(data: bytes):
    """One CameraRecord per newline-terminated line; blank lines are not allowed."""
    records = []
    pos = 0
    while pos < len(data):
        nl = data.find(b"\n", pos)
        if nl < 0:
            raise ParseError(len(data), "newline-terminated record", "end of file")
        line = data[pos:nl]
        try:
            text = line.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(pos + exc.start, "utf-8 text", "invalid byte") from None
        if not text.strip():
            raise ParseError(pos, "camera record", "blank line")
        records.append(CameraRecord.from_json(_parse_json(text, pos), pos))
        pos = nl + 1
    return records


def write_trajectory(path, records):
    Path(path).write_bytes(encode_trajectory(records))


def read_trajectory(path):
    return decode_trajectory(_read_bytes(path))
