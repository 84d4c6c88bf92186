"""Training-data hygiene: image/depth edge misalignment scoring and depth clipping."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .errors import GeometryError
from .geometry import DepthMap

DEFAULT_SIGMA = 1.4
DEFAULT_LOW = 0.1
DEFAULT_HIGH = 0.3


@dataclass(frozen=True)
class EdgeMap:
    edges: np.ndarray  # bool (H, W)

    def __post_init__(self):
        e = np.asarray(self.edges, dtype=bool)
        if e.ndim != 2:
            raise GeometryError("edge map must be 2-D")
        object.__setattr__(self, "edges", e)

    @property
    def height(self):
        return self.edges.shape[0]

    @property
    def width(self):
        return self.edges.shape[1]

    def count(self):
        return int(self.edges.sum())


def _non_max_suppress(mag, gx, gy):
    """Keep pixels that are maxima across the (quantized) gradient direction.

    The comparison is ``>=`` on one side and ``>`` on the other, so a plateau
    two pixels wide (an ideal step) thins to a single pixel.  Magnitudes that
    agree to a relative ``1e-9`` of the peak count as equal, so round-off never
    decides which side of a plateau survives.
    """
    h, w = mag.shape
    tol = 1e-9 * mag.max()
    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    pad = np.pad(mag, 1)
    keep = np.zeros_like(mag, dtype=bool)
    offsets = {
        0: (0, 1),  # horizontal gradient: compare left/right
        45: (1, 1),
        90: (1, 0),
        135: (1, -1),
    }
    sector = np.select(
        [(angle < 22.5) | (angle >= 157.5), angle < 67.5, angle < 112.5],
        [0, 45, 90],
        default=135,
    )
    for sec, (dy, dx) in offsets.items():
        sel = sector == sec
        fwd = pad[1 + dy:1 + dy + h, 1 + dx:1 + dx + w]
        bwd = pad[1 - dy:1 - dy + h, 1 - dx:1 - dx + w]
        keep |= sel & (mag >= fwd - tol) & (mag > bwd + tol)
    return keep & (mag > 0)


def canny_edges(gray, sigma=DEFAULT_SIGMA, low=DEFAULT_LOW, high=DEFAULT_HIGH) -> EdgeMap:
    """Canny detector; ``low`` and ``high`` are fractions of the maximum gradient.

    Steps: Gaussian blur, Sobel gradients, non-maximum suppression and
    hysteresis (weak pixels survive if 8-connected to a strong pixel).
    """
    img = np.asarray(gray, dtype=np.float64)
    if img.ndim != 2 or min(img.shape) < 3:
        raise GeometryError("image must be 2-D and at least 3x3")
    if not sigma > 0:
        raise ValueError("sigma must be positive")
    if not low < high:
        raise ValueError("low threshold must be below high threshold")
    smooth = ndimage.gaussian_filter(img, sigma, mode="nearest")
    gx = ndimage.sobel(smooth, axis=1, mode="nearest")
    gy = ndimage.sobel(smooth, axis=0, mode="nearest")
    mag = np.hypot(gx, gy)
    peak = mag.max()
    if peak <= 1e-12 * max(1.0, np.abs(img).max()):
        return EdgeMap(np.zeros(img.shape, dtype=bool))
    thin = _non_max_suppress(mag, gx, gy)
    strong = thin & (mag >= high * peak)
    weak = thin & (mag >= low * peak)
    labels, n = ndimage.label(weak, structure=np.ones((3, 3), dtype=bool))
    if n == 0:
        return EdgeMap(np.zeros(img.shape, dtype=bool))
    hit = np.zeros(n + 1, dtype=bool)
    hit[np.unique(labels[strong])] = True
    hit[0] = False
    return EdgeMap(hit[labels])


def depth_edges(depth: DepthMap, sigma=DEFAULT_SIGMA, low=DEFAULT_LOW, high=DEFAULT_HIGH) -> EdgeMap:
    """Canny on log depth; invalid pixels are filled with the mean log depth."""
    if not depth.mask.any():
        return EdgeMap(np.zeros(depth.shape, dtype=bool))
    logd = np.log(depth.filled(1.0))
    logd[~depth.mask] = logd[depth.mask].mean()
    return canny_edges(logd, sigma, low, high)


def dilate(edges: EdgeMap, radius: int) -> EdgeMap:
    """Dilation by a (2r+1) x (2r+1) square."""
    if radius < 0:
        raise ValueError("radius must be non-negative")
    if radius == 0:
        return EdgeMap(edges.edges.copy())
    size = 2 * int(radius) + 1
    out = ndimage.maximum_filter(edges.edges.astype(np.uint8), size=size, mode="constant", cval=0)
    return EdgeMap(out.astype(bool))


@dataclass(frozen=True)
class AlignmentScore:
    score: float
    i1: float
    i3: float
    degenerate: bool


def _overlap(img, dep, radius):
    a = dilate(img, radius).edges
    b = dilate(dep, radius).edges
    denom = b.sum()
    return float((a & b).sum() / denom) if denom else 0.0


def alignment_score(image_edges: EdgeMap, depth_edges: EdgeMap) -> AlignmentScore:
    """Ratio of the 1-px-dilated to the 3-px-dilated edge overlap.

    Overlaps are normalized by the dilated depth-edge area.  Well aligned
    pairs score near 1; a misaligned pair overlaps only at the wider
    dilation and scores near 0.
    """
    if image_edges.edges.shape != depth_edges.edges.shape:
        raise GeometryError("edge maps have different sizes")
    if depth_edges.count() == 0:
        return AlignmentScore(0.0, 0.0, 0.0, True)
    i1 = _overlap(image_edges, depth_edges, 1)
    i3 = _overlap(image_edges, depth_edges, 3)
    if i3 == 0:
        return AlignmentScore(0.0, i1, i3, True)
    return AlignmentScore(i1 / i3, i1, i3, False)


def clip_depth(depth: DepthMap, max_depth) -> DepthMap:
    """Invalidate pixels deeper than ``max_depth``."""
    if not max_depth > 0:
        raise ValueError("max_depth must be positive")
    mask = depth.mask & ~(depth.filled(0.0) > max_depth)
    return DepthMap(np.where(mask, depth.values, np.nan), mask)
