"""Back-projection evaluation: hulls over footprint masks and pixel metrics."""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass

import numpy as np
import shapely
from shapely.geometry import Polygon

from .camera_io import CameraView
from .errors import DegenerateInput, DimensionMismatch
from .mask_io import Mask2D, polygon_area, rasterize_polygon
from .rasterizer import backproject_mask
from .scene_io import SplatScene

HULL_KINDS = ("convex", "concave", "none")


@dataclass
class MetricsReport:
    iou: float
    f1: float
    accuracy: float
    tp: int
    fp: int
    fn: int
    tn: int
    hull_kind: str = "none"
    timing_ms: float = 0.0
    view: str | None = None

    def to_dict(self) -> dict:
        return asdict(self)


def _cross(o, a, b):
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def convex_hull(points) -> np.ndarray:
    """Monotone-chain hull, counterclockwise, collinear vertices removed."""
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise DegenerateInput(f"convex hull needs >= 3 distinct points, got {len(pts)}")
    pts = [tuple(p) for p in pts]  # np.unique sorts lexicographically by (x, y)

    def chain(seq):
        out = []
        for p in seq:
            while len(out) >= 2 and _cross(out[-2], out[-1], p) <= 0:
                out.pop()
            out.append(p)
        return out

    lower = chain(pts)
    upper = chain(reversed(pts))
    hull = lower[:-1] + upper[:-1]
    if len(hull) < 3:
        raise DegenerateInput("all points are collinear")
    return np.array(hull)


def _cross_v(o, a, b):
    return (a[..., 0] - o[..., 0]) * (b[..., 1] - o[..., 1]) - (a[..., 1] - o[..., 1]) * (b[..., 0] - o[..., 0])


def _hits_any(a, b, P, Q) -> bool:
    """Does segment ab intersect or touch any segment P[i]Q[i]? Endpoints must not be shared."""
    if len(P) == 0:
        return False
    d1 = _cross_v(P, Q, a)
    d2 = _cross_v(P, Q, b)
    d3 = _cross_v(a, b, P)
    d4 = _cross_v(a, b, Q)
    if np.any((d1 * d2 < 0) & (d3 * d4 < 0)):
        return True

    def on(s0, s1, c, d):
        lo, hi = np.minimum(s0, s1), np.maximum(s0, s1)
        return (d == 0) & np.all((lo <= c) & (c <= hi), axis=-1)

    return bool(
        np.any(on(P, Q, a, d1)) or np.any(on(P, Q, b, d2)) or np.any(on(a, b, P, d3)) or np.any(on(a, b, Q, d4))
    )


def _knn_hull(pts: np.ndarray, k: int):
    """One k-nearest-neighbor boundary walk; None when it fails at this k."""
    n = len(pts)
    start = int(np.lexsort((pts[:, 0], pts[:, 1]))[0])
    available = np.ones(n, dtype=bool)
    available[start] = False
    hull = [start]
    current = start
    heading = np.array([1.0, 0.0])
    step = 0
    while step == 0 or current != start:
        if step == 3:
            available[start] = True
        cand = np.flatnonzero(available)
        if cand.size == 0:
            return None
        d = np.hypot(*(pts[cand] - pts[current]).T)
        near = cand[np.argsort(d, kind="stable")[:k]]
        vec = pts[near] - pts[current]
        # signed turn from the current heading; most clockwise first
        turn = np.arctan2(heading[0] * vec[:, 1] - heading[1] * vec[:, 0], vec @ heading)
        near = near[np.argsort(turn, kind="stable")]
        verts = pts[hull]
        chosen = None
        for c in near:
            # the edge ending at current shares a vertex; when closing, so does the first edge
            first = 1 if c == start else 0
            P, Q = verts[first:-2], verts[first + 1:-1]
            if not _hits_any(pts[current], pts[c], P, Q):
                chosen = int(c)
                break
        if chosen is None:
            return None
        if chosen != start:
            hull.append(chosen)
            available[chosen] = False
        heading = pts[chosen] - pts[current]
        heading = heading / np.hypot(*heading)
        current = chosen
        step += 1
        if step > n + 1:
            return None
    if len(hull) < 3:
        return None
    return pts[hull]


def _contains_all(poly: np.ndarray, pts: np.ndarray) -> bool:
    shape = Polygon(poly)
    if not shape.is_valid or shape.area <= 0:
        return False
    scale = max(float(np.ptp(pts, axis=0).max()), 1.0)
    grown = shape.buffer(1e-9 * scale)
    return bool(shapely.covers(grown, shapely.points(pts)).all())


def concave_hull(points, k: int = 3) -> np.ndarray:
    """k-nearest-neighbor concave hull, counterclockwise.

    Retries with k doubled until the walk yields a simple polygon holding
    every point; falls back to the convex hull once k reaches the point count.
    """
    pts = np.unique(np.asarray(points, dtype=np.float64).reshape(-1, 2), axis=0)
    if len(pts) < 3:
        raise DegenerateInput(f"concave hull needs >= 3 distinct points, got {len(pts)}")
    if k < 3:
        raise DegenerateInput(f"k must be >= 3, got {k}")
    convex = convex_hull(pts)
    while k < len(pts):
        poly = _knn_hull(pts, k)
        if poly is not None and _contains_all(poly, pts):
            return poly if polygon_area(poly) > 0 else poly[::-1]
        k *= 2
    return convex


def boundary_points(mask: Mask2D) -> np.ndarray:
    """Centers of set pixels with at least one unset (or off-canvas) 4-neighbor."""
    b = np.pad(mask.bits, 1, constant_values=False)
    core = b[1:-1, 1:-1]
    interior = b[:-2, 1:-1] & b[2:, 1:-1] & b[1:-1, :-2] & b[1:-1, 2:]
    ys, xs = np.nonzero(core & ~interior)
    return np.stack([xs + 0.5, ys + 0.5], axis=1)


def compare_masks(pred: Mask2D, gt: Mask2D) -> MetricsReport:
    if pred.size != gt.size:
        raise DimensionMismatch(f"pred is {pred.width}x{pred.height}, gt is {gt.width}x{gt.height}")
    p, g = pred.bits, gt.bits
    tp = int(np.count_nonzero(p & g))
    fp = int(np.count_nonzero(p & ~g))
    fn = int(np.count_nonzero(~p & g))
    total = p.size
    tn = total - tp - fp - fn
    union = tp + fp + fn
    if union == 0:
        iou = f1 = 1.0
    else:
        iou = tp / union
        f1 = 2 * tp / (2 * tp + fp + fn)
    return MetricsReport(iou=iou, f1=f1, accuracy=(tp + tn) / total, tp=tp, fp=fp, fn=fn, tn=tn)


def hull_mask(mask: Mask2D, hull_kind: str = "convex", k: int | None = None) -> Mask2D:
    """Replace a footprint-union mask by the filled hull of its boundary pixels."""
    if hull_kind not in HULL_KINDS:
        raise ValueError(f"hull_kind must be one of {HULL_KINDS}, got {hull_kind!r}")
    if hull_kind == "none" or mask.is_empty():
        return mask
    pts = boundary_points(mask)
    try:
        if hull_kind == "convex":
            poly = convex_hull(pts)
        else:
            if k is None:
                raise ValueError("concave hull requires k")
            poly = concave_hull(pts, k)
    except DegenerateInput:
        return mask  # a line or a dot has no area to fill
    return rasterize_polygon(poly, mask.width, mask.height) | mask


def evaluate_view(
    scene: SplatScene,
    view: CameraView,
    selection,
    gt_mask: Mask2D,
    hull_kind: str = "convex",
    k: int | None = None,
    footprint_radius_sigma: float = 2.0,
    epsilon_cov: float = 0.3,
    workers: int = 1,
) -> MetricsReport:
    t = time.perf_counter()
    raw = backproject_mask(scene, view, selection, footprint_radius_sigma, epsilon_cov, workers)
    pred = hull_mask(raw, hull_kind, k)
    report = compare_masks(pred, gt_mask)
    report.hull_kind = hull_kind
    report.view = view.image_name
    report.timing_ms = (time.perf_counter() - t) * 1e3
    return report
