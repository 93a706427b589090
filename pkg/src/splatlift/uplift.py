"""Single-view mask up-lifting.

Pipeline: project splat centers and keep those landing on the mask, walk them
front to back through an accumulation buffer that rejects splats whose center
cell is already covered beyond the running mean opacity of accepted splats,
trim depth and opacity outliers, then re-admit gated splats inside the depth
window of the survivors.
"""

from __future__ import annotations

import time
from dataclasses import asdict, dataclass, field

import numpy as np

from . import _kernels
from .camera_io import CameraView
from .errors import DimensionMismatch
from .geometry import EPSILON_COV, EPSILON_Z, Cov2D, ProjectedArrays, project_gaussians, project_unchecked
from .mask_io import Mask2D
from .parallel import map_ranges
from .scene_io import SplatScene


@dataclass(frozen=True)
class UpliftConfig:
    sigma_k: float = 2.0
    footprint_sigma: float = 3.0
    epsilon_cov: float = EPSILON_COV
    epsilon_z: float = EPSILON_Z
    statistical_filter: bool = True
    fill: bool = True
    fill_opacity_window: bool = False
    workers: int = 1

    def __post_init__(self):
        if not self.sigma_k > 0:
            raise ValueError(f"sigma_k must be > 0, got {self.sigma_k}")
        if not self.footprint_sigma > 0:
            raise ValueError(f"footprint_sigma must be > 0, got {self.footprint_sigma}")
        if self.epsilon_cov < 0:
            raise ValueError("epsilon_cov must be >= 0")
        if self.workers < 1:
            raise ValueError("workers must be >= 1")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True, eq=False)
class ProjectedSplat:
    splat_index: int
    pixel: np.ndarray
    depth: float
    cov2d: Cov2D
    alpha: float


class GatedSplats(ProjectedArrays):
    """Projected splats whose center falls on a set mask bit, ascending index order."""

    def __init__(self, base: ProjectedArrays, behind_camera: int = 0, outside_image: int = 0, outside_mask: int = 0):
        super().__init__(base.index, base.pixel, base.depth, base.cov, base.alpha)
        self.behind_camera = behind_camera
        self.outside_image = outside_image
        self.outside_mask = outside_mask

    def __iter__(self):
        for i in range(len(self)):
            yield self.record(i)

    def record(self, i: int) -> ProjectedSplat:
        return ProjectedSplat(int(self.index[i]), self.pixel[i], float(self.depth[i]), Cov2D.from_packed(self.cov[i]), float(self.alpha[i]))

    def rows(self, splat_indices) -> np.ndarray:
        """Row positions of the given splat indices (must all be gated)."""
        idx = np.asarray(splat_indices, dtype=np.int64)
        rows = np.searchsorted(self.index, idx)
        if idx.size and (rows.max() >= len(self.index) or np.any(self.index[rows] != idx)):
            raise ValueError("index not present in the gated set")
        return rows


@dataclass
class DepthBuffer:
    origin: tuple  # (x, y) pixel of cell [0, 0]
    cells: np.ndarray
    accepted_opacity_sum: float = 0.0
    accepted_count: int = 0

    @property
    def width(self) -> int:
        return self.cells.shape[1]

    @property
    def height(self) -> int:
        return self.cells.shape[0]

    @property
    def beta(self) -> float:
        if self.accepted_count == 0:
            return float("inf")
        return self.accepted_opacity_sum / self.accepted_count

    def value_at(self, x: int, y: int) -> float:
        return float(self.cells[y - self.origin[1], x - self.origin[0]])


STAGES = ("in_mask", "zbuffer", "depth_filter", "opacity_filter", "fill")


@dataclass
class SegmentationResult:
    view: str
    selected: np.ndarray
    stage_counts: dict
    stats: dict
    timings_ms: dict
    culled: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    # intermediate index sets, not serialized
    gated: np.ndarray | None = field(default=None, repr=False)
    zbuffer: np.ndarray | None = field(default=None, repr=False)
    filtered: np.ndarray | None = field(default=None, repr=False)

    @property
    def status(self) -> str:
        return "ok" if len(self.selected) else "empty"

    def to_document(self) -> dict:
        return {
            "view": self.view,
            "status": self.status,
            "selected": [int(i) for i in self.selected],
            "stages": {k: int(self.stage_counts[k]) for k in STAGES},
            "culled": {k: int(v) for k, v in self.culled.items()},
            "stats": {k: (None if v is None else float(v)) for k, v in self.stats.items()},
            "timings_ms": {k: round(float(v), 3) for k, v in self.timings_ms.items()},
            "config": dict(self.config),
        }

    @classmethod
    def from_document(cls, doc: dict) -> "SegmentationResult":
        return cls(
            view=doc["view"],
            selected=np.asarray(doc["selected"], dtype=np.int64),
            stage_counts=dict(doc["stages"]),
            stats=dict(doc["stats"]),
            timings_ms=dict(doc.get("timings_ms", {})),
            culled=dict(doc.get("culled", {})),
            config=dict(doc.get("config", {})),
        )


def _check_mask(view: CameraView, mask: Mask2D):
    if mask.size != (view.width, view.height):
        raise DimensionMismatch(f"mask is {mask.width}x{mask.height}, view {view.image_name} is {view.width}x{view.height}")


def project_and_gate(scene: SplatScene, view: CameraView, mask: Mask2D, config: UpliftConfig | None = None) -> GatedSplats:
    config = config or UpliftConfig()
    _check_mask(view, mask)
    empty = GatedSplats(
        ProjectedArrays(np.zeros(0, np.int64), np.zeros((0, 2)), np.zeros(0), np.zeros((0, 3)), np.zeros(0))
    )
    if len(scene) == 0:
        return empty
    if mask.is_empty():
        empty.outside_mask = len(scene)
        return empty

    positions = scene.positions
    R, t = view.extrinsics.rotation, view.extrinsics.translation
    K = view.intrinsics
    bits = mask.bits

    def gate(lo, hi):
        p_cam = positions[lo:hi] @ R.T + t
        front = p_cam[:, 2] > config.epsilon_z
        rows = np.flatnonzero(front)
        pix = project_unchecked(p_cam[rows], K)
        inside = (pix[:, 0] >= 0) & (pix[:, 0] < K.width) & (pix[:, 1] >= 0) & (pix[:, 1] < K.height)
        rows, pix = rows[inside], pix[inside]
        on = bits[pix[:, 1].astype(np.int64), pix[:, 0].astype(np.int64)]
        behind = (hi - lo) - int(front.sum())
        outside = int(front.sum()) - int(inside.sum())
        return rows[on] + lo, behind, outside, int((~on).sum())

    parts = map_ranges(gate, len(scene), config.workers, min_chunk=65536)
    index = np.concatenate([p[0] for p in parts])
    behind = sum(p[1] for p in parts)
    outside = sum(p[2] for p in parts)
    off_mask = sum(p[3] for p in parts)

    sub = scene.subset(index)
    sub_pos, log_scales, quats, alphas = sub.positions, sub.log_scales, sub.quaternions, sub.alphas

    def project(lo, hi):
        return project_gaussians(
            sub_pos[lo:hi], log_scales[lo:hi], quats[lo:hi], alphas[lo:hi], index[lo:hi],
            view.extrinsics, K, config.epsilon_cov, config.epsilon_z,
        )

    chunks = map_ranges(project, len(index), config.workers, min_chunk=16384)
    proj = ProjectedArrays(
        np.concatenate([c.index for c in chunks]),
        np.concatenate([c.pixel for c in chunks]).reshape(-1, 2),
        np.concatenate([c.depth for c in chunks]),
        np.concatenate([c.cov for c in chunks]).reshape(-1, 3),
        np.concatenate([c.alpha for c in chunks]),
    )
    return GatedSplats(proj, behind, outside, off_mask)


def depth_order(gated: ProjectedArrays) -> np.ndarray:
    """Row order: ascending depth, ties by ascending splat index."""
    return np.lexsort((gated.index, gated.depth))


def zbuffer_select(gated: ProjectedArrays, mask: Mask2D, config: UpliftConfig | None = None, order=None):
    """Occlusion pass. Returns (accepted splat indices in depth order, DepthBuffer)."""
    config = config or UpliftConfig()
    if len(gated) == 0:
        return np.zeros(0, np.int64), DepthBuffer((0, 0), np.zeros((0, 0)))
    if order is None:
        order = depth_order(gated)
    g = gated.take(order)
    conic = g.conic()
    radius = g.radius(config.footprint_sigma)

    x0, y0, x1, y1 = mask.bounding_box
    margin = int(np.ceil(radius.max()))
    bx0, by0 = max(x0 - margin, 0), max(y0 - margin, 0)
    bx1, by1 = min(x1 + margin, mask.width - 1), min(y1 + margin, mask.height - 1)
    cells = np.zeros((by1 - by0 + 1, bx1 - bx0 + 1))

    accepted, opacity_sum, count = _kernels.zbuffer_pass(
        np.ascontiguousarray(g.pixel[:, 0]), np.ascontiguousarray(g.pixel[:, 1]),
        np.ascontiguousarray(conic[:, 0]), np.ascontiguousarray(conic[:, 1]), np.ascontiguousarray(conic[:, 2]),
        np.ascontiguousarray(g.alpha), np.ascontiguousarray(radius), bx0, by0, cells,
    )
    return g.index[accepted], DepthBuffer((bx0, by0), cells, float(opacity_sum), int(count))


def _window(values: np.ndarray, sigma_k: float) -> np.ndarray:
    """Keep-mask for ``|v - mean| <= sigma_k * std`` (population std)."""
    if values.size == 0:
        return np.zeros(0, dtype=bool)
    # shifting by the first value keeps constant sets exact (deviation 0 <= 0)
    d = values - values[0]
    dev = np.abs(d - d.mean())
    return dev <= _bound(sigma_k, d.std())


def _stats(values: np.ndarray):
    if values.size == 0:
        return None, None
    return float(values.mean()), float(values.std())


def statistical_filter_stages(gated: ProjectedArrays, selected, sigma_k: float = 2.0):
    """(after depth pass, after opacity pass) index arrays, input order preserved."""
    selected = np.asarray(selected, dtype=np.int64)
    rows = gated.rows(selected) if isinstance(gated, GatedSplats) else _rows(gated, selected)
    keep_d = _window(gated.depth[rows], sigma_k)
    rows_d = rows[keep_d]
    keep_a = _window(gated.alpha[rows_d], sigma_k)
    return selected[keep_d], selected[keep_d][keep_a]


def statistical_filter(gated: ProjectedArrays, selected, sigma_k: float = 2.0) -> np.ndarray:
    """Drop splats outside ``sigma_k`` population deviations of the subset's depth, then opacity."""
    return statistical_filter_stages(gated, selected, sigma_k)[1]


def _rows(gated: ProjectedArrays, idx):
    order = np.argsort(gated.index, kind="stable")
    pos = np.searchsorted(gated.index[order], idx)
    return order[pos]


def depth_fill(gated: ProjectedArrays, filtered, sigma_k: float = 2.0, opacity_window: bool = False) -> np.ndarray:
    """``filtered`` plus every gated splat within the filtered set's depth window; sorted."""
    filtered = np.asarray(filtered, dtype=np.int64)
    if filtered.size == 0:
        return filtered
    rows = gated.rows(filtered) if isinstance(gated, GatedSplats) else _rows(gated, filtered)
    inside = _within(gated.depth, gated.depth[rows], sigma_k)
    if opacity_window:
        inside &= _within(gated.alpha, gated.alpha[rows], sigma_k)
    return np.union1d(filtered, gated.index[inside])


def _within(values, reference, sigma_k):
    shift = reference[0]
    d = reference - shift
    mean = d.mean()
    return np.abs((values - shift) - mean) <= _bound(sigma_k, d.std())


def _bound(sigma_k, std):
    # inf * 0 would be nan; a zero-spread set keeps only exact matches
    return sigma_k * std if std > 0 else 0.0


def uplift_mask(scene: SplatScene, view: CameraView, mask: Mask2D, config: UpliftConfig | None = None) -> SegmentationResult:
    config = config or UpliftConfig()
    timings = {}
    t_all = t = time.perf_counter()

    gated = project_and_gate(scene, view, mask, config)
    timings["projection"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    order = depth_order(gated)
    timings["sorting"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    zsel, _ = zbuffer_select(gated, mask, config, order)
    timings["zbuffer"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    if config.statistical_filter:
        after_depth, filtered = statistical_filter_stages(gated, zsel, config.sigma_k)
    else:
        after_depth = filtered = zsel
    timings["statistical_filter"] = (time.perf_counter() - t) * 1e3

    t = time.perf_counter()
    if config.fill:
        selected = depth_fill(gated, filtered, config.sigma_k, config.fill_opacity_window)
    else:
        selected = np.sort(filtered)
    timings["fill"] = (time.perf_counter() - t) * 1e3
    timings["total"] = (time.perf_counter() - t_all) * 1e3

    rows = gated.rows(np.sort(filtered))
    d_mean, d_std = _stats(gated.depth[rows])
    a_mean, a_std = _stats(gated.alpha[rows])
    return SegmentationResult(
        view=view.image_name,
        selected=selected,
        stage_counts={
            "in_mask": len(gated),
            "zbuffer": len(zsel),
            "depth_filter": len(after_depth),
            "opacity_filter": len(filtered),
            "fill": len(selected),
        },
        stats={"depth_mean": d_mean, "depth_std": d_std, "opacity_mean": a_mean, "opacity_std": a_std},
        timings_ms=timings,
        culled={
            "behind_camera": gated.behind_camera,
            "outside_image": gated.outside_image,
            "outside_mask": gated.outside_mask,
        },
        config=config.to_dict(),
        gated=gated.index.copy(),
        zbuffer=zsel,
        filtered=filtered,
    )
