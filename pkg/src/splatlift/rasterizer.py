"""CPU splat rendering and back-projection of a splat subset into a mask."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from PIL import Image

from . import _kernels
from .camera_io import CameraView
from .errors import IoFailure
from .geometry import EPSILON_COV, EPSILON_Z, ProjectedArrays, project_gaussians
from .mask_io import Mask2D
from .parallel import map_ranges
from .scene_io import SplatScene

SATURATION = 0.9999


@dataclass(eq=False)
class RenderTarget:
    rgb: np.ndarray  # (H, W, 3)
    alpha_acc: np.ndarray  # (H, W)

    @property
    def width(self) -> int:
        return self.rgb.shape[1]

    @property
    def height(self) -> int:
        return self.rgb.shape[0]

    def to_uint8(self) -> np.ndarray:
        return np.clip(np.rint(self.rgb * 255.0), 0, 255).astype(np.uint8)

    def save(self, path):
        try:
            Image.fromarray(self.to_uint8(), mode="RGB").save(path)
        except OSError as e:
            raise IoFailure(f"{path}: {e}") from e


def project_view(scene: SplatScene, view: CameraView, indices=None, epsilon_cov=EPSILON_COV, epsilon_z=EPSILON_Z, workers=1) -> ProjectedArrays:
    """Project ``indices`` (default all) into ``view``, dropping splats behind the camera."""
    if indices is None:
        indices = np.arange(len(scene))
    indices = np.asarray(indices, dtype=np.int64)
    sub = scene.subset(indices)
    pos, ls, q, a = sub.positions, sub.log_scales, sub.quaternions, sub.alphas

    def run(lo, hi):
        return project_gaussians(pos[lo:hi], ls[lo:hi], q[lo:hi], a[lo:hi], indices[lo:hi],
                                 view.extrinsics, view.intrinsics, epsilon_cov, epsilon_z)

    parts = map_ranges(run, len(indices), workers, min_chunk=16384)
    return ProjectedArrays(
        np.concatenate([p.index for p in parts]),
        np.concatenate([p.pixel for p in parts]).reshape(-1, 2),
        np.concatenate([p.depth for p in parts]),
        np.concatenate([p.cov for p in parts]).reshape(-1, 3),
        np.concatenate([p.alpha for p in parts]),
    )


def _on_screen(proj: ProjectedArrays, radius, width, height):
    px, py = proj.pixel[:, 0], proj.pixel[:, 1]
    return (px + radius > 0) & (px - radius < width) & (py + radius > 0) & (py - radius < height)


def _bands(height: int, workers: int):
    return [(lo, hi) for lo, hi in ((height * i // workers, height * (i + 1) // workers) for i in range(workers)) if hi > lo]


def composite(proj: ProjectedArrays, colors, width: int, height: int, saturation=SATURATION, footprint_sigma=3.0, workers=1) -> RenderTarget:
    """Front-to-back alpha compositing of projected splats; ``colors`` aligned with ``proj`` rows."""
    if not 0 < saturation <= 1:
        raise ValueError(f"saturation must be in (0, 1], got {saturation}")
    colors = np.asarray(colors, dtype=np.float64).reshape(-1, 3)
    radius = proj.radius(footprint_sigma)
    keep = np.flatnonzero(_on_screen(proj, radius, width, height))
    order = keep[np.lexsort((proj.index[keep], proj.depth[keep]))]
    conic = proj.conic()[order]
    px = np.ascontiguousarray(proj.pixel[order, 0])
    py = np.ascontiguousarray(proj.pixel[order, 1])
    radius = radius[order]
    alpha = proj.alpha[order]
    cols = np.ascontiguousarray(colors[order])

    rgb = np.zeros((height, width, 3))
    acc = np.zeros((height, width))

    def band(lo, hi):
        hit = np.flatnonzero((py + radius > lo) & (py - radius < hi))
        _kernels.composite_band(
            px[hit], py[hit],
            np.ascontiguousarray(conic[hit, 0]), np.ascontiguousarray(conic[hit, 1]), np.ascontiguousarray(conic[hit, 2]),
            alpha[hit], radius[hit], cols[hit], lo, rgb[lo:hi], acc[lo:hi], saturation,
        )

    bands = _bands(height, max(1, workers))
    if len(bands) == 1:
        band(*bands[0])
    else:
        from concurrent.futures import ThreadPoolExecutor

        with ThreadPoolExecutor(len(bands)) as pool:
            list(pool.map(lambda b: band(*b), bands))
    return RenderTarget(rgb, acc)


def render(
    scene: SplatScene,
    view: CameraView,
    selection=None,
    highlight_color=None,
    saturation: float = SATURATION,
    footprint_sigma: float = 3.0,
    epsilon_cov: float = EPSILON_COV,
    workers: int = 1,
) -> RenderTarget:
    """Render ``view``.

    ``selection`` alone restricts rendering to those splats; together with
    ``highlight_color`` every splat is drawn and the selection is recolored.
    """
    colors = scene.colors
    if selection is not None:
        selection = np.asarray(selection, dtype=np.int64)
    if highlight_color is not None and selection is not None:
        colors = colors.copy()
        colors[selection] = np.asarray(highlight_color, dtype=np.float64)
        indices = None
    else:
        indices = selection
    proj = project_view(scene, view, indices, epsilon_cov, workers=workers)
    return composite(proj, colors[proj.index], view.width, view.height, saturation, footprint_sigma, workers)


def footprint_mask(proj: ProjectedArrays, width: int, height: int, radius_sigma: float = 2.0) -> Mask2D:
    """Pixels within Mahalanobis distance ``radius_sigma`` of any projected splat."""
    bits = np.zeros((height, width), dtype=bool)
    if len(proj):
        radius = proj.radius(radius_sigma)
        keep = _on_screen(proj, radius, width, height)
        conic = proj.conic()[keep]
        _kernels.footprint_union(
            np.ascontiguousarray(proj.pixel[keep, 0]), np.ascontiguousarray(proj.pixel[keep, 1]),
            np.ascontiguousarray(conic[:, 0]), np.ascontiguousarray(conic[:, 1]), np.ascontiguousarray(conic[:, 2]),
            np.ascontiguousarray(radius[keep]), float(radius_sigma) ** 2, 0, bits,
        )
    return Mask2D(bits)


def backproject_mask(scene: SplatScene, view: CameraView, selection, footprint_radius_sigma: float = 2.0, epsilon_cov: float = EPSILON_COV, workers: int = 1) -> Mask2D:
    selection = np.asarray(selection, dtype=np.int64).reshape(-1)
    if selection.size == 0:
        return Mask2D.empty(view.width, view.height)
    proj = project_view(scene, view, selection, epsilon_cov, workers=workers)
    return footprint_mask(proj, view.width, view.height, footprint_radius_sigma)
