"""Synthetic splat scenes with exact per-splat group labels.

Layout (world units, +z away from the front camera):

* ``foreground``: a disc of splats centered at the look-at point, tilted about
  the vertical axis so depth varies across it, lying on its surface.
* ``background``: a wall behind the disc, facing the cameras.
* ``floater`` (floaters preset): faint splats between the front camera and the disc.
* ``object_b`` (two-objects preset): a second disc beside the first.

Cameras sit on a horizontal ring arc around the look-at point; the middle one
looks straight down +z and is the front view.

Randomness comes from numpy's PCG64 bit generator seeded with ``seed``, so a
spec reproduces the same bytes on any platform.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .camera_io import CameraView, write_colmap_text
from .errors import InvalidSpec
from .geometry import CameraExtrinsics, CameraIntrinsics, logit, rotation_to_quaternion
from .mask_io import Mask2D, save_mask
from .rasterizer import render
from .scene_io import SplatScene, write_splat_ply

PRESETS = ("cluster-wall", "two-objects", "floaters")


@dataclass(frozen=True)
class SynthSpec:
    preset: str = "cluster-wall"
    seed: int = 0
    n_foreground: int = 500
    n_background: int = 4500
    n_floaters: int = 60
    n_object_b: int = 300
    # foreground disc
    object_radius: float = 0.6
    object_tilt_deg: float = 25.0
    object_thickness: float = 0.01
    object_scale: tuple = (0.025, 0.05)
    object_opacity: tuple = (0.7, 0.99)
    # background wall
    wall_distance: float = 2.0
    wall_half_extent: float = 3.0
    wall_thickness: float = 0.02
    wall_scale: tuple = (0.05, 0.09)
    wall_opacity: tuple = (0.5, 0.99)
    # floaters, as a fraction of the way from the camera to the disc
    floater_span: tuple = (0.3, 0.7)
    floater_scale: tuple = (0.01, 0.03)
    floater_opacity: tuple = (0.02, 0.09)
    # camera ring
    n_cameras: int = 5
    ring_radius: float = 4.0
    ring_span_deg: float = 60.0
    look_at: tuple = (0.0, 0.0, 0.0)
    width: int = 640
    height: int = 480
    focal: float = 600.0

    def __post_init__(self):
        if self.preset not in PRESETS:
            raise InvalidSpec(f"unknown preset {self.preset!r}; choose from {', '.join(PRESETS)}")
        counts = (self.n_foreground, self.n_background, self.n_floaters, self.n_object_b)
        if min(counts) < 0:
            raise InvalidSpec("group counts must be >= 0")
        if self.n_foreground < 1:
            raise InvalidSpec("n_foreground must be >= 1")
        if self.n_cameras < 1:
            raise InvalidSpec("n_cameras must be >= 1")
        if self.width < 1 or self.height < 1 or self.focal <= 0:
            raise InvalidSpec("bad image size or focal length")
        for name in ("object_scale", "object_opacity", "wall_scale", "wall_opacity",
                     "floater_span", "floater_scale", "floater_opacity"):
            lo, hi = getattr(self, name)
            if not lo <= hi:
                raise InvalidSpec(f"{name}: low end exceeds high end")
        for name in ("object_opacity", "wall_opacity", "floater_opacity"):
            lo, hi = getattr(self, name)
            if not 0 < lo <= hi < 1:
                raise InvalidSpec(f"{name} must lie inside (0, 1)")
        if self.ring_radius <= self.object_radius + 0.1:
            raise InvalidSpec("ring radius must clear the foreground disc")
        front_extent = self.object_radius * np.sin(np.radians(self.object_tilt_deg)) + 4 * self.object_thickness
        if self.wall_distance - 4 * self.wall_thickness <= front_extent:
            raise InvalidSpec("wall depth band overlaps the foreground depth band")

    @property
    def front_index(self) -> int:
        return self.n_cameras // 2

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class SynthScene:
    spec: SynthSpec
    scene: SplatScene
    views: list
    labels: np.ndarray  # group name per splat
    masks: dict = field(default_factory=dict)  # view name -> foreground reference mask

    @property
    def front_view(self) -> CameraView:
        return self.views[self.spec.front_index]

    def group(self, name: str) -> np.ndarray:
        return np.flatnonzero(self.labels == name)

    def counts(self) -> dict:
        names, n = np.unique(self.labels, return_counts=True)
        return {str(a): int(b) for a, b in zip(names, n)}


def _frame_from_normal(normal, spin):
    """Rotation whose third column is ``normal`` and first columns are spun by ``spin`` radians."""
    n = normal / np.linalg.norm(normal)
    helper = np.array([0.0, 1.0, 0.0]) if abs(n[1]) < 0.9 else np.array([1.0, 0.0, 0.0])
    u = np.cross(helper, n)
    u /= np.linalg.norm(u)
    v = np.cross(n, u)
    c, s = np.cos(spin), np.sin(spin)
    u2 = c[:, None] * u + s[:, None] * v
    v2 = -s[:, None] * u + c[:, None] * v
    return np.stack([u2, v2, np.broadcast_to(n, u2.shape)], axis=-1)


def _quats(Rs):
    return rotation_to_quaternion(Rs).reshape(-1, 4)


def _log_uniform(rng, lo, hi, size):
    return rng.uniform(np.log(lo), np.log(hi), size)


def _disc(rng, spec, n, center, color):
    tilt = np.radians(spec.object_tilt_deg)
    normal = np.array([np.sin(tilt), 0.0, -np.cos(tilt)])
    frame = _frame_from_normal(normal, np.zeros(1))[0]
    r = spec.object_radius * np.sqrt(rng.uniform(0, 1, n))
    th = rng.uniform(0, 2 * np.pi, n)
    local = np.stack([r * np.cos(th), r * np.sin(th), rng.normal(0, spec.object_thickness, n)], axis=1)
    pos = np.asarray(center) + local @ frame.T
    Rs = _frame_from_normal(normal, rng.uniform(0, np.pi, n))
    s = _log_uniform(rng, *spec.object_scale, (n, 2))
    log_scales = np.column_stack([s, np.full(n, np.log(spec.object_thickness / 2))])
    alpha = rng.uniform(*spec.object_opacity, n)
    colors = np.clip(np.asarray(color) + rng.normal(0, 0.05, (n, 3)), 0, 1)
    return pos, log_scales, _quats(Rs), alpha, colors


def _wall(rng, spec, n):
    look = np.asarray(spec.look_at, dtype=np.float64)
    xy = rng.uniform(-spec.wall_half_extent, spec.wall_half_extent, (n, 2))
    z = spec.wall_distance + rng.normal(0, spec.wall_thickness, n)
    pos = look + np.column_stack([xy, z])
    Rs = _frame_from_normal(np.array([0.0, 0.0, -1.0]), rng.uniform(0, np.pi, n))
    s = _log_uniform(rng, *spec.wall_scale, (n, 2))
    log_scales = np.column_stack([s, np.full(n, np.log(spec.wall_thickness / 2))])
    alpha = rng.uniform(*spec.wall_opacity, n)
    colors = np.clip(0.45 + rng.normal(0, 0.05, (n, 3)), 0, 1)
    return pos, log_scales, _quats(Rs), alpha, colors


def _floaters(rng, spec, n, eye, disc_pos):
    targets = disc_pos[rng.integers(0, len(disc_pos), n)]
    frac = rng.uniform(*spec.floater_span, n)
    pos = eye + frac[:, None] * (targets - eye)
    log_scales = np.repeat(_log_uniform(rng, *spec.floater_scale, (n, 1)), 3, axis=1)
    q = rng.normal(size=(n, 4))
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    alpha = rng.uniform(*spec.floater_opacity, n)
    colors = rng.uniform(0.7, 1.0, (n, 3))
    return pos, log_scales, q, alpha, colors


def camera_ring(spec: SynthSpec) -> list:
    look = np.asarray(spec.look_at, dtype=np.float64)
    if spec.n_cameras == 1:
        angles = np.zeros(1)
    else:
        angles = np.radians(np.linspace(-spec.ring_span_deg / 2, spec.ring_span_deg / 2, spec.n_cameras))
    K = CameraIntrinsics.centered(spec.focal, spec.focal, spec.width, spec.height)
    views = []
    for i, a in enumerate(angles):
        eye = look + spec.ring_radius * np.array([np.sin(a), 0.0, -np.cos(a)])
        views.append(CameraView(f"cam_{i:02d}.png", K, CameraExtrinsics.look_at(eye, look)))
    return views


def generate(spec: SynthSpec, with_masks: bool = True) -> SynthScene:
    rng = np.random.Generator(np.random.PCG64(spec.seed))
    views = camera_ring(spec)
    eye = views[spec.front_index].extrinsics.camera_center
    look = np.asarray(spec.look_at, dtype=np.float64)

    groups = []
    if spec.preset == "two-objects":
        offset = np.array([1.1 * spec.object_radius, 0.0, 0.0])
        fg = _disc(rng, spec, spec.n_foreground, look - offset, (0.85, 0.15, 0.1))
        groups.append(("foreground", fg))
        groups.append(("object_b", _disc(rng, spec, spec.n_object_b, look + offset, (0.1, 0.3, 0.85))))
    else:
        fg = _disc(rng, spec, spec.n_foreground, look, (0.85, 0.15, 0.1))
        groups.append(("foreground", fg))
    groups.append(("background", _wall(rng, spec, spec.n_background)))
    if spec.preset == "floaters":
        groups.append(("floater", _floaters(rng, spec, spec.n_floaters, eye, fg[0])))

    pos = np.concatenate([g[1][0] for g in groups])
    log_scales = np.concatenate([g[1][1] for g in groups])
    quats = np.concatenate([g[1][2] for g in groups])
    alpha = np.concatenate([g[1][3] for g in groups])
    colors = np.concatenate([g[1][4] for g in groups])
    labels = np.concatenate([np.full(len(g[1][0]), g[0], dtype=object) for g in groups])

    order = rng.permutation(len(pos))
    scene = SplatScene.from_arrays(
        pos[order], log_scales[order], quats[order], logit(alpha[order]), colors=colors[order]
    )
    out = SynthScene(spec, scene, views, labels[order].astype(str))
    if with_masks:
        out.masks = {v.image_name: reference_mask(out.scene, v, "foreground", out.labels) for v in views}
    return out


def reference_mask(scene: SplatScene, view: CameraView, group_label: str, ground_truth, threshold: float = 0.5) -> Mask2D:
    """Ground-truth mask: the group rendered alone, thresholded on accumulated opacity."""
    members = np.flatnonzero(np.asarray(ground_truth) == group_label)
    if members.size == 0:
        return Mask2D.empty(view.width, view.height)
    target = render(scene, view, selection=members)
    return Mask2D(target.alpha_acc > threshold)


def write_synth(result: SynthScene, out_dir) -> dict:
    """Materialize scene.ply, sparse/ (text), masks/<view>.png and labels.json."""
    out = Path(out_dir)
    (out / "sparse").mkdir(parents=True, exist_ok=True)
    (out / "masks").mkdir(parents=True, exist_ok=True)
    write_splat_ply(result.scene, out / "scene.ply")
    write_colmap_text(result.views, out / "sparse")
    mask_files = {}
    for name, mask in result.masks.items():
        path = out / "masks" / (Path(name).stem + ".png")
        save_mask(mask, path)
        mask_files[name] = str(path.relative_to(out))
    doc = {
        "preset": result.spec.preset,
        "seed": result.spec.seed,
        "front_view": result.front_view.image_name,
        "groups": result.counts(),
        "masks": mask_files,
        "labels": [str(x) for x in result.labels],
        "spec": result.spec.to_dict(),
    }
    (out / "labels.json").write_text(json.dumps(doc, indent=1) + "\n", encoding="utf-8")
    return doc


def load_labels(path) -> np.ndarray:
    doc = json.loads(Path(path).read_text(encoding="utf-8"))
    return np.asarray(doc["labels"], dtype=str)


def benchmark_scene(n_splats: int, seed: int = 0, foreground_fraction: float = 0.005, object_radius: float = 0.38):
    """Cluster-wall scene of ``n_splats`` splats plus its front-view foreground mask.

    The small disc keeps the mask near 3% of the image, so timings reflect a
    realistic mask-to-scene ratio rather than a near-full-frame selection.
    """
    n_fg = max(1, int(round(n_splats * foreground_fraction)))
    spec = SynthSpec(preset="cluster-wall", seed=seed, n_foreground=n_fg, n_background=n_splats - n_fg,
                     object_radius=object_radius)
    result = generate(spec, with_masks=False)
    view = result.front_view
    mask = reference_mask(result.scene, view, "foreground", result.labels)
    result.masks[view.image_name] = mask
    return result, mask
