"""Small scene and camera builders shared by the tests."""

import numpy as np

from oracles import quat_matrix
from splatlift.camera_io import CameraView
from splatlift.geometry import CameraExtrinsics, CameraIntrinsics, ProjectedArrays
from splatlift.scene_io import SplatScene


def make_view(width=64, height=48, f=50.0, name="view.png", extrinsics=None):
    return CameraView(name, CameraIntrinsics.centered(f, f, width, height), extrinsics or CameraExtrinsics.identity())


def make_scene(positions, log_scale=-2.0, alphas=0.9, colors=None, quats=None):
    positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
    n = len(positions)
    log_scales = np.broadcast_to(np.asarray(log_scale, dtype=np.float64), (n, 3)).copy()
    if quats is None:
        quats = np.tile([1.0, 0.0, 0.0, 0.0], (n, 1))
    alphas = np.broadcast_to(np.asarray(alphas, dtype=np.float64), (n,))
    return SplatScene.from_arrays(positions, log_scales, quats, np.log(alphas) - np.log1p(-alphas), colors=colors)


def random_scene(rng, n, with_rest=False):
    kw = {"f_rest": rng.normal(size=(n, 9))} if with_rest else {}
    return SplatScene.from_arrays(
        rng.normal(0, 1, (n, 3)), rng.normal(-2, 0.5, (n, 3)), rng.normal(size=(n, 4)), rng.normal(0, 2, n),
        colors=rng.uniform(0, 1, (n, 3)), **kw,
    )


def random_rotation(rng):
    return quat_matrix(rng.normal(size=4))


def projected(pixels, depths, alphas, covs=None, index=None):
    """Hand-built projected splats (covariances packed a, b, c)."""
    pixels = np.asarray(pixels, dtype=np.float64).reshape(-1, 2)
    n = len(pixels)
    covs = np.tile([1.0, 0.0, 1.0], (n, 1)) if covs is None else np.asarray(covs, dtype=np.float64).reshape(-1, 3)
    index = np.arange(n) if index is None else np.asarray(index)
    return ProjectedArrays(index.astype(np.int64), pixels, np.asarray(depths, float), covs, np.asarray(alphas, float))
