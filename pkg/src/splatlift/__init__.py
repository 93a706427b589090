"""Lift a single-view 2D mask into a 3D Gaussian Splatting scene."""

from .camera_io import CameraView, find_view, load_colmap_bundle
from .geometry import CameraExtrinsics, CameraIntrinsics, Cov2D, GaussianSplat
from .mask_io import Mask2D, load_mask, rasterize_polygon, save_mask
from .scene_io import SplatScene, load_splat_ply, write_splat_ply
from .uplift import SegmentationResult, UpliftConfig, uplift_mask

__version__ = "0.1.0"

__all__ = [
    "CameraExtrinsics",
    "CameraIntrinsics",
    "CameraView",
    "Cov2D",
    "GaussianSplat",
    "Mask2D",
    "SegmentationResult",
    "SplatScene",
    "UpliftConfig",
    "find_view",
    "load_colmap_bundle",
    "load_mask",
    "load_splat_ply",
    "rasterize_polygon",
    "save_mask",
    "uplift_mask",
    "write_splat_ply",
]
