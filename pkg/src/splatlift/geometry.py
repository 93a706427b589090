"""Camera and Gaussian projection math.

Conventions used throughout the package:

* world -> camera is ``X_cam = R @ X_world + t`` (the SfM file convention).
  A pose given as camera center ``C`` converts with ``t = -R @ C``.
* pixel ``(i, j)`` covers ``[i, i+1) x [j, j+1)``; its center is ``(i + 0.5, j + 0.5)``.

Every function accepts leading batch dimensions unless noted.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateDepth, InvalidCamera, InvalidSplat, SingularCovariance

SH_C0 = 0.28209479177387814
EPSILON_Z = 1e-6
EPSILON_COV = 0.3
SINGULAR_DET = 1e-12


@dataclass(frozen=True)
class CameraIntrinsics:
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self):
        if not (self.fx > 0 and self.fy > 0):
            raise InvalidCamera(f"focal lengths must be positive, got fx={self.fx}, fy={self.fy}")
        if self.width < 1 or self.height < 1:
            raise InvalidCamera(f"image size must be >= 1, got {self.width}x{self.height}")
        if not (0 <= self.cx <= self.width and 0 <= self.cy <= self.height):
            raise InvalidCamera(
                f"principal point ({self.cx}, {self.cy}) outside {self.width}x{self.height} image"
            )

    @classmethod
    def centered(cls, fx: float, fy: float, width: int, height: int) -> "CameraIntrinsics":
        """Principal point at the image center, for sources that do not store one."""
        return cls(fx, fy, width / 2.0, height / 2.0, width, height)

    @property
    def K(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx], [0.0, self.fy, self.cy], [0.0, 0.0, 1.0]])

    def scaled(self, k: float) -> "CameraIntrinsics":
        return CameraIntrinsics(
            self.fx * k, self.fy * k, self.cx * k, self.cy * k,
            int(round(self.width * k)), int(round(self.height * k)),
        )


@dataclass(frozen=True, eq=False)
class CameraExtrinsics:
    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        R = np.asarray(self.rotation, dtype=np.float64).reshape(3, 3)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(R)) or not np.all(np.isfinite(t)):
            raise InvalidCamera("non-finite pose")
        if np.abs(R.T @ R - np.eye(3)).max() > 1e-6:
            raise InvalidCamera("rotation is not orthonormal")
        if abs(np.linalg.det(R) - 1.0) > 1e-6:
            raise InvalidCamera("rotation determinant is not +1")
        R.setflags(write=False)
        t.setflags(write=False)
        object.__setattr__(self, "rotation", R)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "CameraExtrinsics":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_camera_center(cls, rotation, center) -> "CameraExtrinsics":
        """Build from the ``X_cam = R (X - C)`` form, C being the camera center."""
        R = np.asarray(rotation, dtype=np.float64)
        return cls(R, -R @ np.asarray(center, dtype=np.float64))

    @classmethod
    def look_at(cls, eye, target, up=(0.0, -1.0, 0.0)) -> "CameraExtrinsics":
        """Camera at ``eye`` looking at ``target``; +z forward, +y down in the image."""
        eye = np.asarray(eye, dtype=np.float64)
        forward = np.asarray(target, dtype=np.float64) - eye
        forward /= np.linalg.norm(forward)
        right = np.cross(forward, np.asarray(up, dtype=np.float64))
        right /= np.linalg.norm(right)
        down = np.cross(forward, right)
        R = np.stack([right, down, forward])
        return cls.from_camera_center(R, eye)

    @property
    def camera_center(self) -> np.ndarray:
        return -self.rotation.T @ self.translation

    def __eq__(self, other):
        if not isinstance(other, CameraExtrinsics):
            return NotImplemented
        return np.array_equal(self.rotation, other.rotation) and np.array_equal(
            self.translation, other.translation
        )

    __hash__ = None


@dataclass(frozen=True, eq=False)
class GaussianSplat:
    position: np.ndarray
    log_scale: np.ndarray
    rotation_q: np.ndarray  # (w, x, y, z), unit norm
    opacity_logit: float
    color: np.ndarray

    def __post_init__(self):
        q = np.asarray(self.rotation_q, dtype=np.float64).reshape(4)
        n = np.linalg.norm(q)
        if not np.isfinite(n) or n == 0.0:
            raise InvalidSplat("rotation quaternion has zero or non-finite norm")
        s = np.asarray(self.log_scale, dtype=np.float64).reshape(3)
        if not np.all(np.isfinite(s)):
            raise InvalidSplat("log_scale must be finite")
        object.__setattr__(self, "rotation_q", q / n)
        object.__setattr__(self, "log_scale", s)
        object.__setattr__(self, "position", np.asarray(self.position, dtype=np.float64).reshape(3))
        object.__setattr__(self, "color", np.asarray(self.color, dtype=np.float64).reshape(3))
        object.__setattr__(self, "opacity_logit", float(self.opacity_logit))

    @property
    def alpha(self) -> float:
        return float(sigmoid(self.opacity_logit))


@dataclass(frozen=True)
class Cov2D:
    """Symmetric 2x2 matrix ``[[a, b], [b, c]]``. Fields may be arrays."""

    a: float | np.ndarray
    b: float | np.ndarray
    c: float | np.ndarray

    @classmethod
    def from_matrix(cls, m) -> "Cov2D":
        m = np.asarray(m, dtype=np.float64)
        return cls(m[..., 0, 0], 0.5 * (m[..., 0, 1] + m[..., 1, 0]), m[..., 1, 1])

    @classmethod
    def from_packed(cls, abc) -> "Cov2D":
        abc = np.asarray(abc, dtype=np.float64)
        return cls(abc[..., 0], abc[..., 1], abc[..., 2])

    def matrix(self) -> np.ndarray:
        a, b, c = np.broadcast_arrays(self.a, self.b, self.c)
        return np.stack([np.stack([a, b], -1), np.stack([b, c], -1)], -2)

    def packed(self) -> np.ndarray:
        return np.stack(np.broadcast_arrays(self.a, self.b, self.c), -1).astype(np.float64)

    def det(self):
        return self.a * self.c - self.b * self.b

    def conic(self) -> tuple:
        """Entries of the inverse matrix, ``(a', b', c')``."""
        d = self.det()
        return self.c / d, -self.b / d, self.a / d

    def eigenvalues(self):
        """(smaller, larger) eigenvalue pair."""
        mid = 0.5 * (self.a + self.c)
        rad = np.sqrt(np.maximum(0.25 * (self.a - self.c) ** 2 + self.b * self.b, 0.0))
        return mid - rad, mid + rad

    def radius(self, k_sigma: float):
        return k_sigma * np.sqrt(np.maximum(self.eigenvalues()[1], 0.0))


def sigmoid(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=np.float64)))


def logit(p):
    p = np.asarray(p, dtype=np.float64)
    return np.log(p) - np.log1p(-p)


def sh_to_rgb(f_dc):
    return 0.5 + SH_C0 * np.asarray(f_dc, dtype=np.float64)


def rgb_to_sh(rgb):
    return (np.asarray(rgb, dtype=np.float64) - 0.5) / SH_C0


def quaternion_to_rotation(q) -> np.ndarray:
    """Rotation matrices from (w, x, y, z) quaternions; normalizes first."""
    q = np.asarray(q, dtype=np.float64)
    q = q / np.linalg.norm(q, axis=-1, keepdims=True)
    w, x, y, z = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    R = np.empty(q.shape[:-1] + (3, 3))
    R[..., 0, 0] = 1 - 2 * (y * y + z * z)
    R[..., 0, 1] = 2 * (x * y - w * z)
    R[..., 0, 2] = 2 * (x * z + w * y)
    R[..., 1, 0] = 2 * (x * y + w * z)
    R[..., 1, 1] = 1 - 2 * (x * x + z * z)
    R[..., 1, 2] = 2 * (y * z - w * x)
    R[..., 2, 0] = 2 * (x * z - w * y)
    R[..., 2, 1] = 2 * (y * z + w * x)
    R[..., 2, 2] = 1 - 2 * (x * x + y * y)
    return R


def rotation_to_quaternion(R) -> np.ndarray:
    """Inverse of quaternion_to_rotation (batched), returning w >= 0."""
    R = np.asarray(R, dtype=np.float64)
    m = R.reshape(-1, 3, 3)
    tr = np.trace(m, axis1=1, axis2=2)
    d0, d1, d2 = m[:, 0, 0], m[:, 1, 1], m[:, 2, 2]
    # pick the numerically largest of (w, x, y, z) to divide by
    cand = np.stack([tr, d0, d1, d2], axis=1)
    branch = np.argmax(cand, axis=1)
    q = np.empty((len(m), 4))
    with np.errstate(invalid="ignore", divide="ignore"):
        s = 2.0 * np.sqrt(np.maximum(1.0 + np.stack([tr, 2 * d0 - tr, 2 * d1 - tr, 2 * d2 - tr], 1), 0.0))
        s = s[np.arange(len(m)), branch]
        r21, r12 = m[:, 2, 1], m[:, 1, 2]
        r02, r20 = m[:, 0, 2], m[:, 2, 0]
        r10, r01 = m[:, 1, 0], m[:, 0, 1]
        table = np.stack([
            np.stack([0.25 * s, (r21 - r12) / s, (r02 - r20) / s, (r10 - r01) / s], 1),
            np.stack([(r21 - r12) / s, 0.25 * s, (r01 + r10) / s, (r02 + r20) / s], 1),
            np.stack([(r02 - r20) / s, (r01 + r10) / s, 0.25 * s, (r12 + r21) / s], 1),
            np.stack([(r10 - r01) / s, (r02 + r20) / s, (r12 + r21) / s, 0.25 * s], 1),
        ], 1)
    q = table[np.arange(len(m)), branch]
    q /= np.linalg.norm(q, axis=1, keepdims=True)
    q *= np.where(q[:, :1] < 0, -1.0, 1.0)
    return q.reshape(R.shape[:-2] + (4,))


def world_to_camera(point, extrinsics: CameraExtrinsics) -> np.ndarray:
    return np.asarray(point, dtype=np.float64) @ extrinsics.rotation.T + extrinsics.translation


def camera_to_world(point_cam, extrinsics: CameraExtrinsics) -> np.ndarray:
    return (np.asarray(point_cam, dtype=np.float64) - extrinsics.translation) @ extrinsics.rotation


def camera_to_pixel(point_cam, intrinsics: CameraIntrinsics, epsilon_z: float = EPSILON_Z):
    """Pinhole projection. Returns ``(pixel, depth)``; raises DegenerateDepth if any z <= epsilon_z."""
    p = np.asarray(point_cam, dtype=np.float64)
    z = p[..., 2]
    if np.any(z <= epsilon_z):
        raise DegenerateDepth(f"depth {np.min(z)} <= {epsilon_z}")
    return project_unchecked(p, intrinsics), z


def project_unchecked(point_cam, intrinsics: CameraIntrinsics) -> np.ndarray:
    p = np.asarray(point_cam, dtype=np.float64)
    z = p[..., 2]
    return np.stack(
        [intrinsics.fx * p[..., 0] / z + intrinsics.cx, intrinsics.fy * p[..., 1] / z + intrinsics.cy],
        axis=-1,
    )


def covariance_from_params(log_scale, rotation_q) -> np.ndarray:
    """``R S^2 R^T`` with ``S = diag(exp(log_scale))``; batched over leading dims."""
    R = quaternion_to_rotation(rotation_q)
    s2 = np.exp(2.0 * np.asarray(log_scale, dtype=np.float64))
    return (R * s2[..., None, :]) @ np.swapaxes(R, -1, -2)


def covariance_world(splat: GaussianSplat) -> np.ndarray:
    return covariance_from_params(splat.log_scale, splat.rotation_q)


def covariance_camera(cov_world, extrinsics: CameraExtrinsics) -> np.ndarray:
    R = extrinsics.rotation
    return R @ np.asarray(cov_world, dtype=np.float64) @ R.T


def projection_jacobian(point_cam, intrinsics: CameraIntrinsics, epsilon_z: float = EPSILON_Z) -> np.ndarray:
    p = np.asarray(point_cam, dtype=np.float64)
    if np.any(p[..., 2] <= epsilon_z):
        raise DegenerateDepth(f"depth {np.min(p[..., 2])} <= {epsilon_z}")
    return _jacobian(p, intrinsics.fx, intrinsics.fy)


def _jacobian(p, fx, fy):
    x, y, z = p[..., 0], p[..., 1], p[..., 2]
    J = np.zeros(p.shape[:-1] + (2, 3))
    J[..., 0, 0] = fx / z
    J[..., 0, 2] = -fx * x / (z * z)
    J[..., 1, 1] = fy / z
    J[..., 1, 2] = -fy * y / (z * z)
    return J


def covariance_image(cov_cam, J, epsilon_cov: float = EPSILON_COV) -> Cov2D:
    J = np.asarray(J, dtype=np.float64)
    m = J @ np.asarray(cov_cam, dtype=np.float64) @ np.swapaxes(J, -1, -2)
    cov = Cov2D.from_matrix(m)
    return Cov2D(cov.a + epsilon_cov, cov.b, cov.c + epsilon_cov)


def mahalanobis_sq(pixel, mean, cov: Cov2D):
    d = np.asarray(pixel, dtype=np.float64) - np.asarray(mean, dtype=np.float64)
    ia, ib, ic = cov.conic()
    dx, dy = d[..., 0], d[..., 1]
    return ia * dx * dx + 2.0 * ib * dx * dy + ic * dy * dy


def gaussian_weight(pixel, mean, cov: Cov2D, alpha):
    """``alpha * exp(-D^2 / 2)`` with D the Mahalanobis distance to ``mean``."""
    if np.any(np.asarray(cov.det()) <= SINGULAR_DET):
        raise SingularCovariance(f"2x2 determinant {np.min(cov.det())} <= {SINGULAR_DET}")
    return np.asarray(alpha, dtype=np.float64) * np.exp(-0.5 * mahalanobis_sq(pixel, mean, cov))


@dataclass
class ProjectedArrays:
    """Struct-of-arrays projection of a splat subset into one view.

    ``cov`` is packed ``(a, b, c)`` per row and already regularized.
    """

    index: np.ndarray
    pixel: np.ndarray
    depth: np.ndarray
    cov: np.ndarray
    alpha: np.ndarray

    def __len__(self):
        return len(self.index)

    def take(self, rows) -> "ProjectedArrays":
        return ProjectedArrays(self.index[rows], self.pixel[rows], self.depth[rows], self.cov[rows], self.alpha[rows])

    def conic(self) -> np.ndarray:
        return np.stack(Cov2D.from_packed(self.cov).conic(), -1)

    def radius(self, k_sigma: float) -> np.ndarray:
        return Cov2D.from_packed(self.cov).radius(k_sigma)


def project_gaussians(
    positions,
    log_scales,
    quats,
    alphas,
    index,
    extrinsics: CameraExtrinsics,
    intrinsics: CameraIntrinsics,
    epsilon_cov: float = EPSILON_COV,
    epsilon_z: float = EPSILON_Z,
) -> ProjectedArrays:
    """Full per-splat projection; rows with depth <= epsilon_z are dropped."""
    p_cam = world_to_camera(positions, extrinsics)
    keep = p_cam[:, 2] > epsilon_z
    p_cam = p_cam[keep]
    cov_world = covariance_from_params(np.asarray(log_scales)[keep], np.asarray(quats)[keep])
    cov_cam = covariance_camera(cov_world, extrinsics)
    J = _jacobian(p_cam, intrinsics.fx, intrinsics.fy)
    cov2d = covariance_image(cov_cam, J, epsilon_cov)
    return ProjectedArrays(
        index=np.asarray(index)[keep],
        pixel=project_unchecked(p_cam, intrinsics),
        depth=p_cam[:, 2],
        cov=cov2d.packed(),
        alpha=np.asarray(alphas, dtype=np.float64)[keep],
    )
