"""SfM reconstruction (cameras + registered images) reading and writing.

Text layout::

    cameras.txt  CAMERA_ID MODEL WIDTH HEIGHT PARAMS...
    images.txt   IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME
                 <2D observations line, ignored>

Binary layout is the little-endian counterpart with uint64 counts, int32 ids
and float64 values. Poses are world->camera (``X_cam = R X + t``).
"""

from __future__ import annotations

import io
import os
import posixpath
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import AmbiguousName, InvalidCamera, MalformedRecord, MissingFile, UnsupportedCameraModel, ViewNotFound
from .geometry import CameraExtrinsics, CameraIntrinsics, quaternion_to_rotation, rotation_to_quaternion

CAMERA_MODELS = {
    0: ("SIMPLE_PINHOLE", 3),
    1: ("PINHOLE", 4),
    2: ("SIMPLE_RADIAL", 4),
    3: ("RADIAL", 5),
    4: ("OPENCV", 8),
    5: ("OPENCV_FISHEYE", 8),
    6: ("FULL_OPENCV", 12),
    7: ("FOV", 5),
    8: ("SIMPLE_RADIAL_FISHEYE", 4),
    9: ("RADIAL_FISHEYE", 5),
    10: ("THIN_PRISM_FISHEYE", 12),
}
MODEL_IDS = {name: mid for mid, (name, _) in CAMERA_MODELS.items()}
SUPPORTED = ("SIMPLE_PINHOLE", "PINHOLE")


@dataclass(frozen=True)
class CameraView:
    image_name: str
    intrinsics: CameraIntrinsics
    extrinsics: CameraExtrinsics

    @property
    def width(self) -> int:
        return self.intrinsics.width

    @property
    def height(self) -> int:
        return self.intrinsics.height


def _intrinsics(model: str, width: int, height: int, params, where: str) -> CameraIntrinsics:
    if model not in SUPPORTED:
        raise UnsupportedCameraModel(f"{where}: camera model {model} (supported: {', '.join(SUPPORTED)})")
    if model == "SIMPLE_PINHOLE":
        f, cx, cy = params
        fx = fy = f
    else:
        fx, fy, cx, cy = params
    try:
        return CameraIntrinsics(float(fx), float(fy), float(cx), float(cy), int(width), int(height))
    except InvalidCamera as e:
        raise MalformedRecord(f"{where}: {e}") from e


def _extrinsics(qvec, tvec, where: str) -> CameraExtrinsics:
    q = np.asarray(qvec, dtype=np.float64)
    if not np.isfinite(q).all() or np.linalg.norm(q) == 0.0:
        raise MalformedRecord(f"{where}: invalid quaternion {list(q)}")
    try:
        return CameraExtrinsics(quaternion_to_rotation(q), tvec)
    except InvalidCamera as e:
        raise MalformedRecord(f"{where}: {e}") from e


def read_cameras_text(path) -> dict:
    cameras = {}
    with open(path, encoding="utf-8") as fh:
        for line_no, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            where = f"{path}:{line_no}"
            tok = line.split()
            if len(tok) < 4:
                raise MalformedRecord(f"{where}: expected CAMERA_ID MODEL WIDTH HEIGHT PARAMS...")
            model = tok[1]
            if model not in MODEL_IDS:
                raise UnsupportedCameraModel(f"{where}: unknown camera model {model}")
            try:
                cam_id, width, height = int(tok[0]), int(tok[2]), int(tok[3])
                params = [float(v) for v in tok[4:]]
            except ValueError:
                raise MalformedRecord(f"{where}: non-numeric field") from None
            if model in SUPPORTED and len(params) != CAMERA_MODELS[MODEL_IDS[model]][1]:
                raise MalformedRecord(f"{where}: {model} expects {CAMERA_MODELS[MODEL_IDS[model]][1]} params")
            cameras[cam_id] = (model, width, height, params, where)
    return cameras


def read_images_text(path) -> list:
    images = []
    with open(path, encoding="utf-8") as fh:
        line_no = 0
        while True:
            line = fh.readline()
            line_no += 1
            if not line:
                break
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            where = f"{path}:{line_no}"
            tok = stripped.split(maxsplit=9)
            if len(tok) < 10:
                raise MalformedRecord(f"{where}: expected IMAGE_ID QW QX QY QZ TX TY TZ CAMERA_ID NAME")
            try:
                qvec = [float(v) for v in tok[1:5]]
                tvec = [float(v) for v in tok[5:8]]
                cam_id = int(tok[8])
            except ValueError:
                raise MalformedRecord(f"{where}: non-numeric pose field") from None
            images.append((tok[9], qvec, tvec, cam_id, where))
            fh.readline()  # observations
            line_no += 1
    return images


class _Reader:
    def __init__(self, path):
        self.path = path
        self.buf = Path(path).read_bytes()
        self.pos = 0

    def unpack(self, fmt: str):
        size = struct.calcsize("<" + fmt)
        if self.pos + size > len(self.buf):
            raise MalformedRecord(f"{self.path}: truncated record at byte offset {self.pos}")
        out = struct.unpack_from("<" + fmt, self.buf, self.pos)
        self.pos += size
        return out

    def cstring(self) -> str:
        end = self.buf.find(b"\x00", self.pos)
        if end < 0:
            raise MalformedRecord(f"{self.path}: unterminated name at byte offset {self.pos}")
        raw = self.buf[self.pos:end]
        self.pos = end + 1
        return raw.decode("utf-8")


def read_cameras_binary(path) -> dict:
    r = _Reader(path)
    cameras = {}
    (n,) = r.unpack("Q")
    for _ in range(n):
        where = f"{path}@{r.pos}"
        cam_id, model_id, width, height = r.unpack("iiQQ")
        if model_id not in CAMERA_MODELS:
            raise UnsupportedCameraModel(f"{where}: unknown camera model id {model_id}")
        name, n_params = CAMERA_MODELS[model_id]
        params = list(r.unpack("d" * n_params))
        cameras[cam_id] = (name, width, height, params, where)
    return cameras


def read_images_binary(path) -> list:
    r = _Reader(path)
    images = []
    (n,) = r.unpack("Q")
    for _ in range(n):
        where = f"{path}@{r.pos}"
        vals = r.unpack("idddddddi")
        name = r.cstring()
        (n_obs,) = r.unpack("Q")
        skip = 24 * n_obs
        if r.pos + skip > len(r.buf):
            raise MalformedRecord(f"{where}: observation block runs past end of file")
        r.pos += skip
        images.append((name, list(vals[1:5]), list(vals[5:8]), vals[8], where))
    return images


def _resolve(source):
    if isinstance(source, (tuple, list)):
        cams, imgs = (Path(p) for p in source)
        for p in (cams, imgs):
            if not p.is_file():
                raise MissingFile(f"{p} does not exist")
        return cams, imgs
    d = Path(source)
    if not d.is_dir():
        raise MissingFile(f"{d} is not a directory")
    for sub in (d, d / "sparse" / "0", d / "sparse"):
        for ext in (".bin", ".txt"):
            cams, imgs = sub / f"cameras{ext}", sub / f"images{ext}"
            if cams.is_file() and imgs.is_file():
                return cams, imgs
    raise MissingFile(f"no cameras/images pair (.bin or .txt) under {d}")


def load_colmap_bundle(source) -> list:
    """Views for every registered image, sorted by image name.

    ``source`` is a directory (binary preferred over text when both exist) or
    a ``(cameras_path, images_path)`` pair.
    """
    cams_path, imgs_path = _resolve(source)
    if cams_path.suffix == ".bin":
        cameras = read_cameras_binary(cams_path)
    else:
        cameras = read_cameras_text(cams_path)
    if imgs_path.suffix == ".bin":
        images = read_images_binary(imgs_path)
    else:
        images = read_images_text(imgs_path)

    views = {}
    for name, qvec, tvec, cam_id, where in images:
        if cam_id not in cameras:
            raise MalformedRecord(f"{where}: image {name!r} references unknown camera {cam_id}")
        if name in views:
            raise MalformedRecord(f"{where}: duplicate image name {name!r}")
        model, width, height, params, cam_where = cameras[cam_id]
        views[name] = CameraView(name, _intrinsics(model, width, height, params, cam_where), _extrinsics(qvec, tvec, where))
    return [views[k] for k in sorted(views)]


def find_view(views, image_name: str) -> CameraView:
    for v in views:
        if v.image_name == image_name:
            return v
    base = posixpath.basename(image_name.replace(os.sep, "/"))
    hits = [v for v in views if posixpath.basename(v.image_name.replace(os.sep, "/")) == base]
    if len(hits) == 1:
        return hits[0]
    if len(hits) > 1:
        raise AmbiguousName(f"{image_name!r} matches {', '.join(v.image_name for v in hits)}")
    available = ", ".join(v.image_name for v in views) or "<none>"
    raise ViewNotFound(f"no view named {image_name!r}; available: {available}")


def _camera_record(view: CameraView):
    k = view.intrinsics
    if k.fx == k.fy:
        return "SIMPLE_PINHOLE", [k.fx, k.cx, k.cy]
    return "PINHOLE", [k.fx, k.fy, k.cx, k.cy]


def write_colmap_text(views, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cams = io.StringIO()
    imgs = io.StringIO()
    cams.write("# Camera list with one line of data per camera:\n")
    cams.write("#   CAMERA_ID, MODEL, WIDTH, HEIGHT, PARAMS[]\n")
    imgs.write("# Image list with two lines of data per image:\n")
    imgs.write("#   IMAGE_ID, QW, QX, QY, QZ, TX, TY, TZ, CAMERA_ID, NAME\n")
    imgs.write("#   POINTS2D[] as (X, Y, POINT3D_ID)\n")
    for i, v in enumerate(views, 1):
        model, params = _camera_record(v)
        cams.write(" ".join([str(i), model, str(v.width), str(v.height)] + [repr(float(p)) for p in params]) + "\n")
        q = rotation_to_quaternion(v.extrinsics.rotation)
        t = v.extrinsics.translation
        imgs.write(" ".join([str(i)] + [repr(float(x)) for x in (*q, *t)] + [str(i), v.image_name]) + "\n\n")
    (d / "cameras.txt").write_text(cams.getvalue(), encoding="utf-8")
    (d / "images.txt").write_text(imgs.getvalue(), encoding="utf-8")


def write_colmap_binary(views, directory):
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    cams = [struct.pack("<Q", len(views))]
    imgs = [struct.pack("<Q", len(views))]
    for i, v in enumerate(views, 1):
        model, params = _camera_record(v)
        cams.append(struct.pack("<iiQQ", i, MODEL_IDS[model], v.width, v.height))
        cams.append(struct.pack("<" + "d" * len(params), *params))
        q = rotation_to_quaternion(v.extrinsics.rotation)
        imgs.append(struct.pack("<idddddddi", i, *q, *v.extrinsics.translation, i))
        imgs.append(v.image_name.encode("utf-8") + b"\x00")
        imgs.append(struct.pack("<Q", 0))
    (d / "cameras.bin").write_bytes(b"".join(cams))
    (d / "images.bin").write_bytes(b"".join(imgs))
