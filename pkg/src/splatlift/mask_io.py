"""Binary masks: loading, saving, nearest-neighbor resampling, polygon fill."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np
from PIL import Image

from .errors import DegeneratePolygon, IoFailure

log = logging.getLogger(__name__)

THRESHOLD = 127


@dataclass(frozen=True, eq=False)
class Mask2D:
    """Row-major boolean grid, ``bits[y, x]``."""

    bits: np.ndarray
    resampled_from: tuple | None = None  # original (width, height) when rescaled on load

    def __post_init__(self):
        bits = np.ascontiguousarray(self.bits, dtype=bool)
        if bits.ndim != 2 or bits.shape[0] < 1 or bits.shape[1] < 1:
            raise ValueError(f"mask must be a non-empty 2D grid, got shape {bits.shape}")
        bits.setflags(write=False)
        object.__setattr__(self, "bits", bits)

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask2D":
        return cls(np.zeros((height, width), dtype=bool))

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def size(self) -> tuple:
        return self.width, self.height

    @property
    def count(self) -> int:
        return int(self.bits.sum())

    @property
    def bounding_box(self):
        """Inclusive ``(x0, y0, x1, y1)`` of set bits, or None when empty."""
        bb = self.__dict__.get("_bbox", False)
        if bb is False:
            cols = np.flatnonzero(self.bits.any(axis=0))
            rows = np.flatnonzero(self.bits.any(axis=1))
            bb = None if cols.size == 0 else (int(cols[0]), int(rows[0]), int(cols[-1]), int(rows[-1]))
            object.__setattr__(self, "_bbox", bb)
        return bb

    def is_empty(self) -> bool:
        return self.bounding_box is None

    def __eq__(self, other):
        if not isinstance(other, Mask2D):
            return NotImplemented
        return self.bits.shape == other.bits.shape and bool(np.array_equal(self.bits, other.bits))

    __hash__ = None

    def __or__(self, other: "Mask2D") -> "Mask2D":
        return Mask2D(self.bits | other.bits)

    def __and__(self, other: "Mask2D") -> "Mask2D":
        return Mask2D(self.bits & other.bits)

    def resized(self, width: int, height: int) -> "Mask2D":
        return Mask2D(resize_nearest(self.bits, width, height), resampled_from=self.size)


def resize_nearest(bits: np.ndarray, width: int, height: int) -> np.ndarray:
    """Nearest-neighbor resample sampling the source at destination pixel centers."""
    sh, sw = bits.shape
    xs = np.minimum(((np.arange(width) + 0.5) * sw / width).astype(np.int64), sw - 1)
    ys = np.minimum(((np.arange(height) + 0.5) * sh / height).astype(np.int64), sh - 1)
    return bits[np.ix_(ys, xs)]


def _luminance(img: Image.Image) -> np.ndarray:
    if img.mode in ("I;16", "I;16B", "I;16L", "I"):
        arr = np.asarray(img, dtype=np.float64)
        return arr / 257.0 if arr.max(initial=0) > 255 else arr
    if img.mode == "1":
        return np.asarray(img.convert("L"), dtype=np.float64)
    if img.mode != "L":
        img = img.convert("RGB").convert("L")
    return np.asarray(img, dtype=np.float64)


def load_mask(path, expected_size=None) -> Mask2D:
    """Binarize an image (luminance > 127). ``expected_size`` is ``(width, height)``."""
    try:
        with Image.open(path) as img:
            img.load()
            lum = _luminance(img)
    except OSError as e:
        raise IoFailure(f"{path}: {e}") from e
    mask = Mask2D(lum > THRESHOLD)
    if expected_size is not None and tuple(expected_size) != mask.size:
        log.warning("mask %s is %dx%d, rescaling to %dx%d (nearest)", path, *mask.size, *expected_size)
        mask = mask.resized(*expected_size)
    return mask


def save_mask(mask: Mask2D, path):
    try:
        Image.fromarray(mask.bits.astype(np.uint8) * 255, mode="L").save(path)
    except OSError as e:
        raise IoFailure(f"{path}: {e}") from e


def polygon_area(polygon) -> float:
    p = np.asarray(polygon, dtype=np.float64)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(np.roll(x, -1), y))


def rasterize_polygon(polygon, width: int, height: int) -> Mask2D:
    """Set pixels whose centers lie inside the polygon (even-odd), boundary included."""
    p = np.asarray(polygon, dtype=np.float64).reshape(-1, 2)
    if len(p) < 3:
        raise DegeneratePolygon(f"polygon needs >= 3 vertices, got {len(p)}")
    if abs(polygon_area(p)) <= 1e-12:
        raise DegeneratePolygon("polygon has zero area")
    a = p
    b = np.roll(p, -1, axis=0)
    # canonical orientation per edge so vertex order cannot change the arithmetic
    swap = (a[:, 1] > b[:, 1]) | ((a[:, 1] == b[:, 1]) & (a[:, 0] > b[:, 0]))
    lo = np.where(swap[:, None], b, a)
    hi = np.where(swap[:, None], a, b)

    bits = np.zeros((height, width), dtype=bool)
    cx = np.arange(width) + 0.5
    sloped = lo[:, 1] != hi[:, 1]
    slo, shi = lo[sloped], hi[sloped]
    inv_slope = (shi[:, 0] - slo[:, 0]) / (shi[:, 1] - slo[:, 1])
    y_min = max(int(np.floor(p[:, 1].min())), 0)
    y_max = min(int(np.ceil(p[:, 1].max())), height - 1)
    for row in range(y_min, y_max + 1):
        y = row + 0.5
        active = (slo[:, 1] <= y) & (y < shi[:, 1])
        if not active.any():
            continue
        xs = np.sort(slo[active, 0] + (y - slo[active, 1]) * inv_slope[active])
        crossings = np.searchsorted(xs, cx, side="right")
        bits[row] = crossings % 2 == 1

    _mark_boundary(bits, lo, hi)
    return Mask2D(bits)


def _mark_boundary(bits, lo, hi, tol: float = 1e-9):
    height, width = bits.shape
    for (x0, y0), (x1, y1) in zip(lo, hi):
        if y0 == y1:
            row = y0 - 0.5
            r = int(round(row))
            if abs(row - r) <= tol and 0 <= r < height:
                c0 = max(int(np.ceil(x0 - 0.5 - tol)), 0)
                c1 = min(int(np.floor(x1 - 0.5 + tol)), width - 1)
                if c0 <= c1:
                    bits[r, c0:c1 + 1] = True
            continue
        r0 = max(int(np.ceil(y0 - 0.5 - tol)), 0)
        r1 = min(int(np.floor(y1 - 0.5 + tol)), height - 1)
        if r0 > r1:
            continue
        rows = np.arange(r0, r1 + 1)
        xs = x0 + (rows + 0.5 - y0) * (x1 - x0) / (y1 - y0)
        cols = np.round(xs - 0.5).astype(np.int64)
        hit = (np.abs(cols + 0.5 - xs) <= tol) & (cols >= 0) & (cols < width)
        bits[rows[hit], cols[hit]] = True
