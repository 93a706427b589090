"""Compiled inner loops. All inputs are pre-sorted front to back by the caller.

Per-splat arrays: pixel center (px, py), conic (ia, ib, ic) = inverse 2D
covariance, alpha, footprint radius in pixels.
"""

import math

import numpy as np
from numba import njit


@njit(cache=True, nogil=True, inline="always")
def _span(center, radius, lo, hi):
    # pixel indices whose centers fall within center +/- radius, clipped to [lo, hi)
    a = max(int(math.ceil(center - radius - 0.5)), lo)
    b = min(int(math.floor(center + radius - 0.5)), hi - 1)
    return a, b


@njit(cache=True, nogil=True)
def zbuffer_pass(px, py, ia, ib, ic, alpha, radius, ox, oy, cells):
    """Sequential occlusion pass; returns (accepted flags, opacity sum, count)."""
    n = px.shape[0]
    h, w = cells.shape
    accepted = np.zeros(n, dtype=np.bool_)
    opacity_sum = 0.0
    count = 0
    for i in range(n):
        if count > 0:
            cx = int(math.floor(px[i])) - ox
            cy = int(math.floor(py[i])) - oy
            if not cells[cy, cx] < opacity_sum / count:
                continue
        accepted[i] = True
        opacity_sum += alpha[i]
        count += 1
        x0, x1 = _span(px[i], radius[i], ox, ox + w)
        y0, y1 = _span(py[i], radius[i], oy, oy + h)
        a = ia[i]
        b = ib[i]
        c = ic[i]
        for y in range(y0, y1 + 1):
            dy = y + 0.5 - py[i]
            for x in range(x0, x1 + 1):
                dx = x + 0.5 - px[i]
                d2 = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                cells[y - oy, x - ox] += alpha[i] * math.exp(-0.5 * d2)
    return accepted, opacity_sum, count


@njit(cache=True, nogil=True)
def composite_band(px, py, ia, ib, ic, alpha, radius, colors, row0, rgb, acc, saturation):
    """Front-to-back compositing into rows ``row0 .. row0 + rgb.shape[0]``."""
    n = px.shape[0]
    h = rgb.shape[0]
    w = rgb.shape[1]
    for i in range(n):
        y0, y1 = _span(py[i], radius[i], row0, row0 + h)
        if y0 > y1:
            continue
        x0, x1 = _span(px[i], radius[i], 0, w)
        a = ia[i]
        b = ib[i]
        c = ic[i]
        for y in range(y0, y1 + 1):
            dy = y + 0.5 - py[i]
            r = y - row0
            for x in range(x0, x1 + 1):
                prev = acc[r, x]
                if prev >= saturation:
                    continue
                dx = x + 0.5 - px[i]
                d2 = a * dx * dx + 2.0 * b * dx * dy + c * dy * dy
                wgt = alpha[i] * math.exp(-0.5 * d2)
                t = (1.0 - prev) * wgt
                rgb[r, x, 0] += t * colors[i, 0]
                rgb[r, x, 1] += t * colors[i, 1]
                rgb[r, x, 2] += t * colors[i, 2]
                acc[r, x] = prev + t


@njit(cache=True, nogil=True)
def footprint_union(px, py, ia, ib, ic, radius, limit_sq, row0, bits):
    """Set bits whose pixel centers satisfy D^2 <= limit_sq for any splat."""
    n = px.shape[0]
    h = bits.shape[0]
    w = bits.shape[1]
    for i in range(n):
        y0, y1 = _span(py[i], radius[i], row0, row0 + h)
        x0, x1 = _span(px[i], radius[i], 0, w)
        a = ia[i]
        b = ib[i]
        c = ic[i]
        for y in range(y0, y1 + 1):
            dy = y + 0.5 - py[i]
            for x in range(x0, x1 + 1):
                dx = x + 0.5 - px[i]
                if a * dx * dx + 2.0 * b * dx * dy + c * dy * dy <= limit_sq:
                    bits[y - row0, x] = True
