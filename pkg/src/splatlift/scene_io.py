"""Splat PLY reading and writing.

Vertices are kept as the raw record array read from the file, so every
property (higher-order SH coefficients, normals, anything unknown) survives
a load/write cycle bit for bit. Activations are applied on access.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass

import numpy as np

from .errors import IoFailure, InvalidSplat, MalformedHeader, TruncatedBody, UnsupportedEncoding
from .geometry import GaussianSplat, rgb_to_sh, sh_to_rgb, sigmoid

PLY_TYPES = {
    "char": "i1", "int8": "i1",
    "uchar": "u1", "uint8": "u1",
    "short": "i2", "int16": "i2",
    "ushort": "u2", "uint16": "u2",
    "int": "i4", "int32": "i4",
    "uint": "u4", "uint32": "u4",
    "float": "f4", "float32": "f4",
    "double": "f8", "float64": "f8",
}

POSITION = ("x", "y", "z")
SCALE = ("scale_0", "scale_1", "scale_2")
ROTATION = ("rot_0", "rot_1", "rot_2", "rot_3")
F_DC = ("f_dc_0", "f_dc_1", "f_dc_2")
REQUIRED = POSITION + F_DC + ("opacity",) + SCALE + ROTATION

_F_REST = re.compile(r"f_rest_(\d+)$")


@dataclass(frozen=True)
class _Element:
    name: str
    count: int
    properties: tuple  # ((name, type_token), ...)

    def dtype(self, endian: str = "<") -> np.dtype:
        return np.dtype([(n, endian + PLY_TYPES[t]) for n, t in self.properties])


class SplatScene:
    """Ordered Gaussian set backed by a structured vertex array.

    ``layout`` is the ``(property, ply_type)`` sequence of the source file.
    """

    def __init__(self, records: np.ndarray, layout=None):
        if layout is None:
            layout = tuple((n, _type_token(records.dtype[n])) for n in records.dtype.names)
        self.layout = tuple((str(n), str(t)) for n, t in layout)
        missing = [n for n in REQUIRED if n not in records.dtype.names]
        if missing:
            raise MalformedHeader(f"missing required vertex properties: {', '.join(missing)}")
        self.records = records
        self._validate()

    def _validate(self):
        if len(self) == 0:
            return
        qn = np.linalg.norm(self.raw_quaternions, axis=1)
        bad = np.flatnonzero(~np.isfinite(qn) | (qn == 0.0))
        if bad.size:
            raise InvalidSplat(f"vertex {bad[0]}: rotation quaternion has zero or non-finite norm")
        bad = np.flatnonzero(~np.all(np.isfinite(self.log_scales), axis=1))
        if bad.size:
            raise InvalidSplat(f"vertex {bad[0]}: non-finite log scale")

    @classmethod
    def from_arrays(
        cls,
        positions,
        log_scales,
        quaternions,
        opacity_logits,
        colors=None,
        f_dc=None,
        f_rest=None,
        with_normals: bool = False,
    ) -> "SplatScene":
        """Build a scene in the conventional trainer layout (float32 everywhere)."""
        positions = np.asarray(positions, dtype=np.float64).reshape(-1, 3)
        n = len(positions)
        if f_dc is None:
            f_dc = rgb_to_sh(np.full((n, 3), 0.5) if colors is None else colors)
        names = list(POSITION)
        if with_normals:
            names += ["nx", "ny", "nz"]
        names += list(F_DC)
        n_rest = 0 if f_rest is None else np.asarray(f_rest).shape[1]
        names += [f"f_rest_{i}" for i in range(n_rest)]
        names += ["opacity", *SCALE, *ROTATION]
        layout = tuple((name, "float") for name in names)
        records = np.zeros(n, dtype=_Element("vertex", n, layout).dtype())
        for i, name in enumerate(POSITION):
            records[name] = positions[:, i]
        for i, name in enumerate(F_DC):
            records[name] = np.asarray(f_dc).reshape(-1, 3)[:, i]
        for i in range(n_rest):
            records[f"f_rest_{i}"] = np.asarray(f_rest)[:, i]
        records["opacity"] = np.asarray(opacity_logits).reshape(-1)
        for i, name in enumerate(SCALE):
            records[name] = np.asarray(log_scales).reshape(-1, 3)[:, i]
        for i, name in enumerate(ROTATION):
            records[name] = np.asarray(quaternions).reshape(-1, 4)[:, i]
        return cls(records, layout)

    def __len__(self):
        return len(self.records)

    def __getitem__(self, i) -> GaussianSplat:
        r = self.records[i]
        return GaussianSplat(
            position=[r[n] for n in POSITION],
            log_scale=[r[n] for n in SCALE],
            rotation_q=[r[n] for n in ROTATION],
            opacity_logit=r["opacity"],
            color=sh_to_rgb([r[n] for n in F_DC]),
        )

    def _stack(self, names) -> np.ndarray:
        return np.stack([self.records[n].astype(np.float64) for n in names], axis=-1).reshape(-1, len(names))

    @property
    def positions(self) -> np.ndarray:
        return self._stack(POSITION)

    @property
    def log_scales(self) -> np.ndarray:
        return self._stack(SCALE)

    @property
    def raw_quaternions(self) -> np.ndarray:
        return self._stack(ROTATION)

    @property
    def quaternions(self) -> np.ndarray:
        q = self.raw_quaternions
        return q / np.linalg.norm(q, axis=1, keepdims=True)

    @property
    def opacity_logits(self) -> np.ndarray:
        return self.records["opacity"].astype(np.float64)

    @property
    def alphas(self) -> np.ndarray:
        return sigmoid(self.opacity_logits)

    @property
    def f_dc(self) -> np.ndarray:
        return self._stack(F_DC)

    @property
    def colors(self) -> np.ndarray:
        """Base RGB from the zeroth SH band, clipped to [0, 1]."""
        return np.clip(sh_to_rgb(self.f_dc), 0.0, 1.0)

    @property
    def extra_sh_coeffs(self) -> np.ndarray:
        """Higher-order SH fields as an opaque record view (possibly zero-width)."""
        names = sorted(
            (n for n in self.records.dtype.names if _F_REST.match(n)),
            key=lambda n: int(_F_REST.match(n).group(1)),
        )
        return self.records[names] if names else np.zeros(len(self), dtype=[])

    def subset(self, indices) -> "SplatScene":
        return SplatScene(self.records[np.asarray(indices, dtype=np.int64)], self.layout)

    def recolored(self, indices, rgb) -> "SplatScene":
        records = self.records.copy()
        sh = rgb_to_sh(rgb)
        idx = np.asarray(indices, dtype=np.int64)
        for i, name in enumerate(F_DC):
            records[name][idx] = sh[i]
        return SplatScene(records, self.layout)

    def bounds(self) -> tuple:
        if len(self) == 0:
            return None
        p = self.positions
        return p.min(axis=0), p.max(axis=0)

    def __eq__(self, other):
        if not isinstance(other, SplatScene):
            return NotImplemented
        return self.layout == other.layout and self.records.tobytes() == other.records.tobytes()

    __hash__ = None

    def __repr__(self):
        return f"SplatScene({len(self)} splats, {len(self.layout)} properties)"


def _type_token(dt: np.dtype) -> str:
    lookup = {"i1": "char", "u1": "uchar", "i2": "short", "u2": "ushort", "i4": "int",
              "u4": "uint", "f4": "float", "f8": "double"}
    return lookup[np.dtype(dt).newbyteorder("<").str[1:]]


def _parse_header(fh):
    first = fh.readline()
    if first.rstrip(b"\r\n") != b"ply":
        raise MalformedHeader("not a PLY file (missing 'ply' magic)")
    fmt = None
    elements = []
    current = None
    line_no = 1
    while True:
        raw = fh.readline()
        line_no += 1
        if not raw:
            raise MalformedHeader("unexpected end of file before end_header")
        try:
            tokens = raw.decode("ascii").split()
        except UnicodeDecodeError:
            raise MalformedHeader(f"header line {line_no} is not ASCII") from None
        if not tokens or tokens[0] in ("comment", "obj_info"):
            continue
        key = tokens[0]
        if key == "end_header":
            break
        if key == "format":
            if len(tokens) != 3:
                raise MalformedHeader(f"line {line_no}: bad format line")
            fmt = tokens[1]
        elif key == "element":
            if len(tokens) != 3:
                raise MalformedHeader(f"line {line_no}: bad element line")
            try:
                count = int(tokens[2])
            except ValueError:
                raise MalformedHeader(f"line {line_no}: bad element count {tokens[2]!r}") from None
            current = [tokens[1], count, []]
            elements.append(current)
        elif key == "property":
            if current is None:
                raise MalformedHeader(f"line {line_no}: property before any element")
            if tokens[1] == "list":
                if current[0] == "vertex":
                    raise MalformedHeader(f"line {line_no}: list properties on vertex are unsupported")
                current[2].append((tokens[-1], "list"))
                continue
            if len(tokens) != 3 or tokens[1] not in PLY_TYPES:
                raise MalformedHeader(f"line {line_no}: bad property line {raw.decode().strip()!r}")
            current[2].append((tokens[2], tokens[1]))
        else:
            raise MalformedHeader(f"line {line_no}: unknown header keyword {key!r}")
    if fmt is None:
        raise MalformedHeader("missing format line")
    if fmt not in ("ascii", "binary_little_endian"):
        raise UnsupportedEncoding(f"PLY encoding {fmt!r} (only ascii and binary_little_endian)")
    return fmt, [_Element(n, c, tuple(p)) for n, c, p in elements]


def load_splat_ply(path) -> SplatScene:
    try:
        fh = open(path, "rb")
    except OSError as e:
        raise IoFailure(f"{path}: {e.strerror}") from e
    with fh:
        fmt, elements = _parse_header(fh)
        vertex = next((e for e in elements if e.name == "vertex"), None)
        if vertex is None:
            raise MalformedHeader("no 'vertex' element")
        names = [n for n, _ in vertex.properties]
        missing = [n for n in REQUIRED if n not in names]
        if missing:
            raise MalformedHeader(f"missing required vertex properties: {', '.join(missing)}")
        if fmt == "binary_little_endian":
            records = _read_binary(fh, elements, vertex)
        else:
            records = _read_ascii(fh, elements, vertex)
    return SplatScene(records, vertex.properties)


def _read_binary(fh, elements, vertex):
    for e in elements:
        if e is vertex:
            break
        if any(t == "list" for _, t in e.properties):
            raise MalformedHeader(f"cannot skip list-valued element {e.name!r} before vertex data")
        fh.seek(e.count * e.dtype().itemsize, os.SEEK_CUR)
    dt = vertex.dtype("<")
    want = vertex.count * dt.itemsize
    buf = fh.read(want)
    if len(buf) < want:
        raise TruncatedBody(
            f"header declares {vertex.count} vertices ({want} bytes), body has {len(buf)} bytes"
        )
    return np.frombuffer(buf, dtype=dt).copy()


def _read_ascii(fh, elements, vertex):
    for e in elements:
        if e is vertex:
            break
        for _ in range(e.count):
            if not fh.readline():
                raise TruncatedBody(f"element {e.name!r} ended early")
    rows = []
    for i in range(vertex.count):
        line = fh.readline()
        if not line:
            raise TruncatedBody(f"header declares {vertex.count} vertices, body has {i}")
        tokens = line.split()
        if len(tokens) != len(vertex.properties):
            raise TruncatedBody(
                f"vertex {i}: expected {len(vertex.properties)} values, found {len(tokens)}"
            )
        rows.append(tuple(tokens))
    dt = vertex.dtype("<")
    records = np.zeros(vertex.count, dtype=dt)
    if rows:
        cols = list(zip(*rows))
        for (name, _), col in zip(vertex.properties, cols):
            records[name] = np.array([float(v) for v in col]).astype(dt[name])
    return records


def _header(n: int, layout, fmt: str) -> bytes:
    lines = ["ply", f"format {fmt} 1.0", f"element vertex {n}"]
    lines += [f"property {t} {name}" for name, t in layout]
    lines.append("end_header")
    return ("\n".join(lines) + "\n").encode("ascii")


def write_splat_ply(scene: SplatScene, path, selection=None, highlight_color=None, binary: bool = True):
    """Write ``scene``.

    With ``selection`` alone only those splats are written. With
    ``highlight_color`` every splat is written and the selected ones get their
    zeroth SH band replaced by that color.
    """
    if selection is not None:
        selection = np.asarray(selection, dtype=np.int64).reshape(-1)
        if selection.size and (selection.min() < 0 or selection.max() >= len(scene)):
            raise IndexError(f"selection index out of range for scene of {len(scene)} splats")
    if highlight_color is not None:
        out = scene.recolored(selection if selection is not None else np.arange(len(scene)), highlight_color)
    elif selection is not None:
        out = scene.subset(selection)
    else:
        out = scene
    try:
        with open(path, "wb") as fh:
            if binary:
                fh.write(_header(len(out), out.layout, "binary_little_endian"))
                fh.write(out.records.astype(out.records.dtype.newbyteorder("<"), copy=False).tobytes())
            else:
                fh.write(_header(len(out), out.layout, "ascii"))
                for row in out.records:
                    fh.write((" ".join(_fmt_value(v) for v in row.tolist()) + "\n").encode("ascii"))
    except OSError as e:
        raise IoFailure(f"{path}: {e.strerror}") from e


def _fmt_value(v) -> str:
    if isinstance(v, float):
        return repr(v)
    return str(v)
