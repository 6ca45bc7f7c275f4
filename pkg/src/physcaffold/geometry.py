"""Geometry ingestion and binary artifact export.

Supported inputs: OBJ (v/vn/f), STL (ASCII and binary), PLY (ASCII), plus a
plain-text XYZ point list for pre-extracted food sources.  Outputs: binary
STL (bit-exact layout) and NPY v1.0 scalar fields.
"""

from __future__ import annotations

import math
import struct
import warnings
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import (EmptyGeometryError, MissingNormalsError, ParseError,
                     UnsupportedFormatError, ValidationError)
from .field import ScalarField3D


@dataclass
class TriangleMesh:
    """Indexed triangle soup in model units (mm)."""

    vertices: np.ndarray            # (V, 3) float
    triangles: np.ndarray           # (T, 3) int
    normals: np.ndarray | None = None   # (V, 3) unit vectors, optional

    def __post_init__(self):
        self.vertices = np.asarray(self.vertices, dtype=np.float64).reshape(-1, 3)
        self.triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
        if self.triangles.size and (self.triangles.min() < 0
                                    or self.triangles.max() >= len(self.vertices)):
            raise ParseError("triangle index out of range")


@dataclass
class PointCloud:
    """Food-source candidates: positions with optional normals and weights."""

    points: np.ndarray              # (N, 3)
    normals: np.ndarray | None = None
    weights: np.ndarray | None = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        n = len(self.points)
        if self.normals is not None:
            self.normals = np.asarray(self.normals, dtype=np.float64).reshape(-1, 3)
            if len(self.normals) != n:
                raise ValidationError("normals length must match points")
        if self.weights is None:
            self.weights = np.ones(n, dtype=np.float64)
        else:
            self.weights = np.asarray(self.weights, dtype=np.float64).reshape(-1)
            if len(self.weights) != n:
                raise ValidationError("weights length must match points")
            if np.any(self.weights < 0):
                raise ValidationError("weights must be >= 0")

    def __len__(self) -> int:
        return len(self.points)


# ---------------------------------------------------------------------------
# loading

def _face_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    a = vertices[triangles[:, 0]]
    b = vertices[triangles[:, 1]]
    c = vertices[triangles[:, 2]]
    return np.cross(b - a, c - a)   # length = 2 * area


def compute_vertex_normals(vertices: np.ndarray, triangles: np.ndarray) -> np.ndarray:
    """Area-weighted average of incident face normals, normalized.

    Vertices with no (or only degenerate) incident faces get (0, 0, 1).
    """
    acc = np.zeros_like(vertices, dtype=np.float64)
    fn = _face_normals(vertices, triangles)
    for k in range(3):
        np.add.at(acc, triangles[:, k], fn)
    lens = np.linalg.norm(acc, axis=1)
    bad = lens < 1e-12
    acc[bad] = (0.0, 0.0, 1.0)
    lens[bad] = 1.0
    return acc / lens[:, None]


def _count_degenerate(vertices, triangles) -> int:
    return int(np.count_nonzero(np.linalg.norm(_face_normals(vertices, triangles), axis=1) < 1e-12))


def _parse_obj(text: str) -> tuple[np.ndarray, np.ndarray, np.ndarray | None]:
    verts: list = []
    vns: list = []
    faces: list = []
    vert_vn: dict[int, int] = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        tag = parts[0]
        try:
            if tag == "v":
                verts.append([float(x) for x in parts[1:4]])
            elif tag == "vn":
                vns.append([float(x) for x in parts[1:4]])
            elif tag == "f":
                ids = []
                for tok in parts[1:]:
                    comps = tok.split("/")
                    vi = int(comps[0])
                    vi = vi - 1 if vi > 0 else len(verts) + vi
                    if len(comps) == 3 and comps[2]:
                        ni = int(comps[2])
                        vert_vn[vi] = ni - 1 if ni > 0 else len(vns) + ni
                    ids.append(vi)
                if len(ids) < 3:
                    raise ParseError(f"OBJ line {lineno}: face needs >= 3 vertices")
                for k in range(1, len(ids) - 1):  # fan-triangulate polygons
                    faces.append([ids[0], ids[k], ids[k + 1]])
        except (ValueError, IndexError) as exc:
            raise ParseError(f"OBJ line {lineno}: {raw!r}") from exc
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    normals = None
    if vns and vert_vn:
        vn = np.asarray(vns, dtype=np.float64)
        if any(not (0 <= ni < len(vn)) for ni in vert_vn.values()):
            raise ParseError("OBJ normal index out of range")
        normals = np.full((len(v), 3), np.nan)
        for vi, ni in vert_vn.items():
            if not (0 <= vi < len(v)):
                raise ParseError("OBJ vertex index out of range")
            normals[vi] = vn[ni]
        if np.isnan(normals).any():
            normals = None  # incomplete mapping; recompute instead
    return v, f, normals


def _parse_stl_ascii(text: str):
    verts: list = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if line.startswith("vertex"):
            parts = line.split()
            try:
                verts.append([float(x) for x in parts[1:4]])
            except (ValueError, IndexError) as exc:
                raise ParseError(f"STL line {lineno}: {raw!r}") from exc
    if len(verts) % 3 != 0:
        raise ParseError("ASCII STL vertex count not a multiple of 3")
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.arange(len(v), dtype=np.int64).reshape(-1, 3)
    return v, f, None


def _parse_stl_binary(blob: bytes):
    if len(blob) < 84:
        raise ParseError("binary STL shorter than 84-byte preamble")
    (count,) = struct.unpack_from("<I", blob, 80)
    if len(blob) != 84 + 50 * count:
        raise ParseError(f"binary STL size {len(blob)} != 84 + 50*{count}")
    rec = np.frombuffer(blob, dtype=np.uint8, count=50 * count, offset=84).reshape(count, 50)
    floats = rec[:, :48].copy().view("<f4").reshape(count, 12)
    v = floats[:, 3:12].astype(np.float64).reshape(-1, 3)
    f = np.arange(len(v), dtype=np.int64).reshape(-1, 3)
    return v, f, None


def _parse_ply_ascii(text: str):
    lines = text.splitlines()
    if not lines or lines[0].strip() != "ply":
        raise ParseError("missing 'ply' magic line")
    i = 1
    elements: list[tuple[str, int, list[str]]] = []
    fmt_ok = False
    while i < len(lines):
        parts = lines[i].split()
        i += 1
        if not parts or parts[0] == "comment":
            continue
        if parts[0] == "format":
            if parts[1] != "ascii":
                raise UnsupportedFormatError("only ASCII PLY is supported")
            fmt_ok = True
        elif parts[0] == "element":
            elements.append((parts[1], int(parts[2]), []))
        elif parts[0] == "property":
            if not elements:
                raise ParseError("PLY property before element")
            elements[-1][2].append(parts[-1])
        elif parts[0] == "end_header":
            break
    else:
        raise ParseError("PLY header not terminated")
    if not fmt_ok:
        raise ParseError("PLY header missing format line")

    verts: list = []
    norms: list = []
    faces: list = []
    for name, count, props in elements:
        rows = lines[i:i + count]
        if len(rows) < count:
            raise ParseError(f"PLY element {name}: expected {count} rows")
        i += count
        if name == "vertex":
            has_n = {"nx", "ny", "nz"} <= set(props)
            for row in rows:
                vals = row.split()
                try:
                    rec = {p: float(x) for p, x in zip(props, vals)}
                    verts.append([rec["x"], rec["y"], rec["z"]])
                    if has_n:
                        norms.append([rec["nx"], rec["ny"], rec["nz"]])
                except (KeyError, ValueError) as exc:
                    raise ParseError(f"PLY vertex row {row!r}") from exc
        elif name == "face":
            for row in rows:
                try:
                    vals = [int(x) for x in row.split()]
                    n, ids = vals[0], vals[1:]
                    if len(ids) != n or n < 3:
                        raise ValueError
                except ValueError as exc:
                    raise ParseError(f"PLY face row {row!r}") from exc
                for k in range(1, n - 1):
                    faces.append([ids[0], ids[k], ids[k + 1]])
    v = np.asarray(verts, dtype=np.float64).reshape(-1, 3)
    f = np.asarray(faces, dtype=np.int64).reshape(-1, 3)
    nrm = np.asarray(norms, dtype=np.float64) if norms else None
    return v, f, nrm


def _detect_format(path: Path, blob: bytes) -> str:
    ext = path.suffix.lower()
    if ext == ".obj":
        return "obj"
    if ext == ".ply":
        return "ply_ascii"
    if ext == ".stl":
        head = blob[:512].lstrip()
        if head.startswith(b"solid") and b"facet" in blob[:4096]:
            return "stl_ascii"
        return "stl_binary"
    raise UnsupportedFormatError(f"cannot determine format of {path.name}")


def load_mesh(path, fmt: str = "auto") -> TriangleMesh:
    """Load a triangle mesh; normals are computed when the file has none."""
    path = Path(path)
    blob = path.read_bytes()
    if fmt == "auto":
        fmt = _detect_format(path, blob)
    if fmt == "obj":
        v, f, n = _parse_obj(blob.decode("utf-8", errors="replace"))
    elif fmt == "stl_ascii":
        v, f, n = _parse_stl_ascii(blob.decode("utf-8", errors="replace"))
    elif fmt == "stl_binary":
        v, f, n = _parse_stl_binary(blob)
    elif fmt == "ply_ascii":
        v, f, n = _parse_ply_ascii(blob.decode("utf-8", errors="replace"))
    else:
        raise UnsupportedFormatError(f"unsupported format {fmt!r}")
    if len(f) == 0:
        raise EmptyGeometryError(f"{path.name}: no triangles")
    if f.min() < 0 or f.max() >= len(v):
        raise ParseError(f"{path.name}: face index out of range")
    ndeg = _count_degenerate(v, f)
    if ndeg:
        warnings.warn(f"{path.name}: {ndeg} degenerate (zero-area) triangles kept")
    if n is None:
        n = compute_vertex_normals(v, f)
    return TriangleMesh(v, f, n)


def load_points(path) -> PointCloud:
    """Plain-text XYZ points: 'x y z [nx ny nz]' per line, '#' comments."""
    pts: list = []
    norms: list = []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        vals = line.split()
        try:
            if len(vals) >= 6:
                norms.append([float(x) for x in vals[3:6]])
            elif norms:
                raise ParseError(f"{path}: line {lineno} missing normal columns")
            pts.append([float(x) for x in vals[0:3]])
        except ValueError as exc:
            raise ParseError(f"{path}: line {lineno}: {raw!r}") from exc
    if not pts:
        raise EmptyGeometryError(f"{path}: no points")
    normals = np.asarray(norms) if len(norms) == len(pts) else None
    return PointCloud(np.asarray(pts), normals)


# ---------------------------------------------------------------------------
# point extraction

def mesh_to_points(mesh: TriangleMesh, dedup_epsilon: float = 0.0) -> PointCloud:
    """One food-source point per distinct vertex position.

    Vertices closer than dedup_epsilon are merged by grid quantization;
    epsilon 0 keeps every vertex.  Normals carry over from the first
    occurrence in each merge cell.
    """
    if len(mesh.triangles) == 0:
        raise EmptyGeometryError("mesh has no triangles")
    v = mesh.vertices
    if dedup_epsilon <= 0.0:
        keep = np.arange(len(v))
    else:
        cells = np.round(v / dedup_epsilon).astype(np.int64)
        _, keep = np.unique(cells, axis=0, return_index=True)
        keep.sort()
    normals = mesh.normals[keep] if mesh.normals is not None else None
    return PointCloud(v[keep], normals)


def weld_vertices(mesh: TriangleMesh) -> TriangleMesh:
    """Merge vertices with bit-identical positions (no epsilon).

    STL stores a triangle soup, so topology statistics need the shared
    vertices back; coincident corners written by one exporter are bit-equal.
    """
    uniq, inverse = np.unique(mesh.vertices, axis=0, return_inverse=True)
    return TriangleMesh(uniq, inverse.reshape(-1)[mesh.triangles])


def thicken_points(cloud: PointCloud, offset: float) -> PointCloud:
    """Replace each point p with p +/- offset * normal (doubles the count)."""
    if cloud.normals is None:
        raise MissingNormalsError("thicken_points requires normals")
    if not offset > 0:
        raise ValidationError(f"thicken offset must be > 0, got {offset}")
    outward = cloud.points + offset * cloud.normals
    inward = cloud.points - offset * cloud.normals
    return PointCloud(
        np.concatenate([outward, inward]),
        np.concatenate([cloud.normals, cloud.normals]),
        np.concatenate([cloud.weights, cloud.weights]),
    )


# ---------------------------------------------------------------------------
# binary writers

def write_stl_binary(mesh: TriangleMesh, path) -> int:
    """Write a bit-exact binary STL; returns the byte count (84 + 50*T).

    Facet normals are recomputed as normalized cross products; degenerate
    triangles get (0, 0, 0).
    """
    if len(mesh.triangles) == 0:
        raise EmptyGeometryError("refusing to write an empty STL")
    tris = mesh.triangles
    fn = _face_normals(mesh.vertices, tris)
    lens = np.linalg.norm(fn, axis=1)
    nz = lens > 1e-12
    fn[nz] /= lens[nz, None]
    fn[~nz] = 0.0

    rec = np.zeros((len(tris), 50), dtype=np.uint8)
    floats = np.empty((len(tris), 12), dtype="<f4")
    floats[:, 0:3] = fn
    floats[:, 3:6] = mesh.vertices[tris[:, 0]]
    floats[:, 6:9] = mesh.vertices[tris[:, 1]]
    floats[:, 9:12] = mesh.vertices[tris[:, 2]]
    rec[:, :48] = floats.view(np.uint8).reshape(len(tris), 48)

    with open(path, "wb") as fh:
        fh.write(b"\x00" * 80)
        fh.write(struct.pack("<I", len(tris)))
        fh.write(rec.tobytes())
    return 84 + 50 * len(tris)


def write_npy(field: ScalarField3D, path) -> int:
    """Write the field as NPY v1.0, little-endian f32, C order (x slowest).

    The preamble is padded with spaces to a multiple of 64 bytes and ends in
    a newline, so any conforming reader accepts the file bit-exactly.
    """
    nx, ny, nz = field.dims
    if nx * ny * nz == 0:
        raise EmptyGeometryError("refusing to write an empty field")
    header = f"{{'descr': '<f4', 'fortran_order': False, 'shape': ({nx}, {ny}, {nz}), }}"
    preamble_len = 8 + 2 + len(header) + 1  # magic + u16 length + header + newline
    pad = (64 - preamble_len % 64) % 64
    header = header + " " * pad + "\n"
    payload = np.ascontiguousarray(field.data, dtype="<f4").tobytes(order="C")
    with open(path, "wb") as fh:
        fh.write(b"\x93NUMPY\x01\x00")
        fh.write(struct.pack("<H", len(header)))
        fh.write(header.encode("ascii"))
        fh.write(payload)
    return 8 + 2 + len(header) + len(payload)


def read_npy(path, voxel_size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> ScalarField3D:
    """Load a 3D NPY file back into a ScalarField3D."""
    arr = np.load(path)
    if arr.ndim != 3:
        raise ParseError(f"{path}: expected a 3D array, got shape {arr.shape}")
    return ScalarField3D(arr.astype(np.float32), voxel_size, np.asarray(origin, float))
