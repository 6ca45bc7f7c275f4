"""Watertight isosurface extraction via Marching Cubes.

The 256-entry case table is generated at import time instead of copied from
a reference listing: cube-surface intersection segments are derived per face
with a fixed rule for the ambiguous diagonal case (inside corners are always
separated), stitched into closed loops and star-triangulated.  Because the
per-face rule depends only on the face's corner occupancy, two cubes sharing
a face always emit matching segments, so meshes cannot crack.  Watertightness
at the domain boundary comes from conceptually padding the field with
values just below the iso level.

Cube corner c occupies offset (c & 1, c >> 1 & 1, c >> 2 & 1); the 12 edges
are axis-grouped: ids 0-3 along x, 4-7 along y, 8-11 along z.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ValidationError
from .field import GridTransform, ScalarField3D
from .geometry import TriangleMesh

# ---------------------------------------------------------------------------
# cube topology

CORNER_OFFSETS = np.array([(c & 1, (c >> 1) & 1, (c >> 2) & 1) for c in range(8)])

# Edge e = (axis, origin corner); endpoints are origin and origin | 1 << axis.
EDGE_DEFS: list[tuple[int, int]] = (
    [(0, o) for o in (0, 2, 4, 6)]
    + [(1, o) for o in (0, 1, 4, 5)]
    + [(2, o) for o in (0, 1, 2, 3)]
)
EDGE_ENDPOINTS = [(o, o | (1 << axis)) for axis, o in EDGE_DEFS]
_EDGE_BY_CORNERS = {frozenset(ep): e for e, ep in enumerate(EDGE_ENDPOINTS)}

# Face f = (axis, side); corners listed in cyclic order around the face.
FACE_DEFS: list[tuple[int, int]] = [(a, s) for a in range(3) for s in range(2)]


def _face_corners(axis: int, side: int) -> list[int]:
    u, v = [a for a in range(3) if a != axis]
    cyc = [(0, 0), (1, 0), (1, 1), (0, 1)]
    return [(side << axis) | (uu << u) | (vv << v) for uu, vv in cyc]


def _face_edges(axis: int, side: int) -> list[int]:
    cs = _face_corners(axis, side)
    return [_EDGE_BY_CORNERS[frozenset((cs[i], cs[(i + 1) % 4]))] for i in range(4)]


def _edge_midpoint(e: int) -> np.ndarray:
    a, b = EDGE_ENDPOINTS[e]
    return (CORNER_OFFSETS[a] + CORNER_OFFSETS[b]) / 2.0


def _trilinear_pm1(mask: int, p: np.ndarray) -> float:
    """Trilinear interpolation of corner values +1 (inside) / -1 (outside)."""
    total = 0.0
    for c in range(8):
        off = CORNER_OFFSETS[c]
        w = 1.0
        for a in range(3):
            w *= p[a] if off[a] else 1.0 - p[a]
        total += w * (1.0 if (mask >> c) & 1 else -1.0)
    return total


def _face_segments(mask: int, axis: int, side: int) -> list[tuple[int, int]]:
    """Directed intersection segments on one face, inside region to the left
    as seen along the outward face normal."""
    corners = _face_corners(axis, side)
    inside = [c for c in corners if (mask >> c) & 1]
    k = len(inside)
    pairs: list[tuple[int, int]] = []
    if k in (1, 3):
        q = inside[0] if k == 1 else next(c for c in corners if not (mask >> c) & 1)
        i = corners.index(q)
        e_prev = _EDGE_BY_CORNERS[frozenset((corners[i - 1], q))]
        e_next = _EDGE_BY_CORNERS[frozenset((q, corners[(i + 1) % 4]))]
        pairs.append((e_prev, e_next))
    elif k == 2:
        i0, i1 = sorted(corners.index(c) for c in inside)
        if (i1 - i0) % 2 == 1:  # adjacent pair: one segment across the strip
            crossed = [_face_edges(axis, side)[i] for i in range(4)
                       if ((mask >> corners[i]) & 1) != ((mask >> corners[(i + 1) % 4]) & 1)]
            pairs.append((crossed[0], crossed[1]))
        else:  # diagonal (ambiguous): always cut off each inside corner
            for q in inside:
                i = corners.index(q)
                e_prev = _EDGE_BY_CORNERS[frozenset((corners[i - 1], q))]
                e_next = _EDGE_BY_CORNERS[frozenset((q, corners[(i + 1) % 4]))]
                pairs.append((e_prev, e_next))

    normal = np.zeros(3)
    normal[axis] = 1.0 if side else -1.0
    oriented = []
    for e1, e2 in pairs:
        m1 = _edge_midpoint(e1)
        m2 = _edge_midpoint(e2)
        mid = (m1 + m2) / 2.0
        left = np.cross(normal, m2 - m1)
        delta = 0.25 * left / max(np.linalg.norm(left), 1e-12)
        if _trilinear_pm1(mask, mid + delta) < _trilinear_pm1(mask, mid - delta):
            e1, e2 = e2, e1
        oriented.append((e1, e2))
    return oriented


def _loops_for_mask(mask: int) -> list[list[int]]:
    succ: dict[int, int] = {}
    for axis, side in FACE_DEFS:
        for e1, e2 in _face_segments(mask, axis, side):
            assert e1 not in succ, f"mask {mask}: edge {e1} has two successors"
            succ[e1] = e2
    loops: list[list[int]] = []
    seen: set[int] = set()
    for start in sorted(succ):
        if start in seen:
            continue
        loop = [start]
        seen.add(start)
        cur = succ[start]
        while cur != start:
            loop.append(cur)
            seen.add(cur)
            cur = succ[cur]
        assert len(loop) >= 3
        loops.append(loop)
    return loops


# Symbolic vertex id of the first per-loop centroid; edge ids occupy 0..11.
CENTROID_BASE = 100


def _star_triangles(loops: list[list[int]]) -> list[tuple[int, int, int]]:
    """Triangulate loops; loops longer than 3 get a per-loop centroid apex.

    A fan diagonal between two non-adjacent loop vertices can lie on a cube
    face and coincide with the neighboring cube's diagonal, producing a
    4-triangle edge.  Centroid vertices are private to one (cell, loop), so
    star edges can never collide across cells.
    """
    tris: list[tuple[int, int, int]] = []
    for li, loop in enumerate(loops):
        if len(loop) == 3:
            tris.append((loop[0], loop[2], loop[1]))
        else:
            apex = CENTROID_BASE + li
            for i in range(len(loop)):
                tris.append((apex, loop[(i + 1) % len(loop)], loop[i]))
    return tris


@dataclass
class CaseTable:
    """256 corner-occupancy configurations -> boundary loops over edge ids.

    `triangles` is the star triangulation of `loops`; ids >= CENTROID_BASE
    denote the synthetic per-loop centroid vertices.
    """

    loops: list[list[list[int]]]
    triangles: list[list[tuple[int, int, int]]]

    def __getitem__(self, mask: int) -> list[tuple[int, int, int]]:
        return self.triangles[mask]


def build_case_table() -> CaseTable:
    loops = [_loops_for_mask(m) for m in range(256)]
    return CaseTable(loops, [_star_triangles(ls) for ls in loops])


CASE_TABLE = build_case_table()


# ---------------------------------------------------------------------------
# table validation

@dataclass
class CaseTableReport:
    face_mismatches: list = dc_field(default_factory=list)
    orientation_errors: list = dc_field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.face_mismatches and not self.orientation_errors


def _mirror_mask(mask: int, axis: int) -> int:
    out = 0
    for c in range(8):
        if (mask >> c) & 1:
            out |= 1 << (c ^ (1 << axis))
    return out


def validate_case_table(table: CaseTable = CASE_TABLE) -> CaseTableReport:
    """Exhaustive 256 x 6 face-consistency and orientation sweep."""
    report = CaseTableReport()
    for mask in range(256):
        tris = table[mask]
        used_edges = {e for tri in tris for e in tri}
        for axis, side in FACE_DEFS:
            fedges = _face_edges(axis, side)
            corners = _face_corners(axis, side)
            sign_crossed = {
                fedges[i] for i in range(4)
                if ((mask >> corners[i]) & 1) != ((mask >> corners[(i + 1) % 4]) & 1)
            }
            # The neighbor across this face sees the mirrored configuration on
            # its opposite face; mapped back through the reflection, its
            # crossing set must equal ours.
            nmask = _mirror_mask(mask, axis)
            ncorners = _face_corners(axis, 1 - side)
            ncross = {
                _EDGE_BY_CORNERS[frozenset((ncorners[i] ^ (1 << axis),
                                            ncorners[(i + 1) % 4] ^ (1 << axis)))]
                for i in range(4)
                if ((nmask >> ncorners[i]) & 1) != ((nmask >> ncorners[(i + 1) % 4]) & 1)
            }
            assert ncross == sign_crossed
            if used_edges & set(fedges) != sign_crossed:
                report.face_mismatches.append((mask, (axis, side)))
        directed: dict[tuple[int, int], int] = {}
        for tri in tris:
            if len(set(tri)) < 3:
                report.orientation_errors.append((mask, "degenerate triangle"))
            for i in range(3):
                de = (tri[i], tri[(i + 1) % 3])
                directed[de] = directed.get(de, 0) + 1
        for (a, b), cnt in directed.items():
            if cnt > 1:
                report.orientation_errors.append((mask, f"repeated directed edge {(a, b)}"))
            rev = directed.get((b, a), 0)
            if cnt + rev > 2:
                report.orientation_errors.append((mask, f"edge {(a, b)} overused"))
    return report


# ---------------------------------------------------------------------------
# extraction

@dataclass
class IsoSurfaceMesh:
    vertices: np.ndarray           # (V, 3) model space
    triangles: np.ndarray          # (T, 3)
    empty: bool = False

    def as_triangle_mesh(self) -> TriangleMesh:
        return TriangleMesh(self.vertices, self.triangles)


def marching_cubes(field: ScalarField3D, iso: float,
                   transform: GridTransform | None = None) -> IsoSurfaceMesh:
    """Extract the iso-level surface as a closed, consistently wound mesh.

    The field is padded with one layer of (iso - delta) so surfaces close at
    the domain boundary; grid values exactly equal to iso are nudged to
    iso + delta so edge interpolation never divides by zero.
    """
    if not iso > 0:
        raise ValidationError("iso must be > 0")
    if transform is None:
        transform = GridTransform(field.voxel_size, field.origin)
    data = field.data.astype(np.float64)
    if not np.any(data >= iso):
        return IsoSurfaceMesh(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64), empty=True)

    delta = max(1e-6, 1e-6 * iso)
    data[data == iso] = iso + delta
    padded = np.pad(data, 1, constant_values=iso - delta)
    inside = padded > iso
    px, py, pz = padded.shape
    ncell = (px - 1, py - 1, pz - 1)

    mask = np.zeros(ncell, dtype=np.uint8)
    for c in range(8):
        bx, by, bz = CORNER_OFFSETS[c]
        mask |= inside[bx:bx + ncell[0], by:by + ncell[1], bz:bz + ncell[2]].astype(np.uint8) << c

    active = (mask != 0) & (mask != 255)
    ci, cj, ck = np.nonzero(active)
    am = mask[ci, cj, ck]

    # Vertex keys: edge crossings get axis * nvox + flat padded voxel index of
    # the edge origin; loop centroids get ids past 3 * nvox, unique per
    # (cell, loop) so they can never merge with anything.
    nvox = px * py * pz
    max_loops = 4
    key_chunks = []
    cen_chunks = []  # (centroid keys (n,), loop edge-key matrix (n, L))
    for mv in np.unique(am):
        loops = CASE_TABLE.loops[int(mv)]
        if not loops:
            continue
        sel = am == mv
        si, sj, sk = ci[sel], cj[sel], ck[sel]
        cell_flat = (si * py + sj) * pz + sk

        def edge_keys(e):
            axis, origin = EDGE_DEFS[e]
            ox, oy, oz = CORNER_OFFSETS[origin]
            return axis * nvox + ((si + ox) * py + (sj + oy)) * pz + (sk + oz)

        for li, loop in enumerate(loops):
            lk = np.stack([edge_keys(e) for e in loop], axis=1)
            if len(loop) == 3:
                key_chunks.append(lk[:, [0, 2, 1]])
            else:
                ckeys = 3 * nvox + cell_flat * max_loops + li
                star = np.empty((si.size, len(loop), 3), dtype=np.int64)
                star[:, :, 0] = ckeys[:, None]
                star[:, :, 1] = np.roll(lk, -1, axis=1)
                star[:, :, 2] = lk
                key_chunks.append(star.reshape(-1, 3))
                cen_chunks.append((ckeys, lk))

    keys = np.concatenate(key_chunks, axis=0)
    uniq, inv = np.unique(keys, return_inverse=True)
    triangles = inv.reshape(keys.shape)
    nondegen = ~((triangles[:, 0] == triangles[:, 1])
                 & (triangles[:, 1] == triangles[:, 2]))
    triangles = triangles[nondegen]

    grid_pos = np.empty((len(uniq), 3))
    is_edge = uniq < 3 * nvox
    axis_id, rem = np.divmod(uniq[is_edge], nvox)
    vi, rem = np.divmod(rem, py * pz)
    vj, vk = np.divmod(rem, pz)
    v0 = padded[vi, vj, vk]
    step = np.eye(3, dtype=np.int64)[axis_id]
    v1 = padded[vi + step[:, 0], vj + step[:, 1], vk + step[:, 2]]
    t = (iso - v0) / (v1 - v0)
    grid_pos[is_edge] = (np.column_stack([vi, vj, vk]).astype(np.float64)
                         + t[:, None] * step - 1.0)
    for ckeys, lk in cen_chunks:
        rows = np.searchsorted(uniq, ckeys)
        grid_pos[rows] = grid_pos[np.searchsorted(uniq, lk)].mean(axis=1)
    vertices = transform.to_model(grid_pos)
    return IsoSurfaceMesh(vertices, triangles)


# ---------------------------------------------------------------------------
# structural validation

@dataclass
class MeshStats:
    vertex_count: int
    triangle_count: int
    edge_count: int
    boundary_edge_count: int
    euler_characteristic: int
    connected_component_count: int
    surface_area: float


def _edge_multiplicities(mesh) -> tuple[np.ndarray, np.ndarray]:
    tris = np.asarray(mesh.triangles, dtype=np.int64)
    pairs = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    und = np.sort(pairs, axis=1)
    enc = und[:, 0] * (tris.max(initial=-1) + 2) + und[:, 1]
    uniq, counts = np.unique(enc, return_counts=True)
    base = tris.max(initial=-1) + 2
    edges = np.column_stack(np.divmod(uniq, base))
    return edges, counts


def mesh_stats(mesh: IsoSurfaceMesh) -> MeshStats:
    verts = np.asarray(mesh.vertices, dtype=np.float64)
    tris = np.asarray(mesh.triangles, dtype=np.int64)
    if tris.size == 0:
        return MeshStats(len(verts), 0, 0, 0, len(verts), len(verts), 0.0)
    edges, counts = _edge_multiplicities(mesh)
    a = verts[tris[:, 0]]
    area = 0.5 * np.linalg.norm(
        np.cross(verts[tris[:, 1]] - a, verts[tris[:, 2]] - a), axis=1).sum()
    adj = coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])),
                     shape=(len(verts), len(verts)))
    ncomp, _ = connected_components(adj, directed=False)
    return MeshStats(
        vertex_count=len(verts),
        triangle_count=len(tris),
        edge_count=len(edges),
        boundary_edge_count=int(np.count_nonzero(counts == 1)),
        euler_characteristic=len(verts) - len(edges) + len(tris),
        connected_component_count=int(ncomp),
        surface_area=float(area),
    )


def is_watertight(mesh: IsoSurfaceMesh, max_diagnostics: int = 100) -> tuple[bool, list]:
    """True iff every undirected edge is used exactly twice, once per direction."""
    tris = np.asarray(mesh.triangles, dtype=np.int64)
    if tris.size == 0:
        return len(np.asarray(mesh.vertices)) == 0, []
    base = tris.max() + 2
    pairs = np.concatenate([tris[:, [0, 1]], tris[:, [1, 2]], tris[:, [2, 0]]])
    fwd = pairs[:, 0] * base + pairs[:, 1]
    rev = pairs[:, 1] * base + pairs[:, 0]
    fwd_sorted = np.sort(fwd)
    # Watertight + consistently oriented <=> every directed edge is unique and
    # its reverse exists: the directed and reversed multisets then coincide.
    unique_directed = not np.any(fwd_sorted[1:] == fwd_sorted[:-1])
    if unique_directed and np.array_equal(fwd_sorted, np.sort(rev)):
        return True, []
    bad: list = []
    enc_to_count: dict[int, int] = {}
    for e in fwd:
        enc_to_count[int(e)] = enc_to_count.get(int(e), 0) + 1
    seen: set[tuple[int, int]] = set()
    for e in enc_to_count:
        a, b = divmod(e, int(base))
        lo, hi = (a, b) if a < b else (b, a)
        if (lo, hi) in seen:
            continue
        seen.add((lo, hi))
        cnt = enc_to_count.get(int(lo * base + hi), 0)
        rcnt = enc_to_count.get(int(hi * base + lo), 0)
        if cnt != 1 or rcnt != 1:
            bad.append(((int(lo), int(hi)), cnt, rcnt))
            if len(bad) >= max_diagnostics:
                break
    return False, bad
