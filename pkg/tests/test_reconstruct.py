"""Marching cubes, case-table, and mesh-validation tests."""

import math

import numpy as np
import pytest
from scipy.ndimage import gaussian_filter

from conftest import sphere_field
from physcaffold.errors import ValidationError
from physcaffold.field import GridTransform, ScalarField3D, percentile_of_nonzero
from physcaffold.reconstruct import (CASE_TABLE, IsoSurfaceMesh,
                                     is_watertight, marching_cubes,
                                     mesh_stats, validate_case_table)


# ---------------------------------------------------------------------------
# case table

def test_case_table_trivial_masks():
    assert CASE_TABLE[0] == []
    assert CASE_TABLE[255] == []
    one_corner = CASE_TABLE[1]
    assert len(one_corner) == 1
    assert sorted(one_corner[0]) == [0, 4, 8]  # the three edges at corner 0


def test_case_table_full_sweep():
    report = validate_case_table()
    assert report.ok
    assert report.face_mismatches == []
    assert report.orientation_errors == []


# ---------------------------------------------------------------------------
# extraction basics

def test_iso_above_max_gives_empty_mesh():
    f = ScalarField3D(np.ones((5, 5, 5), dtype=np.float32))
    mesh = marching_cubes(f, 10.0)
    assert mesh.empty
    assert len(mesh.vertices) == 0
    assert len(mesh.triangles) == 0


def test_iso_must_be_positive():
    f = ScalarField3D(np.ones((5, 5, 5), dtype=np.float32))
    with pytest.raises(ValidationError):
        marching_cubes(f, 0.0)


def test_single_voxel_blob_is_closed_octahedron():
    f = ScalarField3D.zeros((8, 8, 8))
    f.data[4, 4, 4] = 10.0
    mesh = marching_cubes(f, 5.0)
    stats = mesh_stats(mesh)
    assert (stats.vertex_count, stats.edge_count, stats.triangle_count) == (6, 12, 8)
    assert stats.boundary_edge_count == 0
    assert stats.euler_characteristic == 2
    tight, diag = is_watertight(mesh)
    assert tight and diag == []


def test_blob_on_domain_boundary_still_closes():
    f = ScalarField3D.zeros((6, 6, 6))
    f.data[0, 0, 0] = 9.0
    f.data[5, 3, 2] = 9.0
    mesh = marching_cubes(f, 4.0)
    assert is_watertight(mesh)[0]
    assert mesh_stats(mesh).boundary_edge_count == 0


def test_exact_iso_values_are_handled():
    f = ScalarField3D.zeros((6, 6, 6))
    f.data[2:4, 2:4, 2:4] = 7.0
    f.data[3, 3, 3] = 3.0   # exactly the iso level
    mesh = marching_cubes(f, 3.0)
    assert is_watertight(mesh)[0]


def test_sphere_oracle_metrics():
    field, r = sphere_field(64, 20.0)
    mesh = marching_cubes(field, r)
    stats = mesh_stats(mesh)
    assert stats.euler_characteristic == 2
    assert stats.connected_component_count == 1
    assert stats.boundary_edge_count == 0
    analytic = 4.0 * math.pi * r * r
    assert abs(stats.surface_area - analytic) / analytic < 0.02
    assert is_watertight(mesh)[0]


def test_sphere_respects_voxel_size_scaling():
    field, r = sphere_field(48, 14.0)
    field.voxel_size = 0.5
    mesh = marching_cubes(field, r)
    analytic = 4.0 * math.pi * (r * 0.5) ** 2
    area = mesh_stats(mesh).surface_area
    assert abs(area - analytic) / analytic < 0.02


def test_translation_equivariance():
    base = np.zeros((16, 16, 16), dtype=np.float32)
    base[5:8, 6:9, 7:10] = 9.0
    f1 = ScalarField3D(base)
    f2 = ScalarField3D(np.roll(base, 1, axis=0))
    m1 = marching_cubes(f1, 4.0)
    m2 = marching_cubes(f2, 4.0)
    v1 = m1.vertices + np.array([1.0, 0.0, 0.0])
    # sort on rounded keys: the shift adds ~1 ulp of noise, which must not
    # flip the ordering of otherwise-identical rows
    key = lambda v: np.lexsort(np.round(v, 6)[:, ::-1].T)
    assert np.allclose(v1[key(v1)], m2.vertices[key(m2.vertices)], atol=1e-9)


def test_vertices_stay_in_padded_domain_and_transform_applies():
    rng = np.random.RandomState(12)
    data = gaussian_filter(rng.rand(12, 12, 12), 1.0).astype(np.float32)
    transform = GridTransform(2.0, (10.0, -5.0, 0.0))
    iso = float(np.percentile(data[data > 0], 60))
    mesh = marching_cubes(ScalarField3D(data), iso, transform)
    grid = (mesh.vertices - transform.translation) / transform.scale
    assert grid.min() >= -1.0 - 1e-9
    assert np.all(grid.max(axis=0) <= 12.0 + 1e-9)


def test_random_fields_watertight_at_p50():
    rng = np.random.RandomState(21)
    for _ in range(25):
        data = gaussian_filter(rng.rand(18, 18, 18), 1.2).astype(np.float32)
        field = ScalarField3D(data)
        iso = percentile_of_nonzero(field, 50.0)
        mesh = marching_cubes(field, iso)
        tight, diag = is_watertight(mesh)
        assert tight, f"non-watertight random field: {diag[:5]}"
        assert mesh_stats(mesh).boundary_edge_count == 0


# ---------------------------------------------------------------------------
# mesh statistics / watertightness

TETRA_VERTS = np.array([[0.0, 0, 0], [1.0, 0, 0], [0.0, 1, 0], [0.0, 0, 1]])
TETRA_TRIS = np.array([[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])


def test_mesh_stats_single_triangle():
    mesh = IsoSurfaceMesh(np.eye(3), np.array([[0, 1, 2]]))
    s = mesh_stats(mesh)
    assert (s.vertex_count, s.edge_count, s.triangle_count) == (3, 3, 1)
    assert s.boundary_edge_count == 3
    assert s.euler_characteristic == 1


def test_mesh_stats_closed_tetrahedron():
    s = mesh_stats(IsoSurfaceMesh(TETRA_VERTS, TETRA_TRIS))
    assert (s.vertex_count, s.edge_count, s.triangle_count) == (4, 6, 4)
    assert s.boundary_edge_count == 0
    assert s.euler_characteristic == 2
    assert s.connected_component_count == 1
    assert s.surface_area == pytest.approx(1.5 + math.sqrt(3) / 2)


def test_is_watertight_tetrahedron():
    tight, diag = is_watertight(IsoSurfaceMesh(TETRA_VERTS, TETRA_TRIS))
    assert tight and diag == []


def test_is_watertight_open_tetrahedron_reports_edges():
    open_mesh = IsoSurfaceMesh(TETRA_VERTS, TETRA_TRIS[:3])
    tight, diag = is_watertight(open_mesh)
    assert not tight
    assert len(diag) == 3
    assert mesh_stats(open_mesh).boundary_edge_count == 3


def test_is_watertight_rejects_inconsistent_orientation():
    flipped = TETRA_TRIS.copy()
    flipped[3] = flipped[3][::-1]
    tight, diag = is_watertight(IsoSurfaceMesh(TETRA_VERTS, flipped))
    assert not tight
    assert diag


def test_marching_cubes_winding_is_outward():
    f = ScalarField3D.zeros((8, 8, 8))
    f.data[4, 4, 4] = 10.0
    mesh = marching_cubes(f, 5.0)
    v = mesh.vertices
    t = mesh.triangles
    signed6 = np.einsum("ij,ij->i", v[t[:, 0]],
                        np.cross(v[t[:, 1]], v[t[:, 2]])).sum()
    assert signed6 > 0  # positive signed volume = outward-facing normals
