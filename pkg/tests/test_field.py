"""Scalar field container, interpolation, diffusion, decay, and image tests."""

import numpy as np
import pytest

from conftest import assert_rel, total_f64
from physcaffold.errors import ValidationError
from physcaffold.field import (GridTransform, ScalarField3D, decay, diffuse,
                               field_stats, fit_transform,
                               percentile_of_nonzero, sample_trilinear,
                               slice_to_image, splat_trilinear)


# ---------------------------------------------------------------------------
# transforms

def test_fit_transform_two_points():
    transform, dims = fit_transform(np.array([[0.0, 0, 0], [10.0, 0, 0]]), 64, 0.0)
    assert transform.scale == pytest.approx(10.0 / 63)
    grid = transform.to_grid([[0, 0, 0], [10, 0, 0]])
    assert grid[:, 0] == pytest.approx([0.0, 63.0])
    assert dims[0] == 64


def test_fit_transform_degenerate_point_falls_back_to_unit_box():
    with pytest.warns(UserWarning, match="degenerate"):
        transform, dims = fit_transform(np.array([[3.0, 3.0, 3.0]]), 32)
    grid = transform.to_grid([[3.0, 3.0, 3.0]])[0]
    assert np.allclose(grid, (32 - 1) / 2.0)
    assert dims == (32, 32, 32)


def test_fit_transform_cube_roundtrip():
    corners = np.array([[x, y, z] for x in (0, 100.0) for y in (0, 100.0)
                        for z in (0, 100.0)])
    transform, dims = fit_transform(corners, 128, 0.1)
    back = transform.to_model(transform.to_grid(corners))
    assert np.abs(back - corners).max() < 1e-4
    grid = transform.to_grid(corners)
    assert grid.min() >= 0 and grid.max() <= 127


def test_fit_transform_validation():
    pts = np.array([[0.0, 0, 0], [1.0, 0, 0]])
    with pytest.raises(ValidationError):
        fit_transform(pts, 4)
    with pytest.raises(ValidationError):
        fit_transform(pts, 64, 0.5)
    with pytest.raises(ValidationError):
        fit_transform(np.zeros((0, 3)), 64)


def test_grid_transform_inverse():
    t = GridTransform(0.5, (1.0, -2.0, 3.0))
    p = np.array([[4.0, 5.0, 6.0]])
    assert np.allclose(t.to_grid(t.to_model(p)), p)
    with pytest.raises(ValidationError):
        GridTransform(0.0, (0, 0, 0))


# ---------------------------------------------------------------------------
# sampling

def test_sample_constant_field():
    f = ScalarField3D(np.full((4, 4, 4), 5.0, dtype=np.float32))
    assert sample_trilinear(f, (1.3, 2.7, 0.5)) == pytest.approx(5.0)


def test_sample_nodal_exactness():
    rng = np.random.RandomState(1)
    f = ScalarField3D(rng.rand(5, 5, 5).astype(np.float32))
    assert sample_trilinear(f, (2, 3, 1)) == pytest.approx(float(f.data[2, 3, 1]))


def test_sample_corner_weight():
    data = np.zeros((2, 2, 2), dtype=np.float32)
    data[0, 0, 0] = 1.0
    assert sample_trilinear(ScalarField3D(data), (0.5, 0.5, 0.5)) == pytest.approx(0.125)


def test_sample_outside_domain_is_zero():
    f = ScalarField3D(np.ones((4, 4, 4), dtype=np.float32))
    for pos in ((-0.1, 1, 1), (1, 3.1, 1), (1, 1, 5.0)):
        assert sample_trilinear(f, pos) == 0.0


def test_sample_bounded_by_local_extremes():
    rng = np.random.RandomState(2)
    f = ScalarField3D(rng.rand(6, 6, 6).astype(np.float32))
    for _ in range(200):
        p = rng.rand(3) * 5.0
        i = np.floor(p).astype(int)
        cell = f.data[i[0]:i[0] + 2, i[1]:i[1] + 2, i[2]:i[2] + 2]
        v = sample_trilinear(f, p)
        assert cell.min() - 1e-6 <= v <= cell.max() + 1e-6


# ---------------------------------------------------------------------------
# splatting

def test_splat_at_voxel_center():
    f = ScalarField3D.zeros((4, 4, 4))
    splat_trilinear(f, [(1, 2, 3)], [1.0])
    assert f.data[1, 2, 3] == pytest.approx(1.0)
    assert total_f64(f) == pytest.approx(1.0)


def test_splat_cell_midpoint_spreads_evenly():
    f = ScalarField3D.zeros((4, 4, 4))
    splat_trilinear(f, [(1.5, 1.5, 1.5)], [8.0])
    assert np.allclose(f.data[1:3, 1:3, 1:3], 1.0)


def test_splat_many_conserves_total():
    rng = np.random.RandomState(3)
    f = ScalarField3D.zeros((16, 16, 16))
    pos = 1.0 + rng.rand(10_000, 3) * 13.0
    splat_trilinear(f, pos, np.ones(10_000))
    assert_rel(total_f64(f), 10_000.0, 1e-6, "splat total")


def test_splat_rejects_negative_amount():
    f = ScalarField3D.zeros((4, 4, 4))
    with pytest.raises(ValidationError):
        splat_trilinear(f, [(1, 1, 1)], [-1.0])


def test_sample_splat_adjointness():
    rng = np.random.RandomState(4)
    a = ScalarField3D(rng.rand(6, 7, 5).astype(np.float32))
    for _ in range(50):
        p = rng.rand(3) * np.array([5.0, 6.0, 4.0])
        basis = ScalarField3D.zeros(a.dims)
        splat_trilinear(basis, [p], [1.0])
        inner = float((basis.data.astype(np.float64) * a.data).sum())
        assert inner == pytest.approx(sample_trilinear(a, p), rel=1e-5)


# ---------------------------------------------------------------------------
# diffusion / decay

def test_diffuse_single_voxel_kernel_weights():
    f = ScalarField3D.zeros((5, 5, 5))
    f.data[2, 2, 2] = 64.0
    out = diffuse(f).data
    assert out[2, 2, 2] == pytest.approx(8.0)
    assert out[1, 2, 2] == pytest.approx(4.0)   # face neighbor
    assert out[1, 1, 2] == pytest.approx(2.0)   # edge neighbor
    assert out[1, 1, 1] == pytest.approx(1.0)   # corner neighbor
    assert out[0, 2, 2] == 0.0


def test_diffuse_uniform_unchanged():
    f = ScalarField3D(np.full((6, 6, 6), 3.0, dtype=np.float32))
    out = diffuse(f)
    assert np.abs(out.data - 3.0).max() < 1e-6


def test_diffuse_conserves_mass_random_and_boundary_heavy():
    rng = np.random.RandomState(5)
    random = ScalarField3D(rng.rand(9, 6, 11).astype(np.float32) * 10)
    boundary = ScalarField3D.zeros((8, 8, 8))
    boundary.data[0, :, :] = 7.0
    boundary.data[:, :, 7] = 3.0
    boundary.data[0, 0, 0] = 100.0
    for f in (random, boundary):
        before = total_f64(f)
        after = total_f64(diffuse(f))
        assert_rel(after, before, 1e-5, "diffuse mass")


def test_decay_examples():
    rng = np.random.RandomState(6)
    f = ScalarField3D(rng.rand(4, 4, 4).astype(np.float32))
    assert np.array_equal(decay(f, 1.0).data, f.data)
    assert_rel(total_f64(decay(f, 0.9)), 0.9 * total_f64(f), 1e-6, "decay total")
    twice = decay(decay(f, 0.5), 0.5)
    assert np.allclose(twice.data, f.data * 0.25, rtol=1e-6)
    with pytest.raises(ValidationError):
        decay(f, 0.0)
    with pytest.raises(ValidationError):
        decay(f, 1.5)


# ---------------------------------------------------------------------------
# statistics / images

def test_field_stats_zeros_and_single():
    stats = field_stats(ScalarField3D.zeros((2, 2, 2)))
    assert stats["min"] == stats["max"] == stats["total"] == 0.0
    assert stats["nonzero_count"] == 0

    f = ScalarField3D.zeros((2, 2, 2))
    f.data[0, 0, 0] = 1.0
    stats = field_stats(f)
    assert stats["total"] == pytest.approx(1.0)
    assert stats["nonzero_count"] == 1


def test_field_stats_total_matches_reference_sum():
    rng = np.random.RandomState(7)
    f = ScalarField3D(rng.rand(20, 20, 20).astype(np.float32))
    reference = float(np.sum(f.data, dtype=np.float64))
    assert_rel(field_stats(f)["total"], reference, 1e-6, "stats total")


def test_percentile_of_nonzero():
    f = ScalarField3D.zeros((3, 3, 3))
    f.data.ravel()[:4] = [1.0, 2.0, 3.0, 4.0]
    assert percentile_of_nonzero(f, 50.0) == pytest.approx(2.0)
    assert percentile_of_nonzero(ScalarField3D.zeros((2, 2, 2)), 50.0) == 0.0


def test_slice_image_all_zero_is_black(tmp_path):
    path = tmp_path / "z.pgm"
    slice_to_image(ScalarField3D.zeros((8, 8, 8)), "z", 4, path)
    blob = path.read_bytes()
    header, pixels = blob.split(b"255\n", 1)
    assert header.startswith(b"P5\n8 8\n")
    assert pixels == b"\x00" * 64


def test_slice_image_contains_saturated_pixel(tmp_path):
    f = ScalarField3D.zeros((8, 8, 8))
    f.data[3, 4, 4] = 9.0
    path = tmp_path / "z.pgm"
    slice_to_image(f, "z", 4, path)
    assert max(path.read_bytes()[-64:]) == 255


def test_slice_image_header_64(tmp_path):
    f = ScalarField3D.zeros((64, 64, 64))
    path = tmp_path / "z.pgm"
    slice_to_image(f, "z", 32, path)
    assert path.read_bytes().startswith(b"P5\n64 64\n255\n")
    with pytest.raises(IndexError):
        slice_to_image(f, "z", 64, path)
    with pytest.raises(ValidationError):
        slice_to_image(f, "w", 0, path)
