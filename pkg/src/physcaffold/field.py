"""Dense 3D scalar fields: trilinear sampling/splatting, diffusion, decay, stats.

Grid convention: voxel (i, j, k) has its center at grid-space position
(i, j, k); the valid interpolation domain is [0, n-1] along each axis.
Model-space positions relate to grid space through GridTransform:
model = grid * scale + translation.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.ndimage import correlate1d

from .errors import ValidationError

# (1/4, 1/2, 1/4) binomial kernel; exact in binary floating point.
_KERNEL = np.array([0.25, 0.5, 0.25], dtype=np.float32)


@dataclass
class ScalarField3D:
    """Non-negative voxel grid, C order (x index slowest)."""

    data: np.ndarray                # float32, shape (nx, ny, nz)
    voxel_size: float = 1.0         # model units (mm) per voxel
    origin: np.ndarray = dc_field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        self.data = np.ascontiguousarray(self.data, dtype=np.float32)
        if self.data.ndim != 3:
            raise ValidationError("field data must be 3-dimensional")
        self.origin = np.asarray(self.origin, dtype=np.float64)

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.data.shape

    @classmethod
    def zeros(cls, dims, voxel_size: float = 1.0, origin=(0.0, 0.0, 0.0)) -> "ScalarField3D":
        return cls(np.zeros(dims, dtype=np.float32), voxel_size, np.asarray(origin, float))

    def copy(self) -> "ScalarField3D":
        return ScalarField3D(self.data.copy(), self.voxel_size, self.origin.copy())


@dataclass(frozen=True)
class GridTransform:
    """Uniform scale + offset: model_pos = grid_pos * scale + translation."""

    scale: float
    translation: np.ndarray

    def __post_init__(self):
        if not self.scale > 0:
            raise ValidationError("GridTransform scale must be > 0")
        object.__setattr__(self, "translation", np.asarray(self.translation, dtype=np.float64))

    def to_model(self, grid_pos) -> np.ndarray:
        return np.asarray(grid_pos, dtype=np.float64) * self.scale + self.translation

    def to_grid(self, model_pos) -> np.ndarray:
        return (np.asarray(model_pos, dtype=np.float64) - self.translation) / self.scale


def fit_transform(points, resolution: int, margin: float = 0.0) -> tuple[GridTransform, tuple[int, int, int]]:
    """Fit an aspect-preserving grid over the bounding box of a point set.

    The box is expanded by margin * (largest extent) on every side and the
    largest axis is mapped onto `resolution` voxels.  All points land inside
    [0, n-1] in grid space.  Coincident points fall back to a unit box.
    """
    pts = np.atleast_2d(np.asarray(getattr(points, "points", points), dtype=np.float64))
    if pts.shape[0] < 1 or pts.shape[1] != 3:
        raise ValidationError("fit_transform needs at least one 3D point")
    if resolution < 8:
        raise ValidationError(f"resolution must be >= 8, got {resolution}")
    if not (0.0 <= margin < 0.5):
        raise ValidationError(f"margin must be in [0, 0.5), got {margin}")

    lo = pts.min(axis=0)
    hi = pts.max(axis=0)
    largest = float((hi - lo).max())
    if largest <= 0.0:
        warnings.warn("degenerate bounds (all points coincident); using unit box")
        lo = pts[0] - 0.5
        hi = pts[0] + 0.5
        largest = 1.0
    pad = margin * largest
    lo = lo - pad
    hi = hi + pad
    extent = hi - lo
    scale = float(extent.max()) / (resolution - 1)
    dims = tuple(max(2, int(math.ceil(e / scale - 1e-9)) + 1) for e in extent)
    return GridTransform(scale, lo), dims


def _corner_weights(field: ScalarField3D, pos: np.ndarray):
    """Flat indices and trilinear weights of the 8 voxels around each position.

    Out-of-grid corners get weight 0 and a clipped (safe) index.  Shared by
    sample and splat so the pair stays exactly adjoint.
    """
    nx, ny, nz = field.dims
    p = np.atleast_2d(np.asarray(pos, dtype=np.float64))
    i0 = np.floor(p).astype(np.int64)
    f = p - i0

    idx = np.empty((p.shape[0], 8), dtype=np.int64)
    w = np.empty((p.shape[0], 8), dtype=np.float64)
    for c in range(8):
        bx, by, bz = c & 1, (c >> 1) & 1, (c >> 2) & 1
        ix = i0[:, 0] + bx
        iy = i0[:, 1] + by
        iz = i0[:, 2] + bz
        wc = (np.where(bx, f[:, 0], 1.0 - f[:, 0])
              * np.where(by, f[:, 1], 1.0 - f[:, 1])
              * np.where(bz, f[:, 2], 1.0 - f[:, 2]))
        inb = (ix >= 0) & (ix < nx) & (iy >= 0) & (iy < ny) & (iz >= 0) & (iz < nz)
        w[:, c] = wc * inb
        idx[:, c] = (np.clip(ix, 0, nx - 1) * ny + np.clip(iy, 0, ny - 1)) * nz + np.clip(iz, 0, nz - 1)
    return idx, w


def sample_trilinear(field: ScalarField3D, pos) -> float | np.ndarray:
    """Trilinear interpolation at grid-space pos; 0 outside [0, n-1]^3."""
    p = np.asarray(pos, dtype=np.float64)
    squeeze = p.ndim == 1
    p = np.atleast_2d(p)
    nx, ny, nz = field.dims
    inside = ((p[:, 0] >= 0) & (p[:, 0] <= nx - 1)
              & (p[:, 1] >= 0) & (p[:, 1] <= ny - 1)
              & (p[:, 2] >= 0) & (p[:, 2] <= nz - 1))
    idx, w = _corner_weights(field, p)
    vals = (field.data.ravel()[idx] * w).sum(axis=1) * inside
    return float(vals[0]) if squeeze else vals


def splat_trilinear(field: ScalarField3D, pos, amount) -> None:
    """Distribute amount over the 8 surrounding voxels (adjoint of sample).

    Weights falling outside the grid are dropped, so mass splatted at the
    boundary may be clipped.
    """
    amt = np.asarray(amount, dtype=np.float64)
    if np.any(amt < 0):
        raise ValidationError("splat amount must be >= 0")
    idx, w = _corner_weights(field, pos)
    contrib = (w * amt.reshape(-1, 1)).astype(np.float32)
    np.add.at(field.data.reshape(-1), idx.ravel(), contrib.ravel())


def diffuse(field: ScalarField3D) -> ScalarField3D:
    """One (1/4, 1/2, 1/4)^3 smoothing pass, exactly mass-conserving.

    Boundary handling replicates the edge value: a source voxel's clipped
    quarter-weight folds back onto itself, so every source still distributes
    100% of its mass AND a uniform field stays exactly uniform.
    """
    data = field.data
    for axis, n in enumerate(field.dims):
        if n > 1:
            data = correlate1d(data, _KERNEL, axis=axis, mode="reflect")
    return ScalarField3D(data.copy() if data is field.data else data,
                         field.voxel_size, field.origin.copy())


def decay(field: ScalarField3D, rho: float) -> ScalarField3D:
    """Multiply every voxel by rho, 0 < rho <= 1."""
    if not (0.0 < rho <= 1.0):
        raise ValidationError(f"decay factor must be in (0, 1], got {rho}")
    return ScalarField3D(field.data * np.float32(rho), field.voxel_size, field.origin.copy())


def field_stats(field: ScalarField3D) -> dict:
    """Exact whole-field statistics; percentiles by nearest rank."""
    flat = field.data.ravel()
    n = flat.size
    srt = np.sort(flat)

    def nearest_rank(p: float) -> float:
        return float(srt[max(int(math.ceil(p / 100.0 * n)), 1) - 1])

    return {
        "min": float(flat.min()) if n else 0.0,
        "max": float(flat.max()) if n else 0.0,
        "total": float(flat.sum(dtype=np.float64)),
        "nonzero_count": int(np.count_nonzero(flat)),
        "p50": nearest_rank(50.0),
        "p99": nearest_rank(99.0),
    }


def percentile_of_nonzero(field: ScalarField3D, p: float) -> float:
    """Nearest-rank percentile over the nonzero voxels only (0 if none)."""
    nz = field.data[field.data > 0]
    if nz.size == 0:
        return 0.0
    srt = np.sort(nz.ravel())
    return float(srt[max(int(math.ceil(p / 100.0 * srt.size)), 1) - 1])


def slice_to_image(field: ScalarField3D, axis: str, index: int, path) -> None:
    """Write one slice as an 8-bit grayscale PGM (P5), normalized by p99."""
    ax = {"x": 0, "y": 1, "z": 2}.get(axis)
    if ax is None:
        raise ValidationError(f"axis must be one of x, y, z, got {axis!r}")
    n = field.dims[ax]
    if not (0 <= index < n):
        raise IndexError(f"slice index {index} out of range for axis {axis} (size {n})")
    p99 = field_stats(field)["p99"]
    denom = p99 if p99 > 0 else 1.0
    plane = np.take(field.data, index, axis=ax)
    pix = np.rint(np.clip(plane / denom, 0.0, 1.0) * 255.0).astype(np.uint8)
    h, w = pix.shape
    with open(path, "wb") as fh:
        fh.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        fh.write(pix.tobytes())
