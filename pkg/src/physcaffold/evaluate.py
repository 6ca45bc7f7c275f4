"""Network quality metrics: material cost versus a Euclidean MST baseline."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ValidationError
from .field import GridTransform, ScalarField3D
from .mcpm import FoodSources, connectivity

CSV_HEADER = "mst_length,volume,voxels,connectivity,efficiency_ratio"


@dataclass
class NetworkReport:
    mst_length: float               # model units
    network_voxel_volume: float     # model units^3
    supra_threshold_voxel_count: int
    connectivity_fraction: float
    efficiency_ratio: float         # volume / (mst_length * voxel_size^2)

    def to_csv(self) -> str:
        return (f"{CSV_HEADER}\n"
                f"{self.mst_length:.9g},{self.network_voxel_volume:.9g},"
                f"{self.supra_threshold_voxel_count},"
                f"{self.connectivity_fraction:.9g},{self.efficiency_ratio:.9g}\n")

    def to_text(self) -> str:
        return (f"mst_length={self.mst_length:.9g}\n"
                f"volume={self.network_voxel_volume:.9g}\n"
                f"voxels={self.supra_threshold_voxel_count}\n"
                f"connectivity={self.connectivity_fraction:.9g}\n"
                f"efficiency_ratio={self.efficiency_ratio:.9g}\n")


def mst_length(points) -> float:
    """Total edge length of the Euclidean minimum spanning tree.

    Prim's algorithm with a dense O(n^2) scan; fine up to ~50k points.
    """
    pts = np.atleast_2d(np.asarray(getattr(points, "points", points), dtype=np.float64))
    n = len(pts)
    if n < 1:
        raise ValidationError("mst_length needs at least one point")
    if n == 1:
        return 0.0
    in_tree = np.zeros(n, dtype=bool)
    in_tree[0] = True
    best_sq = ((pts - pts[0]) ** 2).sum(axis=1)
    best_sq[0] = np.inf
    total = 0.0
    for _ in range(n - 1):
        i = int(np.argmin(best_sq))
        total += float(np.sqrt(best_sq[i]))
        in_tree[i] = True
        cand = ((pts - pts[i]) ** 2).sum(axis=1)
        best_sq = np.where(in_tree, np.inf, np.minimum(best_sq, cand))
    return total


def network_report(trace: ScalarField3D, food: FoodSources, threshold: float,
                   transform: GridTransform) -> NetworkReport:
    """Cost and connectivity summary of a grown trace network."""
    if threshold < 0:
        raise ValidationError("threshold must be >= 0")
    voxel_size = transform.scale
    count = int(np.count_nonzero(trace.data >= threshold)) if threshold > 0 \
        else int(trace.data.size)
    volume = count * voxel_size ** 3
    model_points = transform.to_model(food.positions)
    mst = mst_length(model_points)
    conn = connectivity(trace, food, threshold)
    ratio = volume / (mst * voxel_size ** 2) if mst > 0 else 0.0
    return NetworkReport(
        mst_length=mst,
        network_voxel_volume=volume,
        supra_threshold_voxel_count=count,
        connectivity_fraction=conn,
        efficiency_ratio=ratio,
    )
