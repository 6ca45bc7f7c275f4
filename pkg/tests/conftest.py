import math
from pathlib import Path

import numpy as np
import pytest

from physcaffold.field import ScalarField3D

FIXTURES = Path(__file__).parent / "fixtures"
CONFIGS = Path(__file__).parent.parent / "configs"


@pytest.fixture
def fixtures_dir():
    return FIXTURES


@pytest.fixture
def configs_dir():
    return CONFIGS


def sphere_field(n=64, r=20.0):
    """Analytic signed-distance-offset sphere: f = (r - |x - c|) + r, clamped >= 0.

    Stored this way the values stay non-negative and the surface sits at iso = r.
    """
    c = (n - 1) / 2.0
    ax = np.arange(n, dtype=np.float64)
    xx, yy, zz = np.meshgrid(ax, ax, ax, indexing="ij")
    d = np.sqrt((xx - c) ** 2 + (yy - c) ** 2 + (zz - c) ** 2)
    return ScalarField3D(np.maximum(2.0 * r - d, 0.0).astype(np.float32)), r


def kruskal_mst_length(pts):
    """Independent MST oracle: Kruskal with union-find over all pairs."""
    pts = np.asarray(pts, dtype=np.float64)
    n = len(pts)
    if n < 2:
        return 0.0
    iu, ju = np.triu_indices(n, k=1)
    d = np.linalg.norm(pts[iu] - pts[ju], axis=1)
    order = np.argsort(d, kind="stable")
    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    total = 0.0
    joined = 0
    for k in order:
        a, b = find(int(iu[k])), find(int(ju[k]))
        if a != b:
            parent[a] = b
            total += float(d[k])
            joined += 1
            if joined == n - 1:
                break
    return total


def unit_cube_mesh():
    """12-triangle unit cube with outward winding."""
    verts = np.array([[x, y, z] for z in (0, 1) for y in (0, 1) for x in (0, 1)],
                     dtype=np.float64)

    def quad(a, b, c, d):
        return [(a, b, c), (a, c, d)]

    tris = (quad(0, 2, 3, 1)      # z = 0, normal -z
            + quad(4, 5, 7, 6)    # z = 1, normal +z
            + quad(0, 1, 5, 4)    # y = 0, normal -y
            + quad(2, 6, 7, 3)    # y = 1, normal +y
            + quad(0, 4, 6, 2)    # x = 0, normal -x
            + quad(1, 3, 7, 5))   # x = 1, normal +x
    return verts, np.array(tris, dtype=np.int64)


def chi_square_pvalue(observed, expected):
    from scipy import stats
    observed = np.asarray(observed, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    stat = ((observed - expected) ** 2 / expected).sum()
    return float(stats.chi2.sf(stat, df=len(observed) - 1))


def total_f64(field):
    return float(field.data.sum(dtype=np.float64))


def assert_rel(actual, expected, tol, label=""):
    denom = max(abs(expected), 1e-30)
    rel = abs(actual - expected) / denom
    assert rel <= tol, f"{label}: {actual} vs {expected} (rel {rel:.3g} > {tol})"


TWO_BLOB = dict(
    dims=(32, 12, 12),
    blobs=np.array([[8.0, 6.0, 6.0], [24.0, 6.0, 6.0]]),
    num_agents=1000,
    num_steps=50,
    seed=42,
    sense_spread=45.0,
    food_deposit=100.0,
    deposit_decay=0.98,
)


def two_blob_cylinder_fraction():
    """Run the committed two-blob calibration fixture; return the fraction of
    trace mass inside the radius 4*move_distance cylinder around the blob axis."""
    from physcaffold.mcpm import FoodSources, MCPMParams, run

    cfg = TWO_BLOB
    params = MCPMParams(num_agents=cfg["num_agents"], num_steps=cfg["num_steps"],
                        seed=cfg["seed"], sense_spread=cfg["sense_spread"],
                        food_deposit=cfg["food_deposit"],
                        deposit_decay=cfg["deposit_decay"])
    state = run(params, FoodSources(cfg["blobs"]), cfg["dims"])
    tr = state.trace.data.astype(np.float64)
    _, ny, nz = cfg["dims"]
    yy, zz = np.meshgrid(np.arange(ny), np.arange(nz), indexing="ij")
    r2 = (yy - cfg["blobs"][0, 1]) ** 2 + (zz - cfg["blobs"][0, 2]) ** 2
    inside = (r2 <= (4.0 * params.move_distance) ** 2)[None, :, :]
    return tr[np.broadcast_to(inside, tr.shape)].sum() / tr.sum()
