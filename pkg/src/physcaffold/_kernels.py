"""Numba inner loops for the agent propagation step.

Split in two phases so results never depend on worker count:
phase 1 (parallel) computes every agent's new position/heading from the
read-only deposit snapshot and its private RNG stream; phase 2 (serial,
fixed agent order) accumulates the deposits.
"""

import math

import numpy as np
from numba import njit, prange

from .rng import uniform_pair


@njit(cache=True, inline="always")
def _tangent_basis(hx, hy, hz):
    # Branchless orthonormal frame (Frisvad/Duff), stable near every axis.
    if hz < -0.9999999:
        return 0.0, -1.0, 0.0, -1.0, 0.0, 0.0
    a = 1.0 / (1.0 + hz)
    b = -hx * hy * a
    return 1.0 - hx * hx * a, b, -hx, b, 1.0 - hy * hy * a, -hy


@njit(cache=True, inline="always")
def _cone_direction(hx, hy, hz, cos_spread, u1, u2):
    # Uniform over the spherical cap of the given half-angle around h.
    cost = 1.0 - u1 * (1.0 - cos_spread)
    sint = math.sqrt(max(0.0, 1.0 - cost * cost))
    phi = 2.0 * math.pi * u2
    t1x, t1y, t1z, t2x, t2y, t2z = _tangent_basis(hx, hy, hz)
    ca = math.cos(phi)
    sa = math.sin(phi)
    dx = cost * hx + sint * (ca * t1x + sa * t2x)
    dy = cost * hy + sint * (ca * t1y + sa * t2y)
    dz = cost * hz + sint * (ca * t1z + sa * t2z)
    inv = 1.0 / math.sqrt(dx * dx + dy * dy + dz * dz)
    return dx * inv, dy * inv, dz * inv


@njit(cache=True, inline="always")
def _trilinear(field, nx, ny, nz, x, y, z):
    if x < 0.0 or y < 0.0 or z < 0.0 or x > nx - 1.0 or y > ny - 1.0 or z > nz - 1.0:
        return 0.0
    i = min(int(x), nx - 2)
    j = min(int(y), ny - 2)
    k = min(int(z), nz - 2)
    fx = x - i
    fy = y - j
    fz = z - k
    gx = 1.0 - fx
    gy = 1.0 - fy
    gz = 1.0 - fz
    return (gx * (gy * (gz * field[i, j, k] + fz * field[i, j, k + 1])
                  + fy * (gz * field[i, j + 1, k] + fz * field[i, j + 1, k + 1]))
            + fx * (gy * (gz * field[i + 1, j, k] + fz * field[i + 1, j, k + 1])
                    + fy * (gz * field[i + 1, j + 1, k] + fz * field[i + 1, j + 1, k + 1])))


@njit(cache=True, inline="always")
def _power_weight(base, sharpness, int_sharp):
    if int_sharp < 0:
        return base ** sharpness
    w = 1.0
    for _ in range(int_sharp):
        w *= base
    return w


@njit(cache=True, parallel=True, fastmath=True)
def advance_agents(pos, hdg, deposit, seed_mixed, step,
                   n_samples, sense_distance, cos_spread, move_distance,
                   sharpness, respawn, box_lo, box_hi,
                   candx, candy, candz, weights):
    nx, ny, nz = deposit.shape
    eps = 1e-6
    # small non-negative integer exponents take a multiply loop instead of pow
    int_sharp = int(sharpness) if sharpness == int(sharpness) and 0.0 <= sharpness <= 8.0 else -1
    for a in prange(pos.shape[0]):
        au = np.uint64(a)
        su = np.uint64(step)
        hx = hdg[a, 0]
        hy = hdg[a, 1]
        hz = hdg[a, 2]
        px = pos[a, 0]
        py = pos[a, 1]
        pz = pos[a, 2]

        total = 0.0
        for k in range(n_samples):
            u1, u2 = uniform_pair(seed_mixed, au, su, np.uint64(k))
            dx, dy, dz = _cone_direction(hx, hy, hz, cos_spread, u1, u2)
            candx[a, k] = dx
            candy[a, k] = dy
            candz[a, k] = dz
            probe = _trilinear(deposit, nx, ny, nz,
                               px + dx * sense_distance,
                               py + dy * sense_distance,
                               pz + dz * sense_distance)
            w = _power_weight(probe + eps, sharpness, int_sharp)
            weights[a, k] = w
            total += w

        u_sel, _ = uniform_pair(seed_mixed, au, su, np.uint64(n_samples))
        target = u_sel * total
        chosen = n_samples - 1
        acc = 0.0
        for k in range(n_samples):
            acc += weights[a, k]
            if target < acc:
                chosen = k
                break
        hx = candx[a, chosen]
        hy = candy[a, chosen]
        hz = candz[a, chosen]
        px += hx * move_distance
        py += hy * move_distance
        pz += hz * move_distance

        if (px < 0.0 or py < 0.0 or pz < 0.0
                or px > nx - 1.0 or py > ny - 1.0 or pz > nz - 1.0):
            if respawn:
                ua, ub = uniform_pair(seed_mixed, au, su, np.uint64(n_samples + 1))
                uc, ud = uniform_pair(seed_mixed, au, su, np.uint64(n_samples + 2))
                ue, _ = uniform_pair(seed_mixed, au, su, np.uint64(n_samples + 3))
                px = box_lo[0] + ua * (box_hi[0] - box_lo[0])
                py = box_lo[1] + ub * (box_hi[1] - box_lo[1])
                pz = box_lo[2] + uc * (box_hi[2] - box_lo[2])
                zz = 2.0 * ud - 1.0
                rr = math.sqrt(max(0.0, 1.0 - zz * zz))
                ph = 2.0 * math.pi * ue
                hx = rr * math.cos(ph)
                hy = rr * math.sin(ph)
                hz = zz
            else:
                for _ in range(64):  # bounded mirror loop; move <= one cell typical
                    moved = False
                    if px < 0.0:
                        px = -px
                        hx = -hx
                        moved = True
                    elif px > nx - 1.0:
                        px = 2.0 * (nx - 1.0) - px
                        hx = -hx
                        moved = True
                    if py < 0.0:
                        py = -py
                        hy = -hy
                        moved = True
                    elif py > ny - 1.0:
                        py = 2.0 * (ny - 1.0) - py
                        hy = -hy
                        moved = True
                    if pz < 0.0:
                        pz = -pz
                        hz = -hz
                        moved = True
                    elif pz > nz - 1.0:
                        pz = 2.0 * (nz - 1.0) - pz
                        hz = -hz
                        moved = True
                    if not moved:
                        break
                px = min(max(px, 0.0), nx - 1.0)
                py = min(max(py, 0.0), ny - 1.0)
                pz = min(max(pz, 0.0), nz - 1.0)

        pos[a, 0] = px
        pos[a, 1] = py
        pos[a, 2] = pz
        hdg[a, 0] = hx
        hdg[a, 1] = hy
        hdg[a, 2] = hz


@njit(cache=True)
def splat_agents(deposit, trace, pos, agent_deposit):
    """Serial trilinear splat of agent_deposit / 1.0 at every agent position."""
    nx, ny, nz = deposit.shape
    for a in range(pos.shape[0]):
        x = pos[a, 0]
        y = pos[a, 1]
        z = pos[a, 2]
        i = min(int(x), nx - 2)
        j = min(int(y), ny - 2)
        k = min(int(z), nz - 2)
        fx = x - i
        fy = y - j
        fz = z - k
        for ci in range(2):
            wx = fx if ci else 1.0 - fx
            for cj in range(2):
                wy = fy if cj else 1.0 - fy
                for ck in range(2):
                    wz = fz if ck else 1.0 - fz
                    w = wx * wy * wz
                    deposit[i + ci, j + cj, k + ck] += agent_deposit * w
                    trace[i + ci, j + cj, k + ck] += w
