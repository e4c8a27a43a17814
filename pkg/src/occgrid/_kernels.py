"""Compiled inner loops: voxel walks, visibility marking, KNN queries.

Everything here is allocation-light numba code. The voxel walk is the
integer-stepping traversal (one axis per iteration, nearest boundary
first, ties resolved x, then y, then z); cells grazed with zero
intersection length are never emitted. Mask kernels only ever store
constant bytes, so concurrent marking is race-free and the result is
identical for any thread count.
"""

from __future__ import annotations

import numba
import numpy as np
from numba import njit, prange

OCCUPIED = 1  # must match voxelizer.VoxelState.OCCUPIED


def set_threads(n: int) -> int:
    """Clamp and apply the numba thread count; returns the value in effect."""
    n = max(1, min(int(n), numba.config.NUMBA_NUM_THREADS))
    numba.set_num_threads(n)
    return n


@njit(cache=True)
def _traverse_core(
    ox, oy, oz, ex, ey, ez,
    min_x, min_y, min_z, vox,
    nx, ny, nz,
    out, do_fill,
):
    """Walk the open segment origin->endpoint through the grid.

    Emits every cell with positive intersection length plus the
    endpoint's containing voxel when the endpoint is in bounds. Returns
    the cell count; fills ``out`` with indices when ``do_fill``.
    """
    dx = ex - ox
    dy = ey - oy
    dz = ez - oz

    # Clip [0, 1] against the grid slabs.
    t0 = 0.0
    t1 = 1.0
    ok = True
    for axis in range(3):
        if axis == 0:
            o, d, lo = ox, dx, min_x
            hi = min_x + nx * vox
        elif axis == 1:
            o, d, lo = oy, dy, min_y
            hi = min_y + ny * vox
        else:
            o, d, lo = oz, dz, min_z
            hi = min_z + nz * vox
        if d == 0.0:
            if o < lo or o >= hi:
                ok = False
                break
        else:
            ta = (lo - o) / d
            tb = (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb

    count = 0
    last_x = -1
    last_y = -1
    last_z = -1
    if ok and t0 <= t1:
        px = ox + t0 * dx
        py = oy + t0 * dy
        pz = oz + t0 * dz
        ix = int(np.floor((px - min_x) / vox))
        iy = int(np.floor((py - min_y) / vox))
        iz = int(np.floor((pz - min_z) / vox))
        if ix < 0:
            ix = 0
        elif ix >= nx:
            ix = nx - 1
        if iy < 0:
            iy = 0
        elif iy >= ny:
            iy = ny - 1
        if iz < 0:
            iz = 0
        elif iz >= nz:
            iz = nz - 1

        inf = np.inf
        if dx > 0.0:
            step_x, tmax_x, tdelta_x = 1, (min_x + (ix + 1) * vox - ox) / dx, vox / dx
        elif dx < 0.0:
            step_x, tmax_x, tdelta_x = -1, (min_x + ix * vox - ox) / dx, -vox / dx
        else:
            step_x, tmax_x, tdelta_x = 0, inf, inf
        if dy > 0.0:
            step_y, tmax_y, tdelta_y = 1, (min_y + (iy + 1) * vox - oy) / dy, vox / dy
        elif dy < 0.0:
            step_y, tmax_y, tdelta_y = -1, (min_y + iy * vox - oy) / dy, -vox / dy
        else:
            step_y, tmax_y, tdelta_y = 0, inf, inf
        if dz > 0.0:
            step_z, tmax_z, tdelta_z = 1, (min_z + (iz + 1) * vox - oz) / dz, vox / dz
        elif dz < 0.0:
            step_z, tmax_z, tdelta_z = -1, (min_z + iz * vox - oz) / dz, -vox / dz
        else:
            step_z, tmax_z, tdelta_z = 0, inf, inf

        t_enter = t0
        while True:
            tm = tmax_x
            if tmax_y < tm:
                tm = tmax_y
            if tmax_z < tm:
                tm = tmax_z
            t_exit = tm if tm < t1 else t1
            if t_exit > t_enter:
                if do_fill:
                    out[count, 0] = ix
                    out[count, 1] = iy
                    out[count, 2] = iz
                count += 1
                last_x, last_y, last_z = ix, iy, iz
            if tm >= t1:
                break
            if tmax_x <= tmax_y and tmax_x <= tmax_z:
                ix += step_x
                if ix < 0 or ix >= nx:
                    break
                tmax_x += tdelta_x
            elif tmax_y <= tmax_z:
                iy += step_y
                if iy < 0 or iy >= ny:
                    break
                tmax_y += tdelta_y
            else:
                iz += step_z
                if iz < 0 or iz >= nz:
                    break
                tmax_z += tdelta_z
            t_enter = t_exit

    # Endpoint's containing voxel is the return voxel; include it.
    jx = int(np.floor((ex - min_x) / vox))
    jy = int(np.floor((ey - min_y) / vox))
    jz = int(np.floor((ez - min_z) / vox))
    if 0 <= jx < nx and 0 <= jy < ny and 0 <= jz < nz:
        if jx != last_x or jy != last_y or jz != last_z:
            if do_fill:
                out[count, 0] = jx
                out[count, 1] = jy
                out[count, 2] = jz
            count += 1
    return count


@njit(cache=True)
def traverse_one(ox, oy, oz, ex, ey, ez, min_x, min_y, min_z, vox, nx, ny, nz):
    dummy = np.empty((1, 3), dtype=np.int64)
    n = _traverse_core(ox, oy, oz, ex, ey, ez, min_x, min_y, min_z, vox, nx, ny, nz,
                       dummy, False)
    out = np.empty((n, 3), dtype=np.int64)
    _traverse_core(ox, oy, oz, ex, ey, ez, min_x, min_y, min_z, vox, nx, ny, nz,
                   out, True)
    return out


@njit(cache=True, parallel=True)
def traverse_batch(origins, endpoints, min_x, min_y, min_z, vox, nx, ny, nz):
    """CSR traversal of many rays: returns (cells (M, 3), offsets (N+1,))."""
    n_rays = origins.shape[0]
    counts = np.empty(n_rays, dtype=np.int64)
    dummy = np.empty((1, 3), dtype=np.int64)
    for i in prange(n_rays):
        counts[i] = _traverse_core(
            origins[i, 0], origins[i, 1], origins[i, 2],
            endpoints[i, 0], endpoints[i, 1], endpoints[i, 2],
            min_x, min_y, min_z, vox, nx, ny, nz, dummy, False,
        )
    offsets = np.zeros(n_rays + 1, dtype=np.int64)
    for i in range(n_rays):
        offsets[i + 1] = offsets[i] + counts[i]
    cells = np.empty((offsets[n_rays], 3), dtype=np.int64)
    for i in prange(n_rays):
        _traverse_core(
            origins[i, 0], origins[i, 1], origins[i, 2],
            endpoints[i, 0], endpoints[i, 1], endpoints[i, 2],
            min_x, min_y, min_z, vox, nx, ny, nz,
            cells[offsets[i]:offsets[i + 1]], True,
        )
    return cells, offsets


@njit(cache=True)
def _free_walk_one(ox, oy, oz, ex, ey, ez, min_x, min_y, min_z, vox,
                   occ_state, free):
    """Mark traversed non-occupied cells free, stopping at the first
    occupied cell. Stores only the constant 1, so marking is race-free."""
    nx, ny, nz = occ_state.shape
    dx = ex - ox
    dy = ey - oy
    dz = ez - oz
    t0 = 0.0
    t1 = 1.0
    for axis in range(3):
        if axis == 0:
            o, d, lo = ox, dx, min_x
            hi = min_x + nx * vox
        elif axis == 1:
            o, d, lo = oy, dy, min_y
            hi = min_y + ny * vox
        else:
            o, d, lo = oz, dz, min_z
            hi = min_z + nz * vox
        if d == 0.0:
            if o < lo or o >= hi:
                return
        else:
            ta = (lo - o) / d
            tb = (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return

    px = ox + t0 * dx
    py = oy + t0 * dy
    pz = oz + t0 * dz
    ix = min(max(int(np.floor((px - min_x) / vox)), 0), nx - 1)
    iy = min(max(int(np.floor((py - min_y) / vox)), 0), ny - 1)
    iz = min(max(int(np.floor((pz - min_z) / vox)), 0), nz - 1)

    inf = np.inf
    if dx > 0.0:
        step_x, tmax_x, tdelta_x = 1, (min_x + (ix + 1) * vox - ox) / dx, vox / dx
    elif dx < 0.0:
        step_x, tmax_x, tdelta_x = -1, (min_x + ix * vox - ox) / dx, -vox / dx
    else:
        step_x, tmax_x, tdelta_x = 0, inf, inf
    if dy > 0.0:
        step_y, tmax_y, tdelta_y = 1, (min_y + (iy + 1) * vox - oy) / dy, vox / dy
    elif dy < 0.0:
        step_y, tmax_y, tdelta_y = -1, (min_y + iy * vox - oy) / dy, -vox / dy
    else:
        step_y, tmax_y, tdelta_y = 0, inf, inf
    if dz > 0.0:
        step_z, tmax_z, tdelta_z = 1, (min_z + (iz + 1) * vox - oz) / dz, vox / dz
    elif dz < 0.0:
        step_z, tmax_z, tdelta_z = -1, (min_z + iz * vox - oz) / dz, -vox / dz
    else:
        step_z, tmax_z, tdelta_z = 0, inf, inf

    t_enter = t0
    while True:
        tm = tmax_x
        if tmax_y < tm:
            tm = tmax_y
        if tmax_z < tm:
            tm = tmax_z
        t_exit = tm if tm < t1 else t1
        if t_exit > t_enter:
            if occ_state[ix, iy, iz] == OCCUPIED:
                return
            free[ix, iy, iz] = 1
        if tm >= t1:
            return
        if tmax_x <= tmax_y and tmax_x <= tmax_z:
            ix += step_x
            if ix < 0 or ix >= nx:
                return
            tmax_x += tdelta_x
        elif tmax_y <= tmax_z:
            iy += step_y
            if iy < 0 or iy >= ny:
                return
            tmax_y += tdelta_y
        else:
            iz += step_z
            if iz < 0 or iz >= nz:
                return
            tmax_z += tdelta_z
        t_enter = t_exit


@njit(cache=True, parallel=True)
def lidar_free_kernel(origins, endpoints, min_x, min_y, min_z, vox, occ_state, free):
    for i in prange(origins.shape[0]):
        _free_walk_one(
            origins[i, 0], origins[i, 1], origins[i, 2],
            endpoints[i, 0], endpoints[i, 1], endpoints[i, 2],
            min_x, min_y, min_z, vox, occ_state, free,
        )


@njit(cache=True)
def _observe_walk_one(ox, oy, oz, ex, ey, ez, min_x, min_y, min_z, vox,
                      occ_state, observed, log, do_log):
    """Mark traversed cells observed up to and including the first
    occupied cell. Returns the number of cells marked (logged when
    ``do_log``)."""
    nx, ny, nz = occ_state.shape
    dx = ex - ox
    dy = ey - oy
    dz = ez - oz
    t0 = 0.0
    t1 = 1.0
    for axis in range(3):
        if axis == 0:
            o, d, lo = ox, dx, min_x
            hi = min_x + nx * vox
        elif axis == 1:
            o, d, lo = oy, dy, min_y
            hi = min_y + ny * vox
        else:
            o, d, lo = oz, dz, min_z
            hi = min_z + nz * vox
        if d == 0.0:
            if o < lo or o >= hi:
                return 0
        else:
            ta = (lo - o) / d
            tb = (hi - o) / d
            if ta > tb:
                ta, tb = tb, ta
            if ta > t0:
                t0 = ta
            if tb < t1:
                t1 = tb
    if t0 > t1:
        return 0

    px = ox + t0 * dx
    py = oy + t0 * dy
    pz = oz + t0 * dz
    ix = min(max(int(np.floor((px - min_x) / vox)), 0), nx - 1)
    iy = min(max(int(np.floor((py - min_y) / vox)), 0), ny - 1)
    iz = min(max(int(np.floor((pz - min_z) / vox)), 0), nz - 1)

    inf = np.inf
    if dx > 0.0:
        step_x, tmax_x, tdelta_x = 1, (min_x + (ix + 1) * vox - ox) / dx, vox / dx
    elif dx < 0.0:
        step_x, tmax_x, tdelta_x = -1, (min_x + ix * vox - ox) / dx, -vox / dx
    else:
        step_x, tmax_x, tdelta_x = 0, inf, inf
    if dy > 0.0:
        step_y, tmax_y, tdelta_y = 1, (min_y + (iy + 1) * vox - oy) / dy, vox / dy
    elif dy < 0.0:
        step_y, tmax_y, tdelta_y = -1, (min_y + iy * vox - oy) / dy, -vox / dy
    else:
        step_y, tmax_y, tdelta_y = 0, inf, inf
    if dz > 0.0:
        step_z, tmax_z, tdelta_z = 1, (min_z + (iz + 1) * vox - oz) / dz, vox / dz
    elif dz < 0.0:
        step_z, tmax_z, tdelta_z = -1, (min_z + iz * vox - oz) / dz, -vox / dz
    else:
        step_z, tmax_z, tdelta_z = 0, inf, inf

    marked = 0
    t_enter = t0
    while True:
        tm = tmax_x
        if tmax_y < tm:
            tm = tmax_y
        if tmax_z < tm:
            tm = tmax_z
        t_exit = tm if tm < t1 else t1
        if t_exit > t_enter:
            observed[ix, iy, iz] = 1
            if do_log:
                log[marked, 0] = ix
                log[marked, 1] = iy
                log[marked, 2] = iz
            marked += 1
            if occ_state[ix, iy, iz] == OCCUPIED:
                return marked
        if tm >= t1:
            return marked
        if tmax_x <= tmax_y and tmax_x <= tmax_z:
            ix += step_x
            if ix < 0 or ix >= nx:
                return marked
            tmax_x += tdelta_x
        elif tmax_y <= tmax_z:
            iy += step_y
            if iy < 0 or iy >= ny:
                return marked
            tmax_y += tdelta_y
        else:
            iz += step_z
            if iz < 0 or iz >= nz:
                return marked
            tmax_z += tdelta_z
        t_enter = t_exit


@njit(cache=True, parallel=True)
def camera_observe_kernel(ox, oy, oz, targets, min_x, min_y, min_z, vox,
                          occ_state, observed):
    dummy = np.empty((1, 3), dtype=np.int64)
    for i in prange(targets.shape[0]):
        _observe_walk_one(
            ox, oy, oz, targets[i, 0], targets[i, 1], targets[i, 2],
            min_x, min_y, min_z, vox, occ_state, observed, dummy, False,
        )


@njit(cache=True)
def camera_observe_logged(ox, oy, oz, targets, min_x, min_y, min_z, vox,
                          occ_state, observed):
    """Sequential variant that also returns per-ray marked cells as CSR."""
    n = targets.shape[0]
    nx, ny, nz = occ_state.shape
    max_len = nx + ny + nz + 3
    scratch = np.empty((max_len, 3), dtype=np.int64)
    offsets = np.zeros(n + 1, dtype=np.int64)
    chunks = []
    total = 0
    for i in range(n):
        m = _observe_walk_one(
            ox, oy, oz, targets[i, 0], targets[i, 1], targets[i, 2],
            min_x, min_y, min_z, vox, occ_state, observed, scratch, True,
        )
        chunks.append(scratch[:m].copy())
        total += m
        offsets[i + 1] = total
    cells = np.empty((total, 3), dtype=np.int64)
    pos = 0
    for c in chunks:
        cells[pos:pos + c.shape[0]] = c
        pos += c.shape[0]
    return cells, offsets


@njit(cache=True, parallel=True)
def knn_query_kernel(queries, ref, ref_order, cell_keys, cell_starts,
                     origin_x, origin_y, origin_z, h, ncx, ncy, ncz, k):
    """K nearest reference points per query via expanding cell shells.

    Candidates are ranked by (squared distance, original point index),
    which matches the brute-force tie-break exactly. The shell loop can
    stop once the kth best distance is covered by the scanned radius.
    """
    n_query = queries.shape[0]
    out_idx = np.empty((n_query, k), dtype=np.int64)
    for q in prange(n_query):
        qx = queries[q, 0]
        qy = queries[q, 1]
        qz = queries[q, 2]
        qcx = int(np.floor((qx - origin_x) / h))
        qcy = int(np.floor((qy - origin_y) / h))
        qcz = int(np.floor((qz - origin_z) / h))

        best_d2 = np.full(k, np.inf)
        best_i = np.full(k, np.int64(-1))
        found = 0

        r_stop = 0
        for axis in range(3):
            if axis == 0:
                qc, nc = qcx, ncx
            elif axis == 1:
                qc, nc = qcy, ncy
            else:
                qc, nc = qcz, ncz
            far = max(abs(qc), abs(nc - 1 - qc))
            if far > r_stop:
                r_stop = far

        for r in range(r_stop + 1):
            x_lo = max(qcx - r, 0)
            x_hi = min(qcx + r, ncx - 1)
            y_lo = max(qcy - r, 0)
            y_hi = min(qcy + r, ncy - 1)
            z_lo = max(qcz - r, 0)
            z_hi = min(qcz + r, ncz - 1)
            for cx in range(x_lo, x_hi + 1):
                on_x = abs(cx - qcx) == r
                for cy in range(y_lo, y_hi + 1):
                    on_face = on_x or abs(cy - qcy) == r
                    for cz in range(z_lo, z_hi + 1):
                        if not (on_face or abs(cz - qcz) == r):
                            continue
                        key = (np.int64(cx) * ncy + cy) * ncz + cz
                        pos = np.searchsorted(cell_keys, key)
                        if pos >= cell_keys.shape[0] or cell_keys[pos] != key:
                            continue
                        for s in range(cell_starts[pos], cell_starts[pos + 1]):
                            j = ref_order[s]
                            ddx = ref[j, 0] - qx
                            ddy = ref[j, 1] - qy
                            ddz = ref[j, 2] - qz
                            d2 = ddx * ddx + ddy * ddy + ddz * ddz
                            if found == k:
                                worst = best_d2[k - 1]
                                if d2 > worst or (d2 == worst and j > best_i[k - 1]):
                                    continue
                            # insertion sort by (d2, index)
                            lim = found if found < k else k - 1
                            p = lim
                            while p > 0 and (
                                best_d2[p - 1] > d2
                                or (best_d2[p - 1] == d2 and best_i[p - 1] > j)
                            ):
                                best_d2[p] = best_d2[p - 1]
                                best_i[p] = best_i[p - 1]
                                p -= 1
                            best_d2[p] = d2
                            best_i[p] = j
                            if found < k:
                                found += 1
            if found == k:
                cover = r * h
                if best_d2[k - 1] <= cover * cover:
                    break
        for p in range(k):
            out_idx[q, p] = best_i[p]
    return out_idx
