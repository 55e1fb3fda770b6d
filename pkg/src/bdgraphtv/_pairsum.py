"""Pair-sum kernels behind the graph energy: brute force and cell list, numba and numpy.

All kernels return the raw sum ``sum eta(|X_i - X_j| / eps) |(u_i - u_j).(X_i - X_j)|``
over ordered pairs, each ordered pair weighted by the anchor weight of its
first index, together with the number of ordered pairs of nonzero weight.
Normalisation by ``eps^-(d+2) / n^2`` is left to the caller.
"""
import math

import numpy as np

from ._accel import HAVE_NUMBA, PARALLEL_LOCK, njit

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range

_CHUNK_PAIRS = 1 << 22


# ---------------------------------------------------------------- numba kernels


@njit
def _step_weight(t, radii, heights):
    for k in range(radii.shape[0]):
        if t < radii[k]:
            return heights[k]
    return 0.0


@njit(parallel=True)
def _naive_steps_nb(x, u, anchor, radii, heights, eps):
    n, d = x.shape
    partial = np.zeros(n)
    counts = np.zeros(n, dtype=np.int64)
    for i in prange(n):
        acc = 0.0
        cnt = 0
        for j in range(n):
            if j == i:
                continue
            r2 = 0.0
            proj = 0.0
            for k in range(d):
                dx = x[i, k] - x[j, k]
                r2 += dx * dx
                proj += (u[i, k] - u[j, k]) * dx
            w = _step_weight(math.sqrt(r2) / eps, radii, heights)
            if w != 0.0 and anchor[i] != 0.0:
                acc += anchor[i] * w * abs(proj)
                cnt += 1
        partial[i] = acc
        counts[i] = cnt
    total = 0.0
    npairs = 0
    for i in range(n):
        total += partial[i]
        npairs += counts[i]
    return total, npairs


@njit
def _find_cell(keys, key):
    lo = 0
    hi = keys.shape[0]
    while lo < hi:
        mid = (lo + hi) // 2
        if keys[mid] < key:
            lo = mid + 1
        else:
            hi = mid
    if lo < keys.shape[0] and keys[lo] == key:
        return lo
    return -1


@njit(parallel=True)
def _celllist_steps_nb(x, u, anchor, cell_keys, cell_start, cell_coords, dims, strides,
                       offsets, radii, heights, eps):
    ncell = cell_keys.shape[0]
    d = x.shape[1]
    noff = offsets.shape[0]
    partial = np.zeros(ncell)
    counts = np.zeros(ncell, dtype=np.int64)
    for c in prange(ncell):
        acc = 0.0
        cnt = 0
        a0 = cell_start[c]
        a1 = cell_start[c + 1]
        for o in range(noff):
            nkey = 0
            valid = True
            for k in range(d):
                cc = cell_coords[c, k] + offsets[o, k]
                if cc < 0 or cc >= dims[k]:
                    valid = False
                    break
                nkey += cc * strides[k]
            if not valid:
                continue
            same = True
            for k in range(d):
                if offsets[o, k] != 0:
                    same = False
            nb = np.int64(c) if same else np.int64(_find_cell(cell_keys, nkey))
            if nb < 0:
                continue
            b0 = cell_start[nb]
            b1 = cell_start[nb + 1]
            for i in range(a0, a1):
                jstart = i + 1 if same else b0
                for j in range(jstart, b1):
                    r2 = 0.0
                    proj = 0.0
                    for k in range(d):
                        dx = x[i, k] - x[j, k]
                        r2 += dx * dx
                        proj += (u[i, k] - u[j, k]) * dx
                    w = _step_weight(math.sqrt(r2) / eps, radii, heights)
                    if w != 0.0:
                        aw = anchor[i] + anchor[j]
                        acc += aw * w * abs(proj)
                        if anchor[i] != 0.0:
                            cnt += 1
                        if anchor[j] != 0.0:
                            cnt += 1
        partial[c] = acc
        counts[c] = cnt
    total = 0.0
    npairs = 0
    for c in range(ncell):
        total += partial[c]
        npairs += counts[c]
    return total, npairs


# ---------------------------------------------------------------- numpy kernels


def _pair_terms(x, u, i, j, weight_fn, eps):
    dx = x[i] - x[j]
    r = np.sqrt(np.sum(dx * dx, axis=1))
    w = weight_fn(r / eps)
    proj = np.abs(np.sum((u[i] - u[j]) * dx, axis=1))
    return w, w * proj


def _naive_np(x, u, anchor, weight_fn, eps):
    n = len(x)
    total = 0.0
    npairs = 0
    rows = max(1, _CHUNK_PAIRS // max(n, 1))
    for start in range(0, n, rows):
        stop = min(n, start + rows)
        i = np.repeat(np.arange(start, stop), n)
        j = np.tile(np.arange(n), stop - start)
        keep = i != j
        i, j = i[keep], j[keep]
        w, t = _pair_terms(x, u, i, j, weight_fn, eps)
        a = anchor[i]
        total += float(np.sum(a * t))
        npairs += int(np.count_nonzero((w != 0) & (a != 0)))
    return total, npairs


def _celllist_np(x, u, anchor, cells, weight_fn, eps):
    keys_sorted, cell_keys, cell_start, cell_coords, dims, strides, offsets = cells
    cell_of = np.searchsorted(cell_keys, keys_sorted)
    coords = cell_coords[cell_of]
    total = 0.0
    npairs = 0
    for off in offsets:
        nc = coords + off
        ok = np.all((nc >= 0) & (nc < dims), axis=1)
        nkey = nc @ strides
        pos = np.searchsorted(cell_keys, nkey)
        pos = np.minimum(pos, len(cell_keys) - 1)
        ok &= cell_keys[pos] == nkey
        idx = np.nonzero(ok)[0]
        if not np.any(off):
            lo = idx + 1
        else:
            lo = cell_start[pos[idx]]
        hi = cell_start[pos[idx] + 1]
        cnt = np.maximum(hi - lo, 0)
        # Chunk over anchor points to bound the candidate-pair buffer.
        csum = np.cumsum(cnt)
        begin = 0
        while begin < len(idx):
            base = csum[begin - 1] if begin else 0
            end = int(np.searchsorted(csum, base + _CHUNK_PAIRS, side="right"))
            end = max(end, begin + 1)
            c = cnt[begin:end]
            m = int(c.sum())
            if m:
                ii = np.repeat(idx[begin:end], c)
                first = np.repeat(lo[begin:end], c)
                ramp = np.arange(m) - np.repeat(np.cumsum(c) - c, c)
                jj = first + ramp
                w, t = _pair_terms(x, u, ii, jj, weight_fn, eps)
                aw = anchor[ii] + anchor[jj]
                total += float(np.sum(aw * t))
                nz = w != 0
                npairs += int(np.count_nonzero(nz & (anchor[ii] != 0)))
                npairs += int(np.count_nonzero(nz & (anchor[jj] != 0)))
            begin = end
    return total, npairs


# ---------------------------------------------------------------- cell structure


def half_stencil(d):
    """Offsets in {-1,0,1}^d whose first nonzero entry is positive, plus the zero offset."""
    grid = np.array(np.meshgrid(*[[-1, 0, 1]] * d, indexing="ij")).reshape(d, -1).T
    keep = []
    for o in grid:
        nz = np.nonzero(o)[0]
        if len(nz) == 0 or o[nz[0]] > 0:
            keep.append(o)
    keep.sort(key=lambda o: (np.any(o), tuple(o)))
    return np.array(keep, dtype=np.int64)


def build_cells(x, h):
    """Sort points into cubic cells of side ``h``; returns the permutation and cell tables."""
    n, d = x.shape
    lo = x.min(axis=0)
    span = x.max(axis=0) - lo
    dims = np.floor(span / h).astype(np.int64) + 1
    if float(np.prod(dims.astype(float))) > 2.0**62:
        raise OverflowError("cell grid too fine for 64-bit keys")
    strides = np.ones(d, dtype=np.int64)
    for k in range(d - 2, -1, -1):
        strides[k] = strides[k + 1] * dims[k + 1]
    coords = np.minimum(np.floor((x - lo) / h).astype(np.int64), dims - 1)
    keys = coords @ strides
    order = np.argsort(keys, kind="stable")
    keys_sorted = keys[order]
    cell_keys, first = np.unique(keys_sorted, return_index=True)
    cell_start = np.append(first, n).astype(np.int64)
    cell_coords = coords[order][first]
    return order, (keys_sorted, cell_keys, cell_start, cell_coords, dims, strides, half_stencil(d))


def pair_sum_naive(x, u, anchor, kernel, eps, backend):
    if backend == "numba" and kernel.kind != "custom":
        radii, heights = kernel.breakpoints()
        with PARALLEL_LOCK:
            return _naive_steps_nb(x, u, anchor, radii, heights, eps)
    return _naive_np(x, u, anchor, kernel.profile, eps)


def pair_sum_celllist(x, u, anchor, kernel, eps, backend):
    h = kernel.effective_radius * eps
    order, cells = build_cells(x, h)
    xs = np.ascontiguousarray(x[order])
    us = np.ascontiguousarray(u[order])
    an = np.ascontiguousarray(anchor[order])
    if backend == "numba" and kernel.kind != "custom":
        radii, heights = kernel.breakpoints()
        keys_sorted, cell_keys, cell_start, cell_coords, dims, strides, offsets = cells
        with PARALLEL_LOCK:
            return _celllist_steps_nb(xs, us, an, cell_keys, cell_start, cell_coords, dims, strides,
                                      offsets, radii, heights, eps)
    return _celllist_np(xs, us, an, cells, kernel.profile, eps)
