"""Hopcroft-Karp maximum bipartite matching on a CSR adjacency.

Compiled with numba when available; with ``backend="numpy"`` the same routine
runs as plain Python (correct, much slower).
"""
import numpy as np

from ._accel import HAVE_NUMBA, njit, resolve_backend

_INF = 1 << 60


def _hopcroft_karp(indptr, indices, n_left, n_right):
    match_l = np.full(n_left, -1, dtype=np.int64)
    match_r = np.full(n_right, -1, dtype=np.int64)
    dist = np.empty(n_left, dtype=np.int64)
    queue = np.empty(n_left, dtype=np.int64)
    stack = np.empty(n_left + 1, dtype=np.int64)
    it = np.empty(n_left, dtype=np.int64)
    size = 0
    while True:
        # BFS layering from the free left vertices.
        head = 0
        tail = 0
        for u in range(n_left):
            if match_l[u] == -1:
                dist[u] = 0
                queue[tail] = u
                tail += 1
            else:
                dist[u] = _INF
        limit = _INF
        while head < tail:
            u = queue[head]
            head += 1
            if dist[u] >= limit:
                continue
            for e in range(indptr[u], indptr[u + 1]):
                w = match_r[indices[e]]
                if w == -1:
                    if limit == _INF:
                        limit = dist[u] + 1
                elif dist[w] == _INF:
                    dist[w] = dist[u] + 1
                    queue[tail] = w
                    tail += 1
        if limit == _INF:
            break
        # Layered DFS for a maximal set of vertex-disjoint shortest augmenting paths.
        for u in range(n_left):
            it[u] = indptr[u]
        for u0 in range(n_left):
            if match_l[u0] != -1:
                continue
            top = 0
            stack[0] = u0
            while top >= 0:
                u = stack[top]
                if it[u] == indptr[u + 1]:
                    dist[u] = _INF
                    top -= 1
                    continue
                v = indices[it[u]]
                it[u] += 1
                w = match_r[v]
                if w == -1:
                    if dist[u] + 1 == limit:
                        for k in range(top + 1):
                            uu = stack[k]
                            vv = indices[it[uu] - 1]
                            match_l[uu] = vv
                            match_r[vv] = uu
                        size += 1
                        break
                elif dist[w] == dist[u] + 1:
                    top += 1
                    stack[top] = w
    return match_l, size


_hopcroft_karp_nb = njit(_hopcroft_karp) if HAVE_NUMBA else _hopcroft_karp


def max_bipartite_matching(indptr, indices, n_left, n_right, backend=None):
    """Return ``(match_left, size)``; ``match_left[u]`` is -1 for unmatched vertices."""
    indptr = np.ascontiguousarray(indptr, dtype=np.int64)
    indices = np.ascontiguousarray(indices, dtype=np.int64)
    if resolve_backend(backend) == "numba":
        return _hopcroft_karp_nb(indptr, indices, n_left, n_right)
    return _hopcroft_karp(indptr, indices, n_left, n_right)
