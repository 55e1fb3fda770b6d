"""Batched midpoint slice energies for fields that are affine on each side of a hyperplane."""
import math

import numpy as np

from ._accel import HAVE_NUMBA, PARALLEL_LOCK, njit

if HAVE_NUMBA:
    from numba import prange
else:  # pragma: no cover
    prange = range


def _affine_lines(ys, xis, t0, t1, eps, nodes, normal, offset, m_minus, c_minus, m_plus, c_plus):
    m, d = ys.shape
    out = np.zeros(m)
    for i in prange(m):
        length = t1[i] - t0[i]
        if length <= 0.0:
            continue
        h = length / nodes
        acc = 0.0
        for q in range(nodes):
            t = t0[i] + (q + 0.5) * h
            s0 = 0.0
            s1 = 0.0
            for k in range(d):
                p = ys[i, k] + t * xis[i, k]
                s0 += p * normal[k]
                s1 += (p + eps * xis[i, k]) * normal[k]
            proj = 0.0
            for a in range(d):
                va = 0.0
                wa = 0.0
                for b in range(d):
                    p = ys[i, b] + t * xis[i, b]
                    va += (m_plus[a, b] if s0 >= offset else m_minus[a, b]) * p
                    wa += (m_plus[a, b] if s1 >= offset else m_minus[a, b]) * (p + eps * xis[i, b])
                va += c_plus[a] if s0 >= offset else c_minus[a]
                wa += c_plus[a] if s1 >= offset else c_minus[a]
                proj += (wa - va) * eps * xis[i, a]
            acc += math.fabs(proj)
        out[i] = acc * h / (eps * eps)
    return out


_affine_lines_nb = njit(parallel=True)(_affine_lines) if HAVE_NUMBA else _affine_lines


def affine_slice_energies(ys, xis, t0, t1, eps, nodes, normal, offset, minus, plus, backend):
    """Slice energies with unit density for a two-piece affine field, one per line."""
    args = (np.ascontiguousarray(ys), np.ascontiguousarray(xis), np.ascontiguousarray(t0),
            np.ascontiguousarray(t1), float(eps), int(nodes), np.asarray(normal, float),
            float(offset), np.ascontiguousarray(minus[0]), np.ascontiguousarray(minus[1]),
            np.ascontiguousarray(plus[0]), np.ascontiguousarray(plus[1]))
    if backend == "numba":
        with PARALLEL_LOCK:
            return _affine_lines_nb(*args)
    return _affine_lines(*args)
