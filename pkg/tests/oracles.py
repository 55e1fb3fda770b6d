"""Independent reference computations used by the tests.

Nothing here imports the package: each oracle recomputes its quantity from
first principles (closed forms, brute-force loops, exhaustive enumeration).
"""
import itertools
import math

import numpy as np
from scipy import integrate


def angular_abs_quadratic_2d(a):
    """Closed form of ``int_0^{2 pi} |theta^T A theta| dtheta`` for symmetric 2x2 ``A``.

    Writing ``theta^T A theta = alpha + R cos(2 psi)`` with ``alpha`` the mean
    eigenvalue and ``R`` the half eigenvalue gap, the integrand changes sign
    only when ``|alpha| < R``.
    """
    a = np.asarray(a, dtype=float)
    a = (a + a.T) / 2
    alpha = (a[0, 0] + a[1, 1]) / 2
    r = math.hypot((a[0, 0] - a[1, 1]) / 2, a[0, 1])
    if abs(alpha) >= r:
        return 2 * math.pi * abs(alpha)
    psi0 = math.acos(-alpha / r)
    return alpha * (4 * psi0 - 2 * math.pi) + 4 * r * math.sin(psi0)


def phi_indicator_2d(a, c=1.0, b=1.0):
    """``int_{|xi| < b} c |A xi . xi| dxi`` in the plane: ``c b^4 / 4`` times the angular integral."""
    return c * b**4 / 4 * angular_abs_quadratic_2d(a)


def phi_indicator_mc(a, d, nodes, seed, b=1.0, c=1.0):
    """Plain Monte Carlo over the cube ``[-b, b]^d``; returns ``(estimate, std_error)``."""
    rng = np.random.default_rng(seed)
    x = rng.uniform(-b, b, size=(nodes, d))
    inside = np.sum(x * x, axis=1) < b * b
    q = np.abs(np.einsum("ij,jk,ik->i", x, np.asarray(a, float), x))
    f = (2 * b) ** d * c * q * inside
    return float(f.mean()), float(f.std(ddof=1) / math.sqrt(nodes))


def gtv_bruteforce(points, values, eps, c=1.0, b=1.0):
    """Literal double loop over ordered pairs with the strict-inequality indicator kernel."""
    x = np.atleast_2d(np.asarray(points, dtype=float))
    if x.shape[0] == 1 and np.ndim(points) == 1:
        x = x.T
    u = np.asarray(values, dtype=float).reshape(len(x), -1)
    n, d = x.shape
    total = 0.0
    for i in range(n):
        for j in range(n):
            diff = x[i] - x[j]
            r = math.sqrt(float(diff @ diff))
            w = c if r / eps < b else 0.0
            total += w * eps ** (-d) * abs(float((u[i] - u[j]) @ diff))
    return total / (eps**2 * n * n)


def tl1_bruteforce(xa, wa, xb, wb, identity_only=False):
    """Minimum of the TL1 cost over all n! assignments.

    With ``identity_only`` the cost of the identity matching is returned,
    summed in the same order as the enumeration.
    """
    xa, xb = np.atleast_2d(xa), np.atleast_2d(xb)
    wa = np.asarray(wa, float).reshape(len(xa), -1)
    wb = np.asarray(wb, float).reshape(len(xb), -1)
    n = len(xa)
    cost = (np.linalg.norm(xa[:, None] - xb[None], axis=-1)
            + np.linalg.norm(wa[:, None] - wb[None], axis=-1))
    best = math.inf
    perms = [tuple(range(n))] if identity_only else itertools.permutations(range(n))
    for perm in perms:
        best = min(best, sum(cost[i, p] for i, p in enumerate(perm)))
    return best / n


def bottleneck_bruteforce(src, dst):
    """Smallest achievable largest displacement over all assignments."""
    src, dst = np.atleast_2d(src), np.atleast_2d(dst)
    dist = np.linalg.norm(src[:, None] - dst[None], axis=-1)
    return min(max(dist[i, p] for i, p in enumerate(perm))
               for perm in itertools.permutations(range(len(src))))


def slice_energy_quad(v, xi, interval, eps, points=()):
    """Adaptive quadrature of ``eps^-2 int_I |(v(t+eps) - v(t)) . eps xi| dt`` (unit density)."""
    xi = np.asarray(xi, float)

    def f(t):
        dv = np.asarray(v(t + eps), float) - np.asarray(v(t), float)
        return abs(float(dv @ (eps * xi)))

    val, _ = integrate.quad(f, interval[0], interval[1], points=list(points) or None,
                            limit=500, epsabs=1e-12, epsrel=1e-12)
    return val / eps**2


def double_integral_1d(u, eps, c=1.0, b=1.0):
    """``eps^-2 iint_{(0,1)^2} eta_eps(x - y) |(u(x) - u(y))(x - y)| dx dy`` in one dimension."""

    def inner(x):
        lo, hi = max(0.0, x - b * eps), min(1.0, x + b * eps)
        val, _ = integrate.quad(lambda y: abs((u(x) - u(y)) * (x - y)), lo, hi, epsabs=1e-13)
        return val

    val, _ = integrate.quad(inner, 0.0, 1.0, epsabs=1e-12, limit=200)
    return c / eps * val / eps**2
