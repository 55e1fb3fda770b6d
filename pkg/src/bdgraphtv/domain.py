"""Domains, bounded densities, i.i.d. sampling and empirical measures."""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize

from .errors import ArgumentError, DensityBoundError, PathologicalDensityError, UnsupportedError
from .kernels import ball_volume

MIN_ACCEPTANCE = 1e-4
_BOUND_RTOL = 1e-12


@dataclass(frozen=True)
class Domain:
    """Open box ``prod (lo_k, hi_k)`` or open ball ``B(center, radius)``."""

    kind: str
    lo: tuple = ()
    hi: tuple = ()
    center: tuple = ()
    radius: float = 0.0

    @classmethod
    def box(cls, lo, hi):
        lo = tuple(float(v) for v in np.atleast_1d(lo))
        hi = tuple(float(v) for v in np.atleast_1d(hi))
        if len(lo) != len(hi) or not lo:
            raise ArgumentError("box corners must have the same positive length")
        if any(a >= b for a, b in zip(lo, hi)):
            raise ArgumentError("box needs lo < hi componentwise")
        return cls(kind="box", lo=lo, hi=hi)

    @classmethod
    def unit_cube(cls, d):
        return cls.box([0.0] * d, [1.0] * d)

    @classmethod
    def ball(cls, center, radius):
        center = tuple(float(v) for v in np.atleast_1d(center))
        if not radius > 0:
            raise ArgumentError("ball radius must be positive")
        return cls(kind="ball", center=center, radius=float(radius))

    @property
    def dim(self):
        return len(self.lo) if self.kind == "box" else len(self.center)

    @property
    def volume(self):
        if self.kind == "box":
            return float(np.prod(np.subtract(self.hi, self.lo)))
        return ball_volume(self.dim, self.radius)

    def bounds(self):
        """Axis-aligned bounding box as two arrays."""
        if self.kind == "box":
            return np.array(self.lo), np.array(self.hi)
        c = np.array(self.center)
        return c - self.radius, c + self.radius

    @property
    def diameter(self):
        lo, hi = self.bounds()
        return float(np.linalg.norm(hi - lo)) if self.kind == "box" else 2.0 * self.radius

    def bounding_ball(self):
        """``(center, radius)`` of a ball containing the domain."""
        if self.kind == "ball":
            return np.array(self.center), self.radius
        lo, hi = self.bounds()
        return (lo + hi) / 2.0, float(np.linalg.norm(hi - lo)) / 2.0

    def contains(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if self.kind == "box":
            return np.all((x > np.array(self.lo)) & (x < np.array(self.hi)), axis=-1)
        return np.sum((x - np.array(self.center)) ** 2, axis=-1) < self.radius**2

    def shrink(self, delta):
        """Inner parallel set ``{x : dist(x, complement) > delta}``."""
        if delta < 0:
            raise ArgumentError("shrink distance must be non-negative")
        if self.kind == "box":
            lo = np.array(self.lo) + delta
            hi = np.array(self.hi) - delta
            if np.any(lo >= hi):
                raise ArgumentError(f"box is empty after shrinking by {delta}")
            return Domain.box(lo, hi)
        if delta >= self.radius:
            raise ArgumentError(f"ball is empty after shrinking by {delta}")
        return Domain.ball(self.center, self.radius - delta)

    def line_section(self, p, direction):
        """Parameter interval ``(t0, t1)`` with ``p + t direction`` in the domain, or None."""
        p = np.asarray(p, dtype=float)
        direction = np.asarray(direction, dtype=float)
        if self.kind == "box":
            t0, t1 = -math.inf, math.inf
            for k in range(self.dim):
                if direction[k] == 0:
                    if not self.lo[k] < p[k] < self.hi[k]:
                        return None
                    continue
                a = (self.lo[k] - p[k]) / direction[k]
                b = (self.hi[k] - p[k]) / direction[k]
                t0, t1 = max(t0, min(a, b)), min(t1, max(a, b))
            return (t0, t1) if t0 < t1 else None
        c = np.array(self.center)
        dd = direction @ direction
        if dd == 0:
            return None
        bq = 2 * direction @ (p - c)
        cq = (p - c) @ (p - c) - self.radius**2
        disc = bq * bq - 4 * dd * cq
        if disc <= 0:
            return None
        s = math.sqrt(disc)
        return ((-bq - s) / (2 * dd), (-bq + s) / (2 * dd))

    def sample_uniform(self, rng, m):
        d = self.dim
        if self.kind == "box":
            lo, hi = self.bounds()
            return lo + (hi - lo) * rng.random((m, d))
        g = rng.standard_normal((m, d))
        g /= np.linalg.norm(g, axis=1, keepdims=True)
        r = self.radius * rng.random(m) ** (1.0 / d)
        return np.array(self.center) + g * r[:, None]

    def quadrature(self, order=64, mc_nodes=1_000_000, seed=12345):
        """Nodes and weights integrating over the domain.

        Boxes use tensor Gauss-Legendre with ``order`` nodes per axis for d <= 2;
        d = 2 balls use a polar product rule; everything else falls back to a
        seeded Monte Carlo rule with equal weights.
        """
        d = self.dim
        if self.kind == "box" and d <= 2:
            lo, hi = self.bounds()
            g, w = np.polynomial.legendre.leggauss(order)
            axes = [(lo[k] + hi[k]) / 2 + (hi[k] - lo[k]) / 2 * g for k in range(d)]
            wts = [(hi[k] - lo[k]) / 2 * w for k in range(d)]
            mesh = np.meshgrid(*axes, indexing="ij")
            nodes = np.stack([m.ravel() for m in mesh], axis=1)
            weights = np.ones(1)
            for wk in wts:
                weights = np.outer(weights, wk).ravel()
            return nodes, weights
        if self.kind == "ball" and d == 2:
            g, w = np.polynomial.legendre.leggauss(order)
            r = self.radius * (g + 1) / 2
            wr = self.radius / 2 * w * r
            m = 4 * order
            th = 2 * np.pi * np.arange(m) / m
            nodes = np.array(self.center) + np.stack([
                np.outer(r, np.cos(th)).ravel(), np.outer(r, np.sin(th)).ravel()], axis=1)
            return nodes, np.repeat(wr, m) * (2 * np.pi / m)
        rng = np.random.default_rng(seed)
        nodes = self.sample_uniform(rng, mc_nodes)
        return nodes, np.full(mc_nodes, self.volume / mc_nodes)

    def describe(self):
        if self.kind == "box":
            return {"kind": "box", "lo": list(self.lo), "hi": list(self.hi)}
        return {"kind": "ball", "center": list(self.center), "radius": self.radius}


class Density:
    """Continuous density on a domain with bounds ``alpha <= rho <= beta``.

    With ``normalize=True`` (default) the evaluator is rescaled at construction
    so that it integrates to one, and the bounds are rescaled with it. Bounds
    are checked on a probe set at construction and on every evaluation.
    Continuity of ``fn`` is the caller's responsibility.
    """

    def __init__(self, domain, fn, alpha, beta, normalize=True, constant=None):
        if not (0 < alpha <= beta < math.inf):
            raise ArgumentError("density bounds need 0 < alpha <= beta < inf")
        self.domain = domain
        self._fn = fn
        self._scale = 1.0
        self._constant = constant
        self.alpha = float(alpha)
        self.beta = float(beta)
        self._check_probes()
        raw_mass = self._integrate(self._eval_raw)
        self.raw_mass = raw_mass
        if normalize:
            self._scale = 1.0 / raw_mass
            self.alpha *= self._scale
            self.beta *= self._scale
        self.mass = raw_mass * self._scale
        self.normalized = normalize

    @classmethod
    def uniform(cls, domain):
        v = 1.0 / domain.volume
        return cls(domain, lambda x: np.full(len(x), v), v, v, normalize=False, constant=v)

    @classmethod
    def constant_value(cls, domain, value):
        """Unnormalised constant density (used for density-scaling checks)."""
        return cls(domain, lambda x: np.full(len(x), float(value)), value, value,
                   normalize=False, constant=float(value))

    @property
    def is_constant(self):
        return self._constant is not None

    @property
    def constant(self):
        return None if self._constant is None else self._constant * self._scale

    def scaled(self, s):
        """Unnormalised density ``s * rho`` with bounds scaled accordingly."""
        fn, k = self._fn, self._scale
        const = None if self._constant is None else self._constant * k * s
        return Density(self.domain, lambda x: s * k * np.asarray(fn(x), dtype=float),
                       s * self.alpha, s * self.beta, normalize=False, constant=const)

    def _eval_raw(self, x):
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return np.asarray(self._fn(x), dtype=float).reshape(len(x))

    def _check_bounds(self, vals, alpha, beta):
        lo = alpha * (1 - _BOUND_RTOL)
        hi = beta * (1 + _BOUND_RTOL)
        bad = (vals < lo) | (vals > hi) | ~np.isfinite(vals)
        if np.any(bad):
            v = vals[bad][0]
            raise DensityBoundError(f"density value {v} outside [{alpha}, {beta}]")

    def _check_probes(self):
        nodes, _ = self.domain.quadrature(order=32, mc_nodes=4096)
        rng = np.random.default_rng(2024)
        probes = np.concatenate([nodes, self.domain.sample_uniform(rng, 4096)])
        self._check_bounds(self._eval_raw(probes), self.alpha, self.beta)

    def _integrate(self, f):
        nodes, w = self.domain.quadrature()
        return float(f(nodes) @ w)

    def __call__(self, x):
        vals = self._eval_raw(x) * self._scale
        self._check_bounds(vals, self.alpha, self.beta)
        return vals

    def integral_of_square(self, domain=None):
        """``int rho^2 dx`` over ``domain`` (defaults to the density's own domain)."""
        domain = domain or self.domain
        if self.is_constant:
            return self.constant**2 * domain.volume
        nodes, w = domain.quadrature()
        return float(self(nodes) ** 2 @ w)


@dataclass(frozen=True, eq=False)
class EmpiricalMeasure:
    """Uniformly weighted atoms ``(1/n) sum delta_{X_i}``.

    ``cells`` is set for quantization measures built by :func:`grid_reference`:
    an ``(n, 2, d)`` array of the ``lo`` / ``hi`` corners of each atom's cell.
    """

    points: np.ndarray
    seed: object = None
    domain: object = None
    cells: object = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.array(self.points, dtype=float)
        if pts.ndim == 1:
            pts = pts[:, None]
        if pts.ndim != 2 or len(pts) < 1:
            raise ArgumentError("an empirical measure needs at least one point")
        pts.setflags(write=False)
        object.__setattr__(self, "points", pts)

    @property
    def n(self):
        return self.points.shape[0]

    @property
    def dim(self):
        return self.points.shape[1]

    @property
    def weights(self):
        return np.full(self.n, 1.0 / self.n)

    def grid_spacing(self):
        """Largest cell side length (quantization measures only)."""
        if self.cells is None:
            raise ArgumentError("measure has no cell structure")
        return float(np.max(self.cells[:, 1, :] - self.cells[:, 0, :]))


def sample(dom, rho, n, seed):
    """Draw ``n`` i.i.d. points from ``rho dx / int rho`` by rejection against ``beta``."""
    n = int(n)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    if rho.domain != dom:
        raise ArgumentError("density is defined on a different domain")
    rng = np.random.default_rng(seed)
    if rho.is_constant:
        return EmpiricalMeasure(dom.sample_uniform(rng, n), seed=seed, domain=dom)
    accepted = []
    have = proposed = 0
    batch = max(1024, 2 * n)
    while have < n:
        x = dom.sample_uniform(rng, batch)
        u = rng.random(batch)
        keep = x[u * rho.beta < rho(x)]
        accepted.append(keep)
        have += len(keep)
        proposed += batch
        if proposed >= 1_000_000 and have / proposed < MIN_ACCEPTANCE:
            raise PathologicalDensityError(
                f"rejection acceptance rate {have / proposed:.2e} below {MIN_ACCEPTANCE:g}")
    pts = np.concatenate(accepted)[:n]
    return EmpiricalMeasure(pts, seed=seed, domain=dom)


def _cell_mass(rho, lo, hi, order=8):
    g, w = np.polynomial.legendre.leggauss(order)
    axes = [(lo[k] + hi[k]) / 2 + (hi[k] - lo[k]) / 2 * g for k in range(len(lo))]
    wts = [(hi[k] - lo[k]) / 2 * w for k in range(len(lo))]
    mesh = np.meshgrid(*axes, indexing="ij")
    nodes = np.stack([m.ravel() for m in mesh], axis=1)
    weights = np.ones(1)
    for wk in wts:
        weights = np.outer(weights, wk).ravel()
    vals = rho(nodes) * weights
    return vals.sum(), vals @ nodes


def grid_reference(dom, rho, n):
    """Deterministic n-point quantization of ``rho dx`` on a box.

    The box is bisected recursively (longest side first) into cells of equal
    mass, and each atom sits at the density-weighted centroid of its cell.
    """
    if dom.kind != "box":
        raise UnsupportedError("grid_reference supports box domains only")
    n = int(n)
    if n < 1:
        raise ArgumentError("n must be >= 1")
    d = dom.dim
    lo0, hi0 = dom.bounds()
    cells = []
    stack = [(lo0, hi0, n)]
    while stack:
        lo, hi, count = stack.pop()
        if count == 1:
            cells.append((lo, hi))
            continue
        axis = int(np.argmax(hi - lo))
        n1 = count // 2
        frac = n1 / count
        if rho.is_constant:
            cut = lo[axis] + frac * (hi[axis] - lo[axis])
        else:
            total, _ = _cell_mass(rho, lo, hi)

            def excess(q):
                h = hi.copy()
                h[axis] = q
                return _cell_mass(rho, lo, h)[0] - frac * total

            cut = optimize.brentq(excess, lo[axis], hi[axis], xtol=1e-14, rtol=1e-14)
        hi_a, lo_b = hi.copy(), lo.copy()
        hi_a[axis] = cut
        lo_b[axis] = cut
        # Push the upper half first so cells come out in ascending order.
        stack.append((lo_b, hi, count - n1))
        stack.append((lo, hi_a, n1))
    corners = np.array([np.stack([lo, hi]) for lo, hi in cells])
    if rho.is_constant:
        pts = corners.mean(axis=1)
    else:
        pts = np.empty((n, d))
        for i, (lo, hi) in enumerate(cells):
            mass, moment = _cell_mass(rho, lo, hi, order=16)
            pts[i] = moment / mass
    return EmpiricalMeasure(pts, seed=None, domain=dom, cells=corners)
