"""One-dimensional slices of fields and the slicing decomposition of the nonlocal energy.

For a direction ``xi`` and a base point ``y`` in the hyperplane ``Pi^xi``
orthogonal to ``xi``, the slice of ``w`` is ``t -> w(y + t xi)``. After the
substitution ``y' = x + eps xi`` the expected graph energy splits into

    int eta(xi) |xi| int_{Pi^xi} F^{xi,y} dH^(d-1)(y) dxi,

    F^{xi,y} = eps^-2 int_I |(v(t+eps) - v(t)) . (T(t+eps) - T(t))| rho(t+eps) rho(t) dt,

where ``|xi|`` is the Jacobian of ``x = y + t xi`` and ``I`` is the section of
``D cap (D - eps xi)`` along the line.
"""
from dataclasses import dataclass
import math
import warnings

import numpy as np

from ._accel import resolve_backend
from ._slices import affine_slice_energies
from .continuum import LinearField, PiecewiseRigidField
from .errors import ArgumentError
from .graph_energy import gtv_expectation_oracle
from .kernels import ball_volume

MIN_NODES = 1000
MAX_NODES = 1_000_000
SHARD_LINES = 1 << 16


class DegenerateIntervalWarning(UserWarning):
    """Slice interval shorter than the interaction length."""


class EmptySlice:
    """Sentinel returned when a line misses the domain."""

    def __bool__(self):
        return False

    def __repr__(self):
        return "EMPTY_SLICE"


EMPTY_SLICE = EmptySlice()


@dataclass(frozen=True)
class SliceSpec:
    """Line ``{y + t xi}`` with ``y`` orthogonal to ``xi``."""

    direction: np.ndarray
    offset: np.ndarray

    def __post_init__(self):
        xi = np.asarray(self.direction, dtype=float).reshape(-1)
        y = np.asarray(self.offset, dtype=float).reshape(-1)
        if not np.any(xi):
            raise ArgumentError("slice direction must be nonzero")
        if y.shape != xi.shape:
            raise ArgumentError("slice offset and direction must have the same length")
        if abs(y @ xi) > 1e-12 * max(1.0, np.linalg.norm(xi) * np.linalg.norm(y)):
            raise ArgumentError("slice offset must lie in the hyperplane orthogonal to the direction")
        object.__setattr__(self, "direction", xi)
        object.__setattr__(self, "offset", y)

    @classmethod
    def through(cls, direction, point):
        """Slice through ``point``: the offset is its projection onto ``Pi^xi``."""
        xi = np.asarray(direction, dtype=float)
        p = np.asarray(point, dtype=float)
        return cls(xi, p - (p @ xi) / (xi @ xi) * xi)

    def point(self, t):
        t = np.asarray(t, dtype=float)
        return self.offset + t[..., None] * self.direction

    def section(self, dom):
        """Interval of ``t`` with ``y + t xi`` in ``dom`` or None."""
        return dom.line_section(self.offset, self.direction)

    def shifted_section(self, dom, eps):
        """Section of ``D cap (D - eps xi)``: the plain section shortened by ``eps`` on the right."""
        sec = self.section(dom)
        if sec is None or sec[1] - eps <= sec[0]:
            return None
        return (sec[0], sec[1] - eps)


@dataclass(frozen=True)
class SliceFunction:
    """``t -> u(y + t xi)`` restricted to the section ``interval``."""

    fn: object
    spec: SliceSpec
    interval: tuple

    def __call__(self, t):
        pts = np.atleast_2d(self.spec.point(np.atleast_1d(t)))
        return np.asarray(self.fn(pts), dtype=float).reshape(len(pts), -1)


def slice_field(u, spec, dom):
    """Slice a field (any vectorised evaluator of points) along ``spec`` inside ``dom``."""
    sec = spec.section(dom)
    if sec is None:
        return EMPTY_SLICE
    return SliceFunction(u, spec, sec)


def default_nodes(length, eps):
    """Midpoint nodes resolving the interval at the scale of ``eps``, at least 1000."""
    if length <= 0:
        return MIN_NODES
    return int(min(MAX_NODES, max(MIN_NODES, math.ceil(100 * length / eps))))


def _as_values(f, t):
    out = np.asarray(f(t), dtype=float)
    return out.reshape(len(t), -1)


def slice_energy_1d(v, T, rho_slice, interval, eps, nodes=None):
    """Midpoint evaluation of the slice energy ``F`` over ``interval``.

    ``v`` and ``T`` map an array of ``t`` to ``(m, k)`` values; ``rho_slice``
    maps ``t`` to weights and may be None for unit density.
    """
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    a, b = float(interval[0]), float(interval[1])
    if b - a < eps:
        warnings.warn(f"slice interval of length {b - a:g} is shorter than eps={eps:g}",
                      DegenerateIntervalWarning, stacklevel=2)
    if b <= a:
        return 0.0
    nodes = default_nodes(b - a, eps) if nodes is None else int(nodes)
    h = (b - a) / nodes
    t = a + (np.arange(nodes) + 0.5) * h
    dv = _as_values(v, t + eps) - _as_values(v, t)
    dT = _as_values(T, t + eps) - _as_values(T, t)
    integrand = np.abs(np.sum(dv * dT, axis=1))
    if rho_slice is not None:
        integrand = integrand * np.asarray(rho_slice(t + eps), float) * np.asarray(rho_slice(t), float)
    return float(integrand.sum() * h / eps**2)


@dataclass(frozen=True)
class SlicingReport:
    lhs: float
    rhs: float
    rel_err: float
    lhs_std_error: float
    rhs_std_error: float
    lines: int

    def as_record(self):
        return {"lhs": self.lhs, "rhs": self.rhs, "rel_err": self.rel_err,
                "lhs_std_error": self.lhs_std_error, "rhs_std_error": self.rhs_std_error,
                "lines": self.lines}


def _random_lines(rng, m, d, kernel_radius, center, cover_radius):
    """Directions uniform in the kernel ball and offsets uniform in a disk of ``Pi^xi``."""
    g = rng.standard_normal((m, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = kernel_radius * rng.random(m) ** (1.0 / d)
    xis = g * r[:, None]
    if d == 1:
        return xis, np.zeros((m, 1)), r
    base = center - (center @ g.T)[:, None] * g
    w = rng.standard_normal((m, d))
    w -= np.sum(w * g, axis=1, keepdims=True) * g
    w /= np.linalg.norm(w, axis=1, keepdims=True)
    s = cover_radius * rng.random(m) ** (1.0 / (d - 1))
    return xis, base + w * s[:, None], r


def _sections(dom, ys, xis, eps):
    t0 = np.zeros(len(ys))
    t1 = np.zeros(len(ys))
    for i in range(len(ys)):
        sec = dom.line_section(ys[i], xis[i])
        if sec is not None:
            t0[i], t1[i] = sec[0], sec[1] - eps
    return t0, t1


def _box_sections(dom, ys, xis, eps):
    lo, hi = dom.bounds()
    with np.errstate(divide="ignore", invalid="ignore"):
        a = (lo - ys) / xis
        b = (hi - ys) / xis
    lo_t = np.where(xis != 0, np.minimum(a, b), -np.inf)
    hi_t = np.where(xis != 0, np.maximum(a, b), np.inf)
    outside = (xis == 0) & ~((ys > lo) & (ys < hi))
    t0 = lo_t.max(axis=1)
    t1 = hi_t.min(axis=1) - eps
    t1 = np.where(np.any(outside, axis=1), t0, t1)
    return t0, np.maximum(t1, t0)


def _generic_lines(u, rho, ys, xis, t0, t1, eps, nodes, chunk=256):
    out = np.zeros(len(ys))
    q = (np.arange(nodes) + 0.5) / nodes
    d = ys.shape[1]
    live = np.nonzero(t1 > t0)[0]
    for s in range(0, len(live), chunk):
        idx = live[s:s + chunk]
        length = t1[idx] - t0[idx]
        t = t0[idx, None] + length[:, None] * q
        p = (ys[idx, None, :] + t[..., None] * xis[idx, None, :]).reshape(-1, d)
        p_shift = p + eps * np.repeat(xis[idx], nodes, axis=0)
        dv = (np.asarray(u(p_shift), float) - np.asarray(u(p), float)).reshape(len(idx), nodes, d)
        integrand = np.abs(np.sum(dv * eps * xis[idx, None, :], axis=2))
        if rho is not None:
            integrand = integrand * (rho(p_shift) * rho(p)).reshape(len(idx), nodes)
        out[idx] = integrand.sum(axis=1) * length / nodes / eps**2
    return out


def _affine_pieces(u):
    if isinstance(u, LinearField):
        z = np.zeros(u.dim)
        return z, -1.0, (u.a, u.c), (u.a, u.c)
    if isinstance(u, PiecewiseRigidField):
        return u.normal, u.offset, (u.minus.m, u.minus.c), (u.plus.m, u.plus.c)
    return None


def verify_slicing_identity(u, dom, rho, k, eps, mc_nodes, seed, line_nodes=MIN_NODES,
                            backend=None):
    """Compare the direct double integral with its slicing decomposition.

    ``lhs`` is the expectation oracle with ``mc_nodes`` samples. ``rhs`` draws
    ``mc_nodes`` lines: ``xi`` uniform in the kernel support ball and ``y``
    uniform in a disk of ``Pi^xi`` covering the projection of the domain; each
    line contributes ``|B| |disk| eta(xi) |xi| F^{xi,y}``. Lines are processed in
    shards whose seeds are spawned from ``seed``.
    """
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    mc_nodes = int(mc_nodes)
    if mc_nodes < 2:
        raise ArgumentError("mc_nodes must be >= 2")
    if u.dim != dom.dim or k.dim != dom.dim:
        raise ArgumentError("field, domain and kernel dimensions must agree")
    d = dom.dim
    backend = resolve_backend(backend)
    lhs = gtv_expectation_oracle(dom, rho, u, k, eps, mc_nodes, seed)

    radius = k.effective_radius
    center, cover = dom.bounding_ball()
    measure = ball_volume(d, radius) * (ball_volume(d - 1, cover) if d > 1 else 1.0)
    pieces = _affine_pieces(u)
    fast = backend == "numba" and pieces is not None and rho.is_constant
    shards = [(s, min(SHARD_LINES, mc_nodes - s)) for s in range(0, mc_nodes, SHARD_LINES)]
    children = np.random.SeedSequence(seed).spawn(len(shards))
    total = 0.0
    total_sq = 0.0
    for (_, m), child in zip(shards, children):
        rng = np.random.default_rng(child)
        xis, ys, r = _random_lines(rng, m, d, radius, center, cover)
        if dom.kind == "box":
            t0, t1 = _box_sections(dom, ys, xis, eps)
        else:
            t0, t1 = _sections(dom, ys, xis, eps)
        if fast:
            normal, offset, minus, plus = pieces
            f = affine_slice_energies(ys, xis, t0, t1, eps, line_nodes, normal, offset,
                                      minus, plus, backend) * rho.constant**2
        else:
            f = _generic_lines(u, None if rho.is_constant else rho, ys, xis, t0, t1, eps,
                               line_nodes)
            if rho.is_constant:
                f = f * rho.constant**2
        s = measure * k.profile(r) * r * f
        total += float(s.sum())
        total_sq += float(s @ s)
    mean = total / mc_nodes
    var = max(total_sq / mc_nodes - mean * mean, 0.0) * mc_nodes / (mc_nodes - 1)
    rhs_se = math.sqrt(var / mc_nodes)
    scale = max(abs(lhs.value), 1e-15)
    rel = 0.0 if lhs.value == 0 and mean == 0 else abs(lhs.value - mean) / scale
    return SlicingReport(lhs.value, mean, rel, lhs.std_error, rhs_se, mc_nodes)


@dataclass(frozen=True)
class LiminfReport:
    n: tuple
    eps: tuple
    values: tuple
    bound: float
    tail_min: float
    passed: bool

    def as_record(self):
        return {"n": list(self.n), "eps": list(self.eps), "values": list(self.values),
                "bound": self.bound, "tail_min": self.tail_min, "passed": self.passed}


def liminf_probe_1d(v_sequence, limit, interval, eps_schedule, direction=None, tail=3,
                    tol=0.05, nodes=None):
    """Evaluate slice energies of ``v_n`` along ``(n, eps)`` pairs and compare with the jump bound.

    ``v_sequence(n)`` returns the n-th 1D function and ``limit`` its L^1 limit;
    with ``T(t) = t xi`` the bound is ``|(v(b) - v(a)) . xi|`` for the interval
    endpoints ``a < b``. The last ``tail`` values must exceed the bound minus ``tol``.
    """
    a, b = float(interval[0]), float(interval[1])
    if not a < b:
        raise ArgumentError("interval must satisfy a < b")
    probe = _as_values(limit, np.array([a, b]))
    xi = np.ones(probe.shape[1]) if direction is None else np.asarray(direction, float).reshape(-1)
    bound = abs(float((probe[1] - probe[0]) @ xi))
    ns, epss, vals = [], [], []
    for n, eps in eps_schedule:
        v = v_sequence(n)
        T = lambda t: np.asarray(t, float)[:, None] * xi
        vals.append(slice_energy_1d(v, T, None, (a, b - eps), eps, nodes=nodes))
        ns.append(int(n))
        epss.append(float(eps))
    tail_vals = vals[-tail:] if vals else []
    tail_min = min(tail_vals) if tail_vals else math.inf
    return LiminfReport(tuple(ns), tuple(epss), tuple(vals), bound, tail_min,
                        bool(tail_vals) and tail_min >= bound - tol)
