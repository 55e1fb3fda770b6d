"""Radial interaction kernels and the anisotropic norm they induce on symmetric matrices.

A kernel is a radial profile ``eta(t)``, ``t = |x|``, in dimension ``d``. Three
kinds are supported:

* ``indicator``: ``eta(t) = c`` for ``t < b`` and ``0`` for ``t >= b``;
* ``piecewise``: a finite sum of indicators, ``eta(t) = sum_k c_k 1[t < b_k]``;
* ``custom``: any vectorised non-increasing profile, possibly with unbounded
  support (then it is truncated where the tail second moment becomes negligible).

The norm ``phi_eta(A) = int eta(xi) |A xi . xi| dxi`` separates in polar
coordinates into a radial moment ``int_0^inf eta(r) r^(d+1) dr`` times an
angular integral ``int_{S^(d-1)} |A theta . theta| dtheta``.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import integrate, special

from .errors import ArgumentError, InfeasibleIntegralError, KernelError

MONOTONE_CHECK_RADII = 1024
TAIL_FRACTION = 1e-8
_CUSTOM_SCAN_RADIUS = 64.0


def sphere_area(d):
    """Surface measure of the unit sphere S^(d-1) in R^d."""
    return 2.0 * math.pi ** (d / 2.0) / special.gamma(d / 2.0)


def ball_volume(d, radius=1.0):
    return math.pi ** (d / 2.0) / special.gamma(d / 2.0 + 1.0) * radius**d


class SymMatrix:
    """A symmetric d x d matrix; construction symmetrizes ``(M + M^T) / 2``.

    Also accepts a stack of matrices with shape ``(..., d, d)``.
    """

    __slots__ = ("_a",)

    def __init__(self, entries):
        m = np.array(entries, dtype=float)
        if m.ndim == 0:
            m = m.reshape(1, 1)
        if m.ndim < 2 or m.shape[-1] != m.shape[-2]:
            raise ArgumentError(f"expected square matrix/matrices, got shape {m.shape}")
        a = (m + np.swapaxes(m, -1, -2)) / 2.0
        a.setflags(write=False)
        self._a = a

    @property
    def array(self):
        return self._a

    @property
    def dim(self):
        return self._a.shape[-1]

    def lower(self):
        """Canonical storage: the lower triangle (row-major) of each matrix."""
        i, j = np.tril_indices(self.dim)
        return self._a[..., i, j]

    def __repr__(self):
        return f"SymMatrix({self._a.tolist()!r})"


def sym(m):
    return SymMatrix(m).array


@dataclass(frozen=True)
class QuadratureSpec:
    """How to integrate over the kernel support.

    ``method`` is ``"auto"`` (polar product rule for d <= 3, Monte Carlo
    otherwise), ``"polar"`` or ``"mc"``.
    """

    method: str = "auto"
    angular_nodes: int = 4096
    polar_nodes: int = 64
    mc_nodes: int = 200_000
    seed: int = 0

    def __post_init__(self):
        if self.method not in ("auto", "polar", "mc"):
            raise ArgumentError(f"unknown quadrature method {self.method!r}")
        for name in ("angular_nodes", "polar_nodes", "mc_nodes"):
            if getattr(self, name) < 1:
                raise ArgumentError(f"{name} must be >= 1")

    def resolved(self, d):
        if self.method != "auto":
            return self.method
        return "polar" if d <= 3 else "mc"


@dataclass(frozen=True)
class QuadResult:
    value: float
    error_estimate: float
    nodes: int

    def as_record(self):
        return {"value": self.value, "error_estimate": self.error_estimate, "nodes": self.nodes}


@dataclass(frozen=True)
class MomentResult:
    value: float
    error_estimate: float
    finite: bool
    truncation_radius: float


@dataclass(frozen=True, eq=False)
class Kernel:
    """Radial kernel profile in dimension ``dim``.

    Use :meth:`indicator`, :meth:`piecewise_constant` or :meth:`custom` to build one.
    """

    dim: int
    kind: str
    steps: tuple = ()
    profile_fn: object = None
    radius: float = math.inf
    truncation_radius: float = field(default=math.inf, compare=False)

    @classmethod
    def indicator(cls, c=1.0, b=1.0, d=2):
        if not c > 0 or not b > 0:
            raise KernelError("indicator kernel needs c > 0 and b > 0")
        return cls(dim=_check_dim(d), kind="indicator", steps=((float(b), float(c)),),
                   radius=float(b), truncation_radius=float(b))

    @classmethod
    def piecewise_constant(cls, steps, d=2):
        """Sum of indicators; ``steps`` is a sequence of ``(b_k, c_k)`` with all entries > 0."""
        steps = tuple(sorted((float(b), float(c)) for b, c in steps))
        if not steps:
            raise KernelError("piecewise-constant kernel needs at least one step")
        if any(not (b > 0 and c > 0) for b, c in steps):
            raise KernelError("piecewise-constant steps need b_k > 0 and c_k > 0")
        radius = steps[-1][0]
        return cls(dim=_check_dim(d), kind="piecewise", steps=steps, radius=radius,
                   truncation_radius=radius)

    @classmethod
    def custom(cls, profile, d=2, radius=math.inf):
        """Arbitrary vectorised profile ``profile(t)`` for ``t >= 0``.

        The profile is rejected if ``profile(0) <= 0``, if it is discontinuous
        at the origin, if it increases anywhere on a 1024-point radius grid, or
        if its second moment diverges.
        """
        d = _check_dim(d)
        radius = float(radius)
        if not radius > 0:
            raise KernelError("radius must be positive (or inf)")
        k = cls(dim=d, kind="custom", profile_fn=profile, radius=radius)
        k._check_admissible()
        moment = _custom_moment(k)
        if not moment.finite:
            raise KernelError("kernel second moment is not finite")
        object.__setattr__(k, "truncation_radius", moment.truncation_radius)
        return k

    @property
    def effective_radius(self):
        """Interaction radius: the support radius, or the tail-truncation radius."""
        return self.radius if math.isfinite(self.radius) else self.truncation_radius

    def breakpoints(self):
        """``(radii, heights)`` with ``eta(t) = heights[k]`` on ``[radii[k-1], radii[k])``."""
        if self.kind == "custom":
            raise KernelError("custom kernels have no step representation")
        radii = np.array([b for b, _ in self.steps])
        c = np.array([c for _, c in self.steps])
        heights = np.cumsum(c[::-1])[::-1]
        return radii, heights

    def profile(self, t):
        """Evaluate eta at radii ``t`` (strict inequality: eta(b) = 0 at a step)."""
        t = np.asarray(t, dtype=float)
        if self.kind == "custom":
            out = np.asarray(self.profile_fn(t), dtype=float)
            if math.isfinite(self.radius):
                out = np.where(t < self.radius, out, 0.0)
            return out
        out = np.zeros_like(t)
        for b, c in self.steps:
            out = out + np.where(t < b, c, 0.0)
        return out

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.profile(np.linalg.norm(x, axis=-1))

    def rescale(self, eps):
        """Return the evaluator ``x -> eps^-d eta(|x| / eps)``."""
        return rescale(self, eps)

    def scaled(self, s):
        """Kernel with profile multiplied by ``s > 0``."""
        if not s > 0:
            raise KernelError("scale must be positive")
        if self.kind == "custom":
            fn = self.profile_fn
            return Kernel.custom(lambda t: s * np.asarray(fn(t)), d=self.dim, radius=self.radius)
        steps = tuple((b, s * c) for b, c in self.steps)
        return Kernel(dim=self.dim, kind=self.kind, steps=steps, radius=self.radius,
                      truncation_radius=self.truncation_radius)

    def _check_admissible(self):
        eta0 = float(self.profile(np.array([0.0]))[0])
        if not eta0 > 0:
            raise KernelError("eta(0) must be positive")
        near = self.profile(np.array([1e-9, 1e-7]))
        if np.any(np.abs(near - eta0) > 1e-5 * eta0):
            raise KernelError("eta must be continuous at 0")
        top = self.radius if math.isfinite(self.radius) else _CUSTOM_SCAN_RADIUS
        grid = np.linspace(0.0, top, MONOTONE_CHECK_RADII, endpoint=not math.isfinite(self.radius))
        vals = self.profile(grid)
        if np.any(~np.isfinite(vals)) or np.any(vals < 0):
            raise KernelError("eta must be finite and non-negative")
        if np.any(np.diff(vals) > 1e-12 * eta0):
            raise KernelError("eta must be non-increasing")

    def describe(self):
        rec = {"kind": self.kind, "d": self.dim}
        if self.kind == "indicator":
            rec.update(b=self.steps[0][0], c=self.steps[0][1])
        elif self.kind == "piecewise":
            rec["steps"] = [list(s) for s in self.steps]
        else:
            rec["truncation_radius"] = self.truncation_radius
        return rec


def _check_dim(d):
    d = int(d)
    if d < 1:
        raise KernelError("dimension must be a positive integer")
    return d


def rescale(k, eps):
    if not eps > 0:
        raise ArgumentError(f"eps must be positive, got {eps}")
    d = k.dim
    scale = eps ** (-d)

    def eta_eps(x):
        x = np.asarray(x, dtype=float)
        if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
            r = np.abs(x)
        else:
            r = np.linalg.norm(x, axis=-1)
        return scale * k.profile(r / eps)

    return eta_eps


def _radial_integrand(k, power):
    return lambda r: float(k.profile(np.array([r]))[0]) * r**power


def _custom_moment(k):
    """Radial moment int_0^inf eta(r) r^(d+1) dr and the tail truncation radius."""
    d = k.dim
    f = _radial_integrand(k, d + 1)
    top = k.radius
    if math.isfinite(top):
        total, err = integrate.quad(f, 0.0, top, limit=200)
        return MomentResult(total, err, True, top)
    # Doubling scan; diverging tails keep adding mass at every octave.
    pieces = []
    lo, hi = 0.0, 1.0
    total = err = 0.0
    while hi < 2.0**40:
        part, perr = integrate.quad(f, lo, hi, limit=200)
        pieces.append((hi, part))
        total += part
        err += perr
        if len(pieces) > 6 and part <= TAIL_FRACTION * 1e-2 * max(total, 1e-300):
            break
        lo, hi = hi, 2.0 * hi
    else:
        return MomentResult(math.inf, math.inf, False, math.inf)
    if not math.isfinite(total) or total <= 0:
        return MomentResult(math.inf, math.inf, False, math.inf)
    # Smallest octave boundary whose tail falls below the threshold, then bisection.
    cum = np.cumsum([p for _, p in pieces])
    tail_after = total - cum
    idx = int(np.argmax(tail_after < TAIL_FRACTION * total))
    r_hi = pieces[idx][0]
    r_lo = pieces[idx - 1][0] if idx > 0 else 0.0
    for _ in range(60):
        mid = 0.5 * (r_lo + r_hi)
        inner, _ = integrate.quad(f, 0.0, mid, limit=200)
        if total - inner < TAIL_FRACTION * total:
            r_hi = mid
        else:
            r_lo = mid
        if r_hi - r_lo < 1e-10 * r_hi:
            break
    return MomentResult(total, err, True, r_hi)


def radial_moment(k):
    """``int_0^inf eta(r) r^(d+1) dr`` as a :class:`MomentResult`."""
    if k.kind == "custom":
        return _custom_moment(k)
    p = k.dim + 2
    value = sum(c * b**p for b, c in k.steps) / p
    return MomentResult(value, 0.0, True, k.radius)


def second_moment(k, quad=None):
    """``int_{R^d} eta(x) |x|^2 dx``; ``finite`` is False when the tail diverges."""
    m = radial_moment(k)
    if not m.finite:
        return m
    area = sphere_area(k.dim)
    return MomentResult(area * m.value, area * m.error_estimate, True, m.truncation_radius)


def _sphere_rule(d, quad):
    """Nodes and weights on S^(d-1) for d <= 3."""
    if d == 1:
        return np.array([[1.0], [-1.0]]), np.array([1.0, 1.0])
    if d == 2:
        m = quad.angular_nodes
        th = 2.0 * np.pi * np.arange(m) / m
        return np.stack([np.cos(th), np.sin(th)], axis=1), np.full(m, 2.0 * np.pi / m)
    if d == 3:
        z, wz = np.polynomial.legendre.leggauss(quad.polar_nodes)
        m = quad.angular_nodes
        ph = 2.0 * np.pi * np.arange(m) / m
        s = np.sqrt(1.0 - z**2)
        nodes = np.stack([
            np.outer(s, np.cos(ph)).ravel(),
            np.outer(s, np.sin(ph)).ravel(),
            np.repeat(z, m),
        ], axis=1)
        return nodes, np.repeat(wz, m) * (2.0 * np.pi / m)
    raise ArgumentError("polar rule only available for d <= 3")


def _quadratic_forms(a, nodes):
    # a: (..., d, d) symmetric, nodes: (m, d) -> (..., m)
    return np.einsum("...ij,mi,mj->...m", a, nodes, nodes)


def _angular(a, d, quad):
    nodes, w = _sphere_rule(d, quad)
    vals = np.abs(_quadratic_forms(a, nodes)) @ w
    if d == 1:
        return vals, np.zeros_like(vals), 2
    if d == 2:
        # Halved trapezoid rule reuses every other node.
        coarse = np.abs(_quadratic_forms(a, nodes[::2])) @ (2.0 * w[::2])
        return vals, np.abs(vals - coarse), len(w)
    coarse_q = QuadratureSpec(angular_nodes=max(quad.angular_nodes // 2, 1),
                              polar_nodes=max(quad.polar_nodes // 2, 1))
    cn, cw = _sphere_rule(d, coarse_q)
    coarse = np.abs(_quadratic_forms(a, cn)) @ cw
    return vals, np.abs(vals - coarse), len(w)


def _mc_phi(k, a, quad):
    d = k.dim
    radius = k.effective_radius
    rng = np.random.default_rng(quad.seed)
    g = rng.standard_normal((quad.mc_nodes, d))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    r = radius * rng.random(quad.mc_nodes) ** (1.0 / d)
    xi = g * r[:, None]
    vol = ball_volume(d, radius)
    weights = k.profile(r)
    samples = vol * weights * np.abs(_quadratic_forms(a, xi))
    value = samples.mean(axis=-1)
    se = samples.std(axis=-1, ddof=1) / math.sqrt(quad.mc_nodes) if quad.mc_nodes > 1 else np.inf
    return value, se, quad.mc_nodes


def phi_eta_batch(k, matrices, quad=None):
    """Vectorised :func:`phi_eta` over a stack of matrices ``(..., d, d)``.

    Returns ``(values, error_estimates, nodes)``; all matrices share one node set.
    """
    quad = quad or QuadratureSpec()
    a = SymMatrix(matrices).array
    if a.shape[-1] != k.dim:
        raise ArgumentError(f"matrix dimension {a.shape[-1]} != kernel dimension {k.dim}")
    if quad.resolved(k.dim) == "mc":
        return _mc_phi(k, a, quad)
    m = radial_moment(k)
    if not m.finite:
        raise InfeasibleIntegralError("kernel second moment is infinite")
    ang, ang_err, nodes = _angular(a, k.dim, quad)
    value = m.value * ang
    err = m.value * ang_err + m.error_estimate * ang
    return value, err, nodes


def phi_eta(k, matrix, quad=None):
    """Anisotropic norm ``int eta(xi) |A xi . xi| dxi`` of the symmetric part of ``matrix``."""
    a = SymMatrix(matrix)
    if a.array.ndim != 2:
        raise ArgumentError("phi_eta takes a single matrix; use phi_eta_batch for stacks")
    v, e, n = phi_eta_batch(k, a.array, quad)
    return QuadResult(float(v), float(e), int(n))
