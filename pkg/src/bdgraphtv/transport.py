"""TL1 distance between field/measure pairs, transport maps onto point clouds, and
the scaling diagnostics of those maps.

The continuum measure is represented by an n-point quantization
(:func:`bdgraphtv.domain.grid_reference`), so every map here is an assignment
between two uniformly weighted n-point measures.
"""
from dataclasses import dataclass, field
import math

import numpy as np
from scipy import optimize, sparse
from scipy.spatial import cKDTree
from scipy.special import logsumexp

from ._matching import max_bipartite_matching
from .errors import ArgumentError, ResolutionError, SinkhornConvergenceError, UnsupportedError

EXACT_DENSE_LIMIT = 4096
MARGINAL_TOL = 1e-9


@dataclass(frozen=True, eq=False)
class TransportPlan:
    """Coupling between two empirical measures (sparse, rows = source atoms)."""

    source: object
    target: object
    coupling: sparse.csr_matrix

    def __post_init__(self):
        c = sparse.csr_matrix(self.coupling)
        if c.shape != (self.source.n, self.target.n):
            raise ArgumentError("coupling shape does not match the measures")
        if c.nnz and c.data.min() < -MARGINAL_TOL:
            raise ArgumentError("coupling has negative mass")
        rows = np.asarray(c.sum(axis=1)).ravel()
        cols = np.asarray(c.sum(axis=0)).ravel()
        if (np.max(np.abs(rows - self.source.weights)) > MARGINAL_TOL
                or np.max(np.abs(cols - self.target.weights)) > MARGINAL_TOL):
            raise ArgumentError("coupling violates the marginal constraints")
        object.__setattr__(self, "coupling", c)

    def cost(self, cost_matrix):
        c = self.coupling.tocoo()
        return float(np.sum(c.data * cost_matrix[c.row, c.col]))


@dataclass(frozen=True)
class TL1Result:
    value: float
    solver: str
    lower_bound: float
    plan: object = field(default=None, repr=False, compare=False)

    @property
    def gap(self):
        return self.value - self.lower_bound

    def __float__(self):
        return self.value

    def as_record(self):
        return {"distance": self.value, "solver": self.solver, "gap": self.gap}


def _as_pair(item):
    values, measure = item
    v = np.asarray(values, dtype=float)
    if v.ndim == 1:
        v = v[:, None]
    if v.shape[0] != measure.n:
        raise ArgumentError(f"field has {v.shape[0]} values for {measure.n} atoms")
    return v, measure


def tl1_cost_matrix(a, b):
    """``C_ij = |x_i - y_j| + |w1_i - w2_j|`` for ``a = (w1, mu1)`` and ``b = (w2, mu2)``."""
    wa, ma = _as_pair(a)
    wb, mb = _as_pair(b)
    dx = np.linalg.norm(ma.points[:, None, :] - mb.points[None, :, :], axis=-1)
    dw = np.linalg.norm(wa[:, None, :] - wb[None, :, :], axis=-1)
    return dx + dw


def _assignment_plan(ma, mb, rows, cols):
    n = ma.n
    coupling = sparse.csr_matrix((np.full(n, 1.0 / n), (rows, cols)), shape=(n, mb.n))
    return TransportPlan(ma, mb, coupling)


def _exact_assignment(cost, ma, mb):
    if ma.n != mb.n:
        raise ArgumentError("exact assignment needs equal atom counts")
    rows, cols = optimize.linear_sum_assignment(cost)
    value = float(cost[rows, cols].sum() / ma.n)
    return TL1Result(value, "exact", value, _assignment_plan(ma, mb, rows, cols))


def _lp(cost, ma, mb):
    n, m = cost.shape
    a, b = ma.weights, mb.weights
    rows = sparse.kron(sparse.eye(n), np.ones((1, m)))
    cols = sparse.kron(np.ones((1, n)), sparse.eye(m))
    a_eq = sparse.vstack([rows, cols]).tocsr()
    b_eq = np.concatenate([a, b])
    res = optimize.linprog(cost.ravel(), A_eq=a_eq, b_eq=b_eq, bounds=(0, None), method="highs")
    if res.status != 0:
        raise RuntimeError(f"LP solver failed: {res.message}")
    p = np.maximum(res.x.reshape(n, m), 0.0)
    p[p < 1e-15] = 0.0
    return TL1Result(float(res.fun), "lp", float(res.fun), TransportPlan(ma, mb, sparse.csr_matrix(p)))


def _round_to_marginals(p, a, b):
    """Project a positive matrix onto the transport polytope (Altschuler et al. rounding)."""
    x = np.minimum(a / p.sum(axis=1), 1.0)
    p = p * x[:, None]
    y = np.minimum(b / p.sum(axis=0), 1.0)
    p = p * y[None, :]
    ea = a - p.sum(axis=1)
    eb = b - p.sum(axis=0)
    if ea.sum() > 0:
        p = p + np.outer(ea, eb) / ea.sum()
    return p


def sinkhorn(cost, a, b, reg, max_iter=200_000, tol=1e-6):
    """Log-domain Sinkhorn with a certified bracket on the exact transport cost.

    Returns ``(upper, lower, plan, iterations)`` where ``upper`` is the cost of
    the Sinkhorn plan rounded onto the exact marginals and ``lower`` is the dual
    objective of the c-transformed potentials, so ``lower <= OT <= upper``.
    ``tol`` bounds the L1 marginal violation before rounding; the rounded plan
    is feasible either way, so the bracket holds at any tolerance.
    """
    if not reg > 0:
        raise ArgumentError("Sinkhorn regularisation must be positive")
    loga, logb = np.log(a), np.log(b)
    f = np.zeros(len(a))
    g = np.zeros(len(b))
    # Anneal the regularisation by decades, warm-starting the potentials;
    # a cold start at small ``reg`` stalls on nearly tied assignments.
    schedule = [reg]
    while schedule[-1] * 10 < max(float(np.max(cost)), reg):
        schedule.append(schedule[-1] * 10)
    err = math.inf
    it = 0
    for stage, r in enumerate(reversed(schedule)):
        final = stage == len(schedule) - 1
        stage_tol = tol if final else max(tol, 1e-3)
        for step in range(1, max_iter + 1):
            it += 1
            f = r * (loga - logsumexp((g[None, :] - cost) / r, axis=1))
            g = r * (logb - logsumexp((f[:, None] - cost) / r, axis=0))
            if step % 10 == 0 or step == max_iter:
                p = np.exp((f[:, None] + g[None, :] - cost) / r)
                err = float(np.abs(p.sum(axis=1) - a).sum())
                if err < stage_tol:
                    break
    p = np.exp((f[:, None] + g[None, :] - cost) / reg)
    plan = _round_to_marginals(p, a, b)
    upper = float(np.sum(plan * cost))
    g_c = np.min(cost - f[:, None], axis=0)
    lower = float(a @ f + b @ g_c)
    if err >= tol:
        raise SinkhornConvergenceError(
            f"Sinkhorn did not converge in {it} iterations (marginal error {err:.2e}, "
            f"gap {upper - lower:.3e})", gap=upper - lower, iterations=it)
    return upper, lower, plan, it


def tl1_distance(a, b, solver="exact", reg=1e-2, max_iter=200_000, tol=1e-6):
    """TL1 distance ``inf_gamma iint |x - y| + |w1(x) - w2(y)| dgamma``.

    ``a`` and ``b`` are ``(values, EmpiricalMeasure)`` pairs. ``solver`` is
    ``"exact"`` (assignment; equal atom counts), ``"lp"`` (any counts) or
    ``"sinkhorn"`` (upper bound; ``lower_bound`` brackets the exact value).
    """
    wa, ma = _as_pair(a)
    wb, mb = _as_pair(b)
    if ma.dim != mb.dim:
        raise ArgumentError("measures live in different dimensions")
    cost = tl1_cost_matrix((wa, ma), (wb, mb))
    if solver == "exact":
        return _exact_assignment(cost, ma, mb)
    if solver == "lp":
        return _lp(cost, ma, mb)
    if solver == "sinkhorn":
        upper, lower, p, _ = sinkhorn(cost, ma.weights, mb.weights, reg, max_iter=max_iter,
                                      tol=tol)
        return TL1Result(upper, "sinkhorn", lower, TransportPlan(ma, mb, sparse.csr_matrix(p)))
    raise ArgumentError(f"unknown solver {solver!r}")


# ---------------------------------------------------------------- transport maps


@dataclass(frozen=True, eq=False)
class TransportMap:
    """Assignment of every source atom to a distinct target atom."""

    source: object
    target: object
    assignment: np.ndarray
    sup_displacement: float
    objective: str = "minsup"

    @property
    def images(self):
        return self.target.points[self.assignment]

    def displacements(self):
        return self.images - self.source.points

    def is_pushforward(self):
        return bool(np.array_equal(np.sort(self.assignment), np.arange(self.target.n)))


def _edges_within(src, dst, r):
    tree = cKDTree(dst)
    lists = tree.query_ball_point(src, r)
    counts = np.fromiter((len(l) for l in lists), dtype=np.int64, count=len(lists))
    rows = np.repeat(np.arange(len(src)), counts)
    cols = np.fromiter((j for l in lists for j in l), dtype=np.int64, count=int(counts.sum()))
    dist = np.linalg.norm(src[rows] - dst[cols], axis=1)
    return rows, cols, dist


def _perfect_matching(rows, cols, n):
    """Matching on the edge subset, or None when it is not perfect."""
    # rows arrive grouped in ascending order, so CSR is a cumulative count away.
    indptr = np.concatenate([[0], np.cumsum(np.bincount(rows, minlength=n))])
    match, size = max_bipartite_matching(indptr, cols, n, n)
    return match if size == n else None


def bottleneck_assignment(src, dst):
    """Perfect matching minimising the largest edge length.

    Binary search over candidate edge lengths, with a Hopcroft-Karp feasibility
    test on the graph of edges no longer than the candidate.
    Returns ``(threshold, assignment)``.
    """
    n = len(src)
    d_src, _ = cKDTree(dst).query(src)
    d_dst, _ = cKDTree(src).query(dst)
    lower = float(max(d_src.max(), d_dst.max()))
    r = lower
    while True:
        rows, cols, dist = _edges_within(src, dst, r * (1 + 1e-12))
        keep = dist <= r
        best = _perfect_matching(rows[keep], cols[keep], n)
        if best is not None:
            break
        r = max(1.5 * r, 1e-12)
    cand = np.unique(dist[(dist >= lower) & (dist <= r)])
    lo, hi = 0, len(cand) - 1
    while lo < hi:
        mid = (lo + hi) // 2
        keep = dist <= cand[mid]
        match = _perfect_matching(rows[keep], cols[keep], n)
        if match is not None:
            hi = mid
            best = match
        else:
            lo = mid + 1
    t = float(cand[lo])
    if np.linalg.norm(dst[best] - src, axis=1).max() > t:
        best = _perfect_matching(rows[dist <= t], cols[dist <= t], n)
    return t, best


def build_transport_map(reference, cloud, objective="minsup"):
    """Assign reference atoms to cloud atoms.

    ``"minsum"`` minimises the total Euclidean displacement (linear assignment,
    up to 4096 atoms); ``"minsup"`` minimises the largest displacement
    (bottleneck assignment).
    """
    if reference.n != cloud.n:
        raise ArgumentError(f"atom counts differ: {reference.n} vs {cloud.n}")
    if reference.dim != cloud.dim:
        raise ArgumentError("measures live in different dimensions")
    src, dst = reference.points, cloud.points
    n = reference.n
    if objective == "minsup":
        _, assignment = bottleneck_assignment(src, dst)
    elif objective == "minsum":
        if n > EXACT_DENSE_LIMIT:
            raise UnsupportedError(f"dense linear assignment is limited to {EXACT_DENSE_LIMIT} atoms")
        cost = np.linalg.norm(src[:, None, :] - dst[None, :, :], axis=-1)
        _, assignment = optimize.linear_sum_assignment(cost)
    else:
        raise ArgumentError(f"unknown objective {objective!r}")
    disp = np.linalg.norm(dst[assignment] - src, axis=1)
    return TransportMap(reference, cloud, np.asarray(assignment, dtype=np.int64),
                        float(disp.max()), objective)


@dataclass(frozen=True)
class ScalingDiagnostics:
    n: int
    eps: float
    sup_norm_ratio: float
    first_diff_ratio: float
    second_diff_ratio: float

    FIELDS = ("n", "eps", "sup_norm_ratio", "first_diff_ratio", "second_diff_ratio")

    def as_row(self):
        return [self.n, self.eps, self.sup_norm_ratio, self.first_diff_ratio, self.second_diff_ratio]


def default_probe_dirs(d):
    """Coordinate directions and the main diagonal, both signs (2d + 2 unit vectors)."""
    eye = np.eye(d)
    diag = np.ones((1, d)) / math.sqrt(d)
    dirs = np.concatenate([eye, -eye, diag, -diag]) if d > 1 else np.concatenate([eye, -eye])
    return dirs


def scaling_diagnostics(tmap, eps, probe_dirs=None):
    """Empirical counterparts of the map-regularity ratios.

    * ``sup_norm_ratio = n^(1/d) |Id - T|_inf / (log n)^(1/d)``
    * ``first_diff_ratio = |Id - T|_inf / eps``
    * ``second_diff_ratio = sup |T(x + eps v) - 2 T(x) + T(x - eps v)| / eps^2``

    The second difference is taken on the displacement ``T - Id`` at the
    reference atoms nearest to ``x +- eps v`` (the identity part has zero
    second difference); probes whose shifted points leave the domain are skipped.
    """
    if not eps > 0:
        raise ArgumentError("eps must be positive")
    src = tmap.source
    n, d = src.n, src.dim
    if n < 2:
        raise ArgumentError("scaling diagnostics need n >= 2")
    if src.cells is not None and eps < 2.0 * src.grid_spacing():
        raise ResolutionError(
            f"eps={eps:.4g} is below twice the reference grid spacing {src.grid_spacing():.4g}")
    sup = tmap.sup_displacement
    sup_ratio = n ** (1.0 / d) * sup / math.log(n) ** (1.0 / d)
    first = sup / eps
    dirs = default_probe_dirs(d) if probe_dirs is None else np.atleast_2d(np.asarray(probe_dirs, float))
    dirs = dirs / np.linalg.norm(dirs, axis=1, keepdims=True)
    disp = tmap.displacements()
    x = src.points
    tree = cKDTree(x)
    dom = src.domain
    second = 0.0
    for v in dirs:
        xp, xm = x + eps * v, x - eps * v
        ok = np.ones(n, dtype=bool) if dom is None else dom.contains(xp) & dom.contains(xm)
        if not np.any(ok):
            continue
        _, ip = tree.query(xp[ok])
        _, im = tree.query(xm[ok])
        dd = disp[ip] - 2.0 * disp[ok] + disp[im]
        second = max(second, float(np.linalg.norm(dd, axis=1).max()))
    return ScalingDiagnostics(n, float(eps), float(sup_ratio), float(first), second / eps**2)


@dataclass(frozen=True)
class ConvergingPairReport:
    ns: list
    transport_costs: list
    field_gaps: list
    lipschitz_ok: object
    passed: bool


def tl1_converging_pair_check(u, clouds, maps, lipschitz=None, factor=2.0):
    """Trend check of the map characterisation of TL1 convergence.

    For each map ``S_n`` from a reference quantization onto a cloud, computes
    ``int |x - S_n(x)| dnu`` and ``int |u(x) - u_n(S_n(x))| dnu`` with
    ``u_n = u`` at the cloud points. Passes when both sequences shrink by at
    least ``factor`` from the first to the last entry (a sequence that is
    identically zero counts as shrinking).
    """
    if len(clouds) != len(maps):
        raise ArgumentError("need one map per cloud")
    ns, costs, gaps = [], [], []
    lip_ok = None if lipschitz is None else True
    for cloud, m in zip(clouds, maps):
        if m.target is not cloud and not np.array_equal(m.target.points, cloud.points):
            raise ArgumentError("map target does not match the cloud")
        x = m.source.points
        sx = m.images
        cost = float(np.mean(np.linalg.norm(x - sx, axis=1)))
        ux = np.asarray(u(x), dtype=float).reshape(len(x), -1)
        un = np.asarray(u(cloud.points), dtype=float).reshape(cloud.n, -1)[m.assignment]
        pointwise = np.linalg.norm(ux - un, axis=1)
        gap = float(np.mean(pointwise))
        if lipschitz is not None:
            lip_ok = lip_ok and bool(np.all(pointwise <= lipschitz * np.linalg.norm(x - sx, axis=1)
                                            * (1 + 1e-12) + 1e-15))
        ns.append(m.source.n)
        costs.append(cost)
        gaps.append(gap)

    def shrinks(seq):
        if max(seq) == 0.0:
            return True
        return seq[-1] * factor <= seq[0]

    passed = len(ns) >= 2 and shrinks(costs) and shrinks(gaps)
    return ConvergingPairReport(ns, costs, gaps, lip_ok, passed)
