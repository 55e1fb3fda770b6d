"""Convergence study of the graph energy towards its continuum limit.

A study samples i.i.d. clouds for every ``(n, seed)`` in the schedule,
evaluates the graph energy of ``u`` restricted to the cloud with bandwidth
``eps_n``, and compares it with the continuum value. Configs are TOML files;
see the README for the schema.
"""
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
import json
import math
import os
from pathlib import Path
import sys
import tempfile
import time

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from ._accel import thread_cap
from .continuum import LinearField, PiecewiseRigidField, rigid_motion, tv_eta
from .domain import Density, Domain, grid_reference, sample
from .errors import ArgumentError, ConfigError, ResolutionError
from .graph_energy import gtv_celllist
from .io import write_table
from .kernels import Kernel, phi_eta
from .transport import ScalingDiagnostics, build_transport_map, scaling_diagnostics

RESULT_FIELDS = ("n", "eps", "seed", "gtv", "tv_eta", "rel_err", "wallclock_ms")
RATIO_SPREAD_LIMIT = 10.0
_MONOTONE_RTOL = 1e-9


# ---------------------------------------------------------------- bandwidth rules


def regime_ratio(n, eps, d):
    """``(log n)^(1/d) n^(-1/d) eps^-2``; bounded along admissible schedules."""
    n = np.asarray(n, dtype=float)
    eps = np.asarray(eps, dtype=float)
    return (np.log(n) / n) ** (1.0 / d) / eps**2


@dataclass(frozen=True)
class PowerLaw:
    """``eps_n = c ((log n) / n)^exponent``."""

    c: float
    exponent: float

    def eps(self, n_schedule):
        n = np.asarray(n_schedule, dtype=float)
        return self.c * (np.log(n) / n) ** self.exponent

    def describe(self):
        return {"kind": "power_law", "c": self.c, "exponent": self.exponent}


@dataclass(frozen=True)
class Explicit:
    """One bandwidth per schedule entry."""

    values: tuple

    def eps(self, n_schedule):
        if len(self.values) != len(n_schedule):
            raise ConfigError(f"explicit eps list has {len(self.values)} entries for "
                              f"{len(n_schedule)} sample sizes")
        return np.asarray(self.values, dtype=float)

    def describe(self):
        return {"kind": "explicit", "values": list(self.values)}


def validate_eps_rule(rule, n_schedule, d):
    """Check the bandwidth regime on the schedule; returns the ratio values.

    Power laws must give a non-increasing ratio (equivalently
    ``exponent <= 1/(2d)``), so the ratio stays bounded as ``n`` grows.
    Explicit lists are accepted when the ratio is non-increasing or its
    max/min spread is at most 10.
    """
    eps = rule.eps(n_schedule)
    if np.any(~np.isfinite(eps)) or np.any(eps <= 0):
        raise ConfigError("bandwidths must be positive and finite")
    if isinstance(rule, PowerLaw) and not rule.exponent > 0:
        raise ConfigError("power-law exponent must be positive so that eps_n -> 0")
    ratios = regime_ratio(n_schedule, eps, d)
    shown = ", ".join(f"n={n}: {r:.4g}" for n, r in zip(n_schedule, ratios))
    increasing = np.any(ratios[1:] > ratios[:-1] * (1 + _MONOTONE_RTOL))
    if isinstance(rule, PowerLaw):
        if increasing:
            raise ConfigError(
                f"eps rule shrinks too fast: (log n)^(1/d) n^(-1/d) eps^-2 grows along the "
                f"schedule ({shown}); need exponent <= 1/(2d) = {1 / (2 * d):.4g}")
    elif increasing and ratios.max() / ratios.min() > RATIO_SPREAD_LIMIT:
        raise ConfigError(
            f"eps list shrinks too fast: (log n)^(1/d) n^(-1/d) eps^-2 grows by "
            f"{ratios.max() / ratios.min():.3g}x along the schedule ({shown})")
    return ratios


# ---------------------------------------------------------------- config


@dataclass
class ExperimentConfig:
    domain: Domain
    density: Density
    kernel: Kernel
    field: object
    n_schedule: tuple
    eps_rule: object
    seeds: tuple
    outputs: Path
    timing: bool = True
    interior: bool = True
    transport: bool = False
    workers: int = 0
    raw: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self.n_schedule:
            raise ConfigError("n_schedule is empty")
        for n in self.n_schedule:
            if n < 2 or n & (n - 1):
                raise ConfigError(f"n_schedule must list powers of two >= 2, got {n}")
        if not self.seeds:
            raise ConfigError("seeds list is empty")
        d = self.domain.dim
        if self.kernel.dim != d or self.field.dim != d:
            raise ConfigError("domain, kernel and field dimensions must agree")
        self.ratios = validate_eps_rule(self.eps_rule, list(self.n_schedule), d)
        self.eps = self.eps_rule.eps(list(self.n_schedule))

    @classmethod
    def from_toml(cls, path):
        path = Path(path)
        try:
            data = tomllib.loads(path.read_text())
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"{path}: {exc}") from None
        out = data.get("output", {}).get("dir", "results")
        data.setdefault("output", {})["dir"] = str((path.parent / out).resolve())
        return cls.from_dict(data)

    @classmethod
    def from_dict(cls, data):
        try:
            dom = parse_domain(data["domain"])
            rho = parse_density(data.get("density", {"kind": "uniform"}), dom)
            k = parse_kernel(data["kernel"], dom.dim)
            u = parse_field(data["field"], dom.dim)
            sched = data["schedule"]
            n_schedule = tuple(int(n) for n in sched["n"])
            seeds = tuple(int(s) for s in sched["seeds"])
            rule = parse_eps_rule(data["eps_rule"])
            opts = data.get("output", {})
            tr = data.get("transport", {})
        except KeyError as exc:
            raise ConfigError(f"missing config key {exc}") from None
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from None
        return cls(dom, rho, k, u, n_schedule, rule, seeds, Path(opts.get("dir", "results")),
                   timing=bool(opts.get("timing", True)), interior=bool(opts.get("interior", True)),
                   transport=bool(tr.get("diagnostics", False)),
                   workers=int(data.get("workers", 0)), raw=data)


def parse_domain(spec):
    kind = spec.get("kind", "box")
    if kind == "box":
        return Domain.box(spec["lo"], spec["hi"])
    if kind == "ball":
        return Domain.ball(spec["center"], spec["radius"])
    raise ConfigError(f"unknown domain kind {kind!r}")


def parse_density(spec, dom):
    kind = spec.get("kind", "uniform")
    if kind == "uniform":
        return Density.uniform(dom)
    if kind == "constant":
        return Density.constant_value(dom, float(spec["value"]))
    raise ConfigError(f"unknown density kind {kind!r} (config supports uniform and constant)")


def parse_kernel(spec, d):
    if int(spec.get("d", d)) != d:
        raise ConfigError(f"kernel dimension {spec['d']} does not match the domain ({d})")
    kind = spec.get("kind", "indicator")
    if kind == "indicator":
        return Kernel.indicator(float(spec.get("c", 1.0)), float(spec.get("b", 1.0)), d)
    if kind in ("piecewise", "piecewise_constant"):
        return Kernel.piecewise_constant([tuple(s) for s in spec["steps"]], d)
    raise ConfigError(f"unknown kernel kind {kind!r}")


def _piece(spec, d):
    return (np.asarray(spec.get("M", np.zeros((d, d))), float),
            np.asarray(spec.get("c", np.zeros(d)), float))


def parse_field(spec, d):
    kind = spec["kind"]
    if kind == "linear":
        return LinearField(np.asarray(spec["A"], float), spec.get("c"))
    if kind == "rigid":
        return rigid_motion(spec.get("c", [0.0] * d), spec["W"])
    if kind == "jump":
        if "jump" in spec:
            return PiecewiseRigidField.step(spec["normal"], spec["offset"], spec["jump"])
        return PiecewiseRigidField(spec["normal"], spec["offset"], _piece(spec["minus"], d),
                                   _piece(spec["plus"], d))
    raise ConfigError(f"unknown field kind {kind!r} (config supports linear, rigid and jump)")


def parse_eps_rule(spec):
    kind = spec.get("kind", "power_law")
    if kind == "power_law":
        return PowerLaw(float(spec.get("c", 0.6)), float(spec["exponent"]))
    if kind == "explicit":
        return Explicit(tuple(float(v) for v in spec["values"]))
    raise ConfigError(f"unknown eps rule {kind!r}")


# ---------------------------------------------------------------- study


@dataclass(frozen=True)
class ConvergenceRow:
    n: int
    eps: float
    seed: int
    gtv_value: float
    tv_eta_value: float
    rel_err: float
    wallclock: float
    flag: str = ""

    def as_record(self):
        return {"n": self.n, "eps": repr(self.eps), "seed": self.seed,
                "gtv": repr(self.gtv_value), "tv_eta": repr(self.tv_eta_value),
                "rel_err": repr(self.rel_err), "wallclock_ms": repr(self.wallclock)}


def relative_error(gtv_value, tv_value):
    """``|gtv - tv| / tv``; when ``tv == 0`` the absolute value ``gtv`` is returned and flagged."""
    if tv_value == 0:
        return abs(gtv_value), "tv_zero"
    return abs(gtv_value - tv_value) / max(tv_value, 1e-15), ""


@dataclass
class StudyResult:
    rows: list
    interior_rows: list
    diagnostics: list
    target: object
    notes: list


def _row_task(cfg, n, eps, seed, target, interior_target):
    t0 = time.perf_counter()
    cloud = sample(cfg.domain, cfg.density, n, seed)
    vals = cfg.field(cloud.points)
    g = gtv_celllist(cloud, vals, cfg.kernel, eps).value
    wall = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
    rel, flag = relative_error(g, target)
    row = ConvergenceRow(n, float(eps), seed, g, target, rel, wall, flag)
    inner = None
    if interior_target is not None:
        t0 = time.perf_counter()
        shrunk = cfg.domain.shrink(cfg.kernel.effective_radius * eps)
        gi = gtv_celllist(cloud, vals, cfg.kernel, eps, anchors=shrunk.contains(cloud.points)).value
        wall_i = (time.perf_counter() - t0) * 1e3 if cfg.timing else 0.0
        rel_i, flag_i = relative_error(gi, interior_target)
        inner = ConvergenceRow(n, float(eps), seed, gi, interior_target, rel_i, wall_i, flag_i)
    return row, inner


def _failed_row(n, eps, seed, target, exc):
    nan = float("nan")
    return ConvergenceRow(n, float(eps), seed, nan, target, nan, 0.0,
                          f"error: {type(exc).__name__}: {exc}")


def run_convergence_study(cfg, workers=None):
    """Evaluate every ``(n, seed)`` row; rows come back in schedule order.

    Rows run in a thread pool capped by ``BDGRAPHTV_THREADS``; a failing row
    is recorded with NaN values and a flag instead of aborting the study.
    """
    target = tv_eta(cfg.field, cfg.domain, cfg.density, cfg.kernel).value
    interior_targets = {}
    notes = []
    if cfg.interior:
        for n, eps in zip(cfg.n_schedule, cfg.eps):
            try:
                shrunk = cfg.domain.shrink(cfg.kernel.effective_radius * eps)
                interior_targets[n] = tv_eta(cfg.field, shrunk, cfg.density, cfg.kernel).value
            except ArgumentError as exc:
                notes.append(f"n={n}: interior variant skipped ({exc})")
    # Compile the kernels before any row is timed.
    probe = cfg.domain.sample_uniform(np.random.default_rng(0), 8)
    gtv_celllist(probe, cfg.field(probe), cfg.kernel, float(cfg.eps[0]))
    jobs = [(n, eps, s) for n, eps in zip(cfg.n_schedule, cfg.eps) for s in cfg.seeds]
    pool = workers or cfg.workers or thread_cap()
    pool = max(1, min(pool, thread_cap(), len(jobs)))

    def run(job):
        n, eps, s = job
        try:
            return _row_task(cfg, n, eps, s, target, interior_targets.get(n))
        except Exception as exc:  # per-row failures are recorded, not raised
            return _failed_row(n, eps, s, target, exc), None

    with ThreadPoolExecutor(max_workers=pool) as ex:
        results = list(ex.map(run, jobs))
    rows = [r for r, _ in results]
    interior_rows = [i for _, i in results if i is not None]
    notes += [f"n={r.n} seed={r.seed}: {r.flag}" for r in rows if r.flag]
    diagnostics = transport_diagnostics(cfg, notes) if cfg.transport else []
    return StudyResult(rows, interior_rows, diagnostics, target, notes)


def transport_diagnostics(cfg, notes=None):
    """Scaling diagnostics of MinSup maps from the reference grid onto the first-seed clouds."""
    out = []
    for n, eps in zip(cfg.n_schedule, cfg.eps):
        ref = grid_reference(cfg.domain, cfg.density, n)
        cloud = sample(cfg.domain, cfg.density, n, cfg.seeds[0])
        tmap = build_transport_map(ref, cloud, objective="minsup")
        try:
            out.append(scaling_diagnostics(tmap, float(eps)))
        except ResolutionError as exc:
            if notes is not None:
                notes.append(f"n={n}: transport diagnostics skipped ({exc})")
    return out


# ---------------------------------------------------------------- rates and reports


@dataclass(frozen=True)
class RateFit:
    slope: float
    intercept: float
    r2: float
    notes: tuple = ()

    def as_record(self):
        return {"slope": self.slope, "intercept": self.intercept, "r2": self.r2,
                "notes": list(self.notes)}


def median_by_n(rows):
    """``{n: (median rel_err, seed count)}`` ignoring failed rows."""
    groups = {}
    for r in rows:
        if math.isfinite(r.rel_err):
            groups.setdefault(r.n, []).append(r.rel_err)
    return {n: (float(np.median(v)), len(v)) for n, v in sorted(groups.items())}


def fit_rate(rows):
    """Least-squares fit of ``log(median rel_err)`` against ``log n``."""
    med = median_by_n(rows)
    if sum(1 for _, c in med.values() if c >= 3) < 3:
        raise ArgumentError("rate fit needs at least 3 sample sizes with at least 3 seeds each")
    notes = []
    xs, ys = [], []
    for n, (m, count) in med.items():
        if count < 3:
            notes.append(f"n={n}: only {count} seeds, skipped")
        elif m == 0:
            notes.append(f"n={n}: median rel_err is 0, skipped")
        else:
            xs.append(math.log(n))
            ys.append(math.log(m))
    if len(xs) < 2:
        raise ArgumentError("fewer than two usable points for the rate fit")
    x = np.array(xs)
    y = np.array(ys)
    slope, intercept = np.polyfit(x, y, 1)
    resid = y - (slope * x + intercept)
    ss_tot = float(np.sum((y - y.mean()) ** 2))
    r2 = 1.0 if ss_tot == 0 else 1.0 - float(resid @ resid) / ss_tot
    return RateFit(float(slope), float(intercept), r2, tuple(notes))


def preflight(out_dir):
    """Create ``out_dir`` and prove it is writable; raises OSError otherwise."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fd, probe = tempfile.mkstemp(dir=out, prefix=".probe")
    os.close(fd)
    os.unlink(probe)
    return out


def _plot(rows, path):
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    med = {n: m for n, (m, _) in median_by_n(rows).items() if m > 0}
    if not med:
        return False
    ns = np.array(list(med))
    ms = np.array(list(med.values()))
    # A fixed hash salt keeps the SVG element ids stable across runs.
    matplotlib.rcParams["svg.hashsalt"] = "bdgraphtv"
    fig, ax = plt.subplots(figsize=(5, 3.6))
    ax.loglog(ns, ms, "o-", label="median rel. error")
    if len(ns) >= 3:
        try:
            fit = fit_rate(rows)
            ax.loglog(ns, np.exp(fit.intercept) * ns**fit.slope, "--",
                      label=f"fit slope {fit.slope:.3f}")
        except ArgumentError:
            pass
    ax.set_xlabel("n")
    ax.set_ylabel("relative error")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)
    return True


def emit_report(rows, diagnostics, out_dir, interior_rows=None, meta=None):
    """Write results.csv, diagnostics.csv, the optional interior table, a JSON summary and the plot."""
    out = preflight(out_dir)
    paths = {"results": out / "results.csv", "diagnostics": out / "diagnostics.csv"}
    write_table(paths["results"], RESULT_FIELDS, [r.as_record() for r in rows])
    write_table(paths["diagnostics"], ScalingDiagnostics.FIELDS,
                [dict(zip(ScalingDiagnostics.FIELDS, map(repr, d.as_row()))) for d in diagnostics])
    if interior_rows is not None:
        paths["interior"] = out / "results_interior.csv"
        write_table(paths["interior"], RESULT_FIELDS, [r.as_record() for r in interior_rows])
    if meta is not None:
        paths["summary"] = out / "summary.json"
        paths["summary"].write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n")
    plot = out / "rel_err.svg"
    if rows and _plot(rows, plot):
        paths["plot"] = plot
    elif plot.exists():
        plot.unlink()
    return paths


def study_metadata(cfg, result):
    meta = {
        "domain": cfg.domain.describe(),
        "kernel": cfg.kernel.describe(),
        "phi_eta_identity": phi_eta(cfg.kernel, np.eye(cfg.domain.dim)).as_record(),
        "eps_rule": cfg.eps_rule.describe(),
        "eps": [float(e) for e in cfg.eps],
        "regime_ratio": [float(r) for r in cfg.ratios],
        "seeds": list(cfg.seeds),
        "tv_eta": result.target,
        "notes": result.notes,
    }
    try:
        meta["rate_fit"] = fit_rate(result.rows).as_record()
    except ArgumentError as exc:
        meta["rate_fit"] = {"skipped": str(exc)}
    return meta


def run_from_config(cfg):
    """Preflight the output directory, run the study and write the report."""
    preflight(cfg.outputs)
    result = run_convergence_study(cfg)
    paths = emit_report(result.rows, result.diagnostics, cfg.outputs,
                        interior_rows=result.interior_rows if cfg.interior else None,
                        meta=study_metadata(cfg, result))
    return result, paths
