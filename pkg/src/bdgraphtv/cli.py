"""Command-line entry point ``bdgraphtv``."""
import argparse
import csv
import json
import sys

from .continuum import tv_eta
from .domain import EmpiricalMeasure
from .errors import ArgumentError, ConfigError
from .experiments import ExperimentConfig, run_from_config, transport_diagnostics
from .graph_energy import gtv_celllist, gtv_naive
from .io import read_points_csv
from .kernels import Kernel
from .slicing import verify_slicing_identity
from .transport import ScalingDiagnostics, tl1_distance


def _emit(record):
    print(json.dumps(record, sort_keys=True))


def _load_pair(points_path, field_path):
    pts, meta = read_points_csv(points_path)
    vals, _ = read_points_csv(field_path)
    seed = None if meta is None else meta.get("seed")
    return vals, EmpiricalMeasure(pts, seed=seed)


def cmd_run(args):
    cfg = ExperimentConfig.from_toml(args.config)
    if args.out:
        cfg.outputs = args.out
    result, paths = run_from_config(cfg)
    _emit({"rows": len(result.rows), "tv_eta": result.target,
           "outputs": {k: str(v) for k, v in paths.items()}})


def cmd_gtv(args):
    pts, _ = read_points_csv(args.points)
    vals, _ = read_points_csv(args.field)
    k = Kernel.indicator(args.c, args.b, pts.shape[1])
    fn = gtv_naive if args.naive else gtv_celllist
    _emit(fn(pts, vals, k, args.eps).as_record())


def cmd_tl1(args):
    a = _load_pair(args.points_a, args.field_a)
    b = _load_pair(args.points_b, args.field_b)
    _emit(tl1_distance(a, b, solver=args.solver, reg=args.reg).as_record())


def cmd_tv_eta(args):
    cfg = ExperimentConfig.from_toml(args.config)
    _emit(tv_eta(cfg.field, cfg.domain, cfg.density, cfg.kernel).as_record())


def cmd_slice_check(args):
    cfg = ExperimentConfig.from_toml(args.config)
    eps_values = args.eps or [0.1, 0.05]
    for eps in eps_values:
        rep = verify_slicing_identity(cfg.field, cfg.domain, cfg.density, cfg.kernel, eps,
                                      args.mc_nodes, args.seed)
        _emit({"eps": eps, **rep.as_record()})


def cmd_transport(args):
    cfg = ExperimentConfig.from_toml(args.config)
    rows = transport_diagnostics(cfg)
    out = open(args.out, "w", newline="") if args.out else sys.stdout
    try:
        w = csv.writer(out, lineterminator="\n")
        w.writerow(ScalingDiagnostics.FIELDS)
        for r in rows:
            w.writerow([repr(v) for v in r.as_row()])
    finally:
        if args.out:
            out.close()


def build_parser():
    p = argparse.ArgumentParser(prog="bdgraphtv",
                                description="Graph symmetric total variation experiments")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("run", help="run a convergence study from a TOML config")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="override the output directory")
    s.set_defaults(func=cmd_run)

    s = sub.add_parser("gtv", help="graph energy of a field on a point cloud")
    s.add_argument("--points", required=True, help="CSV with header x0,...")
    s.add_argument("--field", required=True, help="CSV with one row of field values per point")
    s.add_argument("--eps", type=float, required=True)
    s.add_argument("--c", type=float, default=1.0, help="indicator kernel height")
    s.add_argument("--b", type=float, default=1.0, help="indicator kernel radius")
    s.add_argument("--naive", action="store_true", help="use the O(n^2) evaluator")
    s.set_defaults(func=cmd_gtv)

    s = sub.add_parser("tl1", help="TL1 distance between two (cloud, field) pairs")
    for tag in ("a", "b"):
        s.add_argument(f"--points-{tag}", required=True)
        s.add_argument(f"--field-{tag}", required=True)
    s.add_argument("--solver", choices=["exact", "lp", "sinkhorn"], default="exact")
    s.add_argument("--reg", type=float, default=1e-2)
    s.set_defaults(func=cmd_tl1)

    s = sub.add_parser("tv-eta", help="continuum energy of the configured field")
    s.add_argument("--config", required=True)
    s.set_defaults(func=cmd_tv_eta)

    s = sub.add_parser("slice-check", help="compare the energy with its slicing decomposition")
    s.add_argument("--config", required=True)
    s.add_argument("--eps", type=float, action="append")
    s.add_argument("--mc-nodes", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_slice_check)

    s = sub.add_parser("transport-diagnostics", help="map scaling ratios along the schedule")
    s.add_argument("--config", required=True)
    s.add_argument("--out", help="CSV path (default: stdout)")
    s.set_defaults(func=cmd_transport)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        args.func(args)
    except (ArgumentError, ConfigError, OSError) as exc:
        print(f"bdgraphtv: error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
