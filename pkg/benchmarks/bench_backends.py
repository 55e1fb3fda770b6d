"""Compare the numba and pure-numpy backends on the hot kernels.

Usage::

    python benchmarks/bench_backends.py [--sizes 1024 4096 16384] [--repeat 3]

Prints one JSON line per (kernel, n, backend) with the best wall time over
``--repeat`` runs after one untimed warm-up call, so numba compile time is
excluded.
"""
import argparse
import json
import time

import numpy as np

from bdgraphtv._accel import HAVE_NUMBA
from bdgraphtv.continuum import LinearField
from bdgraphtv.domain import Density, Domain, sample
from bdgraphtv.graph_energy import gtv_celllist, gtv_naive
from bdgraphtv.kernels import Kernel
from bdgraphtv.slicing import verify_slicing_identity

SQUARE = Domain.unit_cube(2)
UNIFORM = Density.uniform(SQUARE)
KERNEL = Kernel.indicator(1.0, 1.0, 2)
NAIVE_LIMIT = 4096


def best_time(fn, repeat):
    fn()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        value = fn()
        times.append(time.perf_counter() - t0)
    return min(times), value


def cases(n):
    cloud = sample(SQUARE, UNIFORM, n, seed=0)
    u = LinearField(np.eye(2))(cloud.points)
    eps = 0.6 * (np.log(n) / n) ** 0.25
    yield "gtv_celllist", lambda b: gtv_celllist(cloud, u, KERNEL, eps, backend=b).value
    if n <= NAIVE_LIMIT:
        yield "gtv_naive", lambda b: gtv_naive(cloud, u, KERNEL, eps, backend=b).value
    lines = 16 * n
    yield "slicing_rhs", lambda b: verify_slicing_identity(
        LinearField(np.eye(2)), SQUARE, UNIFORM, KERNEL, 0.1, lines, 0, backend=b).rhs


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--sizes", type=int, nargs="+", default=[1024, 4096, 16384])
    p.add_argument("--repeat", type=int, default=3)
    args = p.parse_args(argv)
    backends = ["numba", "numpy"] if HAVE_NUMBA else ["numpy"]
    for n in args.sizes:
        for name, run in cases(n):
            timings = {}
            values = {}
            for b in backends:
                timings[b], values[b] = best_time(lambda: run(b), args.repeat)
            rec = {"kernel": name, "n": n, **{f"{b}_s": round(t, 5) for b, t in timings.items()}}
            if len(backends) == 2:
                rec["speedup"] = round(timings["numpy"] / timings["numba"], 2)
                rec["rel_diff"] = abs(values["numba"] - values["numpy"]) / max(abs(values["numpy"]), 1e-300)
            print(json.dumps(rec))


if __name__ == "__main__":
    main()
