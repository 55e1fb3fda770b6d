"""CSV readers and writers for point clouds, fields and result tables."""
import csv
import json
from pathlib import Path

import numpy as np

from .errors import ArgumentError


def sidecar_path(path):
    path = Path(path)
    return path.with_name(path.name + ".meta.json")


def write_points_csv(path, array, prefix="x", meta=None):
    """Write an ``(n, d)`` array with header ``{prefix}0,...``; ``meta`` goes to a JSON sidecar."""
    array = np.atleast_2d(np.asarray(array, dtype=float))
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow([f"{prefix}{k}" for k in range(array.shape[1])])
        for row in array:
            w.writerow([repr(float(v)) for v in row])
    if meta is not None:
        sidecar_path(path).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")


def read_points_csv(path, prefix=None):
    """Read a CSV written by :func:`write_points_csv`; returns ``(array, meta_or_None)``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ArgumentError(f"{path} is empty") from None
        if prefix is not None:
            expected = [f"{prefix}{k}" for k in range(len(header))]
            if header != expected:
                raise ArgumentError(f"{path}: expected header {','.join(expected)}")
        rows = [[float(v) for v in r] for r in reader if r]
    array = np.array(rows, dtype=float).reshape(len(rows), len(header))
    side = sidecar_path(path)
    meta = json.loads(side.read_text()) if side.exists() else None
    return array, meta


def write_cloud_csv(path, cloud):
    """Point cloud CSV with the sampling seed recorded in the sidecar."""
    write_points_csv(path, cloud.points, "x", {"seed": cloud.seed, "n": cloud.n,
                                                "dim": cloud.dim})


def write_table(path, fields, rows):
    """Write dict rows with a fixed column order."""
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(fields), lineterminator="\n")
        w.writeheader()
        for row in rows:
            w.writerow({k: row[k] for k in fields})


def read_table(path):
    with Path(path).open(newline="") as fh:
        return list(csv.DictReader(fh))
