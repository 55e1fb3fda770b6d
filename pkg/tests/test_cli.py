import json
import math
import shutil

import numpy as np
import pytest

from bdgraphtv.cli import main
from bdgraphtv.graph_energy import gtv_naive
from bdgraphtv.io import write_points_csv
from bdgraphtv.kernels import Kernel

CONFIG = """
[domain]
kind = "box"
lo = [0.0, 0.0]
hi = [1.0, 1.0]
[kernel]
kind = "indicator"
[field]
kind = "jump"
normal = [1.0, 0.0]
offset = 0.5
jump = [1.0, 0.0]
[schedule]
n = [64, 128, 256]
seeds = [0, 1, 2]
[eps_rule]
kind = "power_law"
exponent = 0.25
[output]
dir = "out"
timing = false
"""


def records(capsys):
    return [json.loads(line) for line in capsys.readouterr().out.splitlines() if line]


@pytest.fixture
def cfg(tmp_path):
    path = tmp_path / "study.toml"
    path.write_text(CONFIG)
    return path


def test_gtv(tmp_path, capsys):
    rng = np.random.default_rng(0)
    x, u = rng.random((300, 2)), rng.standard_normal((300, 2))
    write_points_csv(tmp_path / "x.csv", x)
    write_points_csv(tmp_path / "u.csv", u, prefix="u")
    ref = gtv_naive(x, u, Kernel.indicator(1, 1, 2), 0.1).value
    for extra in ([], ["--naive"]):
        assert main(["gtv", "--points", str(tmp_path / "x.csv"), "--field",
                     str(tmp_path / "u.csv"), "--eps", "0.1", *extra]) == 0
        (rec,) = records(capsys)
        assert rec["value"] == pytest.approx(ref, rel=1e-12)


def test_tl1(tmp_path, capsys):
    write_points_csv(tmp_path / "xa.csv", [[0.0, 0.0]])
    write_points_csv(tmp_path / "ua.csv", [[1.0, 0.0]], prefix="u")
    write_points_csv(tmp_path / "xb.csv", [[3.0, 4.0]])
    write_points_csv(tmp_path / "ub.csv", [[0.0, 0.0]], prefix="u")
    args = ["tl1"] + [f"--{k}={tmp_path / v}" for k, v in
                      (("points-a", "xa.csv"), ("field-a", "ua.csv"),
                       ("points-b", "xb.csv"), ("field-b", "ub.csv"))]
    assert main(args) == 0
    (rec,) = records(capsys)
    assert rec == {"distance": 6.0, "gap": 0.0, "solver": "exact"}


def test_tv_eta(cfg, capsys):
    assert main(["tv-eta", "--config", str(cfg)]) == 0
    (rec,) = records(capsys)
    assert rec["value"] == pytest.approx(math.pi / 4, rel=1e-9)
    assert rec["value"] == rec["volume_part"] + rec["jump_part"]


def test_run(cfg, tmp_path, capsys):
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "alt")]) == 0
    (rec,) = records(capsys)
    assert rec["rows"] == 9
    assert (tmp_path / "alt" / "results.csv").exists()
    assert not (tmp_path / "out").exists()


def test_slice_check(cfg, capsys):
    assert main(["slice-check", "--config", str(cfg), "--eps", "0.1", "--mc-nodes", "4000"]) == 0
    (rec,) = records(capsys)
    assert rec["eps"] == 0.1 and set(rec) >= {"lhs", "rhs", "rel_err"}


def test_transport_diagnostics(cfg, tmp_path, capsys):
    out = tmp_path / "diag.csv"
    assert main(["transport-diagnostics", "--config", str(cfg), "--out", str(out)]) == 0
    lines = out.read_text().splitlines()
    assert lines[0] == "n,eps,sup_norm_ratio,first_diff_ratio,second_diff_ratio"
    assert len(lines) >= 2


def test_errors_exit_with_status_2(tmp_path, capsys):
    assert main(["tv-eta", "--config", str(tmp_path / "missing.toml")]) == 2
    bad = tmp_path / "bad.toml"
    bad.write_text(CONFIG.replace("exponent = 0.25", "exponent = 0.5"))
    assert main(["run", "--config", str(bad)]) == 2
    assert "grows along the schedule" in capsys.readouterr().err


@pytest.mark.skipif(shutil.which("bdgraphtv") is None, reason="console script not installed")
def test_console_script(cfg):
    import subprocess

    out = subprocess.run(["bdgraphtv", "tv-eta", "--config", str(cfg)], capture_output=True,
                         text=True, check=True)
    assert json.loads(out.stdout)["value"] == pytest.approx(math.pi / 4, rel=1e-9)
