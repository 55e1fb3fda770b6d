import copy
import csv
import json
import math

import numpy as np
import pytest

from bdgraphtv.errors import ArgumentError, ConfigError
from bdgraphtv.experiments import (RESULT_FIELDS, ConvergenceRow, Explicit, ExperimentConfig,
                                   PowerLaw, emit_report, fit_rate, preflight, regime_ratio,
                                   relative_error, run_convergence_study, run_from_config,
                                   validate_eps_rule)
from bdgraphtv.transport import ScalingDiagnostics

BASE = {
    "domain": {"kind": "box", "lo": [0.0, 0.0], "hi": [1.0, 1.0]},
    "density": {"kind": "uniform"},
    "kernel": {"kind": "indicator", "c": 1.0, "b": 1.0},
    "field": {"kind": "linear", "A": [[1.0, 0.0], [0.0, 1.0]]},
    "schedule": {"n": [64, 128, 256], "seeds": [0, 1, 2]},
    "eps_rule": {"kind": "power_law", "c": 0.6, "exponent": 0.25},
    "output": {"timing": False, "interior": True},
}


def config(tmp_path=None, **changes):
    data = copy.deepcopy(BASE)
    for key, value in changes.items():
        data[key] = value
    if tmp_path is not None:
        data["output"]["dir"] = str(tmp_path)
    return ExperimentConfig.from_dict(data)


def synthetic_rows(fn, ns=(256, 1024, 4096, 16384), seeds=(0, 1, 2)):
    return [ConvergenceRow(n, 0.1, s, 1.0, 1.0, fn(n), 0.0) for n in ns for s in seeds]


class TestEpsRule:
    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_boundary_exponent_accepted(self, d):
        ns = [2**k for k in range(10, 15)]
        ratios = validate_eps_rule(PowerLaw(0.6, 1 / (2 * d)), ns, d)
        np.testing.assert_allclose(ratios, 1 / 0.36, rtol=1e-12)

    @pytest.mark.parametrize("d", [1, 2, 3])
    def test_fast_exponent_rejected(self, d):
        ns = [2**k for k in range(10, 15)]
        with pytest.raises(ConfigError, match="grows along the schedule"):
            validate_eps_rule(PowerLaw(0.6, 1 / d), ns, d)

    def test_ratio_formula(self):
        n, eps = 1024, 0.1
        assert regime_ratio(n, eps, 2) == pytest.approx(math.sqrt(math.log(n) / n) / eps**2)

    def test_explicit_lists(self):
        ns = [1024, 2048, 4096]
        validate_eps_rule(Explicit((0.2, 0.18, 0.16)), ns, 2)
        with pytest.raises(ConfigError):
            validate_eps_rule(Explicit((0.2, 0.05, 0.01)), ns, 2)
        with pytest.raises(ConfigError):
            validate_eps_rule(Explicit((0.2, 0.1)), ns, 2)

    def test_nonpositive(self):
        with pytest.raises(ConfigError):
            validate_eps_rule(PowerLaw(-1.0, 0.25), [1024], 2)


class TestConfig:
    def test_powers_of_two_required(self):
        with pytest.raises(ConfigError):
            config(schedule={"n": [100, 200], "seeds": [0]})

    def test_missing_key(self):
        data = copy.deepcopy(BASE)
        del data["kernel"]
        with pytest.raises(ConfigError, match="kernel"):
            ExperimentConfig.from_dict(data)

    def test_unknown_kind(self):
        with pytest.raises(ConfigError):
            config(field={"kind": "swirl"})

    def test_toml_roundtrip(self, tmp_path):
        path = tmp_path / "cfg.toml"
        path.write_text(
            '[domain]\nkind = "box"\nlo = [0.0]\nhi = [1.0]\n'
            '[kernel]\nkind = "indicator"\n'
            '[field]\nkind = "linear"\nA = [[2.0]]\n'
            '[schedule]\nn = [32, 64]\nseeds = [4]\n'
            '[eps_rule]\nkind = "power_law"\nexponent = 0.5\n'
            '[output]\ndir = "out"\n')
        cfg = ExperimentConfig.from_toml(path)
        assert cfg.domain.dim == 1 and cfg.seeds == (4,)
        assert cfg.outputs == (tmp_path / "out").resolve()

    def test_bad_toml(self, tmp_path):
        path = tmp_path / "bad.toml"
        path.write_text("[domain\n")
        with pytest.raises(ConfigError):
            ExperimentConfig.from_toml(path)

    def test_shipped_configs_parse(self):
        from pathlib import Path
        for p in sorted((Path(__file__).parents[1] / "configs").glob("*.toml")):
            cfg = ExperimentConfig.from_toml(p)
            assert cfg.n_schedule[-1] == 16384


class TestStudy:
    def test_rigid_field_rows_are_zero(self):
        cfg = config(field={"kind": "rigid", "c": [0.5, -1.0], "W": [[0.0, 0.0], [0.0, 0.0]]})
        res = run_convergence_study(cfg)
        assert res.target == 0.0
        for r in res.rows:
            assert r.gtv_value == 0.0 and r.rel_err == 0.0 and r.flag == "tv_zero"

    def test_rotation_rows_at_roundoff(self):
        cfg = config(field={"kind": "rigid", "W": [[0.0, 0.3], [-0.3, 0.0]]})
        for r in run_convergence_study(cfg).rows:
            assert abs(r.gtv_value) < 1e-12 and r.rel_err < 1e-12

    def test_duplicate_seeds_identical(self):
        cfg = config(schedule={"n": [128], "seeds": [7, 7]})
        a, b = run_convergence_study(cfg).rows
        assert a.as_record() == b.as_record()

    def test_rows_in_schedule_order(self):
        rows = run_convergence_study(config(), workers=3).rows
        assert [(r.n, r.seed) for r in rows] == [(n, s) for n in (64, 128, 256) for s in (0, 1, 2)]

    def test_relative_error_convention(self):
        assert relative_error(1.1, 1.0) == pytest.approx((0.1, ""))
        assert relative_error(0.25, 0.0) == (0.25, "tv_zero")

    def test_row_failure_recorded(self, monkeypatch):
        import bdgraphtv.experiments as ex

        real = ex.gtv_celllist

        def flaky(cloud, vals, k, eps, anchors=None):
            if getattr(cloud, "n", 0) == 128 and anchors is None:
                raise RuntimeError("boom")
            return real(cloud, vals, k, eps, anchors=anchors)

        monkeypatch.setattr(ex, "gtv_celllist", flaky)
        res = run_convergence_study(config())
        bad = [r for r in res.rows if r.n == 128]
        assert all(math.isnan(r.rel_err) and r.flag.startswith("error") for r in bad)
        assert all(math.isfinite(r.rel_err) for r in res.rows if r.n != 128)


class TestRates:
    def test_exact_power_law(self):
        fit = fit_rate(synthetic_rows(lambda n: 3.0 * n**-0.5))
        assert fit.slope == pytest.approx(-0.5, abs=1e-9)
        assert fit.r2 == pytest.approx(1.0)

    def test_constant(self):
        assert fit_rate(synthetic_rows(lambda n: 0.2)).slope == pytest.approx(0.0, abs=1e-12)

    def test_zero_median_skipped(self):
        fit = fit_rate(synthetic_rows(lambda n: 0.0 if n == 256 else n**-1.0))
        assert fit.slope == pytest.approx(-1.0, abs=1e-9)
        assert any("is 0" in note for note in fit.notes)

    def test_too_few_points(self):
        with pytest.raises(ArgumentError):
            fit_rate(synthetic_rows(lambda n: 0.1, ns=(256, 1024)))
        with pytest.raises(ArgumentError):
            fit_rate(synthetic_rows(lambda n: 0.1, seeds=(0, 1)))


class TestReport:
    def test_empty_rows(self, tmp_path):
        paths = emit_report([], [], tmp_path)
        assert (tmp_path / "results.csv").read_text() == ",".join(RESULT_FIELDS) + "\n"
        assert (tmp_path / "diagnostics.csv").read_text() == ",".join(ScalingDiagnostics.FIELDS) + "\n"
        assert "plot" not in paths and not (tmp_path / "rel_err.svg").exists()

    def test_two_points_no_fit_line(self, tmp_path):
        rows = synthetic_rows(lambda n: n**-0.5, ns=(256, 1024))
        paths = emit_report(rows, [], tmp_path)
        svg = paths["plot"].read_text()
        assert "fit slope" not in svg and "median rel. error" in svg

    def test_fit_line_with_three_points(self, tmp_path):
        svg = emit_report(synthetic_rows(lambda n: n**-0.5), [], tmp_path)["plot"].read_text()
        assert "fit slope" in svg

    def test_preflight_unwritable(self, tmp_path):
        blocker = tmp_path / "file"
        blocker.write_text("")
        with pytest.raises(OSError):
            preflight(blocker / "sub")

    def test_run_from_config_outputs(self, tmp_path):
        cfg = config(tmp_path)
        result, paths = run_from_config(cfg)
        with paths["results"].open() as fh:
            table = list(csv.reader(fh))
        assert tuple(table[0]) == RESULT_FIELDS
        assert len(table) - 1 == len(cfg.n_schedule) * len(cfg.seeds)
        assert paths["plot"].exists() and paths["interior"].exists()
        summary = json.loads(paths["summary"].read_text())
        assert summary["tv_eta"] == pytest.approx(math.pi / 2)

    def test_byte_identical_reruns(self, tmp_path):
        outs = []
        for name in ("a", "b"):
            _, paths = run_from_config(config(tmp_path / name))
            outs.append({k: paths[k].read_bytes() for k in ("results", "interior", "diagnostics",
                                                             "summary", "plot")})
        assert outs[0] == outs[1]

    def test_transport_diagnostics_in_report(self, tmp_path):
        data = copy.deepcopy(BASE)
        data["transport"] = {"diagnostics": True}
        data["schedule"] = {"n": [256, 1024], "seeds": [0]}
        data["eps_rule"] = {"kind": "explicit", "values": [0.45, 0.35]}
        data["output"]["dir"] = str(tmp_path)
        _, paths = run_from_config(ExperimentConfig.from_dict(data))
        rows = list(csv.DictReader(paths["diagnostics"].open()))
        assert len(rows) == 2 and all(float(r[ScalingDiagnostics.FIELDS[0]]) > 0 for r in rows)
