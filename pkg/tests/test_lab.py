import json
import math

import numpy as np
import pytest

from thresholdlab import FieldPair, IntegratorConfig, evolve
from thresholdlab.analysis import TrajectoryRecord
from thresholdlab.lab import (
    ConfigError,
    build_problem,
    parse_boundary,
    parse_config,
    spec_digest,
)
from thresholdlab.lab.cli import main
from thresholdlab.lab.experiments import threshold_experiment
from thresholdlab.lab.io import (
    load_snapshot,
    result_json_text,
    save_snapshot,
    trajectory_csv_text,
)
from thresholdlab.problem import ExponentPair

from conftest import disk_operator, disk_spec


class TestConfig:
    def test_parse_key_values(self):
        text = """
        # threshold study
        p = 3.0
        q = 3.0
        geometry = radial   # disk
        resolution = 128
        bc = robin:2.5
        """
        options = parse_config(text)
        assert options["p"] == "3.0"
        assert options["bc"] == "robin:2.5"
        assert "geometry" in options

    def test_unknown_key_rejected(self):
        with pytest.raises(ConfigError, match="unknown key"):
            parse_config("frobnicate = 1\n")

    def test_malformed_line_rejected(self):
        with pytest.raises(ConfigError):
            parse_config("p 3.0\n")

    def test_boundary_parsing(self):
        assert parse_boundary("dirichlet").kind == "dirichlet"
        robin = parse_boundary("robin:1.5")
        assert robin.kind == "robin" and robin.beta == 1.5
        with pytest.raises(ConfigError):
            parse_boundary("robin:zebra")
        with pytest.raises(ConfigError):
            parse_boundary("neumann")

    def test_build_problem(self):
        spec = build_problem(p=3, q=2, geometry="radial", dim=3, bc="dirichlet", lam=0.5)
        assert spec.p == 3 and spec.q == 2
        assert spec.dimension == 3
        assert spec.lam == 0.5

    def test_digest_stable_and_sensitive(self):
        spec = disk_spec(3.0, 3.0)
        d1 = spec_digest(spec, 128)
        assert d1 == spec_digest(spec, 128)
        assert d1 != spec_digest(spec, 256)
        assert d1 != spec_digest(disk_spec(3.0, 2.0), 128)


class TestSerialisation:
    def test_csv_golden(self):
        record = TrajectoryRecord(exponents=ExponentPair(3.0, 3.0), volume=math.pi)
        record.append(0.0, 0.0, 1.0, -0.5, 0.25, 0.75, 2.0, 2.0)
        record.append(0.001, 0.001, 1.1, -0.6, 0.26, 0.76, 2.1, 2.1)
        text = trajectory_csv_text(record)
        lines = text.splitlines()
        assert lines[0] == "t,dt,phi,energy,bigT,sup_u,sup_v,dphi_lhs,dphi_rhs,bound_rhs"
        assert lines[1].startswith("0,0,1,-0.5,")
        assert lines[2].split(",")[7].startswith("100.0000000000000")  # dphi_lhs = 0.1/0.001

    def test_csv_17_digits(self):
        record = TrajectoryRecord(exponents=ExponentPair(3.0, 3.0), volume=math.pi)
        record.append(1 / 3, 0.0, math.pi, 0.0, 0.0, 0.0, 0.0, 0.0)
        text = trajectory_csv_text(record)
        assert "0.33333333333333331" in text
        assert "3.1415926535897931" in text

    def test_json_deterministic(self):
        payload = {"b": 1.0 / 3.0, "a": [1, 2], "nested": {"z": 0.1, "y": math.pi}}
        assert result_json_text(payload) == result_json_text(json.loads(result_json_text(payload)))

    def test_snapshot_roundtrip(self, tmp_path):
        A = disk_operator(64)
        rng = np.random.default_rng(7)
        pair = FieldPair(rng.uniform(0, 1, A.grid.size), rng.uniform(0, 1, A.grid.size), A.grid)
        path = tmp_path / "state.snap"
        save_snapshot(path, pair, {"geometry": "radial", "resolution": 64, "p": 3.0})
        loaded = load_snapshot(path, A.grid)
        np.testing.assert_array_equal(loaded.u, pair.u)
        np.testing.assert_array_equal(loaded.v, pair.v)
        header, u, v = load_snapshot(path)
        assert header["geometry"] == "radial"
        assert len(u) == A.grid.size


class TestThresholdExperiment:
    def test_bisection_brackets_threshold(self, eq3_128, spec3):
        A, eq = eq3_128
        result = threshold_experiment(
            spec3, A, eq, IntegratorConfig(), alphas=(0.5, 1.5), bisect_width=0.1
        )
        lo, hi = result.derived["alpha_bracket"]
        assert hi - lo <= 0.1
        assert lo < 1.0 < hi  # continuum threshold is alpha = 1
        kinds = {run["value"]: run["outcome"] for run in result.runs}
        assert kinds[0.5] == "decay" and kinds[1.5] == "blowup"

    def test_bracket_backed_by_runs(self, eq3_128, spec3):
        A, eq = eq3_128
        result = threshold_experiment(
            spec3, A, eq, IntegratorConfig(), alphas=(0.5, 1.5), bisect_width=0.25
        )
        lo, hi = result.derived["alpha_bracket"]
        outcomes = {(r["value"], r["outcome"]) for r in result.runs}
        assert (lo, "decay") in outcomes
        assert (hi, "blowup") in outcomes

    def test_forced_spec_rejected(self, eq3_128):
        A, eq = eq3_128
        with pytest.raises(ValueError):
            threshold_experiment(disk_spec(3.0, 3.0, lam=1.0), A, eq, IntegratorConfig())

    def test_critical_alpha_recorded_without_breaking_bisection(self, eq3_128, spec3):
        # alpha = 1 parks at the metastable discrete equilibrium, classifying
        # neither way; the experiment keeps it in the run log and bisects on
        A, eq = eq3_128
        result = threshold_experiment(
            spec3, A, eq, IntegratorConfig(t_max=6.0), alphas=(0.5, 1.0, 1.5),
            bisect_width=0.3,
        )
        kinds = {run["value"]: run["outcome"] for run in result.runs}
        assert kinds[1.0] in ("steady", "undecided")
        lo, hi = result.derived["alpha_bracket"]
        assert lo < 1.0 < hi


class TestCli:
    def test_usage_error_exit_code(self, capsys):
        assert main(["steady", "--geometry", "hexagon"]) == 1
        assert main(["steady", "--nonsense-flag", "3"]) == 1

    def test_steady_writes_outputs(self, tmp_path, capsys):
        code = main([
            "steady", "--p", "3", "--q", "3", "--resolution", "64",
            "--out", str(tmp_path),
        ])
        assert code == 0
        assert (tmp_path / "steady.snap").exists()
        payload = json.loads((tmp_path / "result.json").read_text())
        assert payload["outcome"] == "steady"
        assert payload["residual_norm"] <= 1e-10

    def test_evolve_decay(self, tmp_path, capsys):
        code = main([
            "evolve", "--alpha", "0.5", "--resolution", "64",
            "--format", "csv", "--out", str(tmp_path),
        ])
        assert code == 0
        payload = json.loads((tmp_path / "result.json").read_text())
        assert payload["outcome"] == "decay"
        csv = (tmp_path / "trajectory.csv").read_text().splitlines()
        assert csv[0].startswith("t,dt,phi")
        assert len(csv) > 100

    def test_evolve_undecided_exit_code(self, tmp_path, capsys):
        code = main([
            "evolve", "--alpha", "0.9", "--resolution", "32",
            "--t-max", "0.01", "--out", str(tmp_path),
        ])
        assert code == 3

    def test_config_file_roundtrip(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("p = 3\nq = 3\nresolution = 64\nalpha = 0.5\n")
        code = main(["evolve", "--config", str(config), "--out", str(tmp_path)])
        assert code == 0
        payload = json.loads((tmp_path / "result.json").read_text())
        assert payload["outcome"] == "decay"

    def test_cli_flag_overrides_config(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("resolution = 64\nalpha = 0.5\n")
        code = main([
            "evolve", "--config", str(config), "--alpha", "1.5",
            "--out", str(tmp_path),
        ])
        assert code == 0
        payload = json.loads((tmp_path / "result.json").read_text())
        assert payload["outcome"] == "blowup"

    def test_bad_config_key_exit_code(self, tmp_path, capsys):
        config = tmp_path / "run.cfg"
        config.write_text("zebra = 1\n")
        assert main(["evolve", "--config", str(config)]) == 1

    def test_snapshot_feeds_evolve(self, tmp_path, capsys):
        assert main(["steady", "--resolution", "64", "--out", str(tmp_path)]) == 0
        code = main([
            "evolve", "--resolution", "64", "--initial", str(tmp_path / "steady.snap"),
            "--t-max", "5", "--out", str(tmp_path / "run"),
        ])
        assert code in (0, 3)
        payload = json.loads((tmp_path / "run" / "result.json").read_text())
        assert payload["outcome"] in ("steady", "undecided")  # metastable start


class TestRobinExperiment:
    def test_beta_sweep_logged(self, robin3):
        from thresholdlab.lab import robin_experiment
        from thresholdlab import shooting_oracle, BoundarySpec

        result = robin_experiment(
            robin3["spec"], robin3["A"], IntegratorConfig(t_max=0.01),
            alphas=(0.5,), beta_sweep=(0.5, 2.0, 8.0),
        )
        sweep = result.derived["beta_sweep"]
        assert [b for b, _ in sweep] == [0.5, 2.0, 8.0]
        sups = [s for _, s in sweep]
        # reference data: larger beta sits closer to the Dirichlet sup-norm
        dirichlet_sup = shooting_oracle(
            robin3["spec"].exponents, 2, BoundarySpec.dirichlet()
        ).sup_u
        assert abs(sups[-1] - dirichlet_sup) < abs(sups[0] - dirichlet_sup)


class TestVerifySuite:
    def test_custom_problem(self):
        # asymmetric exponents in three dimensions exercise the 2D shooting
        # route and the generalized stencil/poisson checks
        from thresholdlab import ExponentPair, ProblemSpec, RadialBall
        from thresholdlab.lab import verify_suite

        spec = ProblemSpec(ExponentPair(4.0, 2.0), RadialBall(3, 1.0))
        report = verify_suite(resolutions=(48, 96), seed=1, spec=spec)
        assert report.passed

    def test_rejects_unsuitable_problem(self):
        from thresholdlab.lab import verify_suite

        with pytest.raises(ValueError):
            verify_suite(resolutions=(48,), spec=disk_spec(3.0, 3.0, lam=1.0))


class TestVerifyCli:
    def test_failing_report_exit_code(self, monkeypatch, tmp_path, capsys):
        from thresholdlab.lab.verify import CheckResult, VerifyReport
        import thresholdlab.lab.cli as cli

        broken = VerifyReport(checks=[CheckResult("synthetic", False, 1.0, "forced failure")])
        monkeypatch.setattr(cli, "verify_suite", lambda **kwargs: broken)
        code = main(["verify", "--resolutions", "48", "--out", str(tmp_path)])
        assert code == 4
        assert "FAIL" in (tmp_path / "verify.txt").read_text()


class TestDeterminism:
    def test_evolve_csv_bytes_identical(self, tmp_path, capsys):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            main([
                "evolve", "--alpha", "1.5", "--resolution", "64",
                "--format", "csv", "--out", str(out), "--seed", "11",
            ])
            texts.append((out / "trajectory.csv").read_bytes())
        assert texts[0] == texts[1]

    def test_threshold_json_bytes_identical(self, tmp_path, capsys):
        texts = []
        for sub in ("a", "b"):
            out = tmp_path / sub
            main([
                "threshold", "--resolution", "64", "--width", "0.25",
                "--out", str(out), "--seed", "3",
            ])
            texts.append((out / "result.json").read_bytes())
        assert texts[0] == texts[1]
