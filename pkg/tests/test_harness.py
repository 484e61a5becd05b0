import hashlib
import json
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from frontier_lab.cli import main
from frontier_lab.errors import DataFormatError, DomainError
from frontier_lab.experiments import (
    make_config,
    run_attenuation,
    run_calibration,
    run_cancellation,
    run_real_data_frontier,
    thread_count,
)
from frontier_lab.factor_bias import CancellationParams, attenuated_slope
from frontier_lab.reporting import ExperimentReport

# Small n needs a looser MC tolerance: the 5e-3 default is calibrated
# for n=200000 draws.
FAST_ATTENUATION = ["--n-obs", "4000", "--grid-points", "5", "--reps", "2",
                    "--mc-tolerance", "0.05"]


def _tree_digest(root: Path) -> str:
    h = hashlib.sha256()
    for path in sorted(root.rglob("*")):
        if path.is_file():
            h.update(path.relative_to(root).as_posix().encode())
            h.update(path.read_bytes())
    return h.hexdigest()


class TestMakeConfig:
    def test_defaults_applied(self):
        cfg = make_config("attenuation")
        assert cfg.params["grid_points"] == 17
        assert cfg.repetitions == 10

    def test_unknown_parameter_rejected(self):
        with pytest.raises(DomainError, match="unknown parameter"):
            make_config("attenuation", overrides={"grid_pts": 5})

    def test_unknown_experiment_rejected(self):
        with pytest.raises(DomainError):
            make_config("nope")


class TestRunners:
    def test_attenuation_theory_column_matches_closed_form(self):
        cfg = make_config(
            "attenuation", seed=1, repetitions=1, overrides={"n_obs": 2000, "grid_points": 5}
        )
        report = run_attenuation(cfg)
        grid = report.summary["grid"]
        for sz, theory in zip(grid, report.summary["theory_slope"]):
            params = CancellationParams(0.6, 0.2, 0.7, sigma_eta=0.8, sigma_zeta=sz)
            assert theory == pytest.approx(attenuated_slope(params), abs=1e-14)
        assert len(report.tables["cells"].rows) == 5
        assert report.tables["table"].columns == (
            "sigma_zeta", "mc_slope", "theory_slope", "mc_bias", "theory_bias",
        )

    def test_attenuation_bias_columns_anchor(self):
        cfg = make_config(
            "attenuation", seed=1, repetitions=1, overrides={"n_obs": 2000, "grid_points": 2}
        )
        report = run_attenuation(cfg)
        first = report.tables["table"].rows[0]
        assert first[0] == 0.0
        assert first[2] == pytest.approx(-0.22, abs=1e-12)   # theory slope
        assert first[4] == pytest.approx(-0.42, abs=1e-12)   # theory bias

    def test_zero_repetitions_rejected(self):
        with pytest.raises(DomainError):
            run_attenuation(make_config("attenuation", repetitions=0))
        with pytest.raises(DomainError):
            run_cancellation(make_config("cancellation", repetitions=0))

    def test_cancellation_null_case_recovers_coefficient(self):
        # alpha=0: no confounding channel, so the misspecified fit is a
        # consistent (mildly attenuated) estimate of the outcome slope and
        # alignment sits at the no-confounding baseline.
        cfg = make_config("cancellation", seed=8, repetitions=3, overrides={"alpha": 0.0})
        report = run_cancellation(cfg)
        slopes = report.summary["fitted_slopes"]
        assert np.mean(slopes) == pytest.approx(1.0, abs=0.1)
        assert report.summary["min_rate"] > 0.85

    def test_cancellation_row_count(self):
        cfg = make_config("cancellation", seed=3, repetitions=2, overrides={"n_obs": 200})
        report = run_cancellation(cfg)
        assert len(report.tables["weights"].rows) == 400
        assert set(report.pass_flags) == {
            "rate_above_threshold", "correlation_above_threshold", "no_systematic_inversion",
        }

    def test_calibration_small_instance(self):
        cfg = make_config("calibration", seed=5, overrides={"n_assets": 40})
        report = run_calibration(cfg)
        assert report.passed
        assert report.summary["argmax_exponent"] == 1.0
        rels = report.summary["relative_sharpes"]
        assert max(rels) <= 1.0 + 1e-10

    def test_calibration_grid_without_unit_exponent(self):
        cfg = make_config(
            "calibration", seed=5, overrides={"n_assets": 40, "exponents": (0.7, 0.9, 1.3)}
        )
        report = run_calibration(cfg)
        assert report.summary["argmax_exponent"] == 0.9

    def test_real_data_requires_csv(self):
        with pytest.raises(DataFormatError, match="csv path"):
            run_real_data_frontier(make_config("real-data-frontier"))

    def test_calibration_single_unit_exponent(self):
        cfg = make_config("calibration", seed=5, overrides={"n_assets": 40, "exponents": (1.0,)})
        report = run_calibration(cfg)
        assert report.summary["relative_sharpes"][0] == pytest.approx(1.0, abs=1e-10)

    def test_alignment_ratio_regresses_onto_cosine(self):
        from frontier_lab.experiments import run_alignment

        cfg = make_config(
            "alignment", seed=4,
            overrides={"n_assets": 50, "theta_points": 25, "n_targets": 10},
        )
        report = run_alignment(cfg)
        cos = np.array(report.tables["sharpe"].column("cos_theta"))
        ratio = np.array(report.tables["sharpe"].column("sharpe_ratio"))
        slope, intercept = np.polyfit(cos, ratio, 1)
        residual = np.max(np.abs(np.polyval([slope, intercept], cos) - ratio))
        assert slope == pytest.approx(1.0, abs=1e-8)
        assert intercept == pytest.approx(0.0, abs=1e-8)
        assert residual <= 1e-8

    def test_alignment_named_angles(self):
        from frontier_lab.experiments import run_alignment

        cfg = make_config(
            "alignment", seed=4,
            overrides={"n_assets": 50, "theta_points": 3, "n_targets": 10},
        )
        # theta grid (0, pi/2, pi) -> ratios (1, ~0, -1)
        report = run_alignment(cfg)
        ratios = report.tables["sharpe"].column("sharpe_ratio")
        assert ratios[0] == pytest.approx(1.0, abs=1e-10)
        assert abs(ratios[1]) <= 1e-10
        assert ratios[2] == pytest.approx(-1.0, abs=1e-10)

    def test_nonlinear_both_surrogate_paths_convex(self):
        from frontier_lab.experiments import run_nonlinear_frontier

        for surrogate in ("drawn-beta", "fitted"):
            cfg = make_config(
                "nonlinear-frontier", seed=6,
                overrides={"n_obs": 400, "surrogate": surrogate},
            )
            report = run_nonlinear_frontier(cfg)
            assert report.pass_flags["frontier_convex"], surrogate

    def test_nonlinear_noiseless_returns_still_convex(self):
        from frontier_lab.experiments import run_nonlinear_frontier

        cfg = make_config(
            "nonlinear-frontier", seed=6, overrides={"n_obs": 400, "return_noise": 0.0}
        )
        assert run_nonlinear_frontier(cfg).pass_flags["frontier_convex"]

    def test_real_data_logistic_extension(self, tmp_path):
        csv = tmp_path / "demo.csv"
        cfg = make_config(
            "real-data-frontier",
            overrides={
                "csv": str(csv), "write_demo": True, "demo_days": 400,
                "n_days": 300, "n_assets": 4, "signal_source": "logistic",
            },
        )
        report = run_real_data_frontier(cfg)
        assert report.summary["signal_source"] == "logistic"
        assert report.pass_flags["frontier_convex"]

    def test_real_data_unknown_signal_source(self, tmp_path):
        csv = tmp_path / "demo.csv"
        cfg = make_config(
            "real-data-frontier",
            overrides={"csv": str(csv), "write_demo": True, "signal_source": "oracle"},
        )
        with pytest.raises(DomainError, match="signal_source"):
            run_real_data_frontier(cfg)


class TestThreadControl:
    def test_default_single_thread(self, monkeypatch):
        monkeypatch.delenv("FRONTIER_LAB_THREADS", raising=False)
        assert thread_count() == 1

    def test_env_override(self, monkeypatch):
        monkeypatch.setenv("FRONTIER_LAB_THREADS", "4")
        assert thread_count() == 4
        monkeypatch.setenv("FRONTIER_LAB_THREADS", "garbage")
        assert thread_count() == 1

    def test_results_independent_of_threads(self, monkeypatch, tmp_path):
        cfg = make_config(
            "attenuation", seed=2, repetitions=3, overrides={"n_obs": 2000, "grid_points": 4}
        )
        monkeypatch.setenv("FRONTIER_LAB_THREADS", "1")
        serial = run_attenuation(cfg)
        monkeypatch.setenv("FRONTIER_LAB_THREADS", "4")
        threaded = run_attenuation(cfg)
        assert serial.tables["cells"].rows == threaded.tables["cells"].rows
        d1 = serial.write(tmp_path / "serial")
        d2 = threaded.write(tmp_path / "threaded")
        assert _tree_digest(d1) == _tree_digest(d2)


class TestCli:
    def test_attenuation_fast_run_passes(self, tmp_path, capsys):
        rc = main(["attenuation", "--out", str(tmp_path), *FAST_ATTENUATION, "--seed", "11"])
        out = capsys.readouterr().out
        assert rc == 0
        assert "[PASS] mc_matches_theory" in out

    def test_rerun_is_byte_identical(self, tmp_path):
        args = ["calibration", "--n-assets", "30"]
        main([*args, "--out", str(tmp_path / "a")])
        main([*args, "--out", str(tmp_path / "b")])
        assert _tree_digest(tmp_path / "a") == _tree_digest(tmp_path / "b")

    def test_failing_check_exits_one(self, tmp_path, capsys):
        rc = main([
            "cancellation", "--out", str(tmp_path), "--n-obs", "200",
            "--reps", "2", "--corr-threshold", "1.5",
        ])
        assert rc == 1
        assert "[FAIL] correlation_above_threshold" in capsys.readouterr().out

    def test_data_error_exits_two(self, tmp_path, capsys):
        rc = main(["real-data-frontier", "--out", str(tmp_path), "--csv",
                   str(tmp_path / "missing.csv")])
        assert rc == 2
        assert "error:" in capsys.readouterr().err

    def test_degenerate_panel_surfaces_cleanly(self, tmp_path, capsys):
        # Identical price columns make the empirical means proportional to
        # the ones vector: the constraint system is degenerate.
        csv = tmp_path / "flat.csv"
        lines = ["Date,A,B"]
        price = 100.0
        for i in range(12):
            lines.append(f"2020-01-{i+1:02d},{price},{price}")
            price *= 1.01
        csv.write_text("\n".join(lines) + "\n")
        rc = main(["real-data-frontier", "--out", str(tmp_path), "--csv", str(csv),
                   "--n-days", "10", "--n-assets", "2", "--n-targets", "5"])
        assert rc == 2
        assert "ones vector" in capsys.readouterr().err

    def test_write_demo_end_to_end(self, tmp_path, capsys):
        csv = tmp_path / "demo.csv"
        rc = main(["real-data-frontier", "--out", str(tmp_path / "out"), "--csv", str(csv),
                   "--write-demo"])
        assert rc == 0
        assert csv.exists()
        out_dir = next((tmp_path / "out").iterdir())
        assert (out_dir / "frontier.csv").exists()
        assert (out_dir / "real-data-frontier.svg").exists()
        assert (out_dir / "real-data-scatter.svg").exists()

    def test_config_file_and_flag_precedence(self, tmp_path):
        cfg_file = tmp_path / "cfg.json"
        cfg_file.write_text(json.dumps({
            "seed": 9, "repetitions": 2,
            "params": {"n_obs": 2000, "grid_points": 4, "alpha": 0.5, "mc_tolerance": 0.1},
        }))
        rc = main(["attenuation", "--out", str(tmp_path / "o"), "--config", str(cfg_file),
                   "--alpha", "0.3"])
        assert rc == 0
        run_dir = next((tmp_path / "o").iterdir())
        payload = json.loads((run_dir / "summary.json").read_text())
        assert payload["config"]["seed"] == 9
        assert payload["config"]["repetitions"] == 2
        assert payload["config"]["params"]["alpha"] == 0.3      # flag wins
        assert payload["config"]["params"]["n_obs"] == 2000     # file wins over default

    def test_render_round_trip(self, tmp_path):
        main(["calibration", "--n-assets", "30", "--out", str(tmp_path)])
        run_dir = next(tmp_path.iterdir())
        target = tmp_path / "again.svg"
        rc = main(["render", "--report", str(run_dir), "--kind", "calibration-sharpe",
                   "--out", str(target)])
        assert rc == 0
        assert target.read_bytes() == (run_dir / "calibration-sharpe.svg").read_bytes()

    def test_render_missing_report_exits_two(self, tmp_path):
        rc = main(["render", "--report", str(tmp_path / "none"), "--kind", "attenuation"])
        assert rc == 2

    def test_console_entry_point(self, tmp_path):
        result = subprocess.run(
            [sys.executable, "-m", "frontier_lab.cli", "calibration",
             "--n-assets", "25", "--out", str(tmp_path)],
            capture_output=True, text=True,
        )
        assert result.returncode == 0
        assert "[PASS]" in result.stdout

    def test_summary_json_reports_flags(self, tmp_path):
        main(["calibration", "--n-assets", "30", "--out", str(tmp_path)])
        run_dir = next(tmp_path.iterdir())
        report = ExperimentReport.load(run_dir)
        assert report.pass_flags["peak_at_unit_exponent"]
        assert report.passed
