from __future__ import annotations

import dataclasses
import json

import pytest

from concord.cli import main
from concord.cohort import cases_to_csv, predictions_to_csv, readings_to_csv
from concord.simulate import ReaderPanelSpec, simulate_reader_panel
from conftest import biopsy_cohort, predictions_for
from test_pipeline import build_cohort_files


@pytest.fixture()
def cohort_dir(tmp_path):
    cases, scores = biopsy_cohort(n=200, seed=21, unverified_rate=0.25)
    spec = ReaderPanelSpec(n_cases=200, n_readers=6, prevalence=0.35, reader_dispersion=0.8)
    panel = simulate_reader_panel(spec, seed=22)
    readings = [
        dataclasses.replace(r, case_id=cases[int(r.case_id.split("-")[1]) - 1].case_id)
        for r in panel.readings
    ]
    (tmp_path / "cases.csv").write_text(cases_to_csv(cases))
    (tmp_path / "readings.csv").write_text(readings_to_csv(readings))
    (tmp_path / "predictions.csv").write_text(
        predictions_to_csv(predictions_for(cases, scores))
    )
    return tmp_path


def run_cli(*argv):
    return main([str(a) for a in argv])


class TestValidate:
    def test_ok_exit_zero(self, cohort_dir, capsys):
        code = run_cli(
            "validate",
            "--cases", cohort_dir / "cases.csv",
            "--readings", cohort_dir / "readings.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--outdir", cohort_dir / "out",
        )
        assert code == 0
        assert (cohort_dir / "out" / "validation.json").exists()
        assert "OK" in capsys.readouterr().out

    def test_bad_file_exit_nonzero(self, tmp_path, capsys):
        (tmp_path / "cases.csv").write_text("not,a,header\n1,2,3\n")
        code = run_cli("validate", "--cases", tmp_path / "cases.csv")
        assert code == 1
        assert "error" in capsys.readouterr().err

    def test_referential_failure_exit_one(self, cohort_dir, tmp_path):
        (tmp_path / "preds.csv").write_text("case_id,score\nghost,50\n")
        code = run_cli(
            "validate",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", tmp_path / "preds.csv",
            "--outdir", tmp_path / "out",
        )
        assert code == 1


class TestAgreement:
    def test_writes_all_formats(self, cohort_dir):
        out = cohort_dir / "agr"
        code = run_cli(
            "agreement",
            "--readings", cohort_dir / "readings.csv",
            "--cases", cohort_dir / "cases.csv",
            "--prevalence", "0.30",
            "--bootstrap-reps", "2000",
            "--outdir", out,
        )
        assert code == 0
        payload = json.loads((out / "agreement.json").read_text())
        assert set(payload["inter_reader"]) == {"all", "positive", "negative"}
        assert "adjusted" in payload
        assert (out / "agreement.md").exists()
        assert (out / "agreement.csv").exists()

    def test_output_format_filter(self, cohort_dir):
        out = cohort_dir / "agr_json"
        run_cli(
            "agreement",
            "--readings", cohort_dir / "readings.csv",
            "--cases", cohort_dir / "cases.csv",
            "--bootstrap-reps", "1000",
            "--output", "json",
            "--outdir", out,
        )
        assert (out / "agreement.json").exists()
        assert not (out / "agreement.md").exists()

    def test_unknown_format_rejected(self, cohort_dir):
        with pytest.raises(SystemExit):
            run_cli(
                "agreement",
                "--readings", cohort_dir / "readings.csv",
                "--cases", cohort_dir / "cases.csv",
                "--output", "pdf",
            )


class TestInterchange:
    def test_reports_and_figure(self, cohort_dir):
        out = cohort_dir / "inter"
        code = run_cli(
            "interchange",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--benchmark", "0.675",
            "--bootstrap-reps", "2000",
            "--outdir", out,
        )
        assert code == 0
        payload = json.loads((out / "interchange.json").read_text())
        assert payload["decision"] in ("Interchangeable", "NotDemonstrated")
        assert (out / "interchange.png").exists()
        assert (out / "interchange.csv").exists()

    def test_no_figures_flag(self, cohort_dir):
        out = cohort_dir / "inter_nofig"
        run_cli(
            "interchange",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--benchmark", "0.675",
            "--bootstrap-reps", "1000",
            "--no-figures",
            "--outdir", out,
        )
        assert not (out / "interchange.png").exists()
        assert (out / "interchange.json").exists()

    def test_byte_identical_reruns(self, cohort_dir):
        out_a = cohort_dir / "a"
        out_b = cohort_dir / "b"
        for out in (out_a, out_b):
            run_cli(
                "interchange",
                "--cases", cohort_dir / "cases.csv",
                "--predictions", cohort_dir / "predictions.csv",
                "--benchmark", "0.675",
                "--bootstrap-reps", "2000",
                "--seed", "3",
                "--no-figures",
                "--outdir", out,
            )
        assert (out_a / "interchange.json").read_bytes() == (
            out_b / "interchange.json"
        ).read_bytes()
        assert (out_a / "interchange.md").read_bytes() == (
            out_b / "interchange.md"
        ).read_bytes()


class TestAurocMi:
    def test_fit_and_save_model(self, cohort_dir):
        out = cohort_dir / "mi"
        code = run_cli(
            "auroc-mi",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--fit-from", cohort_dir / "cases.csv",
            "--imputations", "8",
            "--save-model", out / "model.json",
            "--outdir", out,
        )
        assert code == 0
        payload = json.loads((out / "auroc_mi.json").read_text())
        assert 0.5 < payload["estimate"] <= 1.0
        model = json.loads((out / "model.json").read_text())
        assert model["base_probability"] == 0.03

    def test_reuse_model_file(self, cohort_dir):
        out = cohort_dir / "mi2"
        run_cli(
            "auroc-mi",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--fit-from", cohort_dir / "cases.csv",
            "--imputations", "8",
            "--save-model", out / "model.json",
            "--outdir", out,
        )
        code = run_cli(
            "auroc-mi",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--model", out / "model.json",
            "--imputations", "8",
            "--outdir", cohort_dir / "mi3",
        )
        assert code == 0


class TestMetrics:
    def test_payload_shape(self, cohort_dir):
        out = cohort_dir / "metrics"
        code = run_cli(
            "metrics",
            "--cases", cohort_dir / "cases.csv",
            "--predictions", cohort_dir / "predictions.csv",
            "--outdir", out,
        )
        assert code == 0
        payload = json.loads((out / "metrics.json").read_text())
        assert {"operating_point", "vs_soc", "vs_historical_readings", "benefit_harm"} <= set(
            payload
        )
        assert (out / "roc.csv").exists()


class TestSimulate:
    def test_table3(self, tmp_path):
        out = tmp_path / "t3"
        code = run_cli(
            "simulate", "table3", "--n-cases", "400", "--seed", "2", "--outdir", out
        )
        assert code == 0
        payload = json.loads((out / "table3.json").read_text())
        assert len(payload["rows"]) == 12
        assert (out / "table3.png").exists()
        assert (out / "table3.csv").exists()

    def test_plan(self, tmp_path):
        out = tmp_path / "plan"
        code = run_cli(
            "simulate", "plan",
            "--benchmark", "0.675",
            "--true-agreement", "0.74",
            "--n-cases", "400",
            "--bootstrap-reps", "2000",
            "--outdir", out,
        )
        assert code == 0
        assert (out / "plan.json").exists()
        assert (out / "plan.png").exists()

    def test_panel_with_calibration(self, tmp_path, capsys):
        out = tmp_path / "panel"
        code = run_cli(
            "simulate", "panel",
            "--n-cases", "60",
            "--n-readers", "5",
            "--target-agreement", "0.734",
            "--outdir", out,
        )
        assert code == 0
        assert (out / "panel_readings.csv").exists()
        assert (out / "panel_cases.csv").exists()
        summary = json.loads((out / "panel.json").read_text())
        assert summary["expected_pairwise_agreement"] == pytest.approx(0.734, abs=1e-6)


class TestPower:
    def test_default_grid(self, tmp_path, capsys):
        out = tmp_path / "power"
        code = run_cli("power", "--outdir", out)
        assert code == 0
        text = capsys.readouterr().out
        assert "4.12" in text and "2.51" in text and "3.96" in text
        assert (out / "power.csv").exists()


class TestRun:
    def test_single_cohort(self, tmp_path):
        config = build_cohort_files(tmp_path, name="siteA", bootstrap_reps=2000)
        out = tmp_path / "out"
        code = run_cli("run", "--config", config, "--outdir", out)
        assert code == 0
        report = json.loads((out / "siteA_report.json").read_text())
        assert report["interchange"]["decision"] in ("Interchangeable", "NotDemonstrated")
        assert (out / "siteA_report.md").exists()
        assert (out / "siteA_interchange.png").exists()

    def test_multi_cohort_combined(self, tmp_path):
        configs = [
            build_cohort_files(tmp_path, name=f"site{i}", seed=i, bootstrap_reps=2000)
            for i in range(2)
        ]
        out = tmp_path / "out"
        code = run_cli(
            "run", "--config", configs[0], "--config", configs[1],
            "--no-figures", "--outdir", out,
        )
        assert code == 0
        combined = json.loads((out / "combined.json").read_text())
        assert len(combined["holm"]["p_values"]) == 2

    def test_partial_exit_code(self, tmp_path, capsys):
        good = build_cohort_files(tmp_path, name="good", bootstrap_reps=1000)
        bad_config = dict(json.loads(good.read_text()))
        bad_config["cohort"] = "bad"
        bad_config["predictions"] = "missing.csv"
        bad = tmp_path / "good" / "bad.json"
        bad.write_text(json.dumps(bad_config))
        out = tmp_path / "out"
        code = run_cli(
            "run", "--config", good, "--config", bad, "--no-figures", "--outdir", out
        )
        assert code == 2
        assert "FAILED bad" in capsys.readouterr().err


class TestOutputDirEnv:
    def test_env_var_used_when_no_outdir(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONCORD_OUTPUT_DIR", str(tmp_path / "from_env"))
        code = run_cli("power")
        assert code == 0
        assert (tmp_path / "from_env" / "power.json").exists()

    def test_flag_beats_env(self, tmp_path, monkeypatch):
        monkeypatch.setenv("CONCORD_OUTPUT_DIR", str(tmp_path / "from_env"))
        run_cli("power", "--outdir", tmp_path / "flag")
        assert (tmp_path / "flag" / "power.json").exists()
        assert not (tmp_path / "from_env").exists()
