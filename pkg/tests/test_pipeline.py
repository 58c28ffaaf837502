from __future__ import annotations

import dataclasses
import json

import numpy as np
import pytest

from concord.cohort import cases_to_csv, predictions_to_csv, readings_to_csv
from concord.pipeline import (
    AnalysisConfig,
    PipelineError,
    derive_seed,
    parse_operating_rule,
    run_full_analysis,
    run_multi_cohort,
    select_operating_point,
)
from concord.simulate import ReaderPanelSpec, simulate_reader_panel
from conftest import biopsy_cohort, make_case, make_negative, predictions_for


def build_cohort_files(tmp_path, name="cohort", seed=0, n=240, unverified_rate=0.25,
                       **config_overrides):
    """Write cases, readings, predictions and a config JSON; return the path."""
    cases, scores = biopsy_cohort(n=n, seed=seed, unverified_rate=unverified_rate)
    spec = ReaderPanelSpec(n_cases=n, n_readers=8, prevalence=0.35, reader_dispersion=0.8)
    panel = simulate_reader_panel(spec, seed=seed + 1)
    # re-key panel readings onto this cohort's case ids
    readings = [
        dataclasses.replace(r, case_id=cases[int(r.case_id.split("-")[1]) - 1].case_id)
        for r in panel.readings
    ]
    root = tmp_path / name
    root.mkdir()
    (root / "cases.csv").write_text(cases_to_csv(cases))
    (root / "readings.csv").write_text(readings_to_csv(readings))
    (root / "predictions.csv").write_text(predictions_to_csv(predictions_for(cases, scores)))
    config = {
        "cohort": name,
        "cases": "cases.csv",
        "predictions": "predictions.csv",
        "readings": "readings.csv",
        "prevalence": 0.30,
        "cutoff": "pirads>=3",
        "bootstrap_reps": 3000,
        "imputations": 8,
        "seed": 5,
    }
    config.update(config_overrides)
    path = root / "config.json"
    path.write_text(json.dumps(config))
    return path


class TestDeriveSeed:
    def test_stable(self):
        assert derive_seed(7, 3) == derive_seed(7, 3)

    def test_distinct_by_index_and_seed(self):
        seeds = {derive_seed(7, i) for i in range(20)}
        assert len(seeds) == 20
        assert derive_seed(7, 0) != derive_seed(8, 0)


class TestConfig:
    def test_rejects_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown config"):
            AnalysisConfig.from_dict(
                {"cohort": "x", "cases": "a", "predictions": "b", "prevalence": 0.3,
                 "typo_key": 1}
            )

    def test_resolves_relative_paths(self, tmp_path):
        path = build_cohort_files(tmp_path)
        config = AnalysisConfig.from_json(path)
        assert config.cases == str(path.parent / "cases.csv")

    def test_validates_prevalence(self):
        with pytest.raises(ValueError):
            AnalysisConfig(cohort="x", cases="a", predictions="b", prevalence=1.5)

    def test_validates_benchmark_keys(self):
        with pytest.raises(ValueError):
            AnalysisConfig(
                cohort="x", cases="a", predictions="b", prevalence=0.3,
                benchmarks={"bogus": 0.5},
            )


class TestOperatingRules:
    def test_parse(self):
        assert parse_operating_rule("youden") == ("youden", None)
        assert parse_operating_rule("matched_sensitivity:0.9") == ("matched_sensitivity", 0.9)
        assert parse_operating_rule("matched_specificity:0.57") == ("matched_specificity", 0.57)
        assert parse_operating_rule("threshold:42.5") == ("threshold", 42.5)
        with pytest.raises(ValueError):
            parse_operating_rule("maximize profit")

    def test_select_youden(self):
        cases = [make_case(f"a{i}") for i in range(5)] + [
            make_negative(f"b{i}") for i in range(5)
        ]
        scores = np.array([80, 75, 70, 65, 60, 40, 35, 30, 25, 20], dtype=float)
        point = select_operating_point(cases, scores, "youden")
        assert point.sensitivity == 1.0 and point.specificity == 1.0

    def test_select_fixed_threshold(self):
        cases = [make_case("a"), make_negative("b")]
        scores = np.array([80.0, 20.0])
        point = select_operating_point(cases, scores, "threshold:50")
        assert point.threshold == 50.0
        assert point.sensitivity == 1.0 and point.specificity == 1.0


class TestRunFullAnalysis:
    def test_report_sections(self, tmp_path):
        config = AnalysisConfig.from_json(build_cohort_files(tmp_path))
        report = run_full_analysis(config)
        for key in (
            "cohort",
            "validation",
            "benchmarks",
            "operating_point",
            "interchange",
            "auroc_mi",
            "metrics",
            "strata",
        ):
            assert key in report, key
        assert report["interchange"]["decision"] in ("Interchangeable", "NotDemonstrated")
        assert report["benchmarks"]["q_adj"]["adjusted"] == pytest.approx(
            report["interchange"]["benchmark"]
        )
        assert report["risk_model"]["base_probability"] == 0.03

    def test_deterministic_and_worker_invariant(self, tmp_path):
        config = AnalysisConfig.from_json(build_cohort_files(tmp_path))
        first = run_full_analysis(config)
        again = run_full_analysis(config)
        assert first == again
        threaded = run_full_analysis(dataclasses.replace(config, workers=4))
        threaded_dict = dict(threaded)
        assert first["interchange"] == threaded_dict["interchange"]
        assert first["benchmarks"] == threaded_dict["benchmarks"]

    def test_precomputed_benchmarks_route(self, tmp_path):
        path = build_cohort_files(
            tmp_path,
            benchmarks={
                "inter_reader_positive": 0.887,
                "inter_reader_negative": 0.658,
                "vs_soc_positive": 0.895,
                "vs_soc_negative": 0.581,
            },
        )
        config = AnalysisConfig.from_json(path)
        config = dataclasses.replace(config, readings=None)
        report = run_full_analysis(config)
        expected_q = 0.30 * 0.895 + 0.70 * 0.581
        assert report["interchange"]["benchmark"] == pytest.approx(expected_q)

    def test_requires_some_benchmark_source(self, tmp_path):
        path = build_cohort_files(tmp_path)
        config = dataclasses.replace(AnalysisConfig.from_json(path), readings=None)
        with pytest.raises(PipelineError, match="benchmarks"):
            run_full_analysis(config)

    def test_stage_errors_are_tagged(self, tmp_path):
        path = build_cohort_files(tmp_path)
        config = dataclasses.replace(
            AnalysisConfig.from_json(path), predictions="missing.csv"
        )
        with pytest.raises(PipelineError) as err:
            run_full_analysis(config)
        assert err.value.stage == "load"


class TestMultiCohort:
    def test_holm_annotates_cohorts(self, tmp_path):
        configs = [
            AnalysisConfig.from_json(build_cohort_files(tmp_path, name=f"site{i}", seed=i))
            for i in range(3)
        ]
        combined = run_multi_cohort(configs)
        assert not combined["partial"]
        assert len(combined["cohorts"]) == 3
        assert len(combined["holm"]["p_values"]) == 3
        for cohort in combined["cohorts"]:
            assert "holm_rejected_null" in cohort["interchange"]

    def test_partial_failure(self, tmp_path):
        good = AnalysisConfig.from_json(build_cohort_files(tmp_path, name="good"))
        bad = dataclasses.replace(good, cohort="bad", predictions="missing.csv")
        combined = run_multi_cohort([good, bad])
        assert combined["partial"]
        assert [f["cohort"] for f in combined["failures"]] == ["bad"]
        assert combined["failures"][0]["stage"] == "load"
        assert len(combined["cohorts"]) == 1
