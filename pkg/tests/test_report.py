from __future__ import annotations

import json

import pytest

from concord.interchange import interchange_decision
from concord.metrics import RocCurve
from concord.pipeline import AnalysisConfig, run_full_analysis
from concord.report import (
    interchange_markdown,
    render_interchange_figure,
    render_table3_figure,
    roc_csv_text,
    run_markdown,
    table3_csv_text,
    write_json,
)
from concord.simulate import simulate_table3
from test_pipeline import build_cohort_files


def result_fixture():
    return interchange_decision(
        0.743,
        ci_low=0.709,
        ci_high=0.778,
        benchmark=0.675,
        margin=0.05,
        cohort="scenario",
        percentile_low=0.708,
        percentile_high=0.777,
        p_value=1.2e-8,
        context_inter_reader=0.727,
        replications=100000,
        n_cases=1000,
        n_patients=1000,
    )


class TestInterchangeMarkdown:
    def test_key_lines(self):
        md = interchange_markdown(result_fixture())
        assert "74.3%" in md
        assert "70.9%" in md
        assert "**Decision: Interchangeable**" in md
        # the decision threshold line, benchmark minus margin
        assert "62.5%" in md

    def test_not_demonstrated(self):
        res = interchange_decision(0.70, ci_low=0.62, benchmark=0.675, margin=0.05)
        assert "NotDemonstrated" in interchange_markdown(res)


class TestFigures:
    def test_interchange_png(self, tmp_path):
        path = render_interchange_figure(result_fixture(), tmp_path / "fig.png")
        data = path.read_bytes()
        assert data[:8] == b"\x89PNG\r\n\x1a\n"
        assert len(data) > 5000

    def test_table3_png(self, tmp_path):
        rows = simulate_table3(seed=0, n_cases=300)
        path = render_table3_figure(rows, tmp_path / "t3.png")
        assert path.read_bytes()[:8] == b"\x89PNG\r\n\x1a\n"


class TestDelimited:
    def test_table3_csv_round_numbers(self):
        rows = simulate_table3(seed=1, n_cases=300)
        text = table3_csv_text(rows)
        lines = text.strip().split("\n")
        assert len(lines) == 13
        header = lines[0].split(",")
        assert header[:3] == ["system", "rule", "target_auroc"]

    def test_roc_csv(self):
        curve = RocCurve.from_scores([1, 1, 0, 0], [4.0, 3.0, 2.0, 1.0])
        text = roc_csv_text(curve)
        lines = text.strip().split("\n")
        assert lines[0] == "threshold,sensitivity,specificity"
        assert len(lines) == len(curve.thresholds) + 1

    def test_write_json_trailing_newline_and_sorted(self, tmp_path):
        path = write_json(tmp_path / "x.json", {"b": 1, "a": 2})
        text = path.read_text()
        assert text.endswith("\n")
        assert text.index('"a"') < text.index('"b"')


class TestRunMarkdown:
    def test_sections_render(self, tmp_path):
        config = AnalysisConfig.from_json(build_cohort_files(tmp_path))
        report = run_full_analysis(config)
        md = run_markdown(report)
        for heading in (
            "## Cohort",
            "## Benchmarks",
            "## Operating point",
            "## Primary endpoint",
            "## Verification-bias adjusted AUROC",
            "## Secondary metrics",
        ):
            assert heading in md, heading
        assert "Decision:" in md

    def test_json_serializable(self, tmp_path):
        config = AnalysisConfig.from_json(build_cohort_files(tmp_path))
        report = run_full_analysis(config)
        json.dumps(report)  # no numpy scalars may leak through
