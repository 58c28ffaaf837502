from __future__ import annotations

import numpy as np
import pytest

from concord.agreement import pairwise_case_agreement
from concord.metrics import auroc
from concord.simulate import (
    BinormalSpec,
    ReaderPanelSpec,
    TABLE3_TARGETS,
    binormal_mu,
    calibrate_reader_dispersion,
    panel_agreement_analytic,
    simulate_plan,
    simulate_reader_panel,
    simulate_scores,
    simulate_table3,
)


class TestBinormal:
    def test_mu_values(self):
        # mu = sqrt(2) * normal quantile of the target
        assert binormal_mu(0.75) == pytest.approx(0.95387, abs=1e-4)
        assert binormal_mu(0.99) == pytest.approx(3.28997, abs=1e-4)
        assert binormal_mu(0.5) == 0.0

    def test_mu_bounds(self):
        for bad in (0.0, 1.0, -0.2, 1.2):
            with pytest.raises(ValueError):
                binormal_mu(bad)

    def test_scores_hit_target_auroc(self):
        spec = BinormalSpec(target_auroc=0.85, prevalence=0.3, n_cases=60_000)
        labels, scores = simulate_scores(spec, seed=0)
        assert auroc(labels, scores) == pytest.approx(0.85, abs=0.01)

    def test_scores_in_range(self):
        spec = BinormalSpec(target_auroc=0.8, prevalence=0.3, n_cases=500)
        labels, scores = simulate_scores(spec, seed=1)
        assert scores.min() == 0.0 and scores.max() == 100.0
        assert labels.mean() == pytest.approx(0.3, abs=0.07)

    def test_deterministic(self):
        spec = BinormalSpec(target_auroc=0.8, prevalence=0.3, n_cases=200)
        a = simulate_scores(spec, seed=2)
        b = simulate_scores(spec, seed=2)
        assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


class TestTable3:
    def test_shape_and_grouping(self):
        rows = simulate_table3(seed=0, n_cases=800)
        assert len(rows) == 12
        assert [r.system for r in rows] == list("ABCDEF") * 2
        assert all(r.rule == "matched_specificity" for r in rows[:6])
        assert all(r.rule == "youden" for r in rows[6:])
        assert [r.target_auroc for r in rows[:6]] == list(TABLE3_TARGETS)

    def test_matched_rows_clear_spec_target(self):
        rows = simulate_table3(seed=3, n_cases=2000)
        for row in rows[:6]:
            assert row.specificity >= 0.57

    def test_youden_rows_balance_sens_spec(self):
        from scipy.stats import norm

        rows = simulate_table3(seed=4, n_cases=60_000)
        for row in rows[6:]:
            # equal-variance binormal: the optimum sits at sens = spec =
            # Phi(mu/2). The index is flat near the top, so sens and spec
            # individually wander more than their sum does.
            j_expected = 2 * norm.cdf(binormal_mu(row.target_auroc) / 2) - 1
            j_realized = row.sensitivity + row.specificity - 1
            assert j_realized == pytest.approx(j_expected, abs=0.02)
            assert row.sensitivity == pytest.approx(row.specificity, abs=0.08)

    def test_agreement_and_alpha_increase_with_auroc(self):
        rows = simulate_table3(seed=5, n_cases=40_000)
        youden = rows[6:]
        alphas = [r.alpha for r in youden]
        agreements = [r.agreement for r in youden]
        assert all(b > a for a, b in zip(alphas, alphas[1:]))
        assert all(b > a for a, b in zip(agreements, agreements[1:]))

    def test_deterministic(self):
        a = simulate_table3(seed=6, n_cases=500)
        b = simulate_table3(seed=6, n_cases=500)
        assert a == b

    def test_systems_share_labels(self):
        # one label draw per grid: every system reports the same number of
        # positives through its agreement denominator
        rows = simulate_table3(seed=7, n_cases=1000)
        # reconstruct: agreement and alpha are computed against one label
        # vector, so a perfect system (target ~ 1) must approach alpha 1
        top = [r for r in rows if r.system == "F" and r.rule == "youden"][0]
        assert top.alpha > 0.75


class TestPlan:
    def test_returns_decision(self):
        res = simulate_plan(
            benchmark=0.675,
            margin=0.05,
            true_agreement=0.74,
            n_cases=400,
            replications=4000,
            seed=8,
        )
        assert res.decision in ("Interchangeable", "NotDemonstrated")
        assert res.proportion == pytest.approx(0.74, abs=0.07)
        assert res.n_cases == 400

    def test_deterministic(self):
        kwargs = dict(
            benchmark=0.675, margin=0.05, true_agreement=0.74, n_cases=300,
            replications=3000, seed=9,
        )
        assert simulate_plan(**kwargs) == simulate_plan(**kwargs)


class TestReaderPanel:
    def test_shapes(self):
        spec = ReaderPanelSpec(n_cases=50, n_readers=5, prevalence=0.3)
        panel = simulate_reader_panel(spec, seed=10)
        assert len(panel.cases) == 50
        assert len(panel.readings) == 250
        assert set(panel.truth) == {c.case_id for c in panel.cases}

    def test_no_reader_dispersion_is_unanimous(self):
        spec = ReaderPanelSpec(
            n_cases=40, n_readers=6, prevalence=0.3, reader_dispersion=0.0
        )
        panel = simulate_reader_panel(spec, seed=11)
        by_case = {}
        for r in panel.readings:
            by_case.setdefault(r.case_id, set()).add(r.pirads)
        assert all(len(v) == 1 for v in by_case.values())
        assert panel_agreement_analytic(spec) == 1.0

    def test_huge_dispersion_approaches_coin_flip(self):
        spec = ReaderPanelSpec(
            n_cases=400, n_readers=20, prevalence=0.3, reader_dispersion=500.0
        )
        assert panel_agreement_analytic(spec) == pytest.approx(0.5, abs=0.01)
        panel = simulate_reader_panel(spec, seed=12)
        by_case = {}
        for r in panel.readings:
            by_case.setdefault(r.case_id, []).append(1 if r.pirads >= 3 else 0)
        mean_pairwise = np.mean([pairwise_case_agreement(d) for d in by_case.values()])
        assert mean_pairwise == pytest.approx(0.5, abs=0.05)

    def test_analytic_matches_empirical(self):
        spec = ReaderPanelSpec(
            n_cases=2500, n_readers=12, prevalence=0.33, reader_dispersion=0.8
        )
        panel = simulate_reader_panel(spec, seed=13)
        by_case = {}
        for r in panel.readings:
            by_case.setdefault(r.case_id, []).append(1 if r.pirads >= 3 else 0)
        mean_pairwise = np.mean([pairwise_case_agreement(d) for d in by_case.values()])
        assert mean_pairwise == pytest.approx(panel_agreement_analytic(spec), abs=0.02)

    def test_calibration_recovers_target(self):
        spec = ReaderPanelSpec(n_cases=400, n_readers=18, prevalence=1 / 3)
        calibrated = calibrate_reader_dispersion(spec, target_agreement=0.734)
        assert panel_agreement_analytic(calibrated) == pytest.approx(0.734, abs=1e-9)
        panel = simulate_reader_panel(calibrated, seed=14)
        by_case = {}
        for r in panel.readings:
            by_case.setdefault(r.case_id, []).append(1 if r.pirads >= 3 else 0)
        mean_pairwise = np.mean([pairwise_case_agreement(d) for d in by_case.values()])
        assert mean_pairwise == pytest.approx(0.734, abs=0.05)

    def test_calibration_target_bounds(self):
        spec = ReaderPanelSpec(n_cases=10, n_readers=3, prevalence=0.5)
        for bad in (0.4, 1.0, 0.5):
            with pytest.raises(ValueError):
                calibrate_reader_dispersion(spec, target_agreement=bad)

    def test_case_records_are_loadable(self):
        from concord.cohort import cases_to_csv, load_cases, readings_to_csv, load_readings

        spec = ReaderPanelSpec(n_cases=25, n_readers=4, prevalence=0.3)
        panel = simulate_reader_panel(spec, seed=15)
        assert load_cases(cases_to_csv(panel.cases)) == panel.cases
        assert load_readings(readings_to_csv(panel.readings)) == panel.readings

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            ReaderPanelSpec(n_cases=0, n_readers=3, prevalence=0.3)
        with pytest.raises(ValueError):
            ReaderPanelSpec(n_cases=10, n_readers=1, prevalence=0.3)
        with pytest.raises(ValueError):
            ReaderPanelSpec(n_cases=10, n_readers=3, prevalence=1.5)
        with pytest.raises(ValueError):
            ReaderPanelSpec(n_cases=10, n_readers=3, prevalence=0.3, reader_dispersion=-1)
