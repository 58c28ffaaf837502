"""Shared builders for test cohorts."""

from __future__ import annotations

import numpy as np

from concord.cohort import AiPrediction, CaseRecord, ReaderScore


def make_case(case_id="c1", **overrides):
    """A verified-positive case unless fields are overridden."""
    fields = {
        "case_id": case_id,
        "patient_id": overrides.pop("patient_id", f"p-{case_id}"),
        "age": 65.0,
        "psa": 6.5,
        "historical_pirads": 4,
        "verification": "HISTO",
        "gleason_gg": 2,
    }
    fields.update(overrides)
    return CaseRecord(**fields)


def make_negative(case_id="c1", **overrides):
    fields = {"historical_pirads": 2, "verification": "HISTO", "gleason_gg": 0}
    fields.update(overrides)
    return make_case(case_id, **fields)


def make_unverified(case_id="c1", **overrides):
    fields = {"historical_pirads": 2, "verification": "UNVERIFIED", "gleason_gg": None}
    fields.update(overrides)
    return make_case(case_id, **fields)


def make_reading(case_id="c1", reader_id="r1", pirads=4):
    return ReaderScore(case_id=case_id, reader_id=reader_id, pirads=pirads)


def panel_from_matrix(matrix):
    """Readings for a cases x readers PI-RADS matrix (None = not read)."""
    readings = []
    for i, row in enumerate(matrix):
        for j, score in enumerate(row):
            if score is not None:
                readings.append(make_reading(f"c{i + 1}", f"r{j + 1}", score))
    return readings


def biopsy_cohort(n=200, seed=0, missed_rate=0.08, unverified_rate=0.0, prevalence=0.35):
    """Cases plus AI scores with a known signal, for model and pipeline tests.

    MRI-positive cases all get histology. MRI-negative cases carry a
    PSA/age-driven cancer risk so the verification-bias model has signal.
    """
    rng = np.random.default_rng(seed)
    cases, scores = [], []
    for i in range(n):
        age = float(rng.uniform(46, 80))
        psa = float(np.exp(rng.normal(1.5, 0.5)))
        mri_pos = bool(rng.random() < prevalence)
        if mri_pos:
            y = int(rng.random() < 0.65)
            case = make_case(
                f"c{i + 1}",
                age=age,
                psa=psa,
                historical_pirads=int(rng.integers(3, 6)),
                gleason_gg=2 + int(rng.integers(0, 3)) if y else int(rng.integers(0, 2)),
            )
        else:
            # age and PSA drive the missed-cancer risk among MRI-negatives
            risk = missed_rate * 2.0 / (1.0 + np.exp(-(-7.0 + 0.05 * age + 1.1 * np.log(psa))))
            y = int(rng.random() < min(risk, 1.0))
            if rng.random() < unverified_rate:
                case = make_unverified(f"c{i + 1}", age=age, psa=psa)
            else:
                case = make_case(
                    f"c{i + 1}",
                    age=age,
                    psa=psa,
                    historical_pirads=int(rng.integers(1, 3)),
                    gleason_gg=2 if y else 0,
                )
        cases.append(case)
        scores.append(float(np.clip(rng.normal(32 + 36 * y, 14), 0, 100)))
    return cases, np.asarray(scores)


def predictions_for(cases, scores):
    return [
        AiPrediction(case_id=c.case_id, score=float(s)) for c, s in zip(cases, scores)
    ]
