"""Synthetic cohorts: binormal AI scores, plan rehearsals and reader panels.

Scores follow the equal-variance binormal model: negatives N(0,1),
positives N(mu,1) with mu = sqrt(2) * PHI^-1(target AUROC), affinely mapped
to [0, 100]. The reader-panel generator gives each case a latent signal and
each reader a threshold; decisions are deterministic given both, so reader
threshold dispersion alone tunes inter-reader agreement from coin flips
(large dispersion) to unanimity (zero dispersion).
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.stats import norm

from .cohort import CaseRecord, ReaderScore
from .interchange import InterchangeResult, interchangeability_test
from .metrics import RocCurve, auroc, krippendorff_alpha, matched_point, youden_point

TABLE3_TARGETS = (0.75, 0.80, 0.85, 0.90, 0.95, 0.99)
# Display-scale matched-specificity target used by the published grid.
TABLE3_SPEC_TARGET = 0.57


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=key))


def binormal_mu(target_auroc: float) -> float:
    """Separation between class means implied by a target AUROC."""
    if not 0.0 < target_auroc < 1.0:
        raise ValueError(f"target AUROC must lie in (0, 1), got {target_auroc}")
    return float(np.sqrt(2.0) * norm.ppf(target_auroc))


@dataclass(frozen=True)
class BinormalSpec:
    """One synthetic AI system scored on one cohort."""

    target_auroc: float
    prevalence: float
    n_cases: int

    def __post_init__(self):
        if not 0.0 < self.prevalence < 1.0:
            raise ValueError(f"prevalence must lie in (0, 1), got {self.prevalence}")
        if self.n_cases < 2:
            raise ValueError("need at least 2 cases")
        binormal_mu(self.target_auroc)  # validates the target

    @property
    def mu(self) -> float:
        return binormal_mu(self.target_auroc)


def _binormal_scores(
    labels: np.ndarray, mu: float, rng: np.random.Generator
) -> np.ndarray:
    z = rng.standard_normal(labels.size) + mu * labels
    lo, hi = z.min(), z.max()
    if hi == lo:
        raise ValueError("degenerate score draw")
    return 100.0 * (z - lo) / (hi - lo)


def simulate_scores(spec: BinormalSpec, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Draw (labels, scores). Labels and scores use separate derived streams."""
    labels = (_stream(seed, 0).random(spec.n_cases) < spec.prevalence).astype(int)
    if labels.min() == labels.max():
        raise ValueError("single-class label draw; increase n_cases")
    scores = _binormal_scores(labels, spec.mu, _stream(seed, 1))
    return labels, scores


@dataclass(frozen=True)
class Table3Row:
    """One simulated system at one operating rule."""

    system: str
    rule: str  # matched_specificity | youden
    target_auroc: float
    auroc: float
    threshold: float
    sensitivity: float
    specificity: float
    alpha: float
    agreement: float

    def to_dict(self) -> dict:
        return {
            "system": self.system,
            "rule": self.rule,
            "target_auroc": self.target_auroc,
            "auroc": self.auroc,
            "threshold": self.threshold,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "alpha": self.alpha,
            "agreement": self.agreement,
        }


def simulate_table3(
    targets: Sequence[float] = TABLE3_TARGETS,
    prevalence: float = 0.30,
    n_cases: int = 1000,
    spec_target: float = TABLE3_SPEC_TARGET,
    seed: int = 0,
) -> list[Table3Row]:
    """Simulated-system grid: one label draw, one score draw per system,
    evaluated at the matched-specificity point and at the Youden point.

    Rows come out grouped by rule (all matched-specificity rows, then all
    Youden rows), systems lettered A, B, C, ... in target order.
    """
    labels = (_stream(seed, 0).random(n_cases) < prevalence).astype(int)
    if labels.min() == labels.max():
        raise ValueError("single-class label draw; increase n_cases")

    per_system = []
    for k, target in enumerate(targets):
        scores = _binormal_scores(labels, binormal_mu(target), _stream(seed, k + 1))
        curve = RocCurve.from_scores(labels, scores)
        points = {
            "matched_specificity": matched_point(curve, spec_target, "specificity"),
            "youden": youden_point(curve),
        }
        rows = {}
        for rule, point in points.items():
            preds = (scores >= point.threshold).astype(int)
            rows[rule] = Table3Row(
                system=chr(ord("A") + k),
                rule=rule,
                target_auroc=float(target),
                auroc=auroc(labels, scores),
                threshold=point.threshold,
                sensitivity=point.sensitivity,
                specificity=point.specificity,
                alpha=krippendorff_alpha(labels, preds),
                agreement=float(np.mean(preds == labels)),
            )
        per_system.append(rows)

    out = [rows["matched_specificity"] for rows in per_system]
    out += [rows["youden"] for rows in per_system]
    return out


def simulate_plan(
    benchmark: float,
    margin: float,
    true_agreement: float,
    n_cases: int,
    replications: int = 1_000_000,
    seed: int = 0,
    workers: int = 1,
    p_adj: float | None = None,
    cohort: str = "simulated-plan",
) -> InterchangeResult:
    """Rehearse the full interchangeability pipeline on Bernoulli agreement
    outcomes drawn at a known true rate (one case per patient)."""
    if not 0.0 <= true_agreement <= 1.0:
        raise ValueError(f"true_agreement must lie in [0, 1], got {true_agreement}")
    if n_cases < 1:
        raise ValueError("need at least 1 case")
    agree = _stream(seed, 0).random(n_cases) < true_agreement
    soc = np.zeros(n_cases, dtype=int)
    ai = (~agree).astype(int)  # AI matches the diagnosis exactly where drawn to agree
    return interchangeability_test(
        soc,
        ai,
        benchmark=benchmark,
        margin=margin,
        replications=replications,
        seed=seed,
        workers=workers,
        cohort=cohort,
        context_inter_reader=p_adj,
        key=(1,),
    )


# ---------------------------------------------------------------------------
# reader panels


@dataclass(frozen=True)
class ReaderPanelSpec:
    """Latent-signal reader panel.

    Case signal x = separation * disease + case_dispersion * N(0,1); reader
    r calls positive iff x >= threshold_center + reader_dispersion * N(0,1)
    (thresholds drawn once per reader). Zero dispersion everywhere makes all
    readers identical; very large reader dispersion makes decisions
    independent coin flips per reading.
    """

    n_cases: int
    n_readers: int
    prevalence: float
    case_dispersion: float = 1.0
    reader_dispersion: float = 1.0
    separation: float = 2.0
    threshold_center: float | None = None  # default: separation / 2

    def __post_init__(self):
        if self.n_cases < 1 or self.n_readers < 2:
            raise ValueError("panel needs >= 1 case and >= 2 readers")
        if not 0.0 <= self.prevalence <= 1.0:
            raise ValueError(f"prevalence must lie in [0, 1], got {self.prevalence}")
        for name in ("case_dispersion", "reader_dispersion", "separation"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be >= 0")

    @property
    def center(self) -> float:
        return self.separation / 2.0 if self.threshold_center is None else self.threshold_center


@dataclass
class PanelData:
    """Simulated panel: readings plus ground truth, loadable as a cohort."""

    readings: list[ReaderScore]
    truth: dict[str, int]
    cases: list[CaseRecord]


def simulate_reader_panel(spec: ReaderPanelSpec, seed: int = 0) -> PanelData:
    """Draw a reader panel; binary decisions are encoded as PI-RADS 2 / 4 so
    both binarization cutoffs recover them."""
    labels = (_stream(seed, 0).random(spec.n_cases) < spec.prevalence).astype(int)
    signal = spec.separation * labels + spec.case_dispersion * _stream(seed, 1).standard_normal(
        spec.n_cases
    )
    thresholds = spec.center + spec.reader_dispersion * _stream(seed, 2).standard_normal(
        spec.n_readers
    )
    demo = _stream(seed, 3)

    width = len(str(spec.n_cases))
    case_ids = [f"sim-{i + 1:0{width}d}" for i in range(spec.n_cases)]
    decisions = signal[None, :] >= thresholds[:, None]  # readers x cases

    readings = [
        ReaderScore(case_ids[i], f"reader-{r + 1:03d}", 4 if decisions[r, i] else 2)
        for r in range(spec.n_readers)
        for i in range(spec.n_cases)
    ]
    ages = demo.uniform(45.0, 75.0, spec.n_cases).round(0)
    psas = np.exp(demo.normal(1.2, 0.5, spec.n_cases)).round(2)
    cases = [
        CaseRecord(
            case_id=case_ids[i],
            patient_id=case_ids[i],
            age=float(max(ages[i], 40.0)),
            psa=float(max(psas[i], 0.1)),
            historical_pirads=4 if labels[i] else 2,
            verification="HISTO",
            gleason_gg=2 if labels[i] else 0,
        )
        for i in range(spec.n_cases)
    ]
    truth = {case_ids[i]: int(labels[i]) for i in range(spec.n_cases)}
    return PanelData(readings=readings, truth=truth, cases=cases)


def panel_agreement_analytic(spec: ReaderPanelSpec, nodes: int = 96) -> float:
    """Expected pairwise inter-reader agreement under the panel model.

    For a case with signal x, independent reader thresholds give positive-
    call probability q(x) = PHI((x - center)/reader_dispersion); a random
    reader pair agrees with probability q^2 + (1-q)^2. The expectation over
    the case-signal mixture uses Gauss-Hermite quadrature.
    """
    if spec.reader_dispersion == 0.0:
        return 1.0  # identical thresholds, identical decisions

    t, w = np.polynomial.hermite.hermgauss(nodes)
    z = np.sqrt(2.0) * t
    weights = w / np.sqrt(np.pi)

    def class_mean(mean_signal: float) -> float:
        x = mean_signal + spec.case_dispersion * z
        q = norm.cdf((x - spec.center) / spec.reader_dispersion)
        return float(np.sum(weights * (q**2 + (1.0 - q) ** 2)))

    return (
        spec.prevalence * class_mean(spec.separation)
        + (1.0 - spec.prevalence) * class_mean(0.0)
    )


def calibrate_reader_dispersion(
    spec: ReaderPanelSpec, target_agreement: float
) -> ReaderPanelSpec:
    """Return a copy of ``spec`` whose reader dispersion hits the target
    expected pairwise agreement (monotone: 1.0 at zero dispersion, 0.5 in
    the coin-flip limit)."""
    if not 0.5 < target_agreement < 1.0:
        raise ValueError("target agreement must lie in (0.5, 1)")
    import dataclasses

    def gap(log_sigma: float) -> float:
        trial = dataclasses.replace(spec, reader_dispersion=float(np.exp(log_sigma)))
        return panel_agreement_analytic(trial) - target_agreement

    log_sigma = brentq(gap, np.log(1e-6), np.log(1e6))
    return dataclasses.replace(spec, reader_dispersion=float(np.exp(log_sigma)))
