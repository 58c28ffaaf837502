"""Interchangeability test: AI-vs-diagnosis agreement against a benchmark.

The test statistic is the proportion of binarized AI assessments matching
the standard-of-care diagnosis. A paired n-out-of-n bootstrap resamples
patients (all of a patient's cases move together); the primary interval is
the Wald interval p_hat +/- 1.96 * SD(bootstrap), with the percentile
interval reported alongside. Interchangeability is declared iff the Wald
lower bound strictly exceeds benchmark - margin.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from typing import Sequence

import numpy as np
from scipy.stats import norm

from .resample import percentile_interval, resampled_ratios

DEFAULT_REPLICATIONS = 1_000_000
DEFAULT_MARGIN = 0.05

INTERCHANGEABLE = "Interchangeable"
NOT_DEMONSTRATED = "NotDemonstrated"


def agreement_proportion(soc_labels: Sequence[int], ai_binary: Sequence[int]) -> float:
    """Fraction of cases where the binarized AI call matches the diagnosis."""
    y = np.asarray(soc_labels, dtype=int)
    a = np.asarray(ai_binary, dtype=int)
    if y.shape != a.shape:
        raise ValueError("labels and AI calls must align")
    if y.size == 0:
        raise ValueError("empty input")
    if not np.isin(y, (0, 1)).all() or not np.isin(a, (0, 1)).all():
        raise ValueError("labels and AI calls must be binary")
    return float(np.mean(y == a))


@dataclass(frozen=True)
class WaldBootstrapCI:
    """Bootstrap summary for the agreement proportion."""

    proportion: float
    se: float
    ci_low: float
    ci_high: float
    percentile_low: float
    percentile_high: float
    replications: int
    n_cases: int
    n_patients: int

    def to_dict(self) -> dict:
        return {
            "proportion": self.proportion,
            "se": self.se,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "percentile_low": self.percentile_low,
            "percentile_high": self.percentile_high,
            "replications": self.replications,
            "n_cases": self.n_cases,
            "n_patients": self.n_patients,
        }


def bootstrap_wald_ci(
    soc_labels: Sequence[int],
    ai_binary: Sequence[int],
    patient_ids: Sequence[str] | None = None,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    workers: int = 1,
    key: tuple[int, ...] = (),
) -> WaldBootstrapCI:
    """Patient-level paired bootstrap of the agreement proportion.

    Patients are the resampling units; per-patient match and case counts are
    precomputed so each replicate is a ratio of resampled sums. Without
    ``patient_ids`` every case is its own patient.
    """
    y = np.asarray(soc_labels, dtype=int)
    a = np.asarray(ai_binary, dtype=int)
    p_hat = agreement_proportion(y, a)
    matches = (y == a).astype(float)

    if patient_ids is None:
        patient_ids = [str(i) for i in range(y.size)]
    if len(patient_ids) != y.size:
        raise ValueError("patient_ids must align with cases")
    match_sums: dict[str, float] = {}
    case_counts: dict[str, int] = {}
    for pid, m in zip(patient_ids, matches):
        match_sums[pid] = match_sums.get(pid, 0.0) + float(m)
        case_counts[pid] = case_counts.get(pid, 0) + 1
    order = sorted(match_sums)
    nums = np.asarray([match_sums[p] for p in order], dtype=float)
    dens = np.asarray([case_counts[p] for p in order], dtype=float)

    stats = resampled_ratios(nums, dens, replications, seed, workers, key)
    se = float(stats.std(ddof=1))
    pct_lo, pct_hi = percentile_interval(stats)
    return WaldBootstrapCI(
        proportion=p_hat,
        se=se,
        ci_low=max(0.0, p_hat - 1.96 * se),
        ci_high=min(1.0, p_hat + 1.96 * se),
        percentile_low=pct_lo,
        percentile_high=pct_hi,
        replications=int(replications),
        n_cases=int(y.size),
        n_patients=len(order),
    )


@dataclass(frozen=True)
class InterchangeResult:
    """Decision record for one cohort."""

    cohort: str
    proportion: float
    ci_low: float
    ci_high: float
    benchmark: float
    margin: float
    decision: str
    percentile_low: float | None = None
    percentile_high: float | None = None
    p_value: float | None = None
    context_inter_reader: float | None = None  # P_adj, shown for context only
    replications: int | None = None
    se: float | None = None
    n_cases: int | None = None
    n_patients: int | None = None
    seed: int | None = None

    @property
    def decision_threshold(self) -> float:
        return self.benchmark - self.margin

    @classmethod
    def from_dict(cls, payload: dict) -> "InterchangeResult":
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in payload.items() if k in known})

    def to_dict(self) -> dict:
        return {
            "cohort": self.cohort,
            "proportion": self.proportion,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "percentile_low": self.percentile_low,
            "percentile_high": self.percentile_high,
            "benchmark": self.benchmark,
            "margin": self.margin,
            "decision_threshold": self.decision_threshold,
            "decision": self.decision,
            "p_value": self.p_value,
            "context_inter_reader": self.context_inter_reader,
            "replications": self.replications,
            "se": self.se,
            "n_cases": self.n_cases,
            "n_patients": self.n_patients,
            "seed": self.seed,
        }


def interchange_decision(
    proportion: float,
    ci_low: float,
    benchmark: float,
    margin: float = DEFAULT_MARGIN,
    ci_high: float | None = None,
    cohort: str = "",
    **extra,
) -> InterchangeResult:
    """Interchangeable iff ci_low > benchmark - margin (strict inequality)."""
    for name, v in (("proportion", proportion), ("ci_low", ci_low), ("benchmark", benchmark)):
        if not 0.0 <= float(v) <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    if not 0.0 <= float(margin) < 1.0:
        raise ValueError(f"margin must lie in [0, 1), got {margin}")
    decision = INTERCHANGEABLE if ci_low > benchmark - margin else NOT_DEMONSTRATED
    return InterchangeResult(
        cohort=cohort,
        proportion=float(proportion),
        ci_low=float(ci_low),
        ci_high=float(ci_high) if ci_high is not None else float(proportion),
        benchmark=float(benchmark),
        margin=float(margin),
        decision=decision,
        **extra,
    )


def one_sided_p_value(proportion: float, se: float, benchmark: float, margin: float) -> float:
    """Normal-approximation p-value against H0: proportion <= benchmark - margin."""
    if se < 0:
        raise ValueError("se must be non-negative")
    delta = proportion - (benchmark - margin)
    if se == 0.0:
        return 0.0 if delta > 0 else 1.0
    return float(norm.cdf(-delta / se))


def interchangeability_test(
    soc_labels: Sequence[int],
    ai_binary: Sequence[int],
    benchmark: float,
    margin: float = DEFAULT_MARGIN,
    patient_ids: Sequence[str] | None = None,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    workers: int = 1,
    cohort: str = "",
    context_inter_reader: float | None = None,
    key: tuple[int, ...] = (),
) -> InterchangeResult:
    """Full pipeline: bootstrap, Wald CI, decision and one-sided p-value."""
    boot = bootstrap_wald_ci(
        soc_labels, ai_binary, patient_ids, replications, seed, workers, key
    )
    p = one_sided_p_value(boot.proportion, boot.se, benchmark, margin)
    return interchange_decision(
        proportion=boot.proportion,
        ci_low=boot.ci_low,
        ci_high=boot.ci_high,
        benchmark=benchmark,
        margin=margin,
        cohort=cohort,
        percentile_low=boot.percentile_low,
        percentile_high=boot.percentile_high,
        p_value=p,
        context_inter_reader=context_inter_reader,
        replications=boot.replications,
        se=boot.se,
        n_cases=boot.n_cases,
        n_patients=boot.n_patients,
        seed=seed,
    )


def holm_bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[bool]:
    """Step-down Holm-Bonferroni rejections in input order.

    The i-th smallest p-value is rejected iff p_(j) <= alpha/(k-j+1) for all
    j <= i.
    """
    p = np.asarray(p_values, dtype=float)
    if p.size == 0:
        return []
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("p-values must lie in [0, 1]")
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    k = p.size
    order = np.argsort(p, kind="stable")
    reject = np.zeros(k, dtype=bool)
    for step, idx in enumerate(order):
        if p[idx] <= alpha / (k - step):
            reject[idx] = True
        else:
            break  # step-down: once one fails, all larger p-values fail
    return reject.tolist()


def bonferroni(p_values: Sequence[float], alpha: float = 0.05) -> list[bool]:
    """Single-step Bonferroni rejections (reference for the Holm tests)."""
    p = np.asarray(p_values, dtype=float)
    return (p <= alpha / max(1, p.size)).tolist()
