"""Inter-reader and reader-vs-diagnosis agreement with bootstrap CIs.

Per-case agreement proportions are resampled over cases (readers are never
resampled): the estimate is the mean of the resampled means and the CI the
2.5th/97.5th percentiles of that bootstrap distribution. Prevalence
adjustment recombines subset estimates linearly for a target disease
prevalence.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass
from typing import Mapping, Sequence

import numpy as np

from .cohort import CaseRecord, CutoffRule, ReaderScore
from .resample import percentile_interval, resampled_means

DEFAULT_REPLICATIONS = 1_000_000

_EPS = 1e-12


@dataclass(frozen=True)
class AgreementEstimate:
    """Bootstrap agreement estimate on the proportion scale."""

    mean: float
    ci_low: float
    ci_high: float
    replications: int
    n_cases: int

    def __post_init__(self):
        if not (
            -_EPS <= self.ci_low <= self.mean + _EPS
            and self.ci_low - _EPS <= self.mean <= self.ci_high + _EPS
            and self.ci_high <= 1.0 + _EPS
        ):
            raise ValueError(
                f"inconsistent estimate: {self.ci_low} <= {self.mean} <= {self.ci_high}"
            )

    def to_dict(self) -> dict:
        return {
            "mean": self.mean,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "replications": self.replications,
            "n_cases": self.n_cases,
        }


@dataclass(frozen=True)
class PrevalenceAdjusted:
    """Linear recombination of subset estimates at an assumed prevalence."""

    prevalence: float
    positive_estimate: float
    negative_estimate: float
    adjusted: float

    def to_dict(self) -> dict:
        return {
            "prevalence": self.prevalence,
            "positive_estimate": self.positive_estimate,
            "negative_estimate": self.negative_estimate,
            "adjusted": self.adjusted,
        }


def pairwise_case_agreement(decisions: Sequence[int]) -> float:
    """Fraction of concordant reader pairs for one case.

    With k positive calls among n readers the concordant pair count is
    C(k,2) + C(n-k,2) out of C(n,2).
    """
    d = np.asarray(decisions, dtype=int)
    n = d.size
    if n < 2:
        raise ValueError("pairwise agreement needs at least 2 readers")
    if not np.isin(d, (0, 1)).all():
        raise ValueError("decisions must be binary")
    k = int(d.sum())
    pairs = n * (n - 1) // 2
    agree = k * (k - 1) // 2 + (n - k) * (n - k - 1) // 2
    return agree / pairs


def soc_case_agreement(decisions: Sequence[int], soc_label: int) -> float:
    """Fraction of readers matching the standard-of-care diagnosis."""
    d = np.asarray(decisions, dtype=int)
    if d.size == 0:
        raise ValueError("no reader decisions for case")
    if not np.isin(d, (0, 1)).all():
        raise ValueError("decisions must be binary")
    if soc_label not in (0, 1):
        raise ValueError(f"soc_label must be 0 or 1, got {soc_label}")
    return float(np.mean(d == soc_label))


def mean_agreement_bootstrap(
    per_case: Sequence[float],
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    workers: int = 1,
    key: tuple[int, ...] = (),
) -> AgreementEstimate:
    """Percentile bootstrap over per-case agreement proportions."""
    vals = np.asarray(per_case, dtype=float)
    if vals.size == 0:
        raise ValueError("no per-case proportions to bootstrap")
    if vals.min() < 0.0 or vals.max() > 1.0:
        raise ValueError("per-case proportions must lie in [0, 1]")
    stats = resampled_means(vals, replications, seed, workers, key)
    lo, hi = percentile_interval(stats)
    return AgreementEstimate(
        mean=float(stats.mean()),
        ci_low=lo,
        ci_high=hi,
        replications=int(replications),
        n_cases=int(vals.size),
    )


def prevalence_adjust(
    prevalence: float, positive_estimate: float, negative_estimate: float
) -> PrevalenceAdjusted:
    """Adjusted = prevalence * positive + (1 - prevalence) * negative."""
    for name, v in (
        ("prevalence", prevalence),
        ("positive_estimate", positive_estimate),
        ("negative_estimate", negative_estimate),
    ):
        if not 0.0 <= float(v) <= 1.0:
            raise ValueError(f"{name} must lie in [0, 1], got {v}")
    adjusted = prevalence * positive_estimate + (1.0 - prevalence) * negative_estimate
    return PrevalenceAdjusted(
        prevalence=float(prevalence),
        positive_estimate=float(positive_estimate),
        negative_estimate=float(negative_estimate),
        adjusted=float(adjusted),
    )


# ---------------------------------------------------------------------------
# panel-level estimates (grouping readings by case)


def group_decisions(
    readings: Sequence[ReaderScore], cutoff: CutoffRule
) -> dict[str, np.ndarray]:
    """Binarized reader decisions per case, in input order within case."""
    grouped: dict[str, list[int]] = {}
    for r in readings:
        grouped.setdefault(r.case_id, []).append(cutoff.binarize(r.pirads))
    return {cid: np.asarray(vals, dtype=int) for cid, vals in grouped.items()}


def per_case_pairwise(
    readings: Sequence[ReaderScore], cutoff: CutoffRule
) -> dict[str, float]:
    """Per-case pairwise agreement; cases with fewer than 2 readers are
    excluded with a warning (they carry no reader pairs)."""
    grouped = group_decisions(readings, cutoff)
    dropped = [cid for cid, d in grouped.items() if d.size < 2]
    if dropped:
        warnings.warn(
            f"excluding {len(dropped)} single-reader cases from pairwise agreement",
            stacklevel=2,
        )
    return {
        cid: pairwise_case_agreement(d) for cid, d in grouped.items() if d.size >= 2
    }


def per_case_soc(
    readings: Sequence[ReaderScore],
    soc_labels: Mapping[str, int],
    cutoff: CutoffRule,
) -> dict[str, float]:
    """Per-case fraction of readers matching the standard-of-care diagnosis.

    Single-reader cases are included: the comparator is the diagnosis, not
    another reader.
    """
    grouped = group_decisions(readings, cutoff)
    missing = [cid for cid in grouped if cid not in soc_labels]
    if missing:
        raise ValueError(f"{len(missing)} read cases lack a diagnosis (first: {missing[0]!r})")
    return {cid: soc_case_agreement(d, soc_labels[cid]) for cid, d in grouped.items()}


def _subset_estimates(
    per_case: Mapping[str, float],
    soc_labels: Mapping[str, int],
    replications: int,
    seed: int,
    workers: int,
) -> dict[str, AgreementEstimate]:
    subsets = {
        "all": sorted(per_case),
        "positive": sorted(cid for cid in per_case if soc_labels[cid] == 1),
        "negative": sorted(cid for cid in per_case if soc_labels[cid] == 0),
    }
    out: dict[str, AgreementEstimate] = {}
    for stream, (name, ids) in enumerate(subsets.items()):
        if not ids:
            continue
        values = [per_case[cid] for cid in ids]
        out[name] = mean_agreement_bootstrap(
            values, replications, seed, workers, key=(stream,)
        )
    return out


def inter_reader_estimates(
    readings: Sequence[ReaderScore],
    cases: Sequence[CaseRecord],
    cutoff: CutoffRule,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    workers: int = 1,
) -> dict[str, AgreementEstimate]:
    """Pairwise inter-reader agreement for all / positive / negative cases."""
    soc = {c.case_id: c.soc_label for c in cases}
    per_case = per_case_pairwise(readings, cutoff)
    unknown = [cid for cid in per_case if cid not in soc]
    if unknown:
        raise ValueError(f"readings reference cases outside the cohort (first: {unknown[0]!r})")
    return _subset_estimates(per_case, soc, replications, seed, workers)


def soc_agreement_estimates(
    readings: Sequence[ReaderScore],
    cases: Sequence[CaseRecord],
    cutoff: CutoffRule,
    replications: int = DEFAULT_REPLICATIONS,
    seed: int = 0,
    workers: int = 1,
) -> dict[str, AgreementEstimate]:
    """Reader-vs-diagnosis agreement for all / positive / negative cases."""
    soc = {c.case_id: c.soc_label for c in cases}
    per_case = per_case_soc(readings, soc, cutoff)
    return _subset_estimates(per_case, soc, replications, seed, workers)
