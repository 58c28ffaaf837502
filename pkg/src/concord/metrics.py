"""ROC analysis, operating points, nominal-agreement alpha and benefit/harm.

AUROC uses the rank-sum (Mann-Whitney) estimator with tied scores counted
as half-concordant, O(n log n). The DeLong structural-component variance is
computed from midranks, which keeps multiple-imputation pooling cheap on
large cohorts.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

from .cohort import CaseRecord


def _check_binary_labels(labels: np.ndarray) -> None:
    if labels.size == 0:
        raise ValueError("empty labels")
    if not np.isin(labels, (0, 1)).all():
        raise ValueError("labels must be binary")
    if labels.min() == labels.max():
        raise ValueError("single-class labels: AUROC undefined")


def auroc(labels: Sequence[int], scores: Sequence[float]) -> float:
    """Probability a random positive outscores a random negative (ties half)."""
    y = np.asarray(labels, dtype=int)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores must align")
    _check_binary_labels(y)
    ranks = rankdata(s)
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    rank_sum = ranks[y == 1].sum()
    return float((rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def auroc_delong(labels: Sequence[int], scores: Sequence[float]) -> tuple[float, float]:
    """AUROC and its DeLong variance via midranks.

    Per-positive components V10 and per-negative components V01 are read off
    pooled and within-class midranks; the variance is
    var(V10)/n_pos + var(V01)/n_neg with sample variances.
    """
    y = np.asarray(labels, dtype=int)
    s = np.asarray(scores, dtype=float)
    if y.shape != s.shape:
        raise ValueError("labels and scores must align")
    _check_binary_labels(y)
    pos = s[y == 1]
    neg = s[y == 0]
    m, n = pos.size, neg.size
    tz = rankdata(np.concatenate([pos, neg]))
    tx = rankdata(pos)
    ty = rankdata(neg)
    v10 = (tz[:m] - tx) / n  # per-positive: fraction of negatives outscored
    v01 = 1.0 - (tz[m:] - ty) / m  # per-negative: fraction of positives above
    auc = float(v10.mean())
    var = 0.0
    if m > 1:
        var += float(np.var(v10, ddof=1)) / m
    if n > 1:
        var += float(np.var(v01, ddof=1)) / n
    return auc, var


# ---------------------------------------------------------------------------
# ROC curve and operating points


@dataclass
class RocCurve:
    """Empirical ROC curve: predict positive iff score >= threshold.

    Thresholds ascend and include -inf/+inf sentinels, so the degenerate
    operating points (sens=1, spec=0) and (sens=0, spec=1) are always
    present and any sensitivity or specificity target is reachable.
    """

    thresholds: np.ndarray
    sensitivities: np.ndarray
    specificities: np.ndarray
    n_positive: int
    n_negative: int

    @classmethod
    def from_scores(cls, labels: Sequence[int], scores: Sequence[float]) -> "RocCurve":
        y = np.asarray(labels, dtype=int)
        s = np.asarray(scores, dtype=float)
        if y.shape != s.shape:
            raise ValueError("labels and scores must align")
        _check_binary_labels(y)
        pos = np.sort(s[y == 1])
        neg = np.sort(s[y == 0])
        thresholds = np.concatenate([[-np.inf], np.unique(s), [np.inf]])
        sens = 1.0 - np.searchsorted(pos, thresholds, side="left") / pos.size
        spec = np.searchsorted(neg, thresholds, side="left") / neg.size
        return cls(thresholds, sens, spec, int(pos.size), int(neg.size))

    def to_rows(self) -> list[tuple[float, float, float]]:
        return [
            (float(t), float(se), float(sp))
            for t, se, sp in zip(self.thresholds, self.sensitivities, self.specificities)
        ]


@dataclass(frozen=True)
class OperatingPoint:
    """A chosen threshold with its realized sensitivity and specificity.

    Realized rates are None for a fixed threshold on data without verified
    labels of both classes.
    """

    threshold: float
    sensitivity: float | None
    specificity: float | None
    rule: str
    target: float | None = None

    def to_dict(self) -> dict:
        return {
            "threshold": self.threshold,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "rule": self.rule,
            "target": self.target,
        }


def youden_point(curve: RocCurve, tie_break: str = "specificity") -> OperatingPoint:
    """Threshold maximizing sens + spec - 1.

    Exact ties on the index break toward higher specificity (fewer biopsies)
    by default; ``tie_break="sensitivity"`` picks the other end.
    """
    if tie_break not in ("specificity", "sensitivity"):
        raise ValueError(f"unknown tie_break {tie_break!r}")
    j = curve.sensitivities + curve.specificities - 1.0
    best = j.max()
    candidates = np.flatnonzero(np.isclose(j, best, rtol=0.0, atol=1e-12))
    idx = candidates[-1] if tie_break == "specificity" else candidates[0]
    return OperatingPoint(
        threshold=float(curve.thresholds[idx]),
        sensitivity=float(curve.sensitivities[idx]),
        specificity=float(curve.specificities[idx]),
        rule="youden",
    )


def matched_point(curve: RocCurve, target: float, axis: str) -> OperatingPoint:
    """Smallest threshold with realized specificity >= target, or largest
    threshold with realized sensitivity >= target.

    The curve's sentinel endpoints guarantee every target in [0, 1] is
    reachable; the realized (not the target) values are reported.
    """
    if not 0.0 <= target <= 1.0:
        raise ValueError(f"target must lie in [0, 1], got {target}")
    if axis == "specificity":
        idx = int(np.argmax(curve.specificities >= target))  # first hit, spec ascends
    elif axis == "sensitivity":
        hits = np.flatnonzero(curve.sensitivities >= target)  # sens descends
        idx = int(hits[-1])
    else:
        raise ValueError(f"axis must be 'sensitivity' or 'specificity', got {axis!r}")
    return OperatingPoint(
        threshold=float(curve.thresholds[idx]),
        sensitivity=float(curve.sensitivities[idx]),
        specificity=float(curve.specificities[idx]),
        rule=f"matched_{axis}",
        target=float(target),
    )


# ---------------------------------------------------------------------------
# binary classification metrics


@dataclass(frozen=True)
class BinaryMetrics:
    tp: int
    fp: int
    tn: int
    fn: int
    sensitivity: float | None
    specificity: float | None
    ppv: float | None
    npv: float | None
    observed_agreement: float

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "fp": self.fp,
            "tn": self.tn,
            "fn": self.fn,
            "sensitivity": self.sensitivity,
            "specificity": self.specificity,
            "ppv": self.ppv,
            "npv": self.npv,
            "observed_agreement": self.observed_agreement,
        }


def binary_metrics(labels: Sequence[int], predictions: Sequence[int]) -> BinaryMetrics:
    """Confusion counts and the usual rates; rates are None on empty margins."""
    y = np.asarray(labels, dtype=int)
    p = np.asarray(predictions, dtype=int)
    if y.shape != p.shape:
        raise ValueError("labels and predictions must align")
    if y.size == 0:
        raise ValueError("empty input")
    if not np.isin(y, (0, 1)).all() or not np.isin(p, (0, 1)).all():
        raise ValueError("labels and predictions must be binary")
    tp = int(np.sum((y == 1) & (p == 1)))
    fp = int(np.sum((y == 0) & (p == 1)))
    tn = int(np.sum((y == 0) & (p == 0)))
    fn = int(np.sum((y == 1) & (p == 0)))

    def rate(num: int, den: int) -> float | None:
        return num / den if den else None

    return BinaryMetrics(
        tp=tp,
        fp=fp,
        tn=tn,
        fn=fn,
        sensitivity=rate(tp, tp + fn),
        specificity=rate(tn, tn + fp),
        ppv=rate(tp, tp + fp),
        npv=rate(tn, tn + fn),
        observed_agreement=(tp + tn) / y.size,
    )


def krippendorff_alpha(values_a: Sequence[int], values_b: Sequence[int]) -> float:
    """Nominal two-rater Krippendorff alpha.

    alpha = 1 - D_o/D_e where D_o is the observed disagreement rate and
    D_e = sum_{c != k} n_c n_k / (n_total (n_total - 1)) over the pooled
    2N values (finite-sample denominator).
    """
    a = np.asarray(values_a)
    b = np.asarray(values_b)
    if a.shape != b.shape:
        raise ValueError("value sequences must align")
    n_units = a.size
    if n_units < 2:
        raise ValueError("alpha needs at least 2 units")
    d_o = float(np.mean(a != b))
    pooled = np.concatenate([a, b])
    _, counts = np.unique(pooled, return_counts=True)
    n_total = pooled.size
    d_e = (n_total * n_total - float((counts.astype(float) ** 2).sum())) / (
        n_total * (n_total - 1)
    )
    if d_e == 0.0:
        raise ValueError("all values identical: expected disagreement is zero, alpha undefined")
    return 1.0 - d_o / d_e


# ---------------------------------------------------------------------------
# benefit / harm ratios


@dataclass(frozen=True)
class CountRatio:
    """A ratio kept as a count pair so zero denominators stay representable."""

    numerator: int
    denominator: int

    @property
    def value(self) -> float | None:
        return self.numerator / self.denominator if self.denominator else None

    def __str__(self) -> str:
        return f"{self.numerator}:{self.denominator}"

    def to_dict(self) -> dict:
        return {
            "numerator": self.numerator,
            "denominator": self.denominator,
            "value": self.value,
        }


@dataclass(frozen=True)
class BenefitHarm:
    """Detection benefit against overdiagnosis harm at an operating point."""

    tp: int
    gg1_fp: int
    tn: int
    negative_predictions: int
    tp_to_gg1_fp: CountRatio
    tp_to_gg1_fp_plus_negatives: CountRatio
    tn_to_gg1_fp: CountRatio

    def to_dict(self) -> dict:
        return {
            "tp": self.tp,
            "gg1_fp": self.gg1_fp,
            "tn": self.tn,
            "negative_predictions": self.negative_predictions,
            "tp_to_gg1_fp": self.tp_to_gg1_fp.to_dict(),
            "tp_to_gg1_fp_plus_negatives": self.tp_to_gg1_fp_plus_negatives.to_dict(),
            "tn_to_gg1_fp": self.tn_to_gg1_fp.to_dict(),
        }


def benefit_harm_ratios(
    grade_groups: Sequence[int | None], predictions: Sequence[int]
) -> BenefitHarm:
    """Count-pair ratios TP:GG1-FP, TP:(GG1-FP + negative predictions) and
    TN:GG1-FP.

    ``grade_groups`` holds the histology grade group (0 = benign) or None
    when no histology exists; cases with grade group >= 2 are positive.
    False positives without histology cannot be graded and so never count
    as GG1 false positives.
    """
    preds = np.asarray(predictions, dtype=int)
    if len(grade_groups) != preds.size:
        raise ValueError("grade groups and predictions must align")
    if not np.isin(preds, (0, 1)).all():
        raise ValueError("predictions must be binary")
    gg = [None if g is None else int(g) for g in grade_groups]
    labels = np.asarray([0 if g is None else int(g >= 2) for g in gg], dtype=int)
    tp = int(np.sum((labels == 1) & (preds == 1)))
    tn = int(np.sum((labels == 0) & (preds == 0)))
    gg1_fp = int(sum(1 for g, p in zip(gg, preds) if p == 1 and g == 1))
    negatives = int(np.sum(preds == 0))
    return BenefitHarm(
        tp=tp,
        gg1_fp=gg1_fp,
        tn=tn,
        negative_predictions=negatives,
        tp_to_gg1_fp=CountRatio(tp, gg1_fp),
        tp_to_gg1_fp_plus_negatives=CountRatio(tp, gg1_fp + negatives),
        tn_to_gg1_fp=CountRatio(tn, gg1_fp),
    )


# ---------------------------------------------------------------------------
# stratified AUROC


STRATIFIERS = ("age_band", "pi_qual", "ethnicity")


@dataclass(frozen=True)
class StratumAuroc:
    stratum: str
    n_cases: int
    n_unverified: int
    auroc: float | None
    ci_low: float | None
    ci_high: float | None
    method: str | None  # complete_case | multiple_imputation
    skipped_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "stratum": self.stratum,
            "n_cases": self.n_cases,
            "n_unverified": self.n_unverified,
            "auroc": self.auroc,
            "ci_low": self.ci_low,
            "ci_high": self.ci_high,
            "method": self.method,
            "skipped_reason": self.skipped_reason,
        }


def _stratum_label(case: CaseRecord, stratifier: str) -> str | None:
    if stratifier == "age_band":
        return case.age_band_label()
    if stratifier == "pi_qual":
        return None if case.pi_qual is None else str(case.pi_qual)
    if stratifier == "ethnicity":
        return case.ethnicity or None
    raise ValueError(f"unknown stratifier {stratifier!r} (expected one of {STRATIFIERS})")


def stratified_auroc(
    cases: Sequence[CaseRecord],
    scores: Sequence[float],
    stratifier: str,
    model=None,
    imputations: int = 100,
    seed: int = 0,
) -> list[StratumAuroc]:
    """Per-stratum AUROC, via multiple imputation when a stratum contains
    unverified cases (a fitted risk model is then required).

    Cases missing the stratum label are pooled under "unknown" and skipped
    rather than scored; single-class strata are skipped with a reason.
    """
    s = np.asarray(scores, dtype=float)
    if len(cases) != s.size:
        raise ValueError("cases and scores must align")
    groups: dict[str, list[int]] = {}
    for i, case in enumerate(cases):
        label = _stratum_label(case, stratifier)
        groups.setdefault(label if label is not None else "unknown", []).append(i)

    if stratifier == "age_band":
        order = [b for b in ("<50", "50-59", "60-69", ">=70") if b in groups]
        order += sorted(k for k in groups if k not in order and k != "unknown")
    else:
        order = sorted(k for k in groups if k != "unknown")
    if "unknown" in groups:
        order.append("unknown")

    out: list[StratumAuroc] = []
    for name in order:
        idx = groups[name]
        sub_cases = [cases[i] for i in idx]
        sub_scores = s[idx]
        n_unv = sum(1 for c in sub_cases if c.is_unverified)

        def skipped(reason: str) -> StratumAuroc:
            return StratumAuroc(name, len(idx), n_unv, None, None, None, None, reason)

        if name == "unknown":
            out.append(skipped("missing stratum label"))
            continue
        labels = [c.verified_label for c in sub_cases]
        if n_unv:
            if model is None:
                out.append(skipped("unverified cases present and no risk model supplied"))
                continue
            from .imputation import pooled_auroc_mi  # local import to avoid a cycle

            try:
                pooled = pooled_auroc_mi(sub_cases, sub_scores, model, imputations, seed)
            except ValueError as exc:
                out.append(skipped(str(exc)))
                continue
            out.append(
                StratumAuroc(
                    name,
                    len(idx),
                    n_unv,
                    pooled.estimate,
                    pooled.ci_low,
                    pooled.ci_high,
                    "multiple_imputation",
                )
            )
            continue
        known = np.asarray(labels, dtype=int)
        if known.size < 2 or known.min() == known.max():
            out.append(skipped("single-class stratum"))
            continue
        auc, var = auroc_delong(known, sub_scores)
        half = 1.96 * float(np.sqrt(var))
        out.append(
            StratumAuroc(
                name,
                len(idx),
                n_unv,
                auc,
                max(0.0, auc - half),
                min(1.0, auc + half),
                "complete_case",
            )
        )
    return out
