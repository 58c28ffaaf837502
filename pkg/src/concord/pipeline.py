"""End-to-end analysis: validation, benchmarks, interchangeability test,
verification-bias adjusted AUROC, secondary metrics and subset analyses.

Configuration is a single declarative JSON file; every random stage draws
from a stream derived from the one configured seed, and reports carry no
timestamps, so a rerun with the same config is byte-identical.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import agreement as agr
from .cohort import (
    CaseRecord,
    CutoffRule,
    align_predictions,
    load_cases,
    load_predictions,
    load_readings,
    validate_cohort,
)
from .imputation import RiskModel, fit_risk_model, pooled_auroc_mi
from .interchange import holm_bonferroni, interchangeability_test
from .metrics import (
    OperatingPoint,
    RocCurve,
    auroc_delong,
    benefit_harm_ratios,
    binary_metrics,
    matched_point,
    stratified_auroc,
    youden_point,
)

DEFAULT_PREVALENCE_KEYS = (
    "inter_reader_positive",
    "inter_reader_negative",
    "vs_soc_positive",
    "vs_soc_negative",
)


class PipelineError(RuntimeError):
    """Module error surfaced with the pipeline stage that raised it."""

    def __init__(self, stage: str, original: Exception):
        super().__init__(f"[{stage}] {original}")
        self.stage = stage
        self.original = original


def derive_seed(seed: int, index: int) -> int:
    """Independent integer seed for a named pipeline stage."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(index,))
    return int(ss.generate_state(1, np.uint64)[0])


@dataclass
class AnalysisConfig:
    """Declarative description of one cohort analysis."""

    cohort: str
    cases: str
    predictions: str
    prevalence: float
    cutoff: str = "pirads>=3"
    readings: str | None = None
    reader_cases: str | None = None
    benchmarks: dict | None = None  # precomputed subset estimates (4 keys)
    margin: float = 0.05
    bootstrap_reps: int = 1_000_000
    imputations: int = 100
    seed: int = 0
    workers: int = 1
    operating_point: str = "youden"
    risk_model: str | None = None
    proper_imputation: bool = False

    def __post_init__(self):
        if not 0.0 < float(self.prevalence) < 1.0:
            raise ValueError(f"prevalence must lie in (0, 1), got {self.prevalence}")
        CutoffRule.parse(self.cutoff)
        parse_operating_rule(self.operating_point)
        if self.benchmarks is not None:
            missing = [k for k in DEFAULT_PREVALENCE_KEYS if k not in self.benchmarks]
            if missing:
                raise ValueError(f"benchmarks missing keys: {missing}")

    @classmethod
    def from_dict(cls, payload: dict, base_dir: Path | None = None) -> "AnalysisConfig":
        known = {f for f in cls.__dataclass_fields__}  # type: ignore[attr-defined]
        unknown = set(payload) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        cfg = cls(**payload)
        if base_dir is not None:
            for attr in ("cases", "predictions", "readings", "reader_cases", "risk_model"):
                value = getattr(cfg, attr)
                if value and not Path(value).is_absolute():
                    setattr(cfg, attr, str(base_dir / value))
        return cfg

    @classmethod
    def from_json(cls, path) -> "AnalysisConfig":
        path = Path(path)
        return cls.from_dict(json.loads(path.read_text()), base_dir=path.parent)

    def to_dict(self) -> dict:
        return {
            "cohort": self.cohort,
            "cases": self.cases,
            "predictions": self.predictions,
            "prevalence": self.prevalence,
            "cutoff": self.cutoff,
            "readings": self.readings,
            "reader_cases": self.reader_cases,
            "benchmarks": self.benchmarks,
            "margin": self.margin,
            "bootstrap_reps": self.bootstrap_reps,
            "imputations": self.imputations,
            "seed": self.seed,
            "workers": self.workers,
            "operating_point": self.operating_point,
            "risk_model": self.risk_model,
            "proper_imputation": self.proper_imputation,
        }


def parse_operating_rule(text: str) -> tuple[str, float | None]:
    """Parse youden / matched_sensitivity:X / matched_specificity:X / threshold:X."""
    t = str(text).strip().lower()
    if t == "youden":
        return "youden", None
    for prefix in ("matched_sensitivity", "matched_specificity", "threshold"):
        if t.startswith(prefix + ":"):
            try:
                value = float(t.split(":", 1)[1])
            except ValueError:
                raise ValueError(f"bad operating point value in {text!r}") from None
            if prefix.startswith("matched") and not 0.0 <= value <= 1.0:
                raise ValueError(f"matched target must lie in [0, 1], got {value}")
            return prefix, value
    raise ValueError(
        f"unknown operating point rule {text!r} (expected youden, "
        "matched_sensitivity:X, matched_specificity:X or threshold:X)"
    )


def select_operating_point(
    cases: Sequence[CaseRecord], scores: np.ndarray, rule_text: str
) -> OperatingPoint:
    """Apply the configured rule on the verified (complete-case) labels."""
    rule, value = parse_operating_rule(rule_text)
    verified_idx = [i for i, c in enumerate(cases) if c.verified_label is not None]
    labels = np.asarray([cases[i].verified_label for i in verified_idx], dtype=int)
    sub_scores = scores[verified_idx]

    if rule == "threshold":
        sens = spec = None
        if labels.size and labels.min() != labels.max():
            preds = (sub_scores >= value).astype(int)
            bm = binary_metrics(labels, preds)
            sens, spec = bm.sensitivity, bm.specificity
        return OperatingPoint(float(value), sens, spec, rule="fixed_threshold")

    if labels.size < 2 or labels.min() == labels.max():
        raise ValueError("operating point selection needs verified cases of both classes")
    curve = RocCurve.from_scores(labels, sub_scores)
    if rule == "youden":
        return youden_point(curve)
    axis = "sensitivity" if rule == "matched_sensitivity" else "specificity"
    return matched_point(curve, value, axis)


def _stage(name: str):
    class _Guard:
        def __enter__(self):
            return None

        def __exit__(self, exc_type, exc, tb):
            if exc is not None and not isinstance(exc, PipelineError):
                raise PipelineError(name, exc) from exc
            return False

    return _Guard()


def run_full_analysis(config: AnalysisConfig) -> dict:
    """Execute the prespecified analysis for one cohort and return the report."""
    cutoff = CutoffRule.parse(config.cutoff)
    report: dict = {"cohort": config.cohort, "config": config.to_dict()}

    with _stage("load"):
        cases = load_cases(config.cases)
        predictions = load_predictions(config.predictions, known_cases=[c.case_id for c in cases])
        readings = load_readings(config.readings) if config.readings else []
        reader_cases = load_cases(config.reader_cases) if config.reader_cases else cases

    with _stage("validate"):
        validation = validate_cohort(cases, [], predictions)
        report["validation"] = validation.to_dict()
        if not validation.ok:
            errors = [i.message for i in validation.issues if i.level == "error"]
            raise ValueError("cohort validation failed: " + "; ".join(errors))
        cases, scores = align_predictions(cases, predictions)

    with _stage("benchmarks"):
        if config.benchmarks is not None:
            b = config.benchmarks
            inter_pos, inter_neg = b["inter_reader_positive"], b["inter_reader_negative"]
            soc_pos, soc_neg = b["vs_soc_positive"], b["vs_soc_negative"]
            benchmark_tables = {"source": "precomputed"}
        elif config.readings:
            inter = agr.inter_reader_estimates(
                readings, reader_cases, cutoff, config.bootstrap_reps,
                derive_seed(config.seed, 1), config.workers,
            )
            vs = agr.soc_agreement_estimates(
                readings, reader_cases, cutoff, config.bootstrap_reps,
                derive_seed(config.seed, 2), config.workers,
            )
            for name, table in (("inter-reader", inter), ("vs-soc", vs)):
                for subset in ("positive", "negative"):
                    if subset not in table:
                        raise ValueError(f"no {subset} cases in the {name} reader data")
            inter_pos, inter_neg = inter["positive"].mean, inter["negative"].mean
            soc_pos, soc_neg = vs["positive"].mean, vs["negative"].mean
            benchmark_tables = {
                "source": "readings",
                "inter_reader": {k: v.to_dict() for k, v in inter.items()},
                "vs_soc": {k: v.to_dict() for k, v in vs.items()},
            }
        else:
            raise ValueError("config needs either 'benchmarks' estimates or 'readings' data")
        p_adj = agr.prevalence_adjust(config.prevalence, inter_pos, inter_neg)
        q_adj = agr.prevalence_adjust(config.prevalence, soc_pos, soc_neg)
        benchmark_tables["p_adj"] = p_adj.to_dict()
        benchmark_tables["q_adj"] = q_adj.to_dict()
        report["benchmarks"] = benchmark_tables

    with _stage("operating_point"):
        op = select_operating_point(cases, scores, config.operating_point)
        ai_binary = (scores >= op.threshold).astype(int)
        report["operating_point"] = op.to_dict()

    with _stage("interchange"):
        soc = np.asarray([c.soc_label for c in cases], dtype=int)
        result = interchangeability_test(
            soc,
            ai_binary,
            benchmark=q_adj.adjusted,
            margin=config.margin,
            patient_ids=[c.patient_id for c in cases],
            replications=config.bootstrap_reps,
            seed=derive_seed(config.seed, 3),
            workers=config.workers,
            cohort=config.cohort,
            context_inter_reader=p_adj.adjusted,
        )
        report["interchange"] = result.to_dict()

    with _stage("auroc_mi"):
        model = None
        n_unverified = sum(1 for c in cases if c.is_unverified)
        if config.risk_model:
            model = RiskModel.from_json(config.risk_model)
        elif n_unverified:
            # default: fit on this cohort's fully verified cases
            model = fit_risk_model([c for c in cases if not c.is_unverified])
            report["risk_model"] = model.to_dict()
        pooled = pooled_auroc_mi(
            cases,
            scores,
            model,
            config.imputations,
            derive_seed(config.seed, 4),
            config.proper_imputation,
        )
        report["auroc_mi"] = pooled.to_dict()

    with _stage("metrics"):
        vs_soc = binary_metrics(soc, ai_binary)
        historical = np.asarray([cutoff.binarize(c.historical_pirads) for c in cases], dtype=int)
        vs_historical = binary_metrics(historical, ai_binary)
        grade_groups = [c.gleason_gg if c.verification == "HISTO" else None for c in cases]
        harm = benefit_harm_ratios(grade_groups, ai_binary)
        metrics_block = {
            "vs_soc": vs_soc.to_dict(),
            "vs_historical_readings": vs_historical.to_dict(),
            "benefit_harm": harm.to_dict(),
        }
        verified = [i for i, c in enumerate(cases) if c.verified_label is not None]
        labels = np.asarray([cases[i].verified_label for i in verified], dtype=int)
        if labels.size >= 2 and labels.min() != labels.max():
            auc, var = auroc_delong(labels, scores[verified])
            half = 1.96 * float(np.sqrt(var))
            metrics_block["auroc_complete_case"] = {
                "auroc": auc,
                "ci_low": max(0.0, auc - half),
                "ci_high": min(1.0, auc + half),
                "n_cases": int(labels.size),
            }
        report["metrics"] = metrics_block

    with _stage("strata"):
        strata_block = {}
        available = ["age_band"]
        if any(c.pi_qual is not None for c in cases):
            available.append("pi_qual")
        if any(c.ethnicity for c in cases):
            available.append("ethnicity")
        for stratifier in available:
            rows = stratified_auroc(
                cases, scores, stratifier, model, config.imputations,
                derive_seed(config.seed, 5),
            )
            strata_block[stratifier] = [r.to_dict() for r in rows]
        report["strata"] = strata_block

    return report


def run_multi_cohort(configs: Sequence[AnalysisConfig], alpha: float = 0.05) -> dict:
    """Run several cohorts and apply Holm-Bonferroni across their one-sided
    p-values. A cohort failure is recorded and flags the combined report as
    partial; Holm runs over the cohorts that completed."""
    reports: list[dict] = []
    failures: list[dict] = []
    for cfg in configs:
        try:
            reports.append(run_full_analysis(cfg))
        except PipelineError as exc:
            failures.append(
                {"cohort": cfg.cohort, "stage": exc.stage, "error": str(exc.original)}
            )
    p_values = [r["interchange"]["p_value"] for r in reports]
    rejected = holm_bonferroni(p_values, alpha) if p_values else []
    for r, rej in zip(reports, rejected):
        r["interchange"]["holm_rejected_null"] = bool(rej)
    return {
        "cohorts": reports,
        "holm": {
            "alpha": alpha,
            "p_values": {r["cohort"]: p for r, p in zip(reports, p_values)},
            "rejected": {r["cohort"]: bool(rej) for r, rej in zip(reports, rejected)},
        },
        "partial": bool(failures),
        "failures": failures,
    }
