"""Agreement and interchangeability statistics for AI-assisted reader studies.

The package tests whether a scoring system can stand in for the standard of
care: inter-reader agreement benchmarks with case-level bootstrap intervals,
a non-inferiority interchangeability test against a margin-shifted benchmark,
multiple-imputation AUROC that corrects verification bias, deterministic
simulation helpers for planning, and a fixed-width confidence planning table.
"""

from __future__ import annotations

__version__ = "0.1.0"

from .agreement import (
    AgreementEstimate,
    PrevalenceAdjusted,
    inter_reader_estimates,
    mean_agreement_bootstrap,
    pairwise_case_agreement,
    per_case_pairwise,
    per_case_soc,
    prevalence_adjust,
    soc_agreement_estimates,
    soc_case_agreement,
)
from .cohort import (
    AiPrediction,
    CaseRecord,
    CohortFormatError,
    CutoffRule,
    ReaderScore,
    ValidationReport,
    align_predictions,
    load_cases,
    load_predictions,
    load_readings,
    validate_cohort,
)
from .imputation import (
    MiPooledAuroc,
    RiskModel,
    SeparationError,
    fit_risk_model,
    impute_statuses,
    pool_estimates,
    pooled_auroc_mi,
)
from .interchange import (
    InterchangeResult,
    WaldBootstrapCI,
    bonferroni,
    bootstrap_wald_ci,
    holm_bonferroni,
    interchange_decision,
    interchangeability_test,
    one_sided_p_value,
)
from .metrics import (
    BenefitHarm,
    BinaryMetrics,
    OperatingPoint,
    RocCurve,
    StratumAuroc,
    auroc,
    auroc_delong,
    benefit_harm_ratios,
    binary_metrics,
    krippendorff_alpha,
    matched_point,
    stratified_auroc,
    youden_point,
)
from .pipeline import (
    AnalysisConfig,
    PipelineError,
    derive_seed,
    run_full_analysis,
    run_multi_cohort,
    select_operating_point,
)
from .power import HalfWidth, ci_halfwidth, halfwidth_table
from .resample import bootstrap_statistics, percentile_interval, resampled_means
from .simulate import (
    BinormalSpec,
    ReaderPanelSpec,
    Table3Row,
    binormal_mu,
    calibrate_reader_dispersion,
    panel_agreement_analytic,
    simulate_plan,
    simulate_reader_panel,
    simulate_scores,
    simulate_table3,
)

__all__ = [
    "AgreementEstimate",
    "AiPrediction",
    "AnalysisConfig",
    "BenefitHarm",
    "BinaryMetrics",
    "BinormalSpec",
    "CaseRecord",
    "CohortFormatError",
    "CutoffRule",
    "HalfWidth",
    "InterchangeResult",
    "MiPooledAuroc",
    "OperatingPoint",
    "PipelineError",
    "PrevalenceAdjusted",
    "ReaderPanelSpec",
    "ReaderScore",
    "RiskModel",
    "RocCurve",
    "SeparationError",
    "StratumAuroc",
    "Table3Row",
    "ValidationReport",
    "WaldBootstrapCI",
    "__version__",
    "align_predictions",
    "auroc",
    "auroc_delong",
    "benefit_harm_ratios",
    "binary_metrics",
    "binormal_mu",
    "bonferroni",
    "bootstrap_statistics",
    "bootstrap_wald_ci",
    "calibrate_reader_dispersion",
    "ci_halfwidth",
    "derive_seed",
    "fit_risk_model",
    "halfwidth_table",
    "holm_bonferroni",
    "impute_statuses",
    "inter_reader_estimates",
    "interchange_decision",
    "interchangeability_test",
    "krippendorff_alpha",
    "load_cases",
    "load_predictions",
    "load_readings",
    "matched_point",
    "mean_agreement_bootstrap",
    "one_sided_p_value",
    "pairwise_case_agreement",
    "panel_agreement_analytic",
    "per_case_pairwise",
    "per_case_soc",
    "percentile_interval",
    "pool_estimates",
    "pooled_auroc_mi",
    "prevalence_adjust",
    "resampled_means",
    "run_full_analysis",
    "run_multi_cohort",
    "select_operating_point",
    "simulate_plan",
    "simulate_reader_panel",
    "simulate_scores",
    "simulate_table3",
    "soc_agreement_estimates",
    "soc_case_agreement",
    "stratified_auroc",
    "validate_cohort",
    "youden_point",
]
