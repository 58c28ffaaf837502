"""Report emission: canonical JSON, markdown, delimited CSV and figures.

JSON output is deterministic (sorted keys, no timestamps) so the same
configuration and seed produce byte-identical reports. Figures are rendered
with the Agg backend and saved next to the delimited output.
"""

from __future__ import annotations

import csv
import io
import json
from pathlib import Path
from typing import Mapping, Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt

from .agreement import AgreementEstimate, PrevalenceAdjusted
from .cohort import ValidationReport
from .imputation import MiPooledAuroc
from .interchange import InterchangeResult
from .metrics import RocCurve, StratumAuroc
from .power import HalfWidth
from .simulate import Table3Row


def _pct(x: float | None, digits: int = 1) -> str:
    return "-" if x is None else f"{100.0 * x:.{digits}f}%"


def _num(x: float | None, digits: int = 3) -> str:
    return "-" if x is None else f"{x:.{digits}f}"


def write_json(path, payload) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def write_text(path, text: str) -> Path:
    path = Path(path)
    path.write_text(text, encoding="utf-8")
    return path


def _csv_text(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    writer.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# interchangeability


def interchange_markdown(result: InterchangeResult) -> str:
    lines = [
        f"# Interchangeability report: {result.cohort or 'cohort'}",
        "",
        f"- Agreement with standard of care: {_pct(result.proportion)}"
        f" (95% CI {_pct(result.ci_low)} to {_pct(result.ci_high)}, Wald with bootstrap SE)",
    ]
    if result.percentile_low is not None:
        lines.append(
            f"- Percentile interval: {_pct(result.percentile_low)}"
            f" to {_pct(result.percentile_high)}"
        )
    lines += [
        f"- Benchmark (reader-vs-diagnosis agreement, prevalence adjusted): {_pct(result.benchmark)}",
        f"- Margin: {_pct(result.margin)}",
        f"- Decision threshold (benchmark - margin): {_pct(result.decision_threshold)}",
    ]
    if result.context_inter_reader is not None:
        lines.append(
            f"- Inter-reader agreement shown for context: {_pct(result.context_inter_reader)}"
        )
    if result.p_value is not None:
        lines.append(f"- One-sided p-value: {result.p_value:.3g}")
    if result.n_cases is not None:
        lines.append(
            f"- Cases: {result.n_cases} ({result.n_patients} patients), "
            f"bootstrap replications: {result.replications}"
        )
    lines += [
        "",
        f"**Decision: {result.decision}** "
        f"(lower bound {_pct(result.ci_low)} vs threshold {_pct(result.decision_threshold)})",
        "",
    ]
    return "\n".join(lines)


def render_interchange_figure(result: InterchangeResult, path) -> Path:
    """CI bar against the decision threshold, benchmark and context lines."""
    fig, ax = plt.subplots(figsize=(7.0, 2.8))
    y = 0.0
    ax.errorbar(
        [100 * result.proportion],
        [y],
        xerr=[
            [100 * (result.proportion - result.ci_low)],
            [100 * (result.ci_high - result.proportion)],
        ],
        fmt="o",
        color="#1f5fa8",
        capsize=4,
        label="AI vs standard of care (95% CI)",
    )
    thr = result.decision_threshold
    ax.axvline(
        100 * thr, color="#c0392b", linestyle="--", label=f"decision threshold {_pct(thr)}"
    )
    ax.axvline(
        100 * result.benchmark,
        color="#555555",
        linestyle="-",
        alpha=0.7,
        label=f"benchmark {_pct(result.benchmark)}",
    )
    if result.context_inter_reader is not None:
        ax.axvline(
            100 * result.context_inter_reader,
            color="#555555",
            linestyle=":",
            alpha=0.7,
            label=f"inter-reader context {_pct(result.context_inter_reader)}",
        )
    ax.set_yticks([])
    ax.set_xlabel("agreement with standard of care (%)")
    ax.set_title(f"{result.cohort or 'cohort'}: {result.decision}")
    ax.legend(loc="lower right", fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------------------
# simulated-system grid (Figure-1 style)


TABLE3_HEADER = (
    "system",
    "rule",
    "target_auroc",
    "auroc",
    "threshold",
    "sensitivity",
    "specificity",
    "alpha",
    "agreement",
)


def table3_csv_text(rows: Sequence[Table3Row]) -> str:
    return _csv_text(
        TABLE3_HEADER,
        [
            (
                r.system,
                r.rule,
                f"{r.target_auroc:.2f}",
                f"{r.auroc:.6f}",
                f"{r.threshold:.6f}",
                f"{r.sensitivity:.6f}",
                f"{r.specificity:.6f}",
                f"{r.alpha:.6f}",
                f"{r.agreement:.6f}",
            )
            for r in rows
        ],
    )


def table3_markdown(rows: Sequence[Table3Row]) -> str:
    lines = [
        "# Simulated AI systems: operating characteristics and agreement",
        "",
        "| System | Rule | Target AUROC | AUROC | Sens | Spec | Alpha | Agreement |",
        "|---|---|---|---|---|---|---|---|",
    ]
    for r in rows:
        lines.append(
            f"| {r.system} | {r.rule} | {r.target_auroc:.2f} | {r.auroc:.3f} "
            f"| {r.sensitivity:.2f} | {r.specificity:.2f} | {r.alpha:.2f} "
            f"| {_pct(r.agreement)} |"
        )
    lines.append("")
    return "\n".join(lines)


def render_table3_figure(rows: Sequence[Table3Row], path) -> Path:
    """Sens/spec/agreement/alpha against target AUROC, one panel per rule."""
    rules = ["matched_specificity", "youden"]
    fig, axes = plt.subplots(1, 2, figsize=(10.0, 4.0), sharey=True)
    for ax, rule in zip(axes, rules):
        sub = sorted((r for r in rows if r.rule == rule), key=lambda r: r.target_auroc)
        x = [r.target_auroc for r in sub]
        for attr, style in (
            ("sensitivity", "o-"),
            ("specificity", "s-"),
            ("agreement", "d-"),
            ("alpha", "^--"),
        ):
            ax.plot(x, [getattr(r, attr) for r in sub], style, label=attr, markersize=4)
        ax.set_title(rule.replace("_", " "))
        ax.set_xlabel("target AUROC")
        ax.grid(alpha=0.3)
    axes[0].set_ylabel("value")
    axes[0].legend(fontsize=8)
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)
    return Path(path)


# ---------------------------------------------------------------------------
# agreement tables


def agreement_markdown(
    inter_reader: Mapping[str, AgreementEstimate],
    vs_soc: Mapping[str, AgreementEstimate],
    adjusted: Mapping[str, PrevalenceAdjusted] | None = None,
    cutoff_name: str = "",
) -> str:
    lines = [f"# Reader agreement ({cutoff_name})", ""]
    for title, table in (
        ("Inter-reader pairwise agreement", inter_reader),
        ("Reader vs standard-of-care agreement", vs_soc),
    ):
        lines += [f"## {title}", "", "| Subset | Estimate | 95% CI | Cases |", "|---|---|---|---|"]
        for subset in ("all", "negative", "positive"):
            if subset not in table:
                continue
            e = table[subset]
            lines.append(
                f"| {subset} | {_pct(e.mean)} | {_pct(e.ci_low)} to {_pct(e.ci_high)} "
                f"| {e.n_cases} |"
            )
        lines.append("")
    if adjusted:
        lines += ["## Prevalence-adjusted benchmarks", ""]
        for name, adj in adjusted.items():
            lines.append(
                f"- {name}: {_pct(adj.adjusted)} at prevalence {_pct(adj.prevalence)} "
                f"(positive {_pct(adj.positive_estimate)}, negative {_pct(adj.negative_estimate)})"
            )
        lines.append("")
    return "\n".join(lines)


def agreement_csv_text(
    inter_reader: Mapping[str, AgreementEstimate],
    vs_soc: Mapping[str, AgreementEstimate],
) -> str:
    rows = []
    for kind, table in (("inter_reader", inter_reader), ("vs_soc", vs_soc)):
        for subset, e in table.items():
            rows.append(
                (kind, subset, f"{e.mean:.6f}", f"{e.ci_low:.6f}", f"{e.ci_high:.6f}", e.n_cases)
            )
    return _csv_text(("comparison", "subset", "mean", "ci_low", "ci_high", "n_cases"), rows)


# ---------------------------------------------------------------------------
# the rest


def validation_markdown(report: ValidationReport) -> str:
    lines = [
        "# Cohort validation",
        "",
        f"- Cases: {report.n_cases} ({report.n_patients} patients)",
        f"- Readings: {report.n_readings}",
        f"- Predictions: {report.n_predictions}",
        f"- Labeled cases: {report.n_labeled}; unverified: {report.n_unverified} "
        f"({_pct(report.unverified_fraction)})",
        f"- Prevalence among labeled: {_pct(report.prevalence)}",
    ]
    if report.readers_per_case:
        rpc = report.readers_per_case
        lines.append(
            f"- Readers per case: min {rpc['min']}, median {rpc['median']:g}, max {rpc['max']}"
        )
    lines.append("")
    if report.issues:
        lines.append("## Issues")
        lines.append("")
        for issue in report.issues:
            lines.append(f"- **{issue.level}**: {issue.message}")
        lines.append("")
    lines.append(f"Result: {'OK' if report.ok else 'FAILED'}")
    lines.append("")
    return "\n".join(lines)


def mi_markdown(pooled: MiPooledAuroc, cohort: str = "") -> str:
    lines = [
        f"# Verification-bias adjusted AUROC{': ' + cohort if cohort else ''}",
        "",
        f"- Pooled AUROC: {_num(pooled.estimate)} "
        f"(95% CI {_num(pooled.ci_low)} to {_num(pooled.ci_high)})",
        f"- Imputations: {pooled.imputations} (excluded: {pooled.excluded_imputations})",
        f"- Within-imputation variance: {pooled.within_variance:.3g}",
        f"- Between-imputation variance: {pooled.between_variance:.3g}",
        f"- Total variance: {pooled.total_variance:.3g}",
        f"- Unverified cases: {pooled.n_unverified}",
        "",
    ]
    return "\n".join(lines)


def roc_csv_text(curve: RocCurve) -> str:
    return _csv_text(
        ("threshold", "sensitivity", "specificity"),
        [(f"{t}", f"{se:.6f}", f"{sp:.6f}") for t, se, sp in curve.to_rows()],
    )


def strata_markdown(strata: Sequence[StratumAuroc], stratifier: str) -> str:
    lines = [
        f"## AUROC by {stratifier}",
        "",
        "| Stratum | n | Unverified | AUROC | 95% CI | Method |",
        "|---|---|---|---|---|---|",
    ]
    for s in strata:
        if s.skipped_reason:
            lines.append(
                f"| {s.stratum} | {s.n_cases} | {s.n_unverified} | - | - "
                f"| skipped: {s.skipped_reason} |"
            )
        else:
            lines.append(
                f"| {s.stratum} | {s.n_cases} | {s.n_unverified} | {_num(s.auroc)} "
                f"| {_num(s.ci_low)} to {_num(s.ci_high)} | {s.method} |"
            )
    lines.append("")
    return "\n".join(lines)


def power_csv_text(table: Sequence[Sequence[HalfWidth]]) -> str:
    rows = [
        (hw.n, f"{hw.proportion:.2f}", f"{hw.halfwidth:.6f}", f"{hw.percent:.2f}")
        for row in table
        for hw in row
    ]
    return _csv_text(("n", "proportion", "halfwidth", "halfwidth_percent"), rows)


def run_markdown(report: dict) -> str:
    """Cohort report assembled from the pipeline's report dictionary."""
    lines = [f"# Analysis report: {report['cohort']}", ""]

    v = report.get("validation", {})
    lines += [
        "## Cohort",
        "",
        f"- Cases: {v.get('n_cases')} ({v.get('n_patients')} patients); "
        f"unverified: {v.get('n_unverified')} ({_pct(v.get('unverified_fraction'))})",
        f"- Prevalence among labeled cases: {_pct(v.get('prevalence'))}",
        "",
    ]

    b = report.get("benchmarks", {})
    if b:
        p_adj, q_adj = b.get("p_adj", {}), b.get("q_adj", {})
        lines += [
            "## Benchmarks (prevalence-adjusted)",
            "",
            f"- Inter-reader agreement P_adj: {_pct(p_adj.get('adjusted'))} "
            f"(positive {_pct(p_adj.get('positive_estimate'))}, "
            f"negative {_pct(p_adj.get('negative_estimate'))})",
            f"- Reader-vs-diagnosis agreement Q_adj: {_pct(q_adj.get('adjusted'))} "
            f"(positive {_pct(q_adj.get('positive_estimate'))}, "
            f"negative {_pct(q_adj.get('negative_estimate'))})",
            f"- Assumed prevalence: {_pct(p_adj.get('prevalence'))}",
            "",
        ]

    op = report.get("operating_point", {})
    if op:
        lines += [
            "## Operating point",
            "",
            f"- Rule: {op.get('rule')}"
            + (f" (target {op.get('target')})" if op.get("target") is not None else ""),
            f"- Threshold: {_num(op.get('threshold'))}; realized sensitivity "
            f"{_pct(op.get('sensitivity'))}, specificity {_pct(op.get('specificity'))}",
            "",
        ]

    inter = report.get("interchange")
    if inter:
        lines += ["## Primary endpoint", ""]
        body = interchange_markdown(InterchangeResult.from_dict(inter))
        lines += body.splitlines()[2:]  # drop its own title
        if "holm_rejected_null" in inter:
            lines.append(
                f"- Holm-adjusted conclusion: "
                f"{'Interchangeable' if inter['holm_rejected_null'] else 'NotDemonstrated'}"
            )
            lines.append("")

    mi = report.get("auroc_mi")
    if mi:
        lines += [
            "## Verification-bias adjusted AUROC",
            "",
            f"- Pooled AUROC: {_num(mi.get('estimate'))} "
            f"(95% CI {_num(mi.get('ci_low'))} to {_num(mi.get('ci_high'))}; "
            f"m = {mi.get('imputations')})",
            f"- Variances: within {mi.get('within_variance'):.3g}, "
            f"between {mi.get('between_variance'):.3g}, total {mi.get('total_variance'):.3g}",
            "",
        ]

    m = report.get("metrics", {})
    if m:
        vs = m.get("vs_soc", {})
        harm = m.get("benefit_harm", {})
        lines += [
            "## Secondary metrics (AI at the operating point)",
            "",
            f"- Vs standard of care: sensitivity {_pct(vs.get('sensitivity'))}, "
            f"specificity {_pct(vs.get('specificity'))}, PPV {_pct(vs.get('ppv'))}, "
            f"NPV {_pct(vs.get('npv'))} "
            f"(TP {vs.get('tp')}, FP {vs.get('fp')}, TN {vs.get('tn')}, FN {vs.get('fn')})",
        ]
        if "auroc_complete_case" in m:
            cc = m["auroc_complete_case"]
            lines.append(
                f"- Complete-case AUROC: {_num(cc.get('auroc'))} "
                f"({_num(cc.get('ci_low'))} to {_num(cc.get('ci_high'))}, "
                f"n = {cc.get('n_cases')})"
            )
        if harm:
            r1 = harm.get("tp_to_gg1_fp", {})
            r2 = harm.get("tp_to_gg1_fp_plus_negatives", {})
            r3 = harm.get("tn_to_gg1_fp", {})
            lines.append(
                "- Benefit/harm: "
                f"TP:GG1-FP = {r1.get('numerator')}:{r1.get('denominator')}, "
                f"TP:(GG1-FP+negatives) = {r2.get('numerator')}:{r2.get('denominator')}, "
                f"TN:GG1-FP = {r3.get('numerator')}:{r3.get('denominator')}"
            )
        lines.append("")

    strata = report.get("strata", {})
    for stratifier, rows in strata.items():
        entries = [StratumAuroc(**row) for row in rows]
        lines += strata_markdown(entries, stratifier).splitlines()
    lines.append("")
    return "\n".join(lines)


def power_markdown(table: Sequence[Sequence[HalfWidth]]) -> str:
    if not table:
        return "# Planning half-widths\n\n(empty)\n"
    props = [hw.proportion for hw in table[0]]
    header = "| n | " + " | ".join(f"p = {p:.2f}" for p in props) + " |"
    sep = "|---" * (len(props) + 1) + "|"
    lines = ["# Planning half-widths (95% CI, percentage points)", "", header, sep]
    for row in table:
        cells = " | ".join(f"±{hw.percent:.2f}" for hw in row)
        lines.append(f"| {row[0].n} | {cells} |")
    lines.append("")
    return "\n".join(lines)
