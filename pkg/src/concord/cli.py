"""Command line interface.

Subcommands: validate, agreement, interchange, auroc-mi, metrics,
simulate (table3 | plan | panel), power, run. Reports are written to
--outdir (default: $CONCORD_OUTPUT_DIR or the working directory) in the
formats selected by --output; report paths with figures render PNGs next to
the delimited output unless --no-figures is given.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from . import __version__, agreement as agr, report as rep
from .cohort import (
    CutoffRule,
    align_predictions,
    cases_to_csv,
    load_cases,
    load_predictions,
    load_readings,
    readings_to_csv,
    validate_cohort,
)
from .imputation import RiskModel, fit_risk_model, pooled_auroc_mi
from .interchange import InterchangeResult, interchange_decision, interchangeability_test
from .metrics import RocCurve, auroc_delong, benefit_harm_ratios, binary_metrics
from .pipeline import (
    AnalysisConfig,
    run_full_analysis,
    run_multi_cohort,
    select_operating_point,
)
from .power import DEFAULT_PROPORTIONS, DEFAULT_SIZES, halfwidth_table
from .simulate import (
    ReaderPanelSpec,
    TABLE3_SPEC_TARGET,
    TABLE3_TARGETS,
    calibrate_reader_dispersion,
    panel_agreement_analytic,
    simulate_plan,
    simulate_reader_panel,
    simulate_table3,
)

OUTPUT_FORMATS = ("json", "md", "csv")


def _common_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(add_help=False)
    p.add_argument("--seed", type=int, default=0, help="master seed (default 0)")
    p.add_argument(
        "--bootstrap-reps",
        type=int,
        default=1_000_000,
        help="bootstrap replications (default 1e6)",
    )
    p.add_argument("--imputations", type=int, default=100, help="imputations (default 100)")
    p.add_argument("--margin", type=float, default=0.05, help="interchange margin (default 0.05)")
    p.add_argument(
        "--output",
        default="json,md,csv",
        help="comma-separated report formats: json, md, csv (default all)",
    )
    p.add_argument(
        "--outdir",
        default=None,
        help="output directory (default $CONCORD_OUTPUT_DIR or '.')",
    )
    p.add_argument("--workers", type=int, default=1, help="bootstrap worker threads")
    p.add_argument("--no-figures", action="store_true", help="skip figure rendering")
    return p


def _outdir(args) -> Path:
    base = args.outdir or os.environ.get("CONCORD_OUTPUT_DIR") or "."
    path = Path(base)
    path.mkdir(parents=True, exist_ok=True)
    return path


def _formats(args) -> set[str]:
    fmts = {f.strip() for f in args.output.split(",") if f.strip()}
    unknown = fmts - set(OUTPUT_FORMATS)
    if unknown:
        raise SystemExit(f"unknown output formats: {sorted(unknown)}")
    return fmts


def _emit(outdir: Path, stem: str, formats: set[str], payload=None, md=None, csv_text=None):
    written = []
    if payload is not None and "json" in formats:
        written.append(rep.write_json(outdir / f"{stem}.json", payload))
    if md is not None and "md" in formats:
        written.append(rep.write_text(outdir / f"{stem}.md", md))
    if csv_text is not None and "csv" in formats:
        written.append(rep.write_text(outdir / f"{stem}.csv", csv_text))
    for path in written:
        print(f"wrote {path}")
    return written


# ---------------------------------------------------------------------------
# subcommands


def _cmd_validate(args) -> int:
    cases = load_cases(args.cases)
    readings = load_readings(args.readings) if args.readings else []
    predictions = load_predictions(args.predictions) if args.predictions else []
    report = validate_cohort(cases, readings, predictions)
    _emit(
        _outdir(args),
        "validation",
        _formats(args),
        payload=report.to_dict(),
        md=rep.validation_markdown(report),
    )
    print(
        f"{report.n_cases} cases, {report.n_readings} readings, "
        f"{report.n_predictions} predictions; "
        f"unverified fraction {report.unverified_fraction:.3f}; "
        f"{'OK' if report.ok else 'FAILED'}"
    )
    return 0 if report.ok else 1


def _cmd_agreement(args) -> int:
    cutoff = CutoffRule.parse(args.cutoff)
    readings = load_readings(args.readings)
    cases = load_cases(args.cases)
    inter = agr.inter_reader_estimates(
        readings, cases, cutoff, args.bootstrap_reps, args.seed, args.workers
    )
    vs = agr.soc_agreement_estimates(
        readings, cases, cutoff, args.bootstrap_reps, args.seed + 1, args.workers
    )
    adjusted = {}
    if args.prevalence is not None:
        adjusted["inter_reader_adjusted"] = agr.prevalence_adjust(
            args.prevalence, inter["positive"].mean, inter["negative"].mean
        )
        adjusted["vs_soc_adjusted"] = agr.prevalence_adjust(
            args.prevalence, vs["positive"].mean, vs["negative"].mean
        )
    payload = {
        "cutoff": cutoff.name,
        "inter_reader": {k: v.to_dict() for k, v in inter.items()},
        "vs_soc": {k: v.to_dict() for k, v in vs.items()},
        "adjusted": {k: v.to_dict() for k, v in adjusted.items()},
        "seed": args.seed,
    }
    _emit(
        _outdir(args),
        "agreement",
        _formats(args),
        payload=payload,
        md=rep.agreement_markdown(inter, vs, adjusted, cutoff.name),
        csv_text=rep.agreement_csv_text(inter, vs),
    )
    e = inter["all"]
    print(f"inter-reader agreement {e.mean:.3f} ({e.ci_low:.3f}, {e.ci_high:.3f})")
    return 0


def _interchange_outputs(args, result: InterchangeResult, stem: str) -> None:
    outdir = _outdir(args)
    csv_text = rep._csv_text(
        ("cohort", "proportion", "ci_low", "ci_high", "benchmark", "margin",
         "decision_threshold", "decision", "p_value"),
        [(
            result.cohort,
            f"{result.proportion:.6f}",
            f"{result.ci_low:.6f}",
            f"{result.ci_high:.6f}",
            f"{result.benchmark:.6f}",
            f"{result.margin:.6f}",
            f"{result.decision_threshold:.6f}",
            result.decision,
            "" if result.p_value is None else f"{result.p_value:.6g}",
        )],
    )
    _emit(
        outdir,
        stem,
        _formats(args),
        payload=result.to_dict(),
        md=rep.interchange_markdown(result),
        csv_text=csv_text,
    )
    if not args.no_figures:
        path = rep.render_interchange_figure(result, outdir / f"{stem}.png")
        print(f"wrote {path}")
    print(
        f"decision: {result.decision} "
        f"(proportion {result.proportion:.3f}, lower bound {result.ci_low:.3f}, "
        f"threshold {result.decision_threshold:.3f})"
    )


def _cmd_interchange(args) -> int:
    cases = load_cases(args.cases)
    predictions = load_predictions(args.predictions, known_cases=[c.case_id for c in cases])
    cases, scores = align_predictions(cases, predictions)
    op = select_operating_point(cases, scores, args.operating_point)
    ai_binary = (scores >= op.threshold).astype(int)
    soc = np.asarray([c.soc_label for c in cases], dtype=int)
    result = interchangeability_test(
        soc,
        ai_binary,
        benchmark=args.benchmark,
        margin=args.margin,
        patient_ids=[c.patient_id for c in cases],
        replications=args.bootstrap_reps,
        seed=args.seed,
        workers=args.workers,
        cohort=args.cohort,
        context_inter_reader=args.p_adj,
    )
    print(
        f"operating point: {op.rule} threshold {op.threshold:.4g} "
        f"(sens {op.sensitivity:.3f}, spec {op.specificity:.3f})"
    )
    _interchange_outputs(args, result, "interchange")
    return 0


def _cmd_auroc_mi(args) -> int:
    cases = load_cases(args.cases)
    predictions = load_predictions(args.predictions, known_cases=[c.case_id for c in cases])
    cases, scores = align_predictions(cases, predictions)
    model = None
    if args.model:
        model = RiskModel.from_json(args.model)
    elif args.fit_from:
        fit_cases = [c for c in load_cases(args.fit_from) if not c.is_unverified]
        model = fit_risk_model(fit_cases, args.base_probability)
        if args.save_model:
            target = Path(args.save_model)
            target.parent.mkdir(parents=True, exist_ok=True)
            model.to_json(target)
            print(f"wrote {target}")
    pooled = pooled_auroc_mi(
        cases, scores, model, args.imputations, args.seed, proper=args.proper
    )
    _emit(
        _outdir(args),
        "auroc_mi",
        _formats(args),
        payload=pooled.to_dict(),
        md=rep.mi_markdown(pooled),
    )
    print(
        f"pooled AUROC {pooled.estimate:.4f} "
        f"({pooled.ci_low:.4f}, {pooled.ci_high:.4f}), m={pooled.imputations}"
    )
    return 0


def _cmd_metrics(args) -> int:
    cutoff = CutoffRule.parse(args.cutoff)
    cases = load_cases(args.cases)
    predictions = load_predictions(args.predictions, known_cases=[c.case_id for c in cases])
    cases, scores = align_predictions(cases, predictions)
    op = select_operating_point(cases, scores, args.operating_point)
    ai_binary = (scores >= op.threshold).astype(int)
    soc = np.asarray([c.soc_label for c in cases], dtype=int)
    historical = np.asarray([cutoff.binarize(c.historical_pirads) for c in cases], dtype=int)
    grade_groups = [c.gleason_gg if c.verification == "HISTO" else None for c in cases]
    payload = {
        "operating_point": op.to_dict(),
        "vs_soc": binary_metrics(soc, ai_binary).to_dict(),
        "vs_historical_readings": binary_metrics(historical, ai_binary).to_dict(),
        "benefit_harm": benefit_harm_ratios(grade_groups, ai_binary).to_dict(),
    }
    outdir = _outdir(args)
    verified = [i for i, c in enumerate(cases) if c.verified_label is not None]
    labels = np.asarray([cases[i].verified_label for i in verified], dtype=int)
    roc_csv = None
    if labels.size >= 2 and labels.min() != labels.max():
        auc, var = auroc_delong(labels, scores[verified])
        payload["auroc_complete_case"] = {"auroc": auc, "se": float(np.sqrt(var))}
        roc_csv = rep.roc_csv_text(RocCurve.from_scores(labels, scores[verified]))
    md = f"# Metrics at {op.rule} threshold {op.threshold:.4g}\n\n```\n" + json.dumps(
        payload, indent=2, sort_keys=True
    ) + "\n```\n"
    _emit(outdir, "metrics", _formats(args), payload=payload, md=md)
    if roc_csv is not None and "csv" in _formats(args):
        path = rep.write_text(outdir / "roc.csv", roc_csv)
        print(f"wrote {path}")
    vs = payload["vs_soc"]

    def _r(x):
        return "NA" if x is None else f"{x:.3f}"

    print(
        f"vs standard of care: sens {_r(vs['sensitivity'])}, spec {_r(vs['specificity'])}, "
        f"agreement {vs['observed_agreement']:.3f}"
    )
    return 0


def _cmd_simulate_table3(args) -> int:
    targets = (
        tuple(float(t) for t in args.targets.split(",")) if args.targets else TABLE3_TARGETS
    )
    rows = simulate_table3(
        targets=targets,
        prevalence=args.prevalence,
        n_cases=args.n_cases,
        spec_target=args.spec_target,
        seed=args.seed,
    )
    payload = {
        "rows": [r.to_dict() for r in rows],
        "n_cases": args.n_cases,
        "prevalence": args.prevalence,
        "spec_target": args.spec_target,
        "seed": args.seed,
    }
    outdir = _outdir(args)
    _emit(
        outdir,
        "table3",
        _formats(args),
        payload=payload,
        md=rep.table3_markdown(rows),
        csv_text=rep.table3_csv_text(rows),
    )
    if not args.no_figures:
        path = rep.render_table3_figure(rows, outdir / "table3.png")
        print(f"wrote {path}")
    return 0


def _cmd_simulate_plan(args) -> int:
    result = simulate_plan(
        benchmark=args.benchmark,
        margin=args.margin,
        true_agreement=args.true_agreement,
        n_cases=args.n_cases,
        replications=args.bootstrap_reps,
        seed=args.seed,
        workers=args.workers,
        p_adj=args.p_adj,
    )
    _interchange_outputs(args, result, "plan")
    return 0


def _cmd_simulate_panel(args) -> int:
    spec = ReaderPanelSpec(
        n_cases=args.n_cases,
        n_readers=args.n_readers,
        prevalence=args.prevalence,
        case_dispersion=args.case_dispersion,
        reader_dispersion=args.reader_dispersion,
        separation=args.separation,
    )
    if args.target_agreement is not None:
        spec = calibrate_reader_dispersion(spec, args.target_agreement)
        print(f"calibrated reader dispersion: {spec.reader_dispersion:.4f}")
    panel = simulate_reader_panel(spec, args.seed)
    outdir = _outdir(args)
    for name, text in (
        ("panel_readings.csv", readings_to_csv(panel.readings)),
        ("panel_cases.csv", cases_to_csv(panel.cases)),
    ):
        path = rep.write_text(outdir / name, text)
        print(f"wrote {path}")
    summary = {
        "spec": {
            "n_cases": spec.n_cases,
            "n_readers": spec.n_readers,
            "prevalence": spec.prevalence,
            "case_dispersion": spec.case_dispersion,
            "reader_dispersion": spec.reader_dispersion,
            "separation": spec.separation,
            "threshold_center": spec.center,
        },
        "expected_pairwise_agreement": panel_agreement_analytic(spec),
        "seed": args.seed,
    }
    if "json" in _formats(args):
        path = rep.write_json(outdir / "panel.json", summary)
        print(f"wrote {path}")
    return 0


def _cmd_power(args) -> int:
    proportions = (
        tuple(float(p) for p in args.proportions.split(","))
        if args.proportions
        else DEFAULT_PROPORTIONS
    )
    sizes = (
        tuple(int(n) for n in args.sizes.split(",")) if args.sizes else DEFAULT_SIZES
    )
    table = halfwidth_table(proportions, sizes)
    payload = {
        "halfwidths": [[hw.to_dict() for hw in row] for row in table],
    }
    _emit(
        _outdir(args),
        "power",
        _formats(args),
        payload=payload,
        md=rep.power_markdown(table),
        csv_text=rep.power_csv_text(table),
    )
    for row in table:
        cells = ", ".join(f"p={hw.proportion:.2f}: ±{hw.percent:.2f}" for hw in row)
        print(f"n={row[0].n}: {cells}")
    return 0


def _cmd_run(args) -> int:
    configs = [AnalysisConfig.from_json(path) for path in args.config]
    overrides = {
        "seed": args.seed,
        "bootstrap_reps": args.bootstrap_reps,
        "imputations": args.imputations,
        "margin": args.margin,
        "workers": args.workers,
    }
    defaults = _common_parser().parse_args([])
    for cfg in configs:
        for name, value in overrides.items():
            if getattr(defaults, name) != value:  # only apply explicit overrides
                setattr(cfg, name, value)

    outdir = _outdir(args)
    formats = _formats(args)
    combined = run_multi_cohort(configs, alpha=args.alpha)

    for cohort_report in combined["cohorts"]:
        name = cohort_report["cohort"].replace(" ", "_") or "cohort"
        _emit(
            outdir,
            f"{name}_report",
            formats,
            payload=cohort_report,
            md=rep.run_markdown(cohort_report),
        )
        if not args.no_figures:
            result = InterchangeResult.from_dict(cohort_report["interchange"])
            path = rep.render_interchange_figure(result, outdir / f"{name}_interchange.png")
            print(f"wrote {path}")
        inter = cohort_report["interchange"]
        print(
            f"{cohort_report['cohort']}: {inter['decision']} "
            f"(proportion {inter['proportion']:.3f}, "
            f"lower bound {inter['ci_low']:.3f}, "
            f"threshold {inter['benchmark'] - inter['margin']:.3f})"
        )

    if len(configs) > 1 and "json" in formats:
        path = rep.write_json(outdir / "combined.json", combined)
        print(f"wrote {path}")
    for failure in combined["failures"]:
        print(
            f"FAILED {failure['cohort']} at stage {failure['stage']}: {failure['error']}",
            file=sys.stderr,
        )
    return 2 if combined["partial"] else 0


# ---------------------------------------------------------------------------
# parser wiring


def build_parser() -> argparse.ArgumentParser:
    common = _common_parser()
    parser = argparse.ArgumentParser(
        prog="concord",
        description="Agreement and interchangeability statistics for "
        "AI-assisted diagnostic reader studies.",
    )
    parser.add_argument("--version", action="version", version=f"concord {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("validate", parents=[common], help="check input files")
    p.add_argument("--cases", required=True)
    p.add_argument("--readings")
    p.add_argument("--predictions")
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("agreement", parents=[common], help="reader agreement tables")
    p.add_argument("--readings", required=True)
    p.add_argument("--cases", required=True)
    p.add_argument("--cutoff", default="pirads>=3")
    p.add_argument("--prevalence", type=float, default=None, help="adjust to this prevalence")
    p.set_defaults(func=_cmd_agreement)

    p = sub.add_parser("interchange", parents=[common], help="interchangeability test")
    p.add_argument("--cases", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--benchmark", type=float, required=True, help="reader-vs-diagnosis benchmark")
    p.add_argument("--operating-point", default="youden")
    p.add_argument("--p-adj", type=float, default=None, help="inter-reader context estimate")
    p.add_argument("--cohort", default="cohort")
    p.set_defaults(func=_cmd_interchange)

    p = sub.add_parser("auroc-mi", parents=[common], help="verification-bias adjusted AUROC")
    p.add_argument("--cases", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--model", help="risk model JSON")
    p.add_argument("--fit-from", help="fully verified cases file to fit the risk model on")
    p.add_argument("--base-probability", type=float, default=0.03)
    p.add_argument("--save-model", help="write the fitted model JSON here")
    p.add_argument("--proper", action="store_true", help="draw coefficients per imputation")
    p.set_defaults(func=_cmd_auroc_mi)

    p = sub.add_parser("metrics", parents=[common], help="operating-point metrics")
    p.add_argument("--cases", required=True)
    p.add_argument("--predictions", required=True)
    p.add_argument("--operating-point", default="youden")
    p.add_argument("--cutoff", default="pirads>=3", help="for the historical comparison")
    p.set_defaults(func=_cmd_metrics)

    p = sub.add_parser("simulate", parents=[], help="synthetic data and rehearsals")
    sim = p.add_subparsers(dest="simulate_command", required=True)

    t3 = sim.add_parser("table3", parents=[common], help="simulated-system grid")
    t3.add_argument("--targets", help="comma-separated target AUROCs")
    t3.add_argument("--n-cases", type=int, default=1000)
    t3.add_argument("--prevalence", type=float, default=0.30)
    t3.add_argument("--spec-target", type=float, default=TABLE3_SPEC_TARGET)
    t3.set_defaults(func=_cmd_simulate_table3)

    plan = sim.add_parser("plan", parents=[common], help="rehearse the interchange pipeline")
    plan.add_argument("--benchmark", type=float, required=True)
    plan.add_argument("--true-agreement", type=float, required=True)
    plan.add_argument("--n-cases", type=int, required=True)
    plan.add_argument("--p-adj", type=float, default=None)
    plan.set_defaults(func=_cmd_simulate_plan)

    panel = sim.add_parser("panel", parents=[common], help="simulated reader panel")
    panel.add_argument("--n-cases", type=int, default=400)
    panel.add_argument("--n-readers", type=int, default=18)
    panel.add_argument("--prevalence", type=float, default=1 / 3)
    panel.add_argument("--case-dispersion", type=float, default=1.0)
    panel.add_argument("--reader-dispersion", type=float, default=1.0)
    panel.add_argument("--separation", type=float, default=2.0)
    panel.add_argument(
        "--target-agreement",
        type=float,
        default=None,
        help="calibrate reader dispersion to this expected pairwise agreement",
    )
    panel.set_defaults(func=_cmd_simulate_panel)

    p = sub.add_parser("power", parents=[common], help="planning half-width table")
    p.add_argument("--proportions", help="comma-separated assumed proportions")
    p.add_argument("--sizes", help="comma-separated cohort sizes")
    p.set_defaults(func=_cmd_power)

    p = sub.add_parser("run", parents=[common], help="full prespecified analysis")
    p.add_argument("--config", action="append", required=True, help="config JSON (repeatable)")
    p.add_argument("--alpha", type=float, default=0.05, help="familywise level for Holm")
    p.set_defaults(func=_cmd_run)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, RuntimeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
