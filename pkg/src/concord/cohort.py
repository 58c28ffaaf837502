"""Case, reader and AI-prediction data model with CSV/JSON ingestion.

Three delimited inputs (UTF-8, comma separated, ``.`` decimal point):

* ``readings``    header ``case_id,reader_id,pirads``
* ``cases``       header ``case_id,patient_id,age,psa,historical_pirads,
  verification,gleason_gg,age_band,pi_qual,ethnicity``
* ``predictions`` header ``case_id,score``

A JSON array of objects with identical field names is accepted anywhere a
CSV is. Verification is one of HISTO, CONSENSUS_NEG, UNVERIFIED; the Gleason
grade group column must be empty unless verification is HISTO (0 = benign).
"""

from __future__ import annotations

import csv
import io
import json
import statistics
from dataclasses import dataclass, field, fields
from pathlib import Path
from typing import Iterable, Iterator, Sequence

HISTO = "HISTO"
CONSENSUS_NEG = "CONSENSUS_NEG"
UNVERIFIED = "UNVERIFIED"
VERIFICATION_CODES = (HISTO, CONSENSUS_NEG, UNVERIFIED)

READINGS_FIELDS = ("case_id", "reader_id", "pirads")
CASES_FIELDS = (
    "case_id",
    "patient_id",
    "age",
    "psa",
    "historical_pirads",
    "verification",
    "gleason_gg",
    "age_band",
    "pi_qual",
    "ethnicity",
)
PREDICTIONS_FIELDS = ("case_id", "score")

AGE_BANDS = ("<50", "50-59", "60-69", ">=70")


class CohortFormatError(ValueError):
    """Malformed input; message carries the offending 1-based line number."""

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


@dataclass(frozen=True)
class ReaderScore:
    """One radiologist's PI-RADS score for one case."""

    case_id: str
    reader_id: str
    pirads: int

    def __post_init__(self):
        if not 1 <= int(self.pirads) <= 5:
            raise ValueError(f"pirads out of range 1-5: {self.pirads}")


@dataclass(frozen=True)
class AiPrediction:
    """Continuous AI suspicion score for one case."""

    case_id: str
    score: float

    def __post_init__(self):
        if not 0.0 <= float(self.score) <= 100.0:
            raise ValueError(f"score out of range 0-100: {self.score}")


@dataclass(frozen=True)
class CutoffRule:
    """PI-RADS binarization cutoff: positive iff pirads >= threshold."""

    threshold: int

    def __post_init__(self):
        if self.threshold not in (3, 4):
            raise ValueError(f"cutoff threshold must be 3 or 4, got {self.threshold}")

    @classmethod
    def ge3(cls) -> "CutoffRule":
        return cls(3)

    @classmethod
    def ge4(cls) -> "CutoffRule":
        return cls(4)

    @classmethod
    def parse(cls, text: str) -> "CutoffRule":
        t = str(text).strip().lower().replace(" ", "")
        for thr in (3, 4):
            if t in (str(thr), f"ge{thr}", f"pirads>={thr}", f">={thr}"):
                return cls(thr)
        raise ValueError(f"unrecognized cutoff {text!r} (expected pirads>=3 or pirads>=4)")

    @property
    def name(self) -> str:
        return f"pirads_ge{self.threshold}"

    def binarize(self, pirads: int | Sequence[int]):
        import numpy as np

        arr = np.asarray(pirads)
        out = (arr >= self.threshold).astype(int)
        return int(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class CaseRecord:
    """One MRI examination with its verification status and strata labels.

    ``patient_id`` may repeat across cases (multiple exams per patient);
    the patient is the resampling unit for the interchangeability bootstrap.
    """

    case_id: str
    patient_id: str
    age: float
    psa: float
    historical_pirads: int
    verification: str
    gleason_gg: int | None = None
    age_band: str | None = None
    pi_qual: int | None = None
    ethnicity: str | None = None

    def __post_init__(self):
        if not 0 < float(self.age) < 130:
            raise ValueError(f"age out of range: {self.age}")
        if not float(self.psa) > 0:
            raise ValueError(f"psa must be positive: {self.psa}")
        if not 1 <= int(self.historical_pirads) <= 5:
            raise ValueError(f"historical_pirads out of range 1-5: {self.historical_pirads}")
        if self.verification not in VERIFICATION_CODES:
            raise ValueError(f"unknown verification {self.verification!r}")
        if self.verification == HISTO:
            if self.gleason_gg is None:
                raise ValueError("HISTO case requires gleason_gg")
            if not 0 <= int(self.gleason_gg) <= 5:
                raise ValueError(f"gleason_gg out of range 0-5: {self.gleason_gg}")
        elif self.gleason_gg is not None:
            raise ValueError("gleason_gg must be empty unless verification is HISTO")
        if self.pi_qual is not None and not 1 <= int(self.pi_qual) <= 5:
            raise ValueError(f"pi_qual out of range 1-5: {self.pi_qual}")

    @property
    def is_unverified(self) -> bool:
        return self.verification == UNVERIFIED

    @property
    def verified_label(self) -> int | None:
        """Ground-truth disease label, or None when no gold standard exists.

        HISTO with grade group >= 2 is positive; grade group 0 or 1 is
        negative; CONSENSUS_NEG is negative. UNVERIFIED stays None and is
        only ever labeled through the explicit imputation path.
        """
        if self.verification == HISTO:
            return int(int(self.gleason_gg) >= 2)
        if self.verification == CONSENSUS_NEG:
            return 0
        return None

    @property
    def soc_label(self) -> int:
        """Standard-of-care diagnosis (not ground truth).

        Cases without histology carry a negative standard-of-care diagnosis
        (negative MRI, consensus-supported in the source trials), so the
        interchangeability endpoint includes every case.
        """
        label = self.verified_label
        return 0 if label is None else label

    def age_band_label(self) -> str:
        """Stratum label: the explicit band if given, else derived from age."""
        if self.age_band:
            return self.age_band
        a = float(self.age)
        if a < 50:
            return "<50"
        if a < 60:
            return "50-59"
        if a < 70:
            return "60-69"
        return ">=70"


# ---------------------------------------------------------------------------
# parsing helpers


def _iter_rows(source, expected_fields: tuple[str, ...]) -> Iterator[tuple[int, dict]]:
    """Yield (line_number, row_dict) from a CSV/JSON path, text, or stream."""
    if isinstance(source, (str, Path)) and "\n" not in str(source) and Path(source).exists():
        text = Path(source).read_text(encoding="utf-8")
    elif hasattr(source, "read"):
        text = source.read()
        if isinstance(text, bytes):
            text = text.decode("utf-8")
    else:
        text = str(source)

    stripped = text.lstrip()
    if stripped.startswith("[") or stripped.startswith("{"):
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise CohortFormatError(f"invalid JSON: {exc}") from None
        if isinstance(data, dict):
            data = [data]
        for i, row in enumerate(data, start=1):
            if not isinstance(row, dict):
                raise CohortFormatError("JSON rows must be objects", line=i)
            yield i, {k: ("" if row.get(k) is None else str(row.get(k))) for k in expected_fields}
        return

    reader = csv.reader(io.StringIO(text))
    try:
        header = next(reader)
    except StopIteration:
        raise CohortFormatError("empty input, missing header") from None
    header = [h.strip() for h in header]
    if header != list(expected_fields):
        raise CohortFormatError(
            f"bad header {header!r}, expected {','.join(expected_fields)}", line=1
        )
    for line, row in enumerate(reader, start=2):
        if not row or all(not cell.strip() for cell in row):
            continue
        if len(row) != len(expected_fields):
            raise CohortFormatError(
                f"expected {len(expected_fields)} fields, got {len(row)}", line=line
            )
        yield line, dict(zip(expected_fields, (cell.strip() for cell in row)))


def _parse_int(value: str, name: str, line: int) -> int:
    try:
        return int(value)
    except ValueError:
        raise CohortFormatError(f"non-integer {name}: {value!r}", line=line) from None


def _parse_float(value: str, name: str, line: int) -> float:
    try:
        out = float(value)
    except ValueError:
        raise CohortFormatError(f"non-numeric {name}: {value!r}", line=line) from None
    if not out == out or out in (float("inf"), float("-inf")):
        raise CohortFormatError(f"non-finite {name}: {value!r}", line=line)
    return out


def load_readings(source) -> list[ReaderScore]:
    """Parse reader scores; rejects duplicate (case_id, reader_id) pairs."""
    out: list[ReaderScore] = []
    seen: set[tuple[str, str]] = set()
    for line, row in _iter_rows(source, READINGS_FIELDS):
        if not row["case_id"] or not row["reader_id"]:
            raise CohortFormatError("empty case_id or reader_id", line=line)
        key = (row["case_id"], row["reader_id"])
        if key in seen:
            raise CohortFormatError(f"duplicate reading for case/reader {key}", line=line)
        seen.add(key)
        pirads = _parse_int(row["pirads"], "pirads", line)
        try:
            out.append(ReaderScore(row["case_id"], row["reader_id"], pirads))
        except ValueError as exc:
            raise CohortFormatError(str(exc), line=line) from None
    return out


def load_cases(source) -> list[CaseRecord]:
    """Parse case records; rejects duplicate case ids."""
    out: list[CaseRecord] = []
    seen: set[str] = set()
    for line, row in _iter_rows(source, CASES_FIELDS):
        if not row["case_id"] or not row["patient_id"]:
            raise CohortFormatError("empty case_id or patient_id", line=line)
        if row["case_id"] in seen:
            raise CohortFormatError(f"duplicate case_id {row['case_id']!r}", line=line)
        seen.add(row["case_id"])
        gg = row["gleason_gg"]
        pq = row["pi_qual"]
        try:
            record = CaseRecord(
                case_id=row["case_id"],
                patient_id=row["patient_id"],
                age=_parse_float(row["age"], "age", line),
                psa=_parse_float(row["psa"], "psa", line),
                historical_pirads=_parse_int(row["historical_pirads"], "historical_pirads", line),
                verification=row["verification"],
                gleason_gg=_parse_int(gg, "gleason_gg", line) if gg else None,
                age_band=row["age_band"] or None,
                pi_qual=_parse_int(pq, "pi_qual", line) if pq else None,
                ethnicity=row["ethnicity"] or None,
            )
        except CohortFormatError:
            raise
        except ValueError as exc:
            raise CohortFormatError(str(exc), line=line) from None
        out.append(record)
    return out


def load_predictions(source, known_cases: Iterable[str] | None = None) -> list[AiPrediction]:
    """Parse AI predictions; rejects duplicates and (optionally) unknown cases."""
    known = set(known_cases) if known_cases is not None else None
    out: list[AiPrediction] = []
    seen: set[str] = set()
    for line, row in _iter_rows(source, PREDICTIONS_FIELDS):
        if not row["case_id"]:
            raise CohortFormatError("empty case_id", line=line)
        if row["case_id"] in seen:
            raise CohortFormatError(f"duplicate prediction for case {row['case_id']!r}", line=line)
        seen.add(row["case_id"])
        if known is not None and row["case_id"] not in known:
            raise CohortFormatError(f"unknown case {row['case_id']!r}", line=line)
        score = _parse_float(row["score"], "score", line)
        try:
            out.append(AiPrediction(row["case_id"], score))
        except ValueError as exc:
            raise CohortFormatError(str(exc), line=line) from None
    return out


# ---------------------------------------------------------------------------
# serialization (inverse of the loaders, field for field)


def _csv_text(fields: tuple[str, ...], rows: Iterable[Sequence]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(fields)
    writer.writerows(rows)
    return buf.getvalue()


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, float):
        return repr(value) if value != int(value) else str(int(value))
    return str(value)


def readings_to_csv(readings: Iterable[ReaderScore]) -> str:
    return _csv_text(READINGS_FIELDS, ((r.case_id, r.reader_id, r.pirads) for r in readings))


def cases_to_csv(cases: Iterable[CaseRecord]) -> str:
    return _csv_text(
        CASES_FIELDS,
        (
            (
                c.case_id,
                c.patient_id,
                _fmt(c.age),
                _fmt(c.psa),
                c.historical_pirads,
                c.verification,
                _fmt(c.gleason_gg),
                _fmt(c.age_band),
                _fmt(c.pi_qual),
                _fmt(c.ethnicity),
            )
            for c in cases
        ),
    )


def predictions_to_csv(predictions: Iterable[AiPrediction]) -> str:
    return _csv_text(PREDICTIONS_FIELDS, ((p.case_id, _fmt(p.score)) for p in predictions))


# ---------------------------------------------------------------------------
# cohort-level validation


@dataclass(frozen=True)
class ValidationIssue:
    level: str  # "warning" | "error"
    message: str


@dataclass
class ValidationReport:
    n_cases: int
    n_patients: int
    n_readings: int
    n_predictions: int
    readers_per_case: dict | None
    n_labeled: int
    n_unverified: int
    unverified_fraction: float
    prevalence: float | None
    issues: list[ValidationIssue] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not any(i.level == "error" for i in self.issues)

    def to_dict(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "issues"}
        out["issues"] = [{"level": i.level, "message": i.message} for i in self.issues]
        out["ok"] = self.ok
        return out


def validate_cohort(
    cases: Sequence[CaseRecord],
    readings: Sequence[ReaderScore] = (),
    predictions: Sequence[AiPrediction] = (),
) -> ValidationReport:
    """Cross-file referential and plausibility checks plus summary counts."""
    issues: list[ValidationIssue] = []
    case_ids = {c.case_id for c in cases}
    if not cases:
        issues.append(ValidationIssue("error", "no cases"))

    counts: dict[str, int] = {}
    for r in readings:
        counts[r.case_id] = counts.get(r.case_id, 0) + 1
    orphan_readings = sum(1 for r in readings if r.case_id not in case_ids)
    if orphan_readings:
        issues.append(
            ValidationIssue("warning", f"{orphan_readings} readings reference unknown cases")
        )
    if not readings:
        issues.append(ValidationIssue("warning", "no reader data"))

    per_case = [counts.get(cid, 0) for cid in sorted(counts)] if counts else []
    readers_per_case = None
    if per_case:
        readers_per_case = {
            "min": int(min(per_case)),
            "median": float(statistics.median(per_case)),
            "max": int(max(per_case)),
        }

    orphan_preds = sum(1 for p in predictions if p.case_id not in case_ids)
    if orphan_preds:
        issues.append(
            ValidationIssue("error", f"{orphan_preds} predictions reference unknown cases")
        )
    if predictions:
        predicted = {p.case_id for p in predictions}
        missing = len(case_ids - predicted)
        if missing:
            issues.append(ValidationIssue("warning", f"{missing} cases have no prediction"))

    labels = [c.verified_label for c in cases]
    n_labeled = sum(1 for v in labels if v is not None)
    n_unverified = sum(1 for c in cases if c.is_unverified)
    suspicious = sum(1 for c in cases if c.is_unverified and c.historical_pirads >= 3)
    if suspicious:
        issues.append(
            ValidationIssue(
                "warning",
                f"{suspicious} unverified cases have a positive historical MRI "
                "(no consensus-negative reading exists for those)",
            )
        )
    prevalence = None
    if n_labeled:
        prevalence = sum(v for v in labels if v is not None) / n_labeled

    return ValidationReport(
        n_cases=len(cases),
        n_patients=len({c.patient_id for c in cases}),
        n_readings=len(readings),
        n_predictions=len(predictions),
        readers_per_case=readers_per_case,
        n_labeled=n_labeled,
        n_unverified=n_unverified,
        unverified_fraction=(n_unverified / len(cases)) if cases else 0.0,
        prevalence=prevalence,
        issues=issues,
    )


def align_predictions(
    cases: Sequence[CaseRecord], predictions: Sequence[AiPrediction]
) -> "tuple":
    """Return (cases_with_scores, scores array) in case order.

    Raises if any case lacks a prediction; extra predictions are rejected by
    the loader when given the cohort's case ids.
    """
    import numpy as np

    by_id = {p.case_id: p.score for p in predictions}
    missing = [c.case_id for c in cases if c.case_id not in by_id]
    if missing:
        raise ValueError(f"{len(missing)} cases lack predictions (first: {missing[0]!r})")
    scores = np.asarray([by_id[c.case_id] for c in cases], dtype=float)
    return list(cases), scores
