"""Patient records: CSV ingestion, completeness filtering and summary statistics."""

from __future__ import annotations

import csv
import io
import math
import statistics
from dataclasses import dataclass, field
from decimal import Decimal
from enum import Enum
from pathlib import Path
from typing import Collection, Iterable, Iterator, Mapping, NamedTuple, TextIO

from .errors import DuplicateId, FileUnreadable, SchemaError
from .numfmt import format_number, parse_decimal, percent


class Sex(str, Enum):
    MALE = "male"
    FEMALE = "female"
    UNKNOWN = "unknown"


class Severity(str, Enum):
    MILD = "mild"
    MODERATE = "moderate"
    SEVERE = "severe"
    UNKNOWN = "unknown"


class Outcome(str, Enum):
    SURVIVED = "survived"
    DECEASED = "deceased"


_SEX_TOKENS = {"m": Sex.MALE, "male": Sex.MALE, "f": Sex.FEMALE, "female": Sex.FEMALE, "": Sex.UNKNOWN, "unknown": Sex.UNKNOWN}
_SEVERITY_TOKENS = {"mild": Severity.MILD, "moderate": Severity.MODERATE, "severe": Severity.SEVERE, "": Severity.UNKNOWN, "unknown": Severity.UNKNOWN}
_OUTCOME_TOKENS = {"survived": Outcome.SURVIVED, "deceased": Outcome.DECEASED}


class LabValue(NamedTuple):
    value: float
    assay: str


@dataclass(frozen=True)
class PatientRecord:
    id: str
    outcome: Outcome
    labs: Mapping[str, LabValue] = field(default_factory=dict)
    age: float | None = None
    sex: Sex = Sex.UNKNOWN
    severity: Severity = Severity.UNKNOWN

    def __post_init__(self) -> None:
        if not self.id:
            raise ValueError("record id must not be empty")
        object.__setattr__(self, "outcome", Outcome(self.outcome))
        object.__setattr__(self, "sex", Sex(self.sex))
        object.__setattr__(self, "severity", Severity(self.severity))
        object.__setattr__(self, "labs", {k: LabValue(*v) for k, v in self.labs.items()})
        if self.age is not None and not (math.isfinite(self.age) and 0 <= self.age <= 130):
            raise ValueError(f"record {self.id}: age {self.age} outside [0, 130]")
        for name, lab in self.labs.items():
            if not (math.isfinite(lab.value) and lab.value >= 0):
                raise ValueError(f"record {self.id}: {name} value {lab.value} must be finite and >= 0")

    def values(self) -> dict[str, float]:
        return {name: lab.value for name, lab in self.labs.items()}


@dataclass(frozen=True)
class Cohort:
    records: tuple[PatientRecord, ...] = ()
    source: str = ""

    def __post_init__(self) -> None:
        object.__setattr__(self, "records", tuple(self.records))
        seen = set()
        for r in self.records:
            if r.id in seen:
                raise DuplicateId(f"duplicate record id {r.id!r}")
            seen.add(r.id)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[PatientRecord]:
        return iter(self.records)


# -- schema ---------------------------------------------------------------------------


class LabColumn(NamedTuple):
    value: str
    assay: str | None = None  # column holding the assay id
    default_assay: str | None = None  # used when the assay cell is empty or absent


@dataclass(frozen=True)
class CohortSchema:
    """Maps logical fields onto CSV column names."""

    labs: Mapping[str, LabColumn]
    id: str = "id"
    outcome: str = "outcome"
    age: str = "age"
    sex: str = "sex"
    severity: str = "severity"

    def header(self) -> list[str]:
        cols = [self.id, self.age, self.sex, self.severity, self.outcome]
        for lab in self.labs.values():
            cols.append(lab.value)
            if lab.assay:
                cols.append(lab.assay)
        return cols


DEFAULT_SCHEMA = CohortSchema(
    labs={
        "LDH": LabColumn("ldh", "ldh_assay"),
        "hs_CRP": LabColumn("crp", "crp_assay", "crp_std"),
        "lymph_pct": LabColumn("lymph_pct", None, "lymph_std"),
    }
)


# -- ingestion ------------------------------------------------------------------------


class Exclusion(NamedTuple):
    line: int  # physical line in the file; header is line 1
    id: str
    reason: str


@dataclass(frozen=True)
class IngestReport:
    total_rows: int
    kept: int
    excluded_missing_labs: int
    excluded_malformed: int
    missing_by_feature: Mapping[str, int]
    exclusions: tuple[Exclusion, ...] = ()


class _Malformed(Exception):
    pass


def _parse_row(row: dict, schema: CohortSchema, registry: Collection[str] | None) -> PatientRecord:
    if None in row or any(v is None for v in row.values()):
        raise _Malformed("wrong number of fields")

    def cell(col: str) -> str:
        return (row.get(col) or "").strip()

    rid = cell(schema.id)
    if not rid:
        raise _Malformed("empty id")
    outcome = _OUTCOME_TOKENS.get(cell(schema.outcome).lower())
    if outcome is None:
        raise _Malformed(f"unknown outcome {cell(schema.outcome)!r}")
    sex = _SEX_TOKENS.get(cell(schema.sex).lower())
    if sex is None:
        raise _Malformed(f"unknown sex {cell(schema.sex)!r}")
    severity = _SEVERITY_TOKENS.get(cell(schema.severity).lower())
    if severity is None:
        raise _Malformed(f"unknown severity {cell(schema.severity)!r}")
    age = None
    if cell(schema.age):
        try:
            age = parse_decimal(cell(schema.age))
        except ValueError:
            raise _Malformed(f"unparseable age {cell(schema.age)!r}") from None
        if not 0 <= age <= 130:
            raise _Malformed(f"age {age} outside [0, 130]")
    labs = {}
    for feature, col in schema.labs.items():
        raw = cell(col.value)
        if not raw:
            continue
        try:
            value = parse_decimal(raw)
        except ValueError:
            raise _Malformed(f"unparseable {feature} value {raw!r}") from None
        if value < 0:
            raise _Malformed(f"negative {feature} value {raw}")
        assay = (cell(col.assay) if col.assay else "") or col.default_assay
        if not assay:
            raise _Malformed(f"{feature} value without assay id")
        if registry is not None and assay not in registry:
            raise _Malformed(f"unknown assay {assay!r} for {feature}")
        labs[feature] = LabValue(value, assay)
    return PatientRecord(rid, outcome, labs, age, sex, severity)


def read_cohort(
    stream: TextIO,
    schema: CohortSchema = DEFAULT_SCHEMA,
    registry: Collection[str] | None = None,
    required: Collection[str] = (),
    source: str = "<stream>",
) -> tuple[Cohort, IngestReport]:
    """Read cohort CSV from an open text stream; see :func:`ingest_csv`."""
    reader = csv.DictReader(stream)
    header = reader.fieldnames
    if header is None:
        raise SchemaError(f"{source}: missing header row")
    present = {h.strip() for h in header}
    needed = [schema.id, schema.outcome] + [c.value for c in schema.labs.values()]
    absent = [c for c in needed if c not in present]
    if absent:
        raise SchemaError(f"{source}: required column(s) absent: {', '.join(absent)}")
    reader.fieldnames = [h.strip() for h in header]

    records, exclusions = [], []
    seen_ids: dict[str, int] = {}
    total = malformed = 0
    missing = {f: 0 for f in schema.labs}
    for row in reader:
        total += 1
        line = reader.line_num
        rid = (row.get(schema.id) or "").strip()
        if rid:
            if rid in seen_ids:
                raise DuplicateId(f"{source}: id {rid!r} on line {line} already used on line {seen_ids[rid]}")
            seen_ids[rid] = line
        try:
            rec = _parse_row(row, schema, registry)
        except _Malformed as exc:
            malformed += 1
            exclusions.append(Exclusion(line, rid, f"malformed: {exc}"))
            continue
        for f in schema.labs:
            if f not in rec.labs:
                missing[f] += 1
        records.append((line, rec))

    cohort = Cohort(tuple(r for _, r in records), source)
    kept, dropped = completeness_filter(cohort, required)
    dropped_ids = {r.id for r in dropped}
    for line, rec in records:
        if rec.id in dropped_ids:
            lacking = sorted(f for f in required if f not in rec.labs)
            exclusions.append(Exclusion(line, rec.id, f"missing labs: {', '.join(lacking)}"))
    exclusions.sort()
    report = IngestReport(
        total_rows=total,
        kept=len(kept),
        excluded_missing_labs=len(dropped),
        excluded_malformed=malformed,
        missing_by_feature=missing,
        exclusions=tuple(exclusions),
    )
    return kept, report


def ingest_csv(
    path: str | Path,
    schema: CohortSchema = DEFAULT_SCHEMA,
    registry: Collection[str] | None = None,
    required: Collection[str] = (),
) -> tuple[Cohort, IngestReport]:
    """Read a cohort CSV, excluding malformed rows and rows lacking ``required`` labs.

    Every excluded row is tallied in the returned report with its reason.
    When ``registry`` is given, rows naming an unregistered assay are malformed.
    """
    try:
        with open(path, newline="", encoding="utf-8") as fh:
            return read_cohort(fh, schema, registry, required, source=str(path))
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read cohort file {path}: {exc}") from None


def completeness_filter(cohort: Cohort, required: Collection[str]) -> tuple[Cohort, Cohort]:
    """Split ``cohort`` into records with every ``required`` lab present and the rest."""
    kept, excluded = [], []
    for rec in cohort:
        ok = all(f in rec.labs and math.isfinite(rec.labs[f].value) for f in required)
        (kept if ok else excluded).append(rec)
    return Cohort(tuple(kept), cohort.source), Cohort(tuple(excluded), cohort.source)


def write_csv(cohort: Iterable[PatientRecord], schema: CohortSchema = DEFAULT_SCHEMA) -> str:
    """Serialize records in ``schema`` column order; missing values become empty cells."""
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(schema.header())
    for rec in cohort:
        row = [
            rec.id,
            "" if rec.age is None else format_number(rec.age),
            "" if rec.sex is Sex.UNKNOWN else rec.sex.value,
            "" if rec.severity is Severity.UNKNOWN else rec.severity.value,
            rec.outcome.value,
        ]
        for feature, col in schema.labs.items():
            lab = rec.labs.get(feature)
            row.append("" if lab is None else format_number(lab.value))
            if col.assay:
                row.append("" if lab is None else lab.assay)
        writer.writerow(row)
    return buf.getvalue()


# -- summary statistics --------------------------------------------------------------


@dataclass(frozen=True)
class NumericSummary:
    n: int
    mean: float
    std: float
    median: float
    std_defined: bool  # False when n == 1 and std is reported as 0 by convention


@dataclass(frozen=True)
class CategoryCount:
    count: int
    percent: Decimal | None


@dataclass(frozen=True)
class SummaryStats:
    n: int
    numeric: Mapping[str, NumericSummary]
    sex: Mapping[str, CategoryCount]
    outcome: Mapping[str, CategoryCount]
    severity: Mapping[str, CategoryCount]


def _numeric(values: list[float]) -> NumericSummary:
    n = len(values)
    std = statistics.stdev(values) if n > 1 else 0.0
    return NumericSummary(n, statistics.mean(values), std, statistics.median(values), n > 1)


def _categories(values: list[Enum], members: Iterable[Enum], total: int) -> dict[str, CategoryCount]:
    out = {}
    for m in members:
        count = sum(1 for v in values if v is m)
        out[m.value] = CategoryCount(count, percent(count, total))
    return out


def summarize(cohort: Cohort) -> SummaryStats:
    """Mean, sample standard deviation (n-1) and median per numeric field, plus category counts.

    An empty cohort yields empty numeric stats rather than an error.
    """
    records = list(cohort)
    n = len(records)
    numeric: dict[str, NumericSummary] = {}
    ages = [r.age for r in records if r.age is not None]
    if ages:
        numeric["age"] = _numeric(ages)
    features: list[str] = []
    for r in records:
        for f in r.labs:
            if f not in features:
                features.append(f)
    for f in features:
        numeric[f] = _numeric([r.labs[f].value for r in records if f in r.labs])
    return SummaryStats(
        n=n,
        numeric=numeric,
        sex=_categories([r.sex for r in records], Sex, n),
        outcome=_categories([r.outcome for r in records], Outcome, n),
        severity=_categories([r.severity for r in records], Severity, n),
    )
