"""Applying a rule to a cohort: overall and severity-stratified recall."""

from __future__ import annotations

from dataclasses import dataclass, field
from decimal import Decimal
from typing import Mapping

from .cohort import Cohort, Outcome as Status, Severity, SummaryStats, summarize
from .errors import EvaluationError, HarmonizationError, PredictionError
from .harmonize import AssayMethod, HarmonizationConfig, Mode, harmonize_panel
from .numfmt import percent
from .rule_dsl import Outcome, RuleTree, predict

STRATA = (Severity.MILD, Severity.MODERATE, Severity.SEVERE)


@dataclass(frozen=True)
class ConfusionCounts:
    survivors_total: int = 0
    survivors_predicted_survival: int = 0
    deceased_total: int = 0
    deceased_predicted_death: int = 0

    def __post_init__(self) -> None:
        if min(self.survivors_total, self.survivors_predicted_survival,
               self.deceased_total, self.deceased_predicted_death) < 0:
            raise ValueError("counts must be non-negative")
        if self.survivors_predicted_survival > self.survivors_total:
            raise ValueError("more correct survivors than survivors")
        if self.deceased_predicted_death > self.deceased_total:
            raise ValueError("more correct deaths than deaths")

    def __add__(self, other: ConfusionCounts) -> ConfusionCounts:
        return ConfusionCounts(
            self.survivors_total + other.survivors_total,
            self.survivors_predicted_survival + other.survivors_predicted_survival,
            self.deceased_total + other.deceased_total,
            self.deceased_predicted_death + other.deceased_predicted_death,
        )

    @classmethod
    def single(cls, status: Status, predicted: Outcome) -> ConfusionCounts:
        if status is Status.SURVIVED:
            return cls(1, int(predicted is Outcome.SURVIVAL), 0, 0)
        return cls(0, 0, 1, int(predicted is Outcome.DEATH))

    @property
    def survival_recall(self) -> Decimal | None:
        return percent(self.survivors_predicted_survival, self.survivors_total)

    @property
    def mortality_recall(self) -> Decimal | None:
        return percent(self.deceased_predicted_death, self.deceased_total)


@dataclass(frozen=True)
class StratifiedEvalReport:
    rule: str
    harmonization_mode: Mode
    overall: ConfusionCounts
    by_severity: Mapping[str, ConfusionCounts]
    survivors_unknown_severity: int
    excluded: tuple[tuple[str, str], ...] = ()  # (record id, reason)
    summary: SummaryStats | None = None
    extra: Mapping[str, object] = field(default_factory=dict)

    @property
    def survival_recall(self) -> Decimal | None:
        return self.overall.survival_recall

    @property
    def mortality_recall(self) -> Decimal | None:
        return self.overall.mortality_recall

    @property
    def severity_recall(self) -> dict[str, Decimal | None]:
        return {k: c.survival_recall for k, c in self.by_severity.items()}

    @property
    def cohort_size(self) -> int:
        return self.overall.survivors_total + self.overall.deceased_total + len(self.excluded)


def evaluate(
    tree: RuleTree,
    cohort: Cohort,
    cfg: HarmonizationConfig,
    registry: Mapping[str, AssayMethod],
) -> StratifiedEvalReport:
    """Harmonize and predict every record, then tally counts overall and per severity.

    Severity strata cover survivors only; deceased records form one stratum.
    Records whose prediction fails (e.g. a path feature is missing) land in
    ``excluded`` with the reason. Harmonization failures abort the whole
    evaluation with an :class:`EvaluationError` naming the record.
    """
    overall = ConfusionCounts()
    strata = {s.value: ConfusionCounts() for s in STRATA}
    unknown = 0
    excluded = []
    sensitive = tree.assay_sensitive
    for rec in cohort:
        try:
            labs = harmonize_panel(rec.labs, cfg, registry, sensitive)
        except HarmonizationError as exc:
            raise EvaluationError(rec.id, exc) from exc
        try:
            trace = predict(tree, labs)
        except PredictionError as exc:
            excluded.append((rec.id, str(exc)))
            continue
        cell = ConfusionCounts.single(rec.outcome, trace.outcome)
        overall = overall + cell
        if rec.outcome is Status.SURVIVED:
            if rec.severity is Severity.UNKNOWN:
                unknown += 1
            else:
                strata[rec.severity.value] = strata[rec.severity.value] + cell
    return StratifiedEvalReport(
        rule=tree.name,
        harmonization_mode=cfg.mode,
        overall=overall,
        by_severity=strata,
        survivors_unknown_severity=unknown,
        excluded=tuple(excluded),
        summary=summarize(cohort),
    )
