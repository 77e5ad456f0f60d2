"""Exception hierarchy shared by every ruleval module.

All user-facing failures derive from :class:`RulevalError`; the CLI maps them
to exit status 2 and prints the message without a traceback.
"""

from __future__ import annotations


class RulevalError(Exception):
    """Base class for data and validation failures."""


# -- rule DSL -----------------------------------------------------------------


class RuleError(RulevalError, ValueError):
    """A rule file that cannot be turned into a valid tree."""

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        self.message = message
        self.line = line
        self.column = column
        super().__init__(str(self))

    def __str__(self) -> str:
        if self.line is None:
            return self.message
        return f"line {self.line}, column {self.column}: {self.message}"


class RuleSyntaxError(RuleError):
    pass


class UnknownFeature(RuleError):
    pass


class DuplicateFeature(RuleError):
    pass


class DegenerateRule(RuleError):
    pass


class PredictionError(RulevalError, ValueError):
    pass


class MissingFeature(PredictionError):
    def __init__(self, feature: str):
        self.feature = feature
        super().__init__(f"missing value for feature {feature!r}")


class NonFiniteValue(PredictionError):
    def __init__(self, feature: str, value: object):
        self.feature = feature
        self.value = value
        super().__init__(f"non-finite value {value!r} for feature {feature!r}")


# -- harmonization --------------------------------------------------------------


class HarmonizationError(RulevalError, ValueError):
    pass


class AnalyteMismatch(HarmonizationError):
    pass


class UnitMismatch(HarmonizationError):
    pass


class DegenerateInterval(HarmonizationError):
    pass


class UnknownAssay(HarmonizationError):
    pass


class MissingMapping(HarmonizationError):
    pass


class HarmonizationWarning(UserWarning):
    """Emitted when affine extrapolation yields a negative value."""


# -- cohort / evaluation / synth / config ------------------------------------------


class CohortError(RulevalError):
    pass


class FileUnreadable(CohortError):
    pass


class SchemaError(CohortError):
    pass


class DuplicateId(CohortError):
    pass


class EvaluationError(RulevalError):
    """Report-level failure; ``record_id`` names the offending record."""

    def __init__(self, record_id: str, cause: Exception):
        self.record_id = record_id
        self.cause = cause
        super().__init__(f"record {record_id!r}: {cause}")


class InfeasibleSpec(RulevalError, ValueError):
    def __init__(self, cell: str, reason: str):
        self.cell = cell
        super().__init__(f"infeasible cell {cell}: {reason}")


class ConfigError(RulevalError):
    pass
