"""Validation toolkit for threshold decision-tree triage rules on patient cohorts."""

__version__ = "0.1.0"

from .cohort import Cohort, PatientRecord, completeness_filter, ingest_csv, summarize
from .evaluation import ConfusionCounts, StratifiedEvalReport, evaluate
from .harmonize import (
    DEFAULT_REGISTRY,
    AssayMethod,
    HarmonizationConfig,
    Mode,
    ReferenceInterval,
    harmonize_panel,
    harmonize_value,
)
from .report import render_report
from .rule_dsl import RuleTree, parse_rule, predict, print_rule
from .synth import SynthSpec, fit_marginals, generate

__all__ = [
    "AssayMethod",
    "Cohort",
    "ConfusionCounts",
    "DEFAULT_REGISTRY",
    "HarmonizationConfig",
    "Mode",
    "PatientRecord",
    "ReferenceInterval",
    "RuleTree",
    "StratifiedEvalReport",
    "SynthSpec",
    "completeness_filter",
    "evaluate",
    "fit_marginals",
    "generate",
    "harmonize_panel",
    "harmonize_value",
    "ingest_csv",
    "parse_rule",
    "predict",
    "print_rule",
    "render_report",
    "summarize",
]
