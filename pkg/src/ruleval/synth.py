"""Deterministic synthetic cohorts with exactly planted confusion counts.

:func:`generate` samples each record inside a leaf region of the rule so that
``evaluate`` on the result reproduces the requested per-stratum counts
exactly. :func:`fit_marginals` then nudges feature means toward targets
without letting any record cross a decision boundary.
"""

from __future__ import annotations

import configparser
import math
import random
import statistics
from dataclasses import dataclass, field, replace
from fractions import Fraction
from pathlib import Path
from typing import Mapping

from .cohort import Cohort, LabValue, Outcome as Status, PatientRecord, Severity, Sex
from .errors import ConfigError, FileUnreadable, InfeasibleSpec, PredictionError
from .numfmt import parse_decimal
from .rule_dsl import Condition, Outcome, RuleTree, leaf_paths, path_box, predict

MARGIN = 0.5
DEFAULT_BOUNDS: Mapping[str, tuple[float, float]] = {
    "LDH": (100.0, 1000.0),
    "hs_CRP": (0.5, 200.0),
    "lymph_pct": (1.0, 60.0),
    "age": (18.0, 95.0),
}
DEFAULT_ASSAYS: Mapping[str, str] = {"LDH": "kit_LP", "hs_CRP": "crp_std", "lymph_pct": "lymph_std"}
SURVIVOR_STRATA = ("mild", "moderate", "severe")


@dataclass(frozen=True)
class StratumTarget:
    total: int
    correct: int


@dataclass(frozen=True)
class MarginalTarget:
    mean: float
    tolerance: float = 0.0


@dataclass(frozen=True)
class SynthSpec:
    survivors: Mapping[str, StratumTarget]
    deceased: StratumTarget
    seed: int = 0
    bounds: Mapping[str, tuple[float, float]] = field(default_factory=dict)
    assays: Mapping[str, str] = field(default_factory=dict)
    marginals: Mapping[str, MarginalTarget] = field(default_factory=dict)
    age_mean: float = 56.66
    age_std: float = 15.18
    male_fraction: Fraction = Fraction(85, 120)
    margin: float = MARGIN
    rule: str | None = None  # rule file path, if the spec names one

    @property
    def size(self) -> int:
        return sum(s.total for s in self.survivors.values()) + self.deceased.total


def feature_bounds(tree: RuleTree, spec: SynthSpec) -> dict[str, tuple[float, float]]:
    """Sampling box for every declared feature plus age.

    Explicit spec bounds win, then the built-in defaults; other features get
    ``[0, 2 * max|threshold| + 10]``.
    """
    out = {}
    thresholds: dict[str, list[float]] = {}
    for s in tree.splits():
        thresholds.setdefault(s.feature, []).append(abs(s.threshold))
    for name in [f.name for f in tree.features] + ["age"]:
        if name in spec.bounds:
            lo, hi = spec.bounds[name]
        elif name in DEFAULT_BOUNDS:
            lo, hi = DEFAULT_BOUNDS[name]
        else:
            lo, hi = 0.0, 2 * max(thresholds.get(name, [0.0])) + 10
        if not (math.isfinite(lo) and math.isfinite(hi) and 0 <= lo <= hi):
            raise InfeasibleSpec(f"bounds.{name}", f"bounds [{lo}, {hi}] must satisfy 0 <= lower <= upper")
        out[name] = (float(lo), float(hi))
    return out


def _cells(spec: SynthSpec) -> list[tuple[str, Status, Severity, Outcome, int]]:
    """(cell name, true status, severity, predicted outcome, count) in emission order."""
    cells = []
    for name in SURVIVOR_STRATA:
        t = spec.survivors.get(name, StratumTarget(0, 0))
        sev = Severity(name)
        cells.append((f"survivors.{name}.correct", Status.SURVIVED, sev, Outcome.SURVIVAL, t.correct))
        cells.append((f"survivors.{name}.incorrect", Status.SURVIVED, sev, Outcome.DEATH, t.total - t.correct))
    d = spec.deceased
    cells.append(("deceased.correct", Status.DECEASED, Severity.UNKNOWN, Outcome.DEATH, d.correct))
    cells.append(("deceased.incorrect", Status.DECEASED, Severity.UNKNOWN, Outcome.SURVIVAL, d.total - d.correct))
    return cells


def _check_counts(spec: SynthSpec) -> None:
    unknown = set(spec.survivors) - set(SURVIVOR_STRATA)
    if unknown:
        raise InfeasibleSpec(f"survivors.{sorted(unknown)[0]}", "unknown severity stratum")
    named = [(f"survivors.{k}", v) for k, v in spec.survivors.items()] + [("deceased", spec.deceased)]
    for name, t in named:
        if t.total < 0 or t.correct < 0:
            raise InfeasibleSpec(name, "counts must be non-negative")
        if t.correct > t.total:
            raise InfeasibleSpec(f"{name}.correct", f"correct {t.correct} exceeds total {t.total}")


def _round_into(x: float, lo: float, hi: float) -> float:
    return min(max(round(x, 2), lo), hi)


def generate(tree: RuleTree, spec: SynthSpec) -> Cohort:
    """Cohort whose evaluation under ``tree`` (identity harmonization) matches ``spec`` exactly."""
    _check_counts(spec)
    bounds = feature_bounds(tree, spec)
    regions: dict[Outcome, list[dict[str, tuple[float, float]]]] = {o: [] for o in Outcome}
    for path in leaf_paths(tree):
        box = path_box(path.conditions, bounds, spec.margin)
        if box is not None:
            regions[path.outcome].append(box)

    features = [f.name for f in tree.features]
    records = []
    n = spec.size
    width = max(4, len(str(n)))
    for cell, status, severity, predicted, count in _cells(spec):
        if count == 0:
            continue
        if not regions[predicted]:
            raise InfeasibleSpec(cell, f"no non-empty {predicted.value} region within bounds and margin {spec.margin}")
        rng = random.Random(f"{spec.seed}:{cell}")
        for _ in range(count):
            box = rng.choice(regions[predicted])
            labs = {}
            for f in features:
                lo, hi = box[f]
                labs[f] = LabValue(_round_into(rng.uniform(lo, hi), lo, hi), spec.assays.get(f) or DEFAULT_ASSAYS.get(f) or f"{f}_std")
            age_lo, age_hi = bounds["age"]
            age = float(min(max(round(rng.gauss(spec.age_mean, spec.age_std)), math.ceil(age_lo)), math.floor(age_hi)))
            rid = f"P{len(records) + 1:0{width}d}"
            records.append(PatientRecord(rid, status, labs, age, Sex.UNKNOWN, severity))

    male = int(spec.male_fraction * n + Fraction(1, 2))
    order = list(range(n))
    random.Random(f"{spec.seed}:sex").shuffle(order)
    males = set(order[:male])
    records = [replace(r, sex=Sex.MALE if i in males else Sex.FEMALE) for i, r in enumerate(records)]
    return Cohort(tuple(records), f"synth:seed={spec.seed}")


def pad_incomplete(
    cohort: Cohort,
    total_rows: int,
    required: tuple[str, ...],
    seed: int = 0,
    bounds: Mapping[str, tuple[float, float]] | None = None,
    assays: Mapping[str, str] | None = None,
) -> Cohort:
    """Mix ``cohort`` with filler records that each lack at least one ``required`` lab.

    Filler ids are ``X0001``...; the result has ``total_rows`` records in a
    seeded shuffled order, and completeness filtering recovers ``cohort``.
    """
    extra = total_rows - len(cohort)
    if extra < 0:
        raise ValueError(f"cohort already has {len(cohort)} > {total_rows} records")
    if extra and not required:
        raise ValueError("filler records need at least one required feature to omit")
    bounds = {**DEFAULT_BOUNDS, **(bounds or {})}
    assays = {**DEFAULT_ASSAYS, **(assays or {})}
    rng = random.Random(f"{seed}:pad")
    width = max(4, len(str(extra)))
    filler = []
    for i in range(extra):
        lacking = set(rng.sample(required, rng.randint(1, len(required))))
        labs = {}
        for f in required:
            if f not in lacking:
                lo, hi = bounds.get(f, (0.0, 100.0))
                labs[f] = LabValue(_round_into(rng.uniform(lo, hi), lo, hi), assays.get(f, f"{f}_std"))
        status = Status.DECEASED if rng.random() < 0.2 else Status.SURVIVED
        severity = Severity.UNKNOWN if status is Status.DECEASED else rng.choice(
            [Severity.MILD, Severity.MODERATE, Severity.SEVERE]
        )
        sex = Sex.MALE if rng.random() < 0.7 else Sex.FEMALE
        age = float(min(max(round(rng.gauss(56.66, 15.18)), 18), 95))
        filler.append(PatientRecord(f"X{i + 1:0{width}d}", status, labs, age, sex, severity))
    mixed = list(cohort.records) + filler
    rng.shuffle(mixed)
    return Cohort(tuple(mixed), f"{cohort.source}+pad{total_rows}")


# -- marginal fitting -----------------------------------------------------------------


@dataclass(frozen=True)
class FitResult:
    feature: str
    target: float
    tolerance: float
    before: float
    achieved: float
    reached: bool

    @property
    def distance(self) -> float:
        return abs(self.achieved - self.target)


@dataclass(frozen=True)
class MarginalFit:
    cohort: Cohort
    results: tuple[FitResult, ...]

    @property
    def reached(self) -> bool:
        return all(r.reached for r in self.results)


def _allowed_interval(rec: PatientRecord, feature: str, x: float, tree: RuleTree,
                      box: tuple[float, float], margin: float) -> tuple[float, float]:
    lo, hi = min(box[0], x), max(box[1], x)
    if feature == "age":
        return lo, hi
    try:
        trace = predict(tree, rec.values())
    except PredictionError:
        return x, x
    for step in trace.path:
        if step.feature != feature:
            continue
        rel = Condition(step.feature, step.cmp, step.threshold, step.taken).relation
        if rel in (">", ">="):
            lo = max(lo, min(x, step.threshold + margin))
        else:
            hi = min(hi, max(x, step.threshold - margin))
    return lo, hi


def _shifted(xs: list[float], intervals: list[tuple[float, float]], shift: float) -> list[float]:
    return [min(max(x + shift, lo), hi) for x, (lo, hi) in zip(xs, intervals)]


def fit_marginals(
    cohort: Cohort,
    targets: Mapping[str, MarginalTarget],
    tree: RuleTree,
    bounds: Mapping[str, tuple[float, float]] | None = None,
    margin: float = MARGIN,
) -> MarginalFit:
    """Shift feature values (or ``age``) toward target means, staying inside each record's leaf region.

    Each record may move only within the interval that keeps every decision
    on its prediction path unchanged (kept ``margin`` away from thresholds it
    is not already closer to). A common shift is found by bisection and
    values are rounded to 2 decimals. Targets that cannot be reached are
    reported with the closest achieved mean; nothing is raised.
    """
    box_for = {**DEFAULT_BOUNDS, **(bounds or {})}
    records = list(cohort.records)
    results = []
    for feature, target in targets.items():
        idx, xs = [], []
        for i, r in enumerate(records):
            v = r.age if feature == "age" else (r.labs[feature].value if feature in r.labs else None)
            if v is not None:
                idx.append(i)
                xs.append(v)
        if not xs:
            results.append(FitResult(feature, target.mean, target.tolerance, math.nan, math.nan, False))
            continue
        before = statistics.mean(xs)
        if abs(before - target.mean) <= target.tolerance:
            results.append(FitResult(feature, target.mean, target.tolerance, before, before, True))
            continue
        box = box_for.get(feature, (min(xs), max(xs)))
        intervals = [_allowed_interval(records[i], feature, x, tree, box, margin) for i, x in zip(idx, xs)]
        lo_shift = min(lo - x for x, (lo, _) in zip(xs, intervals))
        hi_shift = max(hi - x for x, (_, hi) in zip(xs, intervals))
        for _ in range(200):
            mid = (lo_shift + hi_shift) / 2
            if statistics.fmean(_shifted(xs, intervals, mid)) < target.mean:
                lo_shift = mid
            else:
                hi_shift = mid
        shift = (lo_shift + hi_shift) / 2
        new = [_round_into(v, lo, hi) for v, (lo, hi) in zip(_shifted(xs, intervals, shift), intervals)]
        achieved = statistics.mean(new)
        for i, v in zip(idx, new):
            r = records[i]
            if feature == "age":
                records[i] = replace(r, age=v)
            else:
                labs = dict(r.labs)
                labs[feature] = LabValue(v, r.labs[feature].assay)
                records[i] = replace(r, labs=labs)
        reached = abs(achieved - target.mean) <= target.tolerance
        results.append(FitResult(feature, target.mean, target.tolerance, before, achieved, reached))
    return MarginalFit(Cohort(tuple(records), cohort.source), tuple(results))


# -- spec files -----------------------------------------------------------------------

_SPEC_SECTIONS = {
    "spec": {"seed", "rule", "margin"},
    "deceased": {"total", "correct"},
    "demographics": {"age_mean", "age_std", "male_fraction"},
}


def _pair(text: str, key: str) -> tuple[float, float]:
    parts = [p.strip() for p in text.split(",")]
    if len(parts) != 2:
        raise ConfigError(f"{key}: expected 'lower, upper'")
    return parse_decimal(parts[0]), parse_decimal(parts[1])


def _marginal(text: str, key: str) -> MarginalTarget:
    for sep in ("+/-", "+-", "±"):
        if sep in text:
            mean, tol = text.split(sep, 1)
            return MarginalTarget(parse_decimal(mean), parse_decimal(tol))
    return MarginalTarget(parse_decimal(text), 0.0)


def parse_spec(text: str, base: Path | None = None, source: str = "<spec>") -> SynthSpec:
    """Parse a synth spec file (INI-style ``[section]`` headers, ``key = value`` lines)."""
    cp = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=("#", ";"))
    cp.optionxform = str
    try:
        cp.read_string(text, source)
    except configparser.Error as exc:
        raise ConfigError(f"{source}: {exc}") from None
    kw: dict = {}
    survivors = {}
    deceased = StratumTarget(0, 0)
    try:
        for sect in cp.sections():
            items = dict(cp.items(sect))
            allowed = _SPEC_SECTIONS.get(sect)
            if sect.startswith("survivors."):
                allowed = {"total", "correct"}
            if sect in ("bounds", "assays", "marginals"):
                allowed = None
            elif allowed is None:
                raise ConfigError(f"{source}: unknown section [{sect}]")
            if allowed is not None and set(items) - allowed:
                raise ConfigError(f"{source}: unknown key(s) in [{sect}]: {', '.join(sorted(set(items) - allowed))}")
            if sect == "spec":
                if "seed" in items:
                    kw["seed"] = int(items["seed"])
                if "margin" in items:
                    kw["margin"] = parse_decimal(items["margin"])
                if "rule" in items:
                    kw["rule"] = str((base or Path(".")) / items["rule"])
            elif sect.startswith("survivors."):
                survivors[sect.split(".", 1)[1]] = StratumTarget(int(items.get("total", 0)), int(items.get("correct", 0)))
            elif sect == "deceased":
                deceased = StratumTarget(int(items.get("total", 0)), int(items.get("correct", 0)))
            elif sect == "demographics":
                for k in ("age_mean", "age_std"):
                    if k in items:
                        kw[k] = parse_decimal(items[k])
                if "male_fraction" in items:
                    kw["male_fraction"] = Fraction(items["male_fraction"])
            elif sect == "bounds":
                kw["bounds"] = {k: _pair(v, k) for k, v in items.items()}
            elif sect == "assays":
                kw["assays"] = dict(items)
            elif sect == "marginals":
                kw["marginals"] = {k: _marginal(v, k) for k, v in items.items()}
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from None
    return SynthSpec(survivors=survivors, deceased=deceased, **kw)


def load_spec(path: str | Path) -> SynthSpec:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except (OSError, UnicodeDecodeError) as exc:
        raise FileUnreadable(f"cannot read spec file {path}: {exc}") from None
    return parse_spec(text, path.parent, str(path))
