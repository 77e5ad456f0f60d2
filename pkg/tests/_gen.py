"""Random trees and cohorts for property tests."""

from __future__ import annotations

import math
import random
from fractions import Fraction

from ruleval.cohort import Cohort, LabValue, PatientRecord, Severity
from ruleval.cohort import Outcome as Status
from ruleval.errors import DegenerateRule, MissingFeature
from ruleval.harmonize import (
    DEFAULT_REGISTRY,
    AssayMethod,
    Direction,
    ReferenceInterval,
)
from ruleval.rule_dsl import FeatureDef, Leaf, Outcome, RuleTree, Split, predict
from ruleval.synth import StratumTarget, SynthSpec

CMPS = ("<", "<=", ">", ">=")
NAMES = ("a", "b", "c", "LDH", "x_1")


def _threshold(rng: random.Random, style: str) -> float:
    if style == "synth":
        return round(rng.uniform(10, 90), 1)
    pick = rng.random()
    if pick < 0.3:
        return float(rng.randint(-50, 500))
    if pick < 0.6:
        return round(rng.uniform(0, 1000), rng.randint(1, 4))
    if pick < 0.8:
        return rng.uniform(-1e6, 1e6)
    return rng.uniform(-1, 1) * 10.0 ** rng.randint(-12, 20)


def random_tree(rng: random.Random, max_depth: int = 4, style: str = "any", n_features: int = 3) -> RuleTree:
    while True:
        names = rng.sample(NAMES, n_features)
        units = ["U/L", "mg/L", "%", 'we"ird\\unit', "µmol/L"] if style == "any" else ["U/L"]
        feats = tuple(FeatureDef(n, rng.choice(units), rng.random() < 0.3) for n in names)

        def node(depth: int):
            if depth == 0 or (depth < max_depth and rng.random() < 0.35):
                return Leaf(rng.choice(list(Outcome)))
            return Split(rng.choice(names), rng.choice(CMPS), _threshold(rng, style), node(depth - 1), node(depth - 1))

        name = rng.choice(["r", "rule one", 'quote"d', "back\\slash", "tab\there"]) if style == "any" else "r"
        try:
            return RuleTree(name, feats, node(max_depth))
        except DegenerateRule:
            continue


def registry_for(features) -> dict[str, AssayMethod]:
    return {**DEFAULT_REGISTRY} | {
        f"{f}_std": AssayMethod(f"{f}_std", f, Direction.UNSPECIFIED, "u", ReferenceInterval(1, 2))
        for f in features
    }


def random_cohort(rng: random.Random, tree: RuleTree, max_n: int = 30, p_missing: float = 0.1) -> Cohort:
    """Records with values near thresholds (including exact ties) and occasional gaps."""
    thresholds = {}
    for s in tree.splits():
        thresholds.setdefault(s.feature, []).append(s.threshold)
    recs = []
    for i in range(rng.randint(0, max_n)):
        labs = {}
        for f in tree.features:
            if rng.random() < p_missing:
                continue
            ts = thresholds.get(f.name, [1.0])
            t = rng.choice(ts)
            v = abs(rng.choice([t, t + 1, t - 1, t * rng.uniform(0, 2), rng.uniform(0, 100)]))
            labs[f.name] = LabValue(v, f"{f.name}_std")
        status = rng.choice(list(Status))
        sev = rng.choice(list(Severity)) if status is Status.SURVIVED else Severity.UNKNOWN
        recs.append(PatientRecord(f"r{i}", status, labs, severity=sev))
    return Cohort(tuple(recs))


def brute_force_tallies(tree, cohort):
    """Count (status, severity, predicted) triples one record at a time."""
    tallies = {}
    excluded = 0
    for rec in cohort:
        try:
            out = predict(tree, {k: v.value for k, v in rec.labs.items()}).outcome
        except MissingFeature:
            excluded += 1
            continue
        key = (rec.outcome.value, rec.severity.value, out.value)
        tallies[key] = tallies.get(key, 0) + 1
    return tallies, excluded


def summary_oracle(values):
    """Mean, sample SD and median via exact rationals."""
    n = len(values)
    mean = Fraction(0)
    for v in values:
        mean += Fraction(v)
    mean /= n
    srt = sorted(values)
    median = srt[n // 2] if n % 2 else (srt[n // 2 - 1] + srt[n // 2]) / 2
    if n == 1:
        return float(mean), 0.0, median
    ss = sum((Fraction(v) - mean) ** 2 for v in values)
    return float(mean), math.sqrt(float(ss / (n - 1))), median


def random_spec(rng: random.Random, max_stratum: int = 8) -> SynthSpec:
    surv = {}
    for s in ("mild", "moderate", "severe"):
        t = rng.randint(0, max_stratum)
        surv[s] = StratumTarget(t, rng.randint(0, t))
    d = rng.randint(0, max_stratum)
    return SynthSpec(surv, StratumTarget(d, rng.randint(0, d)), seed=rng.randint(0, 10**6))
