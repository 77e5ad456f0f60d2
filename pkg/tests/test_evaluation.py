import json
import random

import pytest

from _gen import brute_force_tallies, random_cohort, random_tree, registry_for
from ruleval.cohort import Cohort, Outcome as Status, PatientRecord
from ruleval.errors import EvaluationError, MissingFeature
from ruleval.evaluation import ConfusionCounts, evaluate
from ruleval.harmonize import HarmonizationConfig, Mode
from ruleval.report import canonical_json, render_report
from ruleval.rule_dsl import Outcome

IDENTITY = HarmonizationConfig(Mode.IDENTITY)
AFFINE = HarmonizationConfig(Mode.AFFINE_INTERVAL, {"LDH": ("kit_PL", "kit_LP")})


def _patient(i, status, ldh, crp=10.0, lymph=20.0, severity="unknown", ldh_kit="kit_LP"):
    labs = {"LDH": (ldh, ldh_kit), "hs_CRP": (crp, "crp_std"), "lymph_pct": (lymph, "lymph_std")}
    return PatientRecord(f"p{i}", status, labs, severity=severity)


def test_perfect_classification(yan, registry):
    recs = [_patient(i, "survived", 200.0, severity=s) for i, s in enumerate(["mild", "moderate", "severe"])]
    recs += [_patient(10 + i, "deceased", 600.0) for i in range(3)]
    rep = evaluate(yan, Cohort(tuple(recs)), IDENTITY, registry)
    assert str(rep.survival_recall) == "100.00" and str(rep.mortality_recall) == "100.00"
    assert all(str(v) == "100.00" for v in rep.severity_recall.values())


def test_zero_deceased_is_na(yan, registry):
    rep = evaluate(yan, Cohort((_patient(1, "survived", 200.0, severity="mild"),)), IDENTITY, registry)
    assert rep.mortality_recall is None
    doc = json.loads(render_report(rep, "json"))
    assert doc["mortality_recall"] is None
    assert "| Deceased | 0 | 0 | NA |" in render_report(rep, "markdown").decode()
    assert ">NA<" in render_report(rep, "svg").decode()


def test_harmonization_changes_prediction(yan, registry):
    # 400 U/L on the 240-480 kit maps to 211.67 on the 135-250 kit: below the 365 cut-off
    cohort = Cohort((_patient(1, "survived", 400.0, ldh_kit="kit_PL", severity="mild"),))
    assert evaluate(yan, cohort, AFFINE, registry).overall.survivors_predicted_survival == 1
    assert evaluate(yan, cohort, IDENTITY, registry).overall.survivors_predicted_survival == 0


def test_mode_is_recorded_even_when_metrics_coincide(yan, registry):
    cohort = Cohort((_patient(1, "survived", 200.0, severity="mild"), _patient(2, "deceased", 700.0)))
    a = evaluate(yan, cohort, IDENTITY, registry)
    b = evaluate(yan, cohort, AFFINE, registry)
    assert a.overall == b.overall
    assert a.harmonization_mode != b.harmonization_mode
    assert render_report(a, "json") != render_report(b, "json")


def test_unknown_assay_names_record(yan, registry):
    cohort = Cohort((_patient(1, "survived", 200.0), _patient(2, "survived", 200.0, ldh_kit="kit_ZZ")))
    with pytest.raises(EvaluationError) as exc:
        evaluate(yan, cohort, AFFINE, registry)
    assert exc.value.record_id == "p2"


def test_prediction_failure_is_excluded(yan, registry):
    rec = PatientRecord("gap", "deceased", {"LDH": (100.0, "kit_LP")})
    rep = evaluate(yan, Cohort((rec, _patient(1, "deceased", 900.0))), IDENTITY, registry)
    assert rep.excluded == (("gap", str(MissingFeature("hs_CRP"))),)
    assert rep.overall.deceased_total == 1 and rep.cohort_size == 2


def test_unknown_severity_survivors_counted_overall_only(yan, registry):
    rep = evaluate(yan, Cohort((_patient(1, "survived", 200.0),)), IDENTITY, registry)
    assert rep.overall.survivors_total == 1
    assert rep.survivors_unknown_severity == 1
    assert sum(c.survivors_total for c in rep.by_severity.values()) == 0


def test_counts_merge_is_associative():
    rng = random.Random(1)
    cells = [ConfusionCounts.single(rng.choice(list(Status)), rng.choice(list(Outcome))) for _ in range(50)]
    left = ConfusionCounts()
    for c in cells:
        left = left + c
    right = ConfusionCounts()
    for c in reversed(cells):
        right = c + right
    assert left == right


def test_counts_invariants():
    with pytest.raises(ValueError):
        ConfusionCounts(1, 2, 0, 0)
    with pytest.raises(ValueError):
        ConfusionCounts(0, 0, -1, 0)


def test_evaluate_matches_brute_force_recount():
    rng = random.Random(2024)
    for _ in range(200):
        tree = random_tree(rng, max_depth=3)
        cohort = random_cohort(rng, tree)
        rep = evaluate(tree, cohort, IDENTITY, registry_for(f.name for f in tree.features))
        tallies, excluded = brute_force_tallies(tree, cohort)

        def n(status, sev=None, out=None):
            return sum(v for (s, sv, o), v in tallies.items()
                       if s == status and (sev is None or sv == sev) and (out is None or o == out))

        assert rep.overall == ConfusionCounts(n("survived"), n("survived", out="Survival"),
                                              n("deceased"), n("deceased", out="Death"))
        for sev in ("mild", "moderate", "severe"):
            assert rep.by_severity[sev] == ConfusionCounts(n("survived", sev), n("survived", sev, "Survival"), 0, 0)
        assert len(rep.excluded) == excluded
        assert rep.cohort_size == len(cohort)


# -- rendering ---------------------------------------------------------------------------


@pytest.fixture
def reference_report(yan, registry, root):
    from ruleval.cohort import ingest_csv

    cohort, _ = ingest_csv(root / "fixtures" / "figure1.csv")
    return evaluate(yan, cohort, IDENTITY, registry)


def test_json_report(reference_report):
    raw = render_report(reference_report, "json").decode()
    assert '"survival_recall": 65.26' in raw
    assert '"mortality_recall": 88.00' in raw
    doc = json.loads(raw)
    assert doc["by_severity"]["severe"]["survival_recall"] == 33.33
    assert doc["schema"] == "ruleval.report/1"
    assert list(doc) == sorted(doc)


def test_renderers_are_deterministic(reference_report):
    for fmt in ("json", "markdown", "svg"):
        assert render_report(reference_report, fmt) == render_report(reference_report, fmt)


def test_markdown_and_svg_content(reference_report):
    md = render_report(reference_report, "markdown").decode()
    assert "| Survivors | 95 | 62 | 65.26 |" in md
    assert "| Survivors, mild | 23 | 21 | 91.30 |" in md
    assert "| Deceased | 25 | 22 | 88.00 |" in md
    assert "| Male | 85 (70.83%) |" in md
    svg = render_report(reference_report, "svg_bar_chart").decode()
    for label in ("65.26%", "91.30%", "73.81%", "33.33%", "88.00%"):
        assert label in svg
    assert svg.startswith("<svg") and svg.rstrip().endswith("</svg>")


def test_canonical_json_scalars():
    from decimal import Decimal

    assert canonical_json({"b": Decimal("88.00"), "a": [1, 2.5, None, True, "x"]}) == (
        '{\n  "a": [\n    1,\n    2.5,\n    null,\n    true,\n    "x"\n  ],\n  "b": 88.00\n}'
    )
    with pytest.raises(ValueError):
        render_report(None, "pdf")
