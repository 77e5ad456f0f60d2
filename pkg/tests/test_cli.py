import json

import pytest

from ruleval.cli import main
from ruleval.config import load_run_config
from ruleval.errors import ConfigError
from ruleval.harmonize import Mode


def _run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_check_rule_prints_canonical(capsys, root, yan):
    from ruleval.rule_dsl import print_rule

    code, out, err = _run(capsys, "check-rule", root / "rules" / "yan2020.rule")
    assert code == 0 and out == print_rule(yan)
    assert "depth 3" in err


def test_check_rule_diagnostic(capsys, tmp_path):
    bad = tmp_path / "bad.rule"
    bad.write_text('rule "x";\nfeature a unit "u";\ntree if a >= then leaf Death else leaf Survival\n')
    code, out, err = _run(capsys, "check-rule", bad)
    assert code == 2 and out == ""
    assert "line 3" in err and "Traceback" not in err


def test_evaluate_identity_preset(capsys, root):
    code, out, err = _run(capsys, "evaluate", "--rule", root / "rules/yan2020.rule",
                          "--cohort", root / "fixtures/figure1.csv", "--config", "identity")
    assert code == 0
    doc = json.loads(out)
    assert doc["harmonization_mode"] == "identity"
    assert '"survival_recall": 65.26' in out and '"mortality_recall": 88.00' in out


def test_evaluate_missing_cohort(capsys, root):
    code, out, err = _run(capsys, "evaluate", "--rule", root / "rules/yan2020.rule", "--cohort", "missing.csv")
    assert code == 2 and "missing.csv" in err and out == ""


def test_usage_errors(capsys, root):
    assert _run(capsys, "frobnicate")[0] == 1
    assert _run(capsys)[0] == 1
    code, _, err = _run(capsys, "evaluate", "--rule", root / "rules/yan2020.rule",
                        "--cohort", root / "fixtures/figure1.csv", "--format", "json,svg")
    assert code == 1 and "--out-dir" in err
    assert _run(capsys, "evaluate", "--cohort", root / "fixtures/figure1.csv")[0] == 1
    assert _run(capsys, "evaluate", "--format", "pdf")[0] == 1


def test_evaluate_writes_reports_idempotently(capsys, root, tmp_path):
    argv = ["evaluate", "--rule", root / "rules/yan2020.rule", "--cohort", root / "fixtures/figure1_funnel.csv",
            "--out-dir", tmp_path / "out", "--format", "json,markdown,svg"]
    assert _run(capsys, *argv)[0] == 0
    first = {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    assert set(first) == {"report.json", "report.md", "report.svg"}
    assert _run(capsys, *argv)[0] == 0
    assert first == {p.name: p.read_bytes() for p in (tmp_path / "out").iterdir()}
    doc = json.loads(first["report.json"])
    assert doc["ingest"]["kept"] == 120 and doc["ingest"]["excluded_missing_labs"] == 721
    assert doc["harmonization_mode"] == "affine_interval"


def test_synth_matches_shipped_fixture(capsys, root, tmp_path):
    out = tmp_path / "f.csv"
    assert _run(capsys, "synth", "--spec", root / "fixtures/figure1.spec", "--out", out)[0] == 0
    assert out.read_bytes() == (root / "fixtures/figure1.csv").read_bytes()
    padded = tmp_path / "p.csv"
    assert _run(capsys, "synth", "--spec", root / "fixtures/figure1.spec", "--pad-to", 841, "--out", padded)[0] == 0
    assert padded.read_bytes() == (root / "fixtures/figure1_funnel.csv").read_bytes()


def test_synth_infeasible(capsys, root, tmp_path):
    spec = tmp_path / "bad.spec"
    spec.write_text(f"[spec]\nrule = {root / 'rules/yan2020.rule'}\n[survivors.mild]\ntotal = 23\ncorrect = 24\n")
    code, _, err = _run(capsys, "synth", "--spec", spec)
    assert code == 2 and "survivors.mild.correct" in err


def test_harmonize_rewrites_frame(capsys, tmp_path):
    src = tmp_path / "in.csv"
    src.write_text("id,age,sex,severity,outcome,ldh,ldh_assay,crp,crp_assay,lymph_pct\n"
                   "a,50,M,mild,survived,480,kit_PL,10,crp_std,20\n"
                   "b,60,F,,deceased,250,kit_LP,50,,9\n")
    code, out, _ = _run(capsys, "harmonize", "--cohort", src)
    assert code == 0
    lines = out.splitlines()
    assert lines[1] == "a,50,male,mild,survived,250,kit_LP,10,crp_std,20"
    assert lines[2] == "b,60,female,,deceased,250,kit_LP,50,crp_std,9"


def test_summarize(capsys, root):
    code, out, _ = _run(capsys, "summarize", "--cohort", root / "fixtures/figure1.csv")
    assert code == 0 and "| Survived | 95 (79.17%) |" in out
    code, out, _ = _run(capsys, "summarize", "--cohort", root / "fixtures/figure1_funnel.csv",
                        "--required", "LDH,hs_CRP,lymph_pct", "--format", "json")
    assert json.loads(out)["summary"]["n"] == 120


def test_config_file(capsys, root, tmp_path):
    cfg = tmp_path / "run.cfg"
    cfg.write_text(
        "[run]\n"
        f"rule = {root / 'rules/yan2020.rule'}\n"
        f"cohort = {root / 'fixtures/figure1.csv'}\n"
        f"registry = {root / 'fixtures/assays.tsv'}\n"
        "formats = json, markdown\n"
        "output_dir = out\n"
        "[harmonization]\nmode = uln_ratio\nLDH = kit_PL -> kit_LP\n"
    )
    loaded = load_run_config(str(cfg))
    assert loaded.harmonization.mode is Mode.ULN_RATIO
    assert loaded.output_dir == tmp_path / "out"
    assert _run(capsys, "evaluate", "--config", cfg)[0] == 0
    assert json.loads((tmp_path / "out" / "report.json").read_text())["harmonization_mode"] == "uln_ratio"


@pytest.mark.parametrize(
    "text",
    [
        "[run]\ncolour = blue\n",
        "[weird]\n",
        "[run]\nrule = does/not/exist.rule\n",
        "[harmonization]\nmode = quadratic\n",
        "[harmonization]\nLDH = kit_PL\n",
        "[schema]\nbogus = x\n",
    ],
)
def test_config_rejects(tmp_path, text):
    cfg = tmp_path / "c.cfg"
    cfg.write_text(text)
    with pytest.raises(ConfigError):
        load_run_config(str(cfg))


def test_schema_remapping(capsys, tmp_path, root):
    data = tmp_path / "alt.csv"
    data.write_text("pid,status,LDH_UL,CRP,LYM\n1,survived,200,10,20\n2,deceased,900,50,5\n")
    cfg = tmp_path / "c.cfg"
    cfg.write_text(
        f"[run]\nrule = {root / 'rules/yan2020.rule'}\ncohort = alt.csv\n"
        "[harmonization]\nmode = identity\n"
        "[schema]\nid = pid\noutcome = status\n"
        "[schema.labs]\nLDH = LDH_UL, , kit_LP\nhs_CRP = CRP, , crp_std\nlymph_pct = LYM, , lymph_std\n"
    )
    code, out, _ = _run(capsys, "evaluate", "--config", cfg)
    assert code == 0
    doc = json.loads(out)
    assert doc["survival_recall"] == 100 and doc["mortality_recall"] == 100
