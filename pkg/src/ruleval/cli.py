"""Command-line entry point.

Exit status: 0 success, 1 usage error, 2 data or validation failure.
Diagnostics go to stderr; data goes to files or stdout.
"""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace
from pathlib import Path
from typing import Sequence

from . import __version__
from .cohort import LabValue, Cohort, ingest_csv, summarize, write_csv
from .config import PRESETS, RunConfig, load_run_config, parse_formats
from .errors import ConfigError, RuleError, RulevalError
from .evaluation import evaluate
from .harmonize import DEFAULT_REGISTRY, Mode, harmonize_panel, load_registry
from .report import canonical_json, ingest_to_dict, render_report, summary_markdown, summary_to_dict
from .rule_dsl import RuleTree, parse_rule, print_rule
from .synth import fit_marginals, generate, load_spec, pad_incomplete

EXIT_OK, EXIT_USAGE, EXIT_DATA = 0, 1, 2
REPORT_FILES = {"json": "report.json", "markdown": "report.md", "svg": "report.svg"}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse would exit 2; usage errors are 1 here
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _diag(msg: str) -> None:
    print(f"ruleval: {msg}", file=sys.stderr)


def _read_rule(path: str | Path) -> RuleTree:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise RulevalError(f"cannot read rule file {path}: {exc.strerror}") from None
    try:
        return parse_rule(data)
    except RuleError as exc:
        raise RuleError(f"{path}: {exc}") from None


def _write(data: bytes, out: str | Path | None) -> None:
    if out is None or str(out) == "-":
        sys.stdout.buffer.write(data)
        sys.stdout.flush()
    else:
        Path(out).write_bytes(data)


def _load_config(args) -> RunConfig:
    cfg = load_run_config(args.config)
    for key in ("rule", "cohort", "registry"):
        value = getattr(args, key, None)
        if value is not None:
            setattr(cfg, key, Path(value))
    if getattr(args, "required", None) is not None:
        cfg.required = tuple(p.strip() for p in args.required.split(",") if p.strip())
    if getattr(args, "out_dir", None) is not None:
        cfg.output_dir = Path(args.out_dir)
    if getattr(args, "format", None) is not None:
        try:
            cfg.formats = parse_formats(args.format)
        except ConfigError as exc:
            raise UsageError(str(exc)) from None
    return cfg


def _registry(cfg: RunConfig):
    return DEFAULT_REGISTRY if cfg.registry is None else load_registry(cfg.registry)


def _require(value, flag: str):
    if value is None:
        raise UsageError(f"{flag} is required (on the command line or in the config file)")
    return value


def _log_ingest(report) -> None:
    _diag(
        f"ingested {report.total_rows} rows: kept {report.kept}, "
        f"missing labs {report.excluded_missing_labs}, malformed {report.excluded_malformed}"
    )


# -- subcommands ----------------------------------------------------------------------


def cmd_check_rule(args) -> int:
    tree = _read_rule(args.rule)
    _write(print_rule(tree).encode("utf-8"), args.out)
    _diag(f"{args.rule}: ok ({len(tree.features)} features, depth {tree.depth})")
    return EXIT_OK


def cmd_harmonize(args) -> int:
    cfg = _load_config(args)
    registry = _registry(cfg)
    cfg.harmonization.check(registry)
    cohort, report = ingest_csv(_require(cfg.cohort, "--cohort"), cfg.schema, registry)
    _log_ingest(report)
    h = cfg.harmonization
    out = []
    for rec in cohort:
        values = harmonize_panel(rec.labs, h, registry)
        labs = {}
        for feature, lab in rec.labs.items():
            mapping = h.mappings.get(feature) if h.mode is not Mode.IDENTITY else None
            assay = mapping[1] if mapping and lab.assay in mapping else lab.assay
            labs[feature] = LabValue(values[feature], assay)
        try:
            out.append(replace(rec, labs=labs))
        except ValueError as exc:
            raise RulevalError(f"harmonized record invalid: {exc}") from None
    _write(write_csv(Cohort(tuple(out)), cfg.schema).encode("utf-8"), args.out)
    return EXIT_OK


def cmd_synth(args) -> int:
    spec = load_spec(args.spec)
    if args.seed is not None:
        spec = replace(spec, seed=args.seed)
    rule_path = args.rule or spec.rule
    if rule_path is None:
        raise UsageError("--rule is required when the spec does not name a rule")
    tree = _read_rule(rule_path)
    cohort = generate(tree, spec)
    if spec.marginals and not args.no_fit:
        fit = fit_marginals(cohort, spec.marginals, tree, spec.bounds, spec.margin)
        cohort = fit.cohort
        for r in fit.results:
            status = "ok" if r.reached else "UNREACHED"
            _diag(f"marginal {r.feature}: target {r.target} +/- {r.tolerance}, achieved {r.achieved:.4f} [{status}]")
    if args.pad_to is not None:
        try:
            cohort = pad_incomplete(cohort, args.pad_to, tree.used_features, spec.seed, spec.bounds, spec.assays)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
    _write(write_csv(cohort).encode("utf-8"), args.out)
    _diag(f"wrote {len(cohort)} records")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _load_config(args)
    tree = _read_rule(_require(cfg.rule, "--rule"))
    registry = _registry(cfg)
    cfg.harmonization.check(registry)
    required = cfg.required if cfg.required is not None else tree.used_features
    cohort, ingest = ingest_csv(_require(cfg.cohort, "--cohort"), cfg.schema, registry, required)
    _log_ingest(ingest)
    report = evaluate(tree, cohort, cfg.harmonization, registry)
    report = replace(report, extra={"ingest": ingest_to_dict(ingest), "required_features": list(required)})
    if cfg.output_dir is None:
        if len(cfg.formats) > 1:
            raise UsageError("several formats need --out-dir")
        _write(render_report(report, cfg.formats[0]), None)
    else:
        cfg.output_dir.mkdir(parents=True, exist_ok=True)
        for fmt in cfg.formats:
            path = cfg.output_dir / REPORT_FILES[fmt]
            path.write_bytes(render_report(report, fmt))
            _diag(f"wrote {path}")
    _diag(
        f"survival recall {report.survival_recall if report.survival_recall is not None else 'NA'}, "
        f"mortality recall {report.mortality_recall if report.mortality_recall is not None else 'NA'} "
        f"(harmonization {report.harmonization_mode.value})"
    )
    return EXIT_OK


def cmd_summarize(args) -> int:
    cfg = _load_config(args)
    registry = _registry(cfg)
    required = cfg.required or ()
    cohort, ingest = ingest_csv(_require(cfg.cohort, "--cohort"), cfg.schema, registry, required)
    _log_ingest(ingest)
    stats = summarize(cohort)
    if args.format == "json":
        text = canonical_json({"summary": summary_to_dict(stats), "ingest": ingest_to_dict(ingest)}) + "\n"
    else:
        text = "\n".join(summary_markdown(stats)) + "\n"
    _write(text.encode("utf-8"), args.out)
    return EXIT_OK


# -- argument parsing -----------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ruleval", description="Validate threshold decision rules on patient cohorts.")
    p.add_argument("--version", action="version", version=f"ruleval {__version__}")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    config_help = f"config file, or a preset: {', '.join(PRESETS)} (default affine_interval)"

    c = sub.add_parser("check-rule", help="parse a rule file and print its canonical form")
    c.add_argument("rule")
    c.add_argument("--out", help="write canonical text here instead of stdout")
    c.set_defaults(func=cmd_check_rule)

    h = sub.add_parser("harmonize", help="rewrite a cohort CSV into the target assay frame")
    h.add_argument("--cohort")
    h.add_argument("--config", default="affine_interval", help=config_help)
    h.add_argument("--registry", help="assay registry TSV (default: built-in registry)")
    h.add_argument("--out", help="output CSV (default stdout)")
    h.set_defaults(func=cmd_harmonize)

    s = sub.add_parser("synth", help="emit a synthetic fixture cohort from a spec file")
    s.add_argument("--spec", required=True)
    s.add_argument("--rule", help="rule file (default: the one named in the spec)")
    s.add_argument("--seed", type=int, help="override the spec seed")
    s.add_argument("--pad-to", type=int, metavar="N", help="add records lacking required labs up to N rows")
    s.add_argument("--no-fit", action="store_true", help="skip marginal fitting")
    s.add_argument("--out", help="output CSV (default stdout)")
    s.set_defaults(func=cmd_synth)

    e = sub.add_parser("evaluate", help="run the full pipeline and write reports")
    e.add_argument("--config", default="affine_interval", help=config_help)
    e.add_argument("--rule")
    e.add_argument("--cohort")
    e.add_argument("--registry", help="assay registry TSV (default: built-in registry)")
    e.add_argument("--required", help="comma-separated features for the completeness filter")
    e.add_argument("--out-dir", help="directory for report.json / report.md / report.svg")
    e.add_argument("--format", help="comma-separated: json, markdown, svg (default json)")
    e.set_defaults(func=cmd_evaluate)

    m = sub.add_parser("summarize", help="descriptive statistics of a cohort")
    m.add_argument("--cohort")
    m.add_argument("--config", default="affine_interval", help=config_help)
    m.add_argument("--registry")
    m.add_argument("--required", help="comma-separated features for the completeness filter")
    m.add_argument("--format", choices=("markdown", "json"), default="markdown")
    m.add_argument("--out")
    m.set_defaults(func=cmd_summarize)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help / --version exit 0, parse errors exit 1
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except UsageError as exc:
        _diag(f"usage error: {exc}")
        return EXIT_USAGE
    except RulevalError as exc:
        _diag(f"error: {exc}")
        return EXIT_DATA
    except OSError as exc:
        _diag(f"error: {exc.filename or ''}: {exc.strerror}")
        return EXIT_DATA


def run() -> None:
    sys.exit(main())
