"""Rendering evaluation reports as canonical JSON, Markdown or an SVG bar chart.

All three renderers are deterministic: the same report always yields the
same bytes.
"""

from __future__ import annotations

import json
import math
from decimal import Decimal
from typing import Any
from xml.sax.saxutils import escape

from .cohort import IngestReport, SummaryStats
from .evaluation import StratifiedEvalReport
from .numfmt import format_number, format_percent

FORMATS = ("json", "markdown", "svg")
SCHEMA_ID = "ruleval.report/1"


def canonical_json(obj: Any, indent: int = 0) -> str:
    """JSON with sorted keys; Decimals are written verbatim (``88.00`` stays ``88.00``)."""
    pad = "  " * (indent + 1)
    end = "  " * indent
    if obj is None:
        return "null"
    if isinstance(obj, bool):
        return "true" if obj else "false"
    if isinstance(obj, Decimal):
        return str(obj)
    if isinstance(obj, int):
        return str(obj)
    if isinstance(obj, float):
        if not math.isfinite(obj):
            return "null"
        return format_number(obj)
    if isinstance(obj, str):
        return json.dumps(obj)
    if isinstance(obj, dict):
        if not obj:
            return "{}"
        items = [f"{pad}{json.dumps(str(k))}: {canonical_json(obj[k], indent + 1)}" for k in sorted(obj, key=str)]
        return "{\n" + ",\n".join(items) + "\n" + end + "}"
    if isinstance(obj, (list, tuple)):
        if not obj:
            return "[]"
        return "[\n" + ",\n".join(pad + canonical_json(v, indent + 1) for v in obj) + "\n" + end + "]"
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _counts(c) -> dict:
    return {
        "survivors_total": c.survivors_total,
        "survivors_predicted_survival": c.survivors_predicted_survival,
        "deceased_total": c.deceased_total,
        "deceased_predicted_death": c.deceased_predicted_death,
    }


def summary_to_dict(s: SummaryStats) -> dict:
    return {
        "n": s.n,
        "numeric": {
            k: {"n": v.n, "mean": v.mean, "std": v.std, "median": v.median, "std_defined": v.std_defined}
            for k, v in s.numeric.items()
        },
        "sex": {k: {"count": v.count, "percent": v.percent} for k, v in s.sex.items()},
        "outcome": {k: {"count": v.count, "percent": v.percent} for k, v in s.outcome.items()},
        "severity": {k: {"count": v.count, "percent": v.percent} for k, v in s.severity.items()},
    }


def ingest_to_dict(r: IngestReport) -> dict:
    return {
        "total_rows": r.total_rows,
        "kept": r.kept,
        "excluded_missing_labs": r.excluded_missing_labs,
        "excluded_malformed": r.excluded_malformed,
        "missing_by_feature": dict(r.missing_by_feature),
        "exclusions": [{"line": e.line, "id": e.id, "reason": e.reason} for e in r.exclusions],
    }


def report_to_dict(report: StratifiedEvalReport) -> dict:
    out = {
        "schema": SCHEMA_ID,
        "rule": report.rule,
        "harmonization_mode": report.harmonization_mode.value,
        "cohort_size": report.cohort_size,
        "overall": _counts(report.overall),
        "survival_recall": report.survival_recall,
        "mortality_recall": report.mortality_recall,
        "by_severity": {
            k: {"counts": _counts(c), "survival_recall": c.survival_recall} for k, c in report.by_severity.items()
        },
        "survivors_unknown_severity": report.survivors_unknown_severity,
        "excluded": {
            "count": len(report.excluded),
            "records": [{"id": rid, "reason": why} for rid, why in report.excluded],
        },
        "summary": None if report.summary is None else summary_to_dict(report.summary),
    }
    out.update(report.extra)
    return out


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def summary_markdown(s: SummaryStats) -> list[str]:
    lines = [f"## Cohort (n = {s.n})", "", "| Characteristic | Value |", "|---|---|"]
    age = s.numeric.get("age")
    if age is not None:
        lines.append(f"| Age, mean (SD), median | {_fmt(age.mean)} ({_fmt(age.std)}), {_fmt(age.median)} |")
    for key, label in (("male", "Male"), ("female", "Female"), ("unknown", "Sex unknown")):
        c = s.sex[key]
        if key != "unknown" or c.count:
            lines.append(f"| {label} | {c.count} ({format_percent(c.percent)}%) |")
    for key, label in (("survived", "Survived"), ("deceased", "Deceased")):
        c = s.outcome[key]
        lines.append(f"| {label} | {c.count} ({format_percent(c.percent)}%) |")
    for name, v in s.numeric.items():
        if name != "age":
            lines.append(f"| {name}, mean, median | {_fmt(v.mean)}, {_fmt(v.median)} |")
    return lines


def render_markdown(report: StratifiedEvalReport) -> str:
    o = report.overall
    lines = [
        f"# Rule evaluation: {report.rule}",
        "",
        f"Harmonization mode: `{report.harmonization_mode.value}`",
        "",
    ]
    if report.summary is not None:
        lines += summary_markdown(report.summary) + [""]
    lines += [
        "## Rule performance",
        "",
        "| Group | Total | Correctly predicted | Recall (%) |",
        "|---|---:|---:|---:|",
        f"| Survivors | {o.survivors_total} | {o.survivors_predicted_survival} | {format_percent(o.survival_recall)} |",
    ]
    for name, c in report.by_severity.items():
        lines.append(
            f"| Survivors, {name} | {c.survivors_total} | {c.survivors_predicted_survival} | "
            f"{format_percent(c.survival_recall)} |"
        )
    lines.append(
        f"| Deceased | {o.deceased_total} | {o.deceased_predicted_death} | {format_percent(o.mortality_recall)} |"
    )
    lines += [
        "",
        f"Survivors with unknown severity: {report.survivors_unknown_severity}",
        f"Excluded records: {len(report.excluded)}",
    ]
    for rid, why in report.excluded:
        lines.append(f"- `{rid}`: {why}")
    return "\n".join(lines) + "\n"


def render_svg(report: StratifiedEvalReport) -> str:
    bars = [("Survival", report.survival_recall)]
    bars += [(name.capitalize(), c.survival_recall) for name, c in report.by_severity.items()]
    bars.append(("Mortality", report.mortality_recall))
    bar_w, gap, left, top, plot_h = 70, 30, 50, 40, 200
    width = left + len(bars) * (bar_w + gap) + gap
    height = top + plot_h + 60
    base = top + plot_h
    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="12">',
        f'<title>{escape(report.rule)}: recall by group ({escape(report.harmonization_mode.value)})</title>',
        f'<text x="{left}" y="20" font-size="14">{escape(report.rule)} - recall (%), '
        f'harmonization {escape(report.harmonization_mode.value)}</text>',
        f'<line x1="{left}" y1="{base}" x2="{width - gap // 2}" y2="{base}" stroke="#333"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{base}" stroke="#333"/>',
    ]
    for tick in (0, 25, 50, 75, 100):
        y = base - plot_h * tick // 100
        out.append(f'<text x="{left - 6}" y="{y + 4}" text-anchor="end">{tick}</text>')
    for i, (label, value) in enumerate(bars):
        x = left + gap + i * (bar_w + gap)
        cx = x + bar_w // 2
        if value is None:
            out.append(f'<text x="{cx}" y="{base - 6}" text-anchor="middle">NA</text>')
        else:
            h = Decimal(plot_h) * value / 100
            y = Decimal(base) - h
            fill = "#b2182b" if label == "Mortality" else "#2166ac"
            out.append(f'<rect x="{x}" y="{y:.2f}" width="{bar_w}" height="{h:.2f}" fill="{fill}"/>')
            out.append(f'<text x="{cx}" y="{y - 6:.2f}" text-anchor="middle">{format_percent(value)}%</text>')
        out.append(f'<text x="{cx}" y="{base + 18}" text-anchor="middle">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def render_report(report: StratifiedEvalReport, fmt: str) -> bytes:
    """Render ``report`` as ``json``, ``markdown`` or ``svg`` (alias ``svg_bar_chart``)."""
    if fmt == "json":
        text = canonical_json(report_to_dict(report)) + "\n"
    elif fmt in ("markdown", "md"):
        text = render_markdown(report)
    elif fmt in ("svg", "svg_bar_chart"):
        text = render_svg(report)
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    return text.encode("utf-8")
