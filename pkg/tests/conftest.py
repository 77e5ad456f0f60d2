from __future__ import annotations

from pathlib import Path

import pytest

from ruleval.harmonize import DEFAULT_REGISTRY
from ruleval.rule_dsl import parse_rule

ROOT = Path(__file__).resolve().parents[1]

_acceptance: list[tuple[str, str, float]] = []


@pytest.fixture(scope="session")
def root() -> Path:
    return ROOT


@pytest.fixture(scope="session")
def yan():
    return parse_rule((ROOT / "rules" / "yan2020.rule").read_text(encoding="utf-8"))


@pytest.fixture(scope="session")
def registry():
    return DEFAULT_REGISTRY


def pytest_runtest_logreport(report):
    if report.when == "call" and "test_acceptance.py" in report.nodeid:
        _acceptance.append((report.nodeid.split("::")[-1], report.outcome, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for name, outcome, duration in _acceptance:
        verdict = "PASS" if outcome == "passed" else "FAIL"
        terminalreporter.write_line(f"{verdict}  {name}  ({duration:.2f}s)")
