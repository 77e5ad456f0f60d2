"""Number formatting shared by the printer, CSV writer and reports."""

from __future__ import annotations

import math
import re
from decimal import Decimal

_DECIMAL_RE = re.compile(r"[+-]?(?:\d+(?:\.\d*)?|\.\d+)(?:[eE][+-]?\d+)?\Z")


def percent(numerator: int, denominator: int) -> Decimal | None:
    """``100 * numerator / denominator`` rounded half-up to 2 decimals.

    Uses integer arithmetic only, so the result is exact for any counts.
    Returns ``None`` when the denominator is zero (the metric is undefined).

    >>> str(percent(62, 95)), str(percent(22, 25)), percent(0, 0)
    ('65.26', '88.00', None)
    """
    if numerator < 0 or denominator < 0:
        raise ValueError("counts must be non-negative")
    if denominator == 0:
        return None
    hundredths = (20000 * numerator + denominator) // (2 * denominator)
    return Decimal(hundredths).scaleb(-2)


def format_percent(value: Decimal | None) -> str:
    return "NA" if value is None else f"{value:.2f}"


def format_number(x: float) -> str:
    """Shortest decimal text that parses back to exactly ``x``."""
    if not math.isfinite(x):
        raise ValueError(f"cannot format non-finite number {x!r}")
    text = repr(float(x))
    if text.endswith(".0"):
        text = text[:-2]
    return text


def parse_decimal(text: str) -> float:
    """Parse a plain base-10 numeral; rejects ``nan``, ``inf`` and ``1_000``."""
    text = text.strip()
    if not _DECIMAL_RE.match(text):
        raise ValueError(f"not a decimal number: {text!r}")
    value = float(text)
    if not math.isfinite(value):
        raise ValueError(f"number out of range: {text!r}")
    return value
