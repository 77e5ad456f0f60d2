from decimal import ROUND_HALF_UP, Decimal, localcontext

import pytest
from hypothesis import given, strategies as st

from ruleval.numfmt import format_number, format_percent, parse_decimal, percent


def _oracle(num: int, den: int) -> Decimal:
    with localcontext() as ctx:
        ctx.prec = 80
        return (Decimal(100 * num) / Decimal(den)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)


@pytest.mark.parametrize(
    "num, den, text",
    [(62, 95, "65.26"), (22, 25, "88.00"), (21, 23, "91.30"), (31, 42, "73.81"), (10, 30, "33.33"),
     (95, 120, "79.17"), (25, 120, "20.83"), (85, 120, "70.83"), (35, 120, "29.17"), (1, 8, "12.50"),
     (1, 800, "0.13"), (0, 5, "0.00"), (7, 7, "100.00")],
)
def test_percent_values(num, den, text):
    assert format_percent(percent(num, den)) == text


def test_percent_undefined():
    assert percent(0, 0) is None
    assert format_percent(None) == "NA"


@given(st.integers(0, 10**6), st.integers(1, 10**6))
def test_percent_matches_decimal_oracle(num, den):
    assert percent(num, den) == _oracle(num, den)


@given(st.floats(allow_nan=False, allow_infinity=False))
def test_format_number_round_trips(x):
    assert float(format_number(x)) == x
    assert parse_decimal(format_number(x)) == x


@pytest.mark.parametrize("bad", ["nan", "inf", "1_000", "", "1e999", "0x10", "1.2.3"])
def test_parse_decimal_rejects(bad):
    with pytest.raises(ValueError):
        parse_decimal(bad)
