from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from simjudge.specmd import extract_six_tuple, parse_spec
from simjudge.mutants import fixture_text
from simjudge.templates import get_template
from simjudge.units import (
    DIMENSIONLESS,
    Dimension,
    DimensionError,
    MissingParameter,
    Quantity,
    UnknownUnit,
    check_template,
    combine,
    parse_quantity,
    parse_unit,
    split_number,
    unit_scale,
)


@pytest.mark.parametrize(
    "text, expected",
    [
        ("m^2/s", Dimension.of(L=2, T=-1)),
        ("m²/s", Dimension.of(L=2, T=-1)),
        ("N/m^2", Dimension.of(M=1, L=-1, T=-2)),
        ("Pa", Dimension.of(M=1, L=-1, T=-2)),
        ("1/s", Dimension.of(T=-1)),
        ("s^-1", Dimension.of(T=-1)),
        ("m^(1/2)", Dimension.of(L=Fraction(1, 2))),
        ("mol/(m^3*s)", Dimension.of(N=1, L=-3, T=-1)),
        ("J/(kg*K)", Dimension.of(L=2, T=-2, Theta=-1)),
        ("dimensionless", DIMENSIONLESS),
    ],
)
def test_parse_unit(text, expected):
    assert parse_unit(text) == expected


def test_scales():
    assert unit_scale("km/h") == pytest.approx(1000 / 3600)
    assert unit_scale("mm") == 1e-3
    assert unit_scale("%") == 1e-2
    assert parse_quantity("5 mm").si == pytest.approx(5e-3)


def test_logarithmic_units_stay_marked():
    assert parse_unit("dB").logarithmic
    assert parse_unit("dB") != DIMENSIONLESS
    q = parse_quantity("30.0", comment="dB")
    assert q.dim.logarithmic and q.value == 30.0


def test_unknown_unit():
    with pytest.raises(UnknownUnit):
        parse_unit("HU")


def test_number_splitting():
    assert split_number("1.0e-4 m^2/s") == (1e-4, "m^2/s")
    assert split_number("<= 3 s") == (3.0, "s")
    assert split_number("sin(x)") is None
    with pytest.raises(ValueError):
        parse_quantity("small")


def test_quantity_arithmetic():
    a, b = parse_quantity("1 km"), parse_quantity("500 m")
    assert (a + b).si == 1500.0
    assert (a - b).si == 500.0
    assert b < a
    with pytest.raises(DimensionError):
        a + parse_quantity("1 s")
    assert parse_quantity("1000 m") == a


def test_combine_ops():
    L, T = Dimension.of(L=1), Dimension.of(T=1)
    assert combine(L, T, "div") == Dimension.of(L=1, T=-1)
    assert combine(L, T, "mul") == Dimension.of(L=1, T=1)
    assert combine(L, None, ("pow", Fraction(3, 2))) == Dimension.of(L=Fraction(3, 2))
    with pytest.raises(ValueError):
        combine(L, T, "add")


def test_template_dimension_check():
    spec = extract_six_tuple(parse_spec(fixture_text("heat")))
    assert check_template(spec, get_template("heat")) == []
    wrong = extract_six_tuple(parse_spec(fixture_text("heat").replace("1.0 m^2/s", "1.0 m/s")))
    findings = check_template(wrong, get_template("heat"))
    assert len(findings) == 1 and findings[0].severity == "reject" and findings[0].s_condition == ("S1",)
    missing = extract_six_tuple(parse_spec(fixture_text("heat").replace("kappa: 1.0 m^2/s\n", "")))
    with pytest.raises(MissingParameter):
        check_template(missing, get_template("heat"))


# --- group laws -----------------------------------------------------------------------

EXP = st.fractions(min_value=-4, max_value=4, max_denominator=3)
DIMS = st.builds(lambda *e: Dimension(tuple(e)), *[EXP] * 7)
BASES = ["m", "kg", "s", "A", "K", "mol", "cd"]


@given(DIMS, DIMS, DIMS)
def test_multiplication_is_an_abelian_group(a, b, c):
    assert (a * b) * c == a * (b * c)
    assert a * b == b * a
    assert a * DIMENSIONLESS == a
    assert a / a == DIMENSIONLESS
    assert (a * b) / b == a


@given(DIMS, EXP, EXP)
def test_powers(a, p, q):
    assert (a ** p) ** q == a ** (p * q)
    assert (a ** p) * (a ** q) == a ** (p + q)


@given(st.lists(st.tuples(st.sampled_from(BASES), st.integers(-3, 3).filter(bool)), min_size=1, max_size=5))
def test_parsed_products_match_exponent_arithmetic(factors):
    text = "*".join(f"{b}^{e}" if e > 0 else f"{b}^({e})" for b, e in factors)
    expected = DIMENSIONLESS
    for b, e in factors:
        expected = expected * parse_unit(b) ** e
    assert parse_unit(text) == expected


@given(st.sampled_from(BASES), st.sampled_from(BASES))
def test_quotient_parses_like_division(a, b):
    assert parse_unit(f"{a}/{b}") == parse_unit(a) / parse_unit(b)
    assert parse_unit(f"{a}/({b}*{a})") == parse_unit(b) ** -1


@given(st.floats(-1e6, 1e6, allow_nan=False), st.floats(-1e6, 1e6, allow_nan=False))
def test_same_dimension_addition_commutes(x, y):
    a, b = Quantity(x, Dimension.of(L=1)), Quantity(y, Dimension.of(L=1))
    assert (a + b).si == (b + a).si
