"""Dimension algebra over the seven SI base units.

A :class:`Dimension` is an exact vector of rational exponents over
(length, mass, time, current, temperature, amount, luminosity).  Unit
annotations such as ``"m^2/s"`` or ``"kg*m/s^2"`` are parsed by a small
recursive-descent parser into a dimension plus a scale factor to SI; the
scale lives on :class:`Quantity`, never on the dimension itself.

Logarithmic units (``dB``) are dimensionless but carry a flag, so a dB
threshold never compares equal to a plain ratio.
"""

from __future__ import annotations

import functools
import re
from dataclasses import dataclass
from fractions import Fraction
from typing import TYPE_CHECKING, Union

if TYPE_CHECKING:  # pragma: no cover
    from .findings import GateFinding
    from .specmd import ProblemSpec
    from .templates import ArchetypeTemplate

BASE_SYMBOLS = ("L", "M", "T", "I", "Θ", "N", "J")

Rational = Union[int, Fraction]


class UnknownUnit(ValueError):
    """A unit token outside the supported vocabulary."""

    def __init__(self, text: str):
        super().__init__(f"unknown unit: {text!r}")
        self.text = text


class DimensionError(TypeError):
    """Arithmetic or comparison between quantities of unequal dimension."""


class MissingParameter(KeyError):
    """A template-required parameter is absent from the spec."""

    def __init__(self, name: str):
        super().__init__(name)
        self.name = name

    def __str__(self) -> str:
        return f"missing required parameter {self.name!r}"


@dataclass(frozen=True)
class Dimension:
    exponents: tuple[Fraction, ...] = (Fraction(0),) * 7
    logarithmic: bool = False

    def __post_init__(self):
        if len(self.exponents) != 7:
            raise ValueError("a dimension has exactly 7 base exponents")
        object.__setattr__(self, "exponents", tuple(Fraction(e) for e in self.exponents))

    @classmethod
    def of(cls, logarithmic: bool = False, **powers: Rational) -> "Dimension":
        """Build from keyword exponents, e.g. ``Dimension.of(L=2, T=-1)``."""
        names = {"L": 0, "M": 1, "T": 2, "I": 3, "Theta": 4, "N": 5, "J": 6}
        exps = [Fraction(0)] * 7
        for key, val in powers.items():
            exps[names[key]] = Fraction(val)
        return cls(tuple(exps), logarithmic)

    @property
    def dimensionless(self) -> bool:
        return all(e == 0 for e in self.exponents)

    def __mul__(self, other: "Dimension") -> "Dimension":
        exps = tuple(a + b for a, b in zip(self.exponents, other.exponents))
        return Dimension(exps, self.logarithmic or other.logarithmic)

    def __truediv__(self, other: "Dimension") -> "Dimension":
        exps = tuple(a - b for a, b in zip(self.exponents, other.exponents))
        return Dimension(exps, self.logarithmic or other.logarithmic)

    def __pow__(self, power: Rational) -> "Dimension":
        p = Fraction(power)
        return Dimension(tuple(e * p for e in self.exponents), self.logarithmic)

    def __str__(self) -> str:
        parts = []
        for sym, e in zip(BASE_SYMBOLS, self.exponents):
            if e == 0:
                continue
            parts.append(sym if e == 1 else f"{sym}^{e}")
        text = " ".join(parts) or "dimensionless"
        return text + (" (log)" if self.logarithmic else "")


DIMENSIONLESS = Dimension()
_L = Dimension.of(L=1)
_M = Dimension.of(M=1)
_T = Dimension.of(T=1)
_I = Dimension.of(I=1)
_K = Dimension.of(Theta=1)
_N = Dimension.of(N=1)
_J = Dimension.of(J=1)
_PA = _M / _L / _T**2
_ENERGY = _M * _L**2 / _T**2

# token -> (dimension, scale to SI)
VOCABULARY: dict[str, tuple[Dimension, float]] = {
    "m": (_L, 1.0),
    "mm": (_L, 1e-3),
    "cm": (_L, 1e-2),
    "km": (_L, 1e3),
    "um": (_L, 1e-6),
    "s": (_T, 1.0),
    "ms": (_T, 1e-3),
    "min": (_T, 60.0),
    "h": (_T, 3600.0),
    "kg": (_M, 1.0),
    "g": (_M, 1e-3),
    "K": (_K, 1.0),
    "A": (_I, 1.0),
    "mol": (_N, 1.0),
    "cd": (_J, 1.0),
    "Hz": (_T**-1, 1.0),
    "N": (_M * _L / _T**2, 1.0),
    "Pa": (_PA, 1.0),
    "atm": (_PA, 101325.0),
    "J": (_ENERGY, 1.0),
    "W": (_ENERGY / _T, 1.0),
    "dB": (Dimension(logarithmic=True), 1.0),
    "dimensionless": (DIMENSIONLESS, 1.0),
    "1": (DIMENSIONLESS, 1.0),
    "%": (DIMENSIONLESS, 1e-2),
}

_SUPERSCRIPTS = str.maketrans({"²": "^2", "³": "^3", "⁻": "^-", "¹": "1", "·": "*"})
_TOKEN = re.compile(r"\s*(?:(?P<num>\d+(?:\.\d+)?)|(?P<name>[A-Za-z%]+)|(?P<op>[*/^()\-]))")


def _tokenize(text: str) -> list[str]:
    text = text.translate(_SUPERSCRIPTS)
    # superscript minus followed by a superscript digit yields "^-^2"
    text = re.sub(r"\^\-\^?", "^-", text)
    tokens: list[str] = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN.match(text, pos)
        if not m or m.end() == pos:
            raise UnknownUnit(text)
        tokens.append(m.group().strip())
        pos = m.end()
    return tokens


class _UnitParser:
    # grammar: expr := term (('*' | '/' | juxtaposition) term)*
    #          term := factor ('^' exponent)?
    #          factor := NAME | NUMBER | '(' expr ')'

    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.pos = 0

    def peek(self) -> str | None:
        return self.tokens[self.pos] if self.pos < len(self.tokens) else None

    def take(self) -> str:
        tok = self.peek()
        if tok is None:
            raise UnknownUnit(self.text)
        self.pos += 1
        return tok

    def parse(self) -> tuple[Dimension, float]:
        if not self.tokens:
            raise UnknownUnit(self.text)
        result = self.expr()
        if self.peek() is not None:
            raise UnknownUnit(self.text)
        return result

    def expr(self) -> tuple[Dimension, float]:
        dim, scale = self.term()
        while True:
            tok = self.peek()
            if tok == "*":
                self.take()
                d, s = self.term()
                dim, scale = dim * d, scale * s
            elif tok == "/":
                self.take()
                d, s = self.term()
                dim, scale = dim / d, scale / s
            elif tok is not None and tok not in (")", "^"):
                d, s = self.term()
                dim, scale = dim * d, scale * s
            else:
                return dim, scale

    def term(self) -> tuple[Dimension, float]:
        dim, scale = self.factor()
        if self.peek() == "^":
            self.take()
            p = self.exponent()
            dim, scale = dim**p, scale ** float(p)
        return dim, scale

    def exponent(self) -> Fraction:
        tok = self.take()
        if tok == "(":
            num = self.signed_number()
            if self.peek() == "/":
                self.take()
                num = num / self.signed_number()
            if self.take() != ")":
                raise UnknownUnit(self.text)
            return num
        self.pos -= 1
        return self.signed_number()

    def signed_number(self) -> Fraction:
        tok = self.take()
        sign = 1
        if tok == "-":
            sign, tok = -1, self.take()
        try:
            return sign * Fraction(tok)
        except ValueError:
            raise UnknownUnit(self.text) from None

    def factor(self) -> tuple[Dimension, float]:
        tok = self.take()
        if tok == "(":
            inner = self.expr()
            if self.take() != ")":
                raise UnknownUnit(self.text)
            return inner
        if tok in VOCABULARY:
            return VOCABULARY[tok]
        if re.fullmatch(r"\d+(\.\d+)?", tok) and float(tok) == 1.0:
            return DIMENSIONLESS, 1.0
        raise UnknownUnit(tok)


@functools.lru_cache(maxsize=512)
def _parse_with_scale(text: str) -> tuple[Dimension, float]:
    return _UnitParser(text.strip()).parse()


def parse_unit(text: str) -> Dimension:
    """Return the SI dimension of a unit annotation such as ``"m^2/s"``."""
    return _parse_with_scale(text)[0]


def unit_scale(text: str) -> float:
    """Multiplicative factor converting a value in ``text`` units to SI."""
    return _parse_with_scale(text)[1]


def combine(a: Dimension, b: Dimension | None, op: str | tuple[str, Rational]) -> Dimension:
    """Exponent arithmetic: ``op`` is ``"mul"``, ``"div"`` or ``("pow", r)``.

    For powers ``b`` is ignored and may be None.
    """
    if op == "mul":
        return a * b
    if op == "div":
        return a / b
    if isinstance(op, tuple) and op[0] == "pow":
        return a ** op[1]
    raise ValueError(f"unsupported op {op!r}")


@functools.total_ordering
@dataclass(frozen=True)
class Quantity:
    value: float
    dim: Dimension = DIMENSIONLESS
    unit_text: str = ""
    scale: float = 1.0

    @property
    def si(self) -> float:
        return self.value * self.scale

    def _require_same(self, other: "Quantity") -> None:
        if not isinstance(other, Quantity):
            raise DimensionError(f"cannot combine Quantity with {type(other).__name__}")
        if self.dim != other.dim:
            raise DimensionError(f"dimension mismatch: {self.dim} vs {other.dim}")

    def __add__(self, other: "Quantity") -> "Quantity":
        self._require_same(other)
        return Quantity(self.si + other.si, self.dim, "", 1.0)

    def __sub__(self, other: "Quantity") -> "Quantity":
        self._require_same(other)
        return Quantity(self.si - other.si, self.dim, "", 1.0)

    def __lt__(self, other: "Quantity") -> bool:
        self._require_same(other)
        return self.si < other.si

    def __eq__(self, other: object) -> bool:
        if not isinstance(other, Quantity):
            return NotImplemented
        return self.dim == other.dim and self.si == other.si

    def __hash__(self) -> int:
        return hash((self.dim, self.si))

    def __str__(self) -> str:
        return f"{self.value:g} {self.unit_text}".strip()


_NUMBER = re.compile(
    r"^\s*(?P<cmp><=|>=|≤|≥|<|>)?\s*(?P<num>[+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*(?P<unit>.*?)\s*$"
)


def split_number(text: str) -> tuple[float, str] | None:
    """Split ``"1.0e-4 m^2/s"`` into ``(1e-4, "m^2/s")``; None if no leading number."""
    m = _NUMBER.match(text)
    if not m:
        return None
    return float(m.group("num")), m.group("unit")


def parse_quantity(text: str, comment: str | None = None) -> Quantity:
    """Parse ``"<number> [unit]"``.

    A bare number whose trailing comment is itself a recognised unit
    (``30.0  # dB``) takes that unit.  Raises ValueError when there is no
    leading number and UnknownUnit when the unit text is not recognised.
    """
    parts = split_number(text)
    if parts is None:
        raise ValueError(f"not a number: {text!r}")
    value, unit = parts
    if not unit and comment:
        try:
            dim, scale = _parse_with_scale(comment.strip())
            return Quantity(value, dim, comment.strip(), scale)
        except UnknownUnit:
            pass
    if not unit:
        return Quantity(value, DIMENSIONLESS, "", 1.0)
    dim, scale = _parse_with_scale(unit)
    return Quantity(value, dim, unit, scale)


def check_template(spec: "ProblemSpec", template: "ArchetypeTemplate") -> list["GateFinding"]:
    """Compare each template-required parameter's dimension with the spec's.

    Raises MissingParameter for the first required name the spec lacks.
    """
    from .findings import GateFinding

    findings: list[GateFinding] = []
    params = spec.parameters
    for name, required in template.required_params.items():
        expected = parse_unit(required)
        if name not in params:
            if name in spec.unparsed_parameters:
                findings.append(
                    GateFinding(
                        gate="G1-dimensional",
                        s_condition=("S1",),
                        severity="reject",
                        message=f"parameter {name!r} has an unrecognised unit",
                        evidence={"param": name, "expected": str(expected), "actual": spec.unparsed_parameters[name]},
                    )
                )
                continue
            raise MissingParameter(name)
        actual = params[name].dim
        if actual != expected:
            findings.append(
                GateFinding(
                    gate="G1-dimensional",
                    s_condition=("S1",),
                    severity="reject",
                    message=f"parameter {name!r} has dimension {actual}, expected {expected}",
                    evidence={"param": name, "expected": str(expected), "actual": str(actual)},
                )
            )
    return findings
