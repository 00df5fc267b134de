"""Parser, validator and six-tuple extraction for Markdown problem spec documents.

A document looks like::

    # Specification: Heat conduction in a rod
    ## Domain
    domain: interval [0, 1]
    ## Equations
    heat: u_t = kappa * u_xx
    kappa: 1.0 m^2/s
    ...

The first line is a fixed header, ``## `` lines open sections and every
other non-blank line is either ``key: value`` or an indented line that
belongs to the entry above it.  ``key: |`` introduces a literal block;
an empty value followed by indented lines is a nested list or mapping.
A trailing ``# ...`` on a value is a comment.
"""

from __future__ import annotations

import hashlib
import re
from dataclasses import dataclass, field
from typing import Iterator

from .units import Quantity, UnknownUnit, parse_quantity, split_number

MANDATORY_SECTIONS = (
    "Domain",
    "Equations",
    "Boundary Conditions",
    "Initial Conditions",
    "Observables",
    "Tolerance",
)
HEADER_PREFIX = "# Specification:"
KEY_PATTERN = re.compile(r"^([A-Za-z_][A-Za-z0-9_]*)[ \t]*:(.*)$")
_LOOSE_KEY = re.compile(r"^([^\s:]+)[ \t]*:")
_COMMENT = re.compile(r"(?:^|\s)#")
_OPERATOR_CHARS = set("=+-*/^()")
_OPERATOR_WORDS = re.compile(
    r"(\\partial|\\nabla|\\int|\\sum|d/dt|[∂∇Δ∫∑]|\b(?:laplacian|grad|div|curl|nabla|integral|sum|exp|log|sin|cos|sqrt|radon)\b)",
    re.IGNORECASE,
)
NONE_MARKERS = {"n/a", "na", "none"}


class ParseError(ValueError):
    def __init__(self, line: int, column: int, expected: str):
        super().__init__(f"line {line}, column {column}: expected {expected}")
        self.line = line
        self.column = column
        self.expected = expected


class ExtractionError(ValueError):
    def __init__(self, section: str, entry: str | None, reason: str = ""):
        where = f"{section}/{entry}" if entry else section
        super().__init__(f"unusable value in {where}" + (f": {reason}" if reason else ""))
        self.section = section
        self.entry = entry


@dataclass(frozen=True)
class Entry:
    key: str
    value: str = ""
    block: tuple[str, ...] = ()
    comment: str | None = None
    line: int = field(default=0, compare=False)

    @property
    def is_literal_block(self) -> bool:
        return self.value == "|"

    @property
    def is_empty(self) -> bool:
        scalar = self.value.strip() not in ("", "|")
        return not scalar and not any(b.strip() for b in self.block)


@dataclass(frozen=True)
class Section:
    name: str
    entries: tuple[Entry, ...] = ()
    line: int = field(default=0, compare=False)

    def keys(self) -> list[str]:
        return [e.key for e in self.entries]


@dataclass(frozen=True)
class SpecDocument:
    title: str
    sections: tuple[Section, ...] = ()
    source_digest: bytes = field(default=b"", compare=False)

    @property
    def digest_hex(self) -> str:
        return self.source_digest.hex()

    @property
    def section_names(self) -> list[str]:
        return [s.name for s in self.sections]

    def section(self, name: str) -> Section | None:
        """First section called ``name``; later duplicates are merged in."""
        found = [s for s in self.sections if s.name == name]
        if not found:
            return None
        if len(found) == 1:
            return found[0]
        entries = tuple(e for s in found for e in s.entries)
        return Section(name, entries, found[0].line)


def _split_comment(text: str) -> tuple[str, str | None]:
    m = _COMMENT.search(text)
    if not m:
        return text.strip(), None
    hash_at = text.index("#", m.start())
    return text[:hash_at].strip(), text[hash_at + 1 :].strip()


def _decode(raw: bytes | str) -> tuple[str, bytes]:
    if isinstance(raw, str):
        return raw, raw.encode("utf-8")
    try:
        return raw.decode("utf-8"), raw
    except UnicodeDecodeError as exc:
        line = raw[: exc.start].count(b"\n") + 1
        col = exc.start - (raw.rfind(b"\n", 0, exc.start) + 1) + 1
        raise ParseError(line, col, "UTF-8 text") from None


def parse_spec(text: bytes | str) -> SpecDocument:
    """Parse a document into sections and entries, raising ParseError on bad syntax."""
    decoded, raw = _decode(text)
    digest = hashlib.sha256(raw).digest()
    if decoded.startswith("﻿"):
        decoded = decoded[1:]
    lines = decoded.splitlines()

    first = lines[0].strip() if lines else ""
    if not first.startswith(HEADER_PREFIX):
        raise ParseError(1, 1, f"'{HEADER_PREFIX} TITLE'")
    title = first[len(HEADER_PREFIX) :].strip()
    if not title:
        raise ParseError(1, len(first) + 1, "TITLE")

    sections: list[Section] = []
    sec_name: str | None = None
    sec_line = 0
    entries: list[Entry] = []
    pending: dict | None = None  # entry under construction

    def close_entry():
        nonlocal pending
        if pending is not None:
            block = pending["block"]
            if block:
                indent = min(len(b) - len(b.lstrip()) for b in block)
                block = [b[indent:] for b in block]
            entries.append(Entry(pending["key"], pending["value"], tuple(block), pending["comment"], pending["line"]))
            pending = None

    def close_section():
        nonlocal entries
        close_entry()
        if sec_name is not None:
            sections.append(Section(sec_name, tuple(entries), sec_line))
        entries = []

    for lineno, raw_line in enumerate(lines[1:], start=2):
        line = raw_line.expandtabs(4).rstrip()
        if not line.strip():
            continue
        indented = line[0].isspace()
        stripped = line.strip()
        if indented and pending is not None:
            pending["block"].append(line)
            continue
        if stripped.startswith("#"):
            if stripped.startswith("## ") and stripped[3:].strip():
                close_section()
                sec_name, sec_line = stripped[3:].strip(), lineno
                continue
            raise ParseError(lineno, len(line) - len(line.lstrip()) + 1, "'## ' SECTION_NAME")
        if indented:
            raise ParseError(lineno, 1, "KEY ':' VALUE (indented line has no owning entry)")
        if sec_name is None:
            raise ParseError(lineno, 1, "'## ' SECTION_NAME")
        m = KEY_PATTERN.match(line)
        if not m:
            if _LOOSE_KEY.match(line):
                raise ParseError(lineno, 1, "KEY matching [a-zA-Z_][a-zA-Z0-9_]*")
            raise ParseError(lineno, len(line) + 1, "':' after KEY")
        close_entry()
        value, comment = _split_comment(m.group(2))
        pending = {"key": m.group(1), "value": value, "comment": comment, "line": lineno, "block": []}
    close_section()
    return SpecDocument(title, tuple(sections), digest)


def serialize_spec(doc: SpecDocument) -> str:
    """Canonical text form; parsing it yields a document equal to ``doc``."""
    out = [f"{HEADER_PREFIX} {doc.title}"]
    for sec in doc.sections:
        out.append("")
        out.append(f"## {sec.name}")
        for e in sec.entries:
            head = f"{e.key}:"
            if e.value:
                head += f" {e.value}"
            if e.comment is not None:
                head += " #" + (f" {e.comment}" if e.comment else "")
            out.append(head)
            out.extend(f"  {b}" for b in e.block)
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    line: int | None = None


@dataclass(frozen=True)
class ValidationReport:
    valid: bool
    violations: tuple[Violation, ...]
    digest: str
    warnings: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "valid": self.valid,
            "violations": [{"rule": v.rule, "message": v.message, "line": v.line} for v in self.violations],
            "digest": self.digest,
            "warnings": list(self.warnings),
        }

    @property
    def rules(self) -> set[str]:
        return {v.rule for v in self.violations}


@dataclass(frozen=True)
class Item:
    """One ``key: value`` (or bare text) unit found in an entry or its block."""

    key: str | None
    value: str
    comment: str | None
    line: int


def iter_items(entry: Entry) -> Iterator[Item]:
    """Flatten an entry into items.

    Scalar values yield one item; block lines yield one item each, with
    ``- `` list markers dropped and deeper-indented lines joined onto the
    previous item as continuations.  A scalar followed by block lines (a
    wrapped value) is joined into a single item.
    """
    if not entry.is_literal_block and entry.value:
        text = " ".join([entry.value] + [b.strip() for b in entry.block])
        yield Item(entry.key, text, entry.comment, entry.line)
        return
    items: list[list] = []
    base = min((len(b) - len(b.lstrip()) for b in entry.block if b.strip()), default=0)
    for offset, raw in enumerate(entry.block, start=1):
        body = raw.strip()
        if not body:
            continue
        indent = len(raw) - len(raw.lstrip())
        if indent > base and items:
            items[-1][1] = f"{items[-1][1]} {body}".strip()
            continue
        if body.startswith("- "):
            body = body[2:].strip()
        m = KEY_PATTERN.match(body)
        if m:
            value, comment = _split_comment(m.group(2))
            items.append([m.group(1), value, comment, entry.line + offset])
        else:
            value, comment = _split_comment(body)
            items.append([None, value, comment, entry.line + offset])
    for key, value, comment, line in items:
        yield Item(key, value, comment, line)


def looks_like_expression(text: str) -> bool:
    """Weak proxy for 'contains mathematics': an operator symbol or named operator."""
    return any(ch in _OPERATOR_CHARS for ch in text) or bool(_OPERATOR_WORDS.search(text))


def _has_number(text: str) -> bool:
    return split_number(text) is not None


def validate_spec(doc: SpecDocument) -> ValidationReport:
    violations: list[Violation] = []
    warnings: list[str] = []

    seen: dict[str, int] = {}
    for sec in doc.sections:
        seen[sec.name] = seen.get(sec.name, 0) + 1
        counts: dict[str, int] = {}
        for e in sec.entries:
            counts[e.key] = counts.get(e.key, 0) + 1
        for key, n in counts.items():
            if n > 1:
                warnings.append(f"duplicate key {key!r} in section {sec.name!r}: last occurrence wins")
    for name, n in seen.items():
        if n > 1:
            warnings.append(f"section {name!r} appears {n} times: entries are merged in order")

    present: dict[str, Section] = {}
    for name in MANDATORY_SECTIONS:
        sec = doc.section(name)
        if sec is None:
            violations.append(Violation("V1-sections", f"missing mandatory section '## {name}'", None))
        elif all(e.is_empty for e in sec.entries):
            violations.append(Violation("V1-sections", f"section '## {name}' has no non-empty entry", sec.line))
        else:
            present[name] = sec

    tol = present.get("Tolerance")
    if tol is not None:
        if not any(_has_number(item.value) for e in tol.entries for item in iter_items(e)):
            violations.append(
                Violation("V2-tolerance", "Tolerance section has no numeric threshold (number with optional unit)", tol.line)
            )
    eqs = present.get("Equations")
    if eqs is not None:
        if not any(looks_like_expression(item.value) for e in eqs.entries for item in iter_items(e)):
            violations.append(
                Violation(
                    "V3-equations",
                    "Equations section has no mathematical expression "
                    "(checked as: an operator among = + - * / ^ ( ) or a named operator)",
                    eqs.line,
                )
            )
    return ValidationReport(not violations, tuple(violations), doc.digest_hex, tuple(warnings))


# ---------------------------------------------------------------- extraction


@dataclass(frozen=True)
class DomainDesc:
    geometry: str = ""
    dimension: int | None = None
    grid: tuple[int, ...] = ()
    extents: dict[str, Quantity] = field(default_factory=dict, hash=False)
    attributes: dict[str, str] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class EquationDesc:
    name: str
    expression: str
    parameters: dict[str, Quantity] = field(default_factory=dict, hash=False)


@dataclass(frozen=True)
class ConditionDesc:
    kind: str
    target: str
    expression: str
    value: float | None = None


@dataclass(frozen=True)
class ObservableDesc:
    name: str
    unit_text: str = ""
    value_range: tuple[float, float] | None = None


@dataclass(frozen=True)
class ToleranceDesc:
    thresholds: dict[str, Quantity] = field(default_factory=dict, hash=False)
    metric: str | None = None
    raw: dict[str, str] = field(default_factory=dict, hash=False, compare=False)

    def primary(self) -> tuple[str, Quantity] | None:
        """The threshold the metric refers to, else the first one declared."""
        if not self.thresholds:
            return None
        if self.metric:
            m = self.metric.lower()
            for name, q in self.thresholds.items():
                if name.lower() == m:
                    return name, q
            for name, q in self.thresholds.items():
                if name.lower().startswith(m):
                    return name, q
        name = next(iter(self.thresholds))
        return name, self.thresholds[name]


@dataclass(frozen=True)
class ProblemSpec:
    title: str
    domain_omega: DomainDesc
    equations: tuple[EquationDesc, ...]
    boundary: tuple[ConditionDesc, ...]
    initial: tuple[ConditionDesc, ...] | None
    observables: tuple[ObservableDesc, ...]
    tolerance: ToleranceDesc
    parameters: dict[str, Quantity] = field(default_factory=dict, hash=False)
    unparsed_parameters: dict[str, str] = field(default_factory=dict, hash=False)
    settings: dict[str, str] = field(default_factory=dict, hash=False)
    raw_parameters: dict[str, str] = field(default_factory=dict, hash=False, compare=False)
    free_settings: dict[str, str] = field(default_factory=dict, hash=False)
    archetype: str | None = None
    document: SpecDocument | None = field(default=None, compare=False, repr=False)

    @property
    def has_initial(self) -> bool:
        return bool(self.initial)

    def setting(self, *names: str, default: str | None = None) -> str | None:
        for n in names:
            if n in self.settings:
                return self.settings[n]
        return default


_GRID = re.compile(r"(\d+)\s*[x×]\s*(\d+)(?:\s*[x×]\s*(\d+))?")
_DIM_WORD = re.compile(r"\b([123])\s*-?\s*D\b")
_QUANTITY_TAIL = re.compile(r"^[^*/^+()=\-\[\],]")


def _as_quantity(value: str, comment: str | None) -> Quantity | None:
    """Quantity for values like '1e-4 m^2/s'; None for text or expressions.

    Raises UnknownUnit when a number is followed by an unrecognised unit.
    """
    parts = split_number(value)
    if parts is None:
        return None
    _, unit = parts
    if unit and (not _QUANTITY_TAIL.match(unit) or "=" in unit):
        return None
    return parse_quantity(value, comment)


def _section_items(doc: SpecDocument, name: str) -> list[tuple[Entry, Item]]:
    sec = doc.section(name)
    if sec is None:
        return []
    return [(e, item) for e in sec.entries for item in iter_items(e)]


def _boundary_kind(target: str, text: str) -> str:
    low = f"{target} {text}".lower()
    for kind in ("periodic", "neumann", "robin", "dirichlet"):
        if kind in low:
            return kind
    if "support" in low or "outside" in low:
        return "support"
    if re.search(r"(>=|<=|≥|≤|>|<)", text) or "non_negativ" in low or "nonnegativ" in low:
        return "inequality"
    return "dirichlet"


_TRAILING_VALUE = re.compile(r"(?:=|^|\s)\s*([+-]?(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)\s*$")


def _condition_value(text: str) -> float | None:
    m = _TRAILING_VALUE.search(text)
    return float(m.group(1)) if m else None


def _condition_from_item(item: Item, default_target: str, kind: str | None = None) -> ConditionDesc:
    if item.key is not None:
        target, expr = item.key, item.value
    elif "=" in item.value and kind == "initial":
        lhs, rhs = item.value.split("=", 1)
        target, expr = lhs.strip(), rhs.strip()
    else:
        target, expr = default_target, item.value
    k = kind or _boundary_kind(target, expr)
    return ConditionDesc(k, target, expr, _condition_value(expr))


def _parse_range(text: str) -> tuple[str, tuple[float, float] | None]:
    m = re.search(r"\[\s*([^,\]]+)\s*,\s*([^\]]+)\s*\]", text)
    if not m:
        return text.strip(), None
    try:
        rng = (float(m.group(1)), float(m.group(2)))
    except ValueError:
        return text.strip(), None
    return (text[: m.start()] + text[m.end() :]).strip(), rng


def extract_six_tuple(doc: SpecDocument, strict: bool = True) -> ProblemSpec:
    """Map the mandatory sections onto (domain, equations, boundary, initial, observables, tolerance).

    With ``strict`` (the default) the document must validate first.  The
    lenient mode is for pipelines that want to run the gates on a broken
    document and let the validity run-gate report it.
    """
    if strict:
        report = validate_spec(doc)
        if not report.valid:
            v = report.violations[0]
            raise ExtractionError(v.rule, None, v.message)

    settings: dict[str, str] = {}
    archetype: str | None = None

    # Domain
    extents: dict[str, Quantity] = {}
    attributes: dict[str, str] = {}
    dimension: int | None = None
    grid: tuple[int, ...] = ()
    geometry = ""
    for _, item in _section_items(doc, "Domain"):
        if item.key is None:
            attributes.setdefault("description", item.value)
            continue
        key, value = item.key, item.value
        if key == "archetype":
            archetype = value.strip()
            continue
        settings[key] = value
        if key == "dimension":
            try:
                dimension = int(float(value))
            except ValueError:
                raise ExtractionError("Domain", key, "dimension must be an integer") from None
            continue
        try:
            q = _as_quantity(value, item.comment)
        except UnknownUnit:
            q = None
        if q is not None and not _GRID.search(value):
            extents[key] = q
        else:
            attributes[key] = value
        if key in ("domain", "geometry") and not geometry:
            geometry = value
        g = _GRID.search(value)
        if g and not grid:
            grid = tuple(int(x) for x in g.groups() if x)
    if dimension is None:
        for text in [geometry, *attributes.values()]:
            m = _DIM_WORD.search(text)
            if m:
                dimension = int(m.group(1))
                break
    if dimension is None and grid:
        dimension = len(grid)
    domain = DomainDesc(geometry, dimension, grid, extents, attributes)

    # Equations: expressions, parameters and free settings
    params: dict[str, Quantity] = {}
    raw_params: dict[str, str] = {}
    unparsed: dict[str, str] = {}
    free: dict[str, str] = {}
    eq_items: list[tuple[str, str]] = []
    for entry, item in _section_items(doc, "Equations"):
        key = item.key
        if key == "archetype":
            archetype = item.value.strip()
            continue
        if key is None:
            eq_items.append((f"{entry.key}_{len(eq_items) + 1}", item.value))
            continue
        settings[key] = item.value
        try:
            q = _as_quantity(item.value, item.comment)
        except UnknownUnit:
            unparsed[key] = item.value
            raw_params[key] = item.value
            continue
        if q is not None:
            params[key] = q
            raw_params[key] = item.value + (f" # {item.comment}" if item.comment and q.unit_text == item.comment.strip() else "")
        elif looks_like_expression(item.value):
            eq_items.append((key, item.value))
        else:
            free[key] = item.value
    equations = []
    for name, expr in eq_items:
        used = {p: q for p, q in params.items() if re.search(rf"(?<![A-Za-z0-9_]){re.escape(p)}(?![A-Za-z0-9_])", expr)}
        equations.append(EquationDesc(name, expr, used))

    # Boundary conditions keep duplicates: contradictions are for the gates to judge
    boundary = []
    for entry, item in _section_items(doc, "Boundary Conditions"):
        if item.key == "archetype":
            archetype = item.value.strip()
            continue
        if item.value.strip().lower() in NONE_MARKERS:
            continue
        boundary.append(_condition_from_item(item, entry.key))

    # Initial conditions
    init_items = [(e, it) for e, it in _section_items(doc, "Initial Conditions") if it.key != "archetype"]
    initial: tuple[ConditionDesc, ...] | None
    if init_items and all(it.value.strip().lower() in NONE_MARKERS for _, it in init_items):
        initial = None
    else:
        initial = tuple(
            _condition_from_item(it, e.key, kind="initial")
            for e, it in init_items
            if it.value.strip().lower() not in NONE_MARKERS
        )

    # Observables
    observables: list[ObservableDesc] = []
    for entry, item in _section_items(doc, "Observables"):
        if item.key is None or (item.key in ("observables", "observable") and not entry.block):
            names = item.value.strip("[] ").split(",") if item.key else [item.value]
            for n in names:
                if n.strip():
                    observables.append(ObservableDesc(n.strip()))
            continue
        unit, rng = _parse_range(item.value)
        observables.append(ObservableDesc(item.key, unit, rng))

    # Tolerance
    thresholds: dict[str, Quantity] = {}
    metric: str | None = None
    raw_tol: dict[str, str] = {}
    for _, item in _section_items(doc, "Tolerance"):
        if item.key is None:
            continue
        if item.key == "metric":
            metric = item.value.strip()
            continue
        try:
            q = _as_quantity(item.value, item.comment)
        except UnknownUnit as exc:
            raise ExtractionError("Tolerance", item.key, str(exc)) from None
        if q is None:
            continue
        if q.value < 0:
            raise ExtractionError("Tolerance", item.key, "negative tolerance")
        thresholds[item.key] = q
        raw_tol[item.key] = item.value + (f" # {item.comment}" if item.comment and q.unit_text == item.comment.strip() else "")
    tolerance = ToleranceDesc(thresholds, metric, raw_tol)

    return ProblemSpec(
        title=doc.title,
        domain_omega=domain,
        equations=tuple(equations),
        boundary=tuple(boundary),
        initial=initial,
        observables=tuple(observables),
        tolerance=tolerance,
        parameters=params,
        unparsed_parameters=unparsed,
        settings=settings,
        raw_parameters=raw_params,
        free_settings=free,
        archetype=archetype,
        document=doc,
    )


def render_spec(spec: ProblemSpec) -> str:
    """Write a ProblemSpec back out as a document in the canonical layout."""
    out = [f"{HEADER_PREFIX} {spec.title or 'Untitled'}", "", "## Domain"]
    d = spec.domain_omega
    wrote = False
    geometry_key = next((k for k in ("domain", "geometry") if d.attributes.get(k) == d.geometry), "domain")
    if d.geometry:
        out.append(f"{geometry_key}: {d.geometry}")
        wrote = True
    if d.dimension is not None:
        out.append(f"dimension: {d.dimension}")
        wrote = True
    for k, q in d.extents.items():
        out.append(f"{k}: {q.value!r} {q.unit_text}".rstrip())
        wrote = True
    for k, v in d.attributes.items():
        if not (k == geometry_key and v == d.geometry):
            out.append(f"{k}: {v}")
            wrote = True
    if not wrote:
        out.append("domain: unspecified")

    out += ["", "## Equations"]
    if spec.archetype:
        out.append(f"archetype: {spec.archetype}")
    for eq in spec.equations:
        out.append(f"{eq.name}: {eq.expression}")
    for name, text in spec.raw_parameters.items():
        out.append(f"{name}: {text}")
    for name, text in spec.free_settings.items():
        out.append(f"{name}: {text}")

    out += ["", "## Boundary Conditions"]
    if spec.boundary:
        out.append("boundary: |")
        out.extend(f"  {c.target}: {c.expression}" for c in spec.boundary)
    else:
        out.append("boundary: none")

    out += ["", "## Initial Conditions"]
    if spec.initial is None or not spec.initial:
        out.append("initial: N/A")
    else:
        out.append("initial: |")
        out.extend(f"  {c.target}: {c.expression}" for c in spec.initial)

    out += ["", "## Observables", "observables:"]
    for o in spec.observables:
        unit = o.unit_text
        if o.value_range is not None:
            unit = f"{unit} [{o.value_range[0]!r}, {o.value_range[1]!r}]".strip()
        out.append(f"  - {o.name}: {unit}" if unit else f"  - {o.name}")
    if not spec.observables:
        out[-1] = "observables: none"

    out += ["", "## Tolerance"]
    for name, q in spec.tolerance.thresholds.items():
        text = spec.tolerance.raw.get(name) or f"{q.value!r} {q.unit_text}".rstrip()
        out.append(f"{name}: {text}")
    if spec.tolerance.metric:
        out.append(f"metric: {spec.tolerance.metric}")
    return "\n".join(out) + "\n"
