"""Single-fault mutations of valid spec documents, each breaking exactly one validity rule."""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources

from .specmd import MANDATORY_SECTIONS

_PROSE_EQUATIONS = ["model: the quantity spreads out evenly over the region"]
_WORDY_TOLERANCE = ["L2_error: small", "metric: L2_error"]


@dataclass(frozen=True)
class Mutant:
    name: str
    expected_rule: str
    text: str


def _split_sections(text: str) -> tuple[list[str], list[tuple[str, list[str]]]]:
    head: list[str] = []
    sections: list[tuple[str, list[str]]] = []
    for line in text.splitlines():
        if line.startswith("## "):
            sections.append((line[3:].strip(), []))
        elif sections:
            sections[-1][1].append(line)
        else:
            head.append(line)
    return head, sections


def _join(head: list[str], sections: list[tuple[str, list[str]]]) -> str:
    lines = list(head)
    for name, body in sections:
        lines.append(f"## {name}")
        lines.extend(body)
    return "\n".join(lines) + "\n"


def drop_section(text: str, section: str) -> str:
    head, secs = _split_sections(text)
    return _join(head, [(n, b) for n, b in secs if n != section])


def empty_section(text: str, section: str) -> str:
    head, secs = _split_sections(text)
    return _join(head, [(n, [] if n == section else b) for n, b in secs])


def replace_section(text: str, section: str, body: list[str]) -> str:
    head, secs = _split_sections(text)
    return _join(head, [(n, list(body) if n == section else b) for n, b in secs])


def mutants_of(name: str, text: str) -> list[Mutant]:
    out = []
    for sec in MANDATORY_SECTIONS:
        out.append(Mutant(f"{name}:drop:{sec}", "V1-sections", drop_section(text, sec)))
    for sec in MANDATORY_SECTIONS:
        out.append(Mutant(f"{name}:empty:{sec}", "V1-sections", empty_section(text, sec)))
    out.append(Mutant(f"{name}:wordy-tolerance", "V2-tolerance", replace_section(text, "Tolerance", _WORDY_TOLERANCE)))
    out.append(Mutant(f"{name}:prose-equations", "V3-equations",
                      replace_section(text, "Equations", _PROSE_EQUATIONS)))
    return out


def fixture_text(name: str) -> str:
    return resources.files("simjudge.data").joinpath("specs", f"{name}.md").read_text(encoding="utf-8")


def standard_mutants(count: int = 20) -> list[Mutant]:
    """``count`` mutants pairing operators and base documents round-robin; every operator appears once in 14."""
    bases = ["heat", "poisson", "wave", "burgers"]
    pools = [mutants_of(b, fixture_text(b)) for b in bases]
    n_ops = len(pools[0])
    return [pools[k % len(bases)][k % n_ops] for k in range(count)]
