"""Archetype templates: the per-problem-class data the pre-gates check against."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources

PDE_CLASSES = ("elliptic", "parabolic", "hyperbolic", "ode", "stiff-ode", "conservation-law", "unknown")
TIME_DEPENDENT = frozenset({"parabolic", "hyperbolic", "ode", "stiff-ode", "conservation-law"})


@dataclass(frozen=True)
class ArchetypeTemplate:
    archetype_id: str
    pde_class: str
    required_params: dict[str, str] = field(default_factory=dict, hash=False)
    positive_params: tuple[str, ...] = ()
    requires_ic: bool = False
    requires_full_boundary: bool = False
    stability_rule: str | None = None
    keywords: tuple[str, ...] = ()

    def __post_init__(self):
        if self.pde_class not in PDE_CLASSES:
            raise ValueError(f"unknown pde class {self.pde_class!r}")


UNKNOWN = ArchetypeTemplate("unknown", "unknown")


def _read_json(name: str) -> dict:
    return json.loads(resources.files("simjudge.data").joinpath(name).read_text(encoding="utf-8"))


@lru_cache(maxsize=1)
def load_templates() -> dict[str, ArchetypeTemplate]:
    """All shipped templates keyed by id, in classification priority order."""
    raw = _read_json("templates.json")
    out: dict[str, ArchetypeTemplate] = {}
    for aid in raw["classification_order"]:
        t = raw["archetypes"][aid]
        out[aid] = ArchetypeTemplate(
            archetype_id=aid,
            pde_class=t["pde_class"],
            required_params=dict(t["params"]),
            positive_params=tuple(t["positive"]),
            requires_ic=t["requires_ic"],
            requires_full_boundary=t["requires_full_boundary"],
            stability_rule=t["stability_rule"],
            keywords=tuple(t["keywords"]),
        )
    return out


def get_template(archetype_id: str) -> ArchetypeTemplate:
    if archetype_id == "unknown":
        return UNKNOWN
    templates = load_templates()
    if archetype_id not in templates:
        raise KeyError(f"no template for archetype {archetype_id!r}")
    return templates[archetype_id]
