"""Gate findings shared by the units, gates and certify modules."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

GATE_ORDER = (
    "G1-dimensional",
    "G2-bcic",
    "G3-wellposedness",
    "G4-classification",
    "G5-cost",
    "R1",
    "R2",
    "R3",
    "R4",
)
SEVERITIES = ("reject", "flag", "info")
CONDITIONS = ("S1", "S2", "S3", "S4")


@dataclass(frozen=True)
class GateFinding:
    gate: str
    s_condition: tuple[str, ...]
    severity: str
    message: str
    evidence: dict[str, Any] = field(default_factory=dict, compare=False)

    def __post_init__(self):
        if self.gate not in GATE_ORDER:
            raise ValueError(f"unknown gate {self.gate!r}")
        if self.severity not in SEVERITIES:
            raise ValueError(f"unknown severity {self.severity!r}")
        conds = tuple(sorted(set(self.s_condition), key=CONDITIONS.index))
        object.__setattr__(self, "s_condition", conds)
        if self.severity == "reject" and self.gate.startswith("G") and not conds:
            raise ValueError("a reject finding from a pre-gate must name an S-condition")

    def to_dict(self) -> dict[str, Any]:
        return {
            "gate": self.gate,
            "s_condition": list(self.s_condition),
            "severity": self.severity,
            "message": self.message,
            "evidence": dict(self.evidence),
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "GateFinding":
        return cls(d["gate"], tuple(d["s_condition"]), d["severity"], d["message"], dict(d.get("evidence", {})))
