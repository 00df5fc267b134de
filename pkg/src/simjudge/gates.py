"""Pre-execution gates, operational run-gates and the accept/redesign/reject verdict.

Gate catalogue (each reject names the condition it protects):

* G1 dimensional: template parameter dimensions and signs (S1)
* G2 boundary/initial conditions: missing IC, missing or contradictory BC,
  non-unique pure-Neumann elliptic problems (S2)
* G3 well-posedness: named stability rules on the plan's scheme evidence
    - ftcs-diffusion: kappa dt / h^2 <= 1 / (2 dim) for explicit schemes (S3)
    - wave/advection CFL: |c| dt / h <= 1 for explicit schemes (S3)
    - conservation CFL: max_speed dt / h <= 1 for explicit schemes (S3)
    - stiffness: explicit schemes rejected when stiffness_ratio > 1e6 (S3)
    - conditioning: flag when condition_number > 1e12 (S4)
    - coercivity: elliptic problems need coercivity_constant > 0 (S2)
    - Lipschitz: every plan node needs a finite L > 0 (S2)
* G4 classification: archetype from an explicit key, keywords, or the
  second-order discriminant; an unknown class is flagged
* G5 cost: estimated work within the budget limit, boundary inclusive (S4)
* R1 spec validity, R2 reproducibility, R3 metric integrity, R4 budget
"""

from __future__ import annotations

import json
import math
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

from .canonical import digest
from .findings import CONDITIONS, GATE_ORDER, GateFinding
from .opgraph import ErrorBudget, OperatorGraph, estimate_cost, graph_from_dict, select_resolutions
from .specmd import ProblemSpec, validate_spec
from .templates import TIME_DEPENDENT, UNKNOWN, ArchetypeTemplate, get_template, load_templates
from .units import MissingParameter, check_template

STIFFNESS_LIMIT = 1e6
CONDITION_LIMIT = 1e12
MAX_ROUNDS = 3

EXPLICIT_SCHEMES = frozenset(
    {
        "explicit",
        "ftcs",
        "ftcs-explicit",
        "rk4",
        "rk4-explicit",
        "forward-euler",
        "explicit-euler",
        "lax-friedrichs",
        "leapfrog",
        "upwind",
        "central-explicit",
    }
)


class MissingPlanField(KeyError):
    def __init__(self, name: str, rule: str = ""):
        super().__init__(name)
        self.name = name
        self.rule = rule

    def __str__(self) -> str:
        return f"plan evidence {self.name!r} required" + (f" by rule {self.rule}" if self.rule else "")


@dataclass(frozen=True)
class Plan:
    """A solver plan: operator graph, scheme evidence and how to execute it."""

    nodes: tuple[dict, ...] = ()
    edges: tuple[tuple[str, str], ...] = ()
    scheme: dict[str, Any] = field(default_factory=dict, hash=False)
    dim: int | None = None
    family: str | None = None
    target_eps: float | None = None
    execute: dict[str, Any] = field(default_factory=dict, hash=False)
    probe: dict[str, Any] | None = field(default=None, hash=False)
    raw: dict[str, Any] = field(default_factory=dict, hash=False, compare=False)

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Plan":
        return cls(
            nodes=tuple(dict(n) for n in d.get("nodes", [])),
            edges=tuple((str(a), str(b)) for a, b in d.get("edges", [])),
            scheme=dict(d.get("scheme", {})),
            dim=d.get("dim"),
            family=d.get("family"),
            target_eps=d.get("target_eps"),
            execute=dict(d.get("execute", {})),
            probe=dict(d["probe"]) if d.get("probe") else None,
            raw=dict(d),
        )

    @classmethod
    def load(cls, path: str | Path) -> "Plan":
        return cls.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"nodes": [dict(n) for n in self.nodes], "edges": [list(e) for e in self.edges]}
        for key in ("dim", "family", "target_eps", "probe"):
            if getattr(self, key) is not None:
                d[key] = getattr(self, key)
        if self.scheme:
            d["scheme"] = dict(self.scheme)
        if self.execute:
            d["execute"] = dict(self.execute)
        return d

    def graph(self) -> OperatorGraph:
        return graph_from_dict({"nodes": list(self.nodes), "edges": list(self.edges), "family": self.family})

    def digest(self) -> str:
        return digest(self.to_dict())

    def amended(self, **changes) -> "Plan":
        d = self.to_dict()
        for k, v in changes.items():
            if isinstance(v, Mapping) and isinstance(d.get(k), Mapping):
                merged = dict(d[k])
                merged.update(v)
                d[k] = merged
            else:
                d[k] = v
        return Plan.from_dict(d)


@dataclass(frozen=True)
class Limits:
    budget_limit: float = math.inf
    target_eps: float | None = None

    @classmethod
    def from_dict(cls, d: Mapping[str, Any] | None) -> "Limits":
        d = d or {}
        return cls(float(d.get("budget_limit", math.inf)), d.get("target_eps"))

    def to_dict(self) -> dict[str, Any]:
        return {"budget_limit": self.budget_limit, "target_eps": self.target_eps}


@dataclass(frozen=True)
class JudgeVerdict:
    outcome: str
    findings: tuple[GateFinding, ...] = ()
    rounds_used: int = 0
    rejected_condition: str | None = None
    archetype: str | None = None

    def __post_init__(self):
        if self.outcome not in ("accept", "redesign", "reject"):
            raise ValueError(f"unknown outcome {self.outcome!r}")
        if not 0 <= self.rounds_used <= MAX_ROUNDS:
            raise ValueError("rounds_used must lie in 0..3")
        if self.outcome == "reject" and self.rejected_condition is None:
            raise ValueError("a reject verdict must name the violated condition")

    @property
    def rejects(self) -> list[GateFinding]:
        return [f for f in self.findings if f.severity == "reject"]

    @property
    def flags(self) -> list[GateFinding]:
        return [f for f in self.findings if f.severity == "flag"]

    def to_dict(self) -> dict[str, Any]:
        return {
            "outcome": self.outcome,
            "findings": [f.to_dict() for f in self.findings],
            "rounds_used": self.rounds_used,
            "rejected_condition": self.rejected_condition,
            "archetype": self.archetype,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "JudgeVerdict":
        return cls(
            d["outcome"],
            tuple(GateFinding.from_dict(f) for f in d.get("findings", [])),
            int(d.get("rounds_used", 0)),
            d.get("rejected_condition"),
            d.get("archetype"),
        )


def _finding(gate: str, conds: Sequence[str], severity: str, message: str, **evidence) -> GateFinding:
    return GateFinding(gate, tuple(conds), severity, message, evidence)


# --- G4 classification -----------------------------------------------------------


def _equation_text(spec: ProblemSpec) -> str:
    parts = [eq.expression for eq in spec.equations]
    doc = spec.document
    if doc is not None:
        sec = doc.section("Equations")
        if sec is not None:
            for e in sec.entries:
                parts.append(e.value)
                parts.extend(e.block)
    return "\n".join(parts)


_COEFF_NAMES = (("coeff_a", "coeff_b", "coeff_c"), ("a", "b", "c"))


def _discriminant(spec: ProblemSpec) -> float | None:
    for names in _COEFF_NAMES:
        vals = []
        for n in names:
            q = spec.parameters.get(n)
            if q is None or not q.dim.dimensionless:
                break
            vals.append(q.si)
        if len(vals) == 3:
            a, b, c = vals
            return b * b - 4 * a * c
    return None


_BY_CLASS = {"elliptic": "poisson", "parabolic": "heat", "hyperbolic": "wave"}


def gate_classification(spec: ProblemSpec) -> tuple[ArchetypeTemplate, list[GateFinding]]:
    gate = "G4-classification"
    if spec.archetype:
        try:
            t = get_template(spec.archetype)
        except KeyError:
            return UNKNOWN, [
                _finding(gate, (), "flag", f"classification fallback: unknown archetype {spec.archetype!r}",
                         requested=spec.archetype)
            ]
        return t, [_finding(gate, (), "info", f"archetype {t.archetype_id} declared", method="explicit")]

    text = _equation_text(spec)
    for t in load_templates().values():
        for pattern in t.keywords:
            if re.search(pattern, text, flags=re.IGNORECASE):
                return t, [_finding(gate, (), "info", f"classified as {t.archetype_id} ({t.pde_class})",
                                    method="keyword", pattern=pattern)]

    disc = _discriminant(spec)
    if disc is not None:
        cls = "elliptic" if disc < 0 else "parabolic" if disc == 0 else "hyperbolic"
        t = get_template(_BY_CLASS[cls])
        return t, [_finding(gate, (), "info", f"discriminant {disc:g}: {cls}", method="discriminant",
                            discriminant=disc, pde_class=cls)]

    return UNKNOWN, [_finding(gate, (), "flag", "classification fallback: archetype unknown", method="fallback")]


# --- G1 dimensional ------------------------------------------------------------------


def gate_dimensional(spec: ProblemSpec, template: ArchetypeTemplate) -> list[GateFinding]:
    findings: list[GateFinding] = []
    remaining = dict(template.required_params)
    # check_template stops at the first missing name; report every missing one
    while True:
        sub = ArchetypeTemplate(template.archetype_id, template.pde_class, remaining)
        try:
            findings.extend(check_template(spec, sub))
            break
        except MissingParameter as exc:
            findings.append(
                _finding("G1-dimensional", ("S1",), "reject", str(exc), param=exc.name,
                         expected=remaining[exc.name])
            )
            remaining.pop(exc.name)
    for name in template.positive_params:
        q = spec.parameters.get(name)
        if q is not None and not q.value > 0:
            findings.append(
                _finding("G1-dimensional", ("S1",), "reject", f"non-physical parameter {name} = {q.value:g}",
                         param=name, value=q.value)
            )
    return findings


# --- G2 boundary and initial conditions -------------------------------------------------


def gate_bc_ic(spec: ProblemSpec, template: ArchetypeTemplate) -> list[GateFinding]:
    gate = "G2-bcic"
    findings: list[GateFinding] = []
    if (template.requires_ic or template.pde_class in TIME_DEPENDENT) and not spec.has_initial:
        findings.append(_finding(gate, ("S2",), "reject", "time-dependent problem has no initial condition"))
    kinds = [b.kind for b in spec.boundary]
    closing = [k for k in kinds if k in ("dirichlet", "neumann", "robin", "periodic")]
    if template.requires_full_boundary and not closing:
        findings.append(_finding(gate, ("S2",), "reject", "no boundary conditions given", conditions=len(kinds)))

    seen: dict[str, float] = {}
    for b in spec.boundary:
        if b.kind != "dirichlet" or b.value is None:
            continue
        key = b.target.strip().lower()
        if key in seen and seen[key] != b.value:
            findings.append(
                _finding(gate, ("S2",), "reject", f"contradictory BC on {b.target!r}: {seen[key]:g} vs {b.value:g}",
                         target=b.target, first=seen[key], second=b.value)
            )
        seen.setdefault(key, b.value)

    if template.pde_class == "elliptic" and closing and all(k == "neumann" for k in closing):
        findings.append(
            _finding(gate, ("S2",), "reject", "pure Neumann elliptic problem: solution unique only up to a constant")
        )
    return findings


# --- G3 well-posedness ---------------------------------------------------------------


def _evidence(scheme: Mapping[str, Any], name: str, rule: str) -> float:
    if name not in scheme or scheme[name] is None:
        raise MissingPlanField(name, rule)
    val = scheme[name]
    if isinstance(val, (list, tuple)):
        return float(min(val))
    return float(val)


def _param_si(spec: ProblemSpec, name: str) -> float | None:
    q = spec.parameters.get(name)
    return q.si if q is not None else None


def _plan_lipschitz_findings(plan: Plan) -> list[GateFinding]:
    out = []
    for node in plan.nodes:
        raw = node.get("L")
        try:
            L = float(raw)
        except (TypeError, ValueError):
            L = math.nan
        if not (math.isfinite(L) and L > 0):
            out.append(
                _finding("G3-wellposedness", ("S2",), "reject", f"node {node.get('id')!r} lacks a finite Lipschitz bound",
                         node=str(node.get("id")), L=str(raw), rule="lipschitz")
            )
    return out


def gate_wellposedness(spec: ProblemSpec, template: ArchetypeTemplate, plan: Plan) -> list[GateFinding]:
    """Apply every rule relevant to the archetype; raises MissingPlanField when evidence is absent."""
    gate = "G3-wellposedness"
    findings: list[GateFinding] = []
    scheme = plan.scheme
    rule = template.stability_rule
    time_dependent = template.pde_class in TIME_DEPENDENT
    if time_dependent and "time_scheme" not in scheme:
        raise MissingPlanField("time_scheme", rule or "")
    ts = str(scheme.get("time_scheme", "")).lower()
    explicit = ts in EXPLICIT_SCHEMES
    dim = int(plan.dim or spec.domain_omega.dimension or 1)

    if rule == "ftcs-diffusion" and explicit:
        dt, h = _evidence(scheme, "dt", rule), _evidence(scheme, "h", rule)
        kappa = _param_si(spec, "kappa")
        if kappa is None:
            kappa = float(scheme["kappa"]) if "kappa" in scheme else None
        if kappa is None:
            raise MissingPlanField("kappa", rule)
        ratio = kappa * dt / h**2
        limit = 1.0 / (2 * dim)
        if ratio > limit:
            findings.append(_finding(gate, ("S3",), "reject", f"explicit diffusion ratio {ratio:.4g} exceeds {limit:.4g}",
                                     rule=rule, ratio=ratio, limit=limit))
        else:
            findings.append(_finding(gate, (), "info", f"diffusion ratio {ratio:.4g} within {limit:.4g}",
                                     rule=rule, ratio=ratio, limit=limit))

    if rule in ("wave-cfl", "advection-cfl", "conservation-cfl") and explicit:
        dt, h = _evidence(scheme, "dt", rule), _evidence(scheme, "h", rule)
        if rule == "conservation-cfl":
            speed = _evidence(scheme, "max_speed", rule)
        else:
            speed = _param_si(spec, "c")
            if speed is None:
                speed = _evidence(scheme, "c", rule)
        number = abs(speed) * dt / h
        if number > 1.0:
            findings.append(_finding(gate, ("S3",), "reject", f"CFL number {number:.4g} exceeds 1", rule=rule,
                                     cfl=number, limit=1.0))
        else:
            findings.append(_finding(gate, (), "info", f"CFL number {number:.4g} within 1", rule=rule, cfl=number))

    if rule == "stiffness" and "stiffness_ratio" not in scheme:
        raise MissingPlanField("stiffness_ratio", rule)
    if "stiffness_ratio" in scheme:
        ratio = float(scheme["stiffness_ratio"])
        if ratio > STIFFNESS_LIMIT and explicit:
            findings.append(_finding(gate, ("S3",), "reject",
                                     f"explicit scheme {ts} on stiffness ratio {ratio:.3g} > {STIFFNESS_LIMIT:.0e}",
                                     rule="stiffness", stiffness_ratio=ratio, limit=STIFFNESS_LIMIT))

    if "condition_number" in scheme:
        cond = float(scheme["condition_number"])
        if cond > CONDITION_LIMIT:
            findings.append(_finding(gate, ("S4",), "flag", f"condition number {cond:.3g} > {CONDITION_LIMIT:.0e}",
                                     rule="conditioning", condition_number=cond, limit=CONDITION_LIMIT))

    if template.pde_class == "elliptic":
        alpha = _evidence(scheme, "coercivity_constant", "coercivity")
        if not alpha > 0:
            findings.append(_finding(gate, ("S2",), "reject", f"coercivity constant {alpha:g} is not positive",
                                     rule="coercivity", coercivity_constant=alpha))

    findings.extend(_plan_lipschitz_findings(plan))
    return findings


# --- G5 cost ------------------------------------------------------------------------------


def gate_cost(budget: ErrorBudget, g: OperatorGraph, dim: int, budget_limit: float) -> list[GateFinding]:
    cost = estimate_cost(budget, g, dim)
    if cost > budget_limit:
        return [_finding("G5-cost", ("S4",), "reject", f"estimated cost {cost:.4g} exceeds limit {budget_limit:.4g}",
                         cost=cost, limit=budget_limit)]
    return [_finding("G5-cost", (), "info", f"estimated cost {cost:.4g} within limit {budget_limit:.4g}",
                     cost=cost, limit=budget_limit)]


def target_tolerance(spec: ProblemSpec, plan: Plan, limits: Limits) -> float | None:
    for candidate in (plan.target_eps, limits.target_eps):
        if candidate is not None:
            return float(candidate)
    primary = spec.tolerance.primary()
    if primary is not None and not primary[1].dim.logarithmic:
        return primary[1].si
    return None


def plan_budget(spec: ProblemSpec, plan: Plan, limits: Limits) -> tuple[ErrorBudget | None, OperatorGraph | None, str]:
    """Budget for the plan, or None with a reason."""
    if not plan.nodes:
        return None, None, "plan has no operator graph"
    try:
        g = plan.graph()
    except ValueError as exc:
        return None, None, f"graph invalid: {exc}"
    eps = target_tolerance(spec, plan, limits)
    if eps is None or not eps > 0:
        return None, g, "no numeric target tolerance"
    return select_resolutions(g, eps), g, ""


def _cost_findings(spec: ProblemSpec, plan: Plan, limits: Limits) -> list[GateFinding]:
    budget, g, reason = plan_budget(spec, plan, limits)
    if budget is None:
        return [_finding("G5-cost", (), "info", f"cost not estimated: {reason}")]
    dim = int(plan.dim or spec.domain_omega.dimension or 1)
    return gate_cost(budget, g, dim, limits.budget_limit)


# --- run-gates -------------------------------------------------------------------------------


def _dry_run_digest(spec: ProblemSpec, plan: Plan, limits: Limits) -> str:
    budget, _, reason = plan_budget(spec, plan, limits)
    payload = {
        "spec": spec.document.digest_hex if spec.document is not None else spec.title,
        "plan": plan.to_dict(),
        "budget": budget.to_dict() if budget else reason,
    }
    return digest(payload)


def run_operational_gates(
    spec: ProblemSpec,
    plan: Plan,
    evidence: Mapping[str, Any] | None = None,
    limits: Limits | None = None,
    cost_findings: Sequence[GateFinding] | None = None,
) -> list[GateFinding]:
    evidence = dict(evidence or {})
    limits = limits or Limits()
    out: list[GateFinding] = []

    # R1 spec validity
    if spec.document is None:
        out.append(_finding("R1", ("S1",), "reject", "no source document to validate"))
    else:
        report = validate_spec(spec.document)
        if report.valid:
            out.append(_finding("R1", (), "info", "spec document valid"))
        else:
            out.append(_finding("R1", ("S1",), "reject", "; ".join(v.message for v in report.violations),
                                rules=sorted(report.rules)))

    # R2 reproducibility
    digests = evidence.get("run_digests")
    if digests is None:
        digests = [_dry_run_digest(spec, plan, limits) for _ in range(2)]
    if len(set(digests)) == 1:
        out.append(_finding("R2", (), "info", "repeated runs agree", digest=digests[0]))
    else:
        out.append(_finding("R2", ("S2",), "reject", "repeated runs disagree", digests=list(digests)))

    # R3 metric integrity
    metric = spec.tolerance.metric
    names = {o.name.lower() for o in spec.observables}
    if metric is None:
        out.append(_finding("R3", (), "info", "no tolerance metric named"))
    elif metric.lower() in names:
        out.append(_finding("R3", (), "info", f"metric {metric} is an observable"))
    else:
        out.append(_finding("R3", ("S3",), "reject", f"tolerance metric {metric!r} is not among the observables",
                            metric=metric, observables=sorted(names)))

    # R4 budget compliance mirrors the cost gate
    cost = list(cost_findings) if cost_findings is not None else _cost_findings(spec, plan, limits)
    if any(f.severity == "reject" for f in cost):
        out.append(_finding("R4", ("S4",), "reject", "budget exceeded", **cost[0].evidence))
    else:
        out.append(_finding("R4", (), "info", "within budget", **(cost[0].evidence if cost else {})))
    return out


# --- verdicts ----------------------------------------------------------------------------------


def run_gates(spec: ProblemSpec, plan: Plan, limits: Limits, evidence: Mapping[str, Any] | None = None
              ) -> tuple[ArchetypeTemplate, list[GateFinding]]:
    """All gates, findings in catalogue order G1..G5, R1..R4."""
    template, g4 = gate_classification(spec)
    g1 = gate_dimensional(spec, template)
    g2 = gate_bc_ic(spec, template)
    try:
        g3 = gate_wellposedness(spec, template, plan)
    except MissingPlanField as exc:
        g3 = [_finding("G3-wellposedness", ("S3",), "reject", str(exc), missing=exc.name, rule=exc.rule)]
        g3.extend(f for f in _plan_lipschitz_findings(plan) if f not in g3)
    g5 = _cost_findings(spec, plan, limits)
    r = run_operational_gates(spec, plan, evidence, limits, g5)
    findings = g1 + g2 + g3 + g4 + g5 + r
    findings.sort(key=lambda f: GATE_ORDER.index(f.gate))
    return template, findings


def first_condition(findings: Iterable[GateFinding]) -> str | None:
    conds = {c for f in findings if f.severity == "reject" for c in f.s_condition}
    return next((c for c in CONDITIONS if c in conds), None)


def judge_round(spec: ProblemSpec, plan: Plan, limits: Limits, round_index: int = 0,
                evidence: Mapping[str, Any] | None = None) -> JudgeVerdict:
    """One caller-driven round: redesign while rounds remain, reject once they are spent."""
    template, findings = run_gates(spec, plan, limits, evidence)
    rounds = min(max(round_index, 0), MAX_ROUNDS)
    if not any(f.severity == "reject" for f in findings):
        return JudgeVerdict("accept", tuple(findings), rounds, None, template.archetype_id)
    cond = first_condition(findings)
    if rounds < MAX_ROUNDS:
        return JudgeVerdict("redesign", tuple(findings), rounds, cond, template.archetype_id)
    return JudgeVerdict("reject", tuple(findings), rounds, cond, template.archetype_id)


def judge_pre(spec: ProblemSpec, plan: Plan, limits: Limits | None = None,
              amendments: Sequence[Plan] = (), evidence: Mapping[str, Any] | None = None) -> JudgeVerdict:
    """Judge a plan, trying up to three amended plans in turn while rejects remain."""
    limits = limits or Limits()
    candidates = [plan, *list(amendments)[:MAX_ROUNDS]]
    for used, candidate in enumerate(candidates):
        template, findings = run_gates(spec, candidate, limits, evidence)
        if not any(f.severity == "reject" for f in findings):
            return JudgeVerdict("accept", tuple(findings), used, None, template.archetype_id)
    return JudgeVerdict("reject", tuple(findings), len(candidates) - 1, first_condition(findings),
                        template.archetype_id)
