"""Hash-sealed certificates and the end-to-end pipeline that produces them."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Any, Mapping, Sequence

from .audit import AuditReport, CheckResult
from .canonical import canonical_bytes, canonical_json, sha256_hex, to_jsonable
from .gates import JudgeVerdict, Limits, Plan, judge_pre, plan_budget, target_tolerance
from .opgraph import ErrorBudget
from .probes import ProbeReport

OUTCOMES = ("certified", "flagged", "rejected")
CERT_VERSION = 1


class InconsistentInputs(ValueError):
    pass


@dataclass(frozen=True)
class Certificate:
    """Immutable record; ``payload`` holds every sealed field in JSON form."""

    payload: dict[str, Any] = field(hash=False)
    seal: str

    @property
    def outcome(self) -> str:
        return self.payload["outcome"]

    @property
    def bound_B(self) -> float | None:
        return _number(self.payload.get("bound_B"))

    @property
    def tolerance_eps(self) -> float | None:
        return _number(self.payload.get("tolerance_eps"))

    def to_dict(self) -> dict[str, Any]:
        d = dict(self.payload)
        d["seal"] = self.seal
        return d

    def to_bytes(self) -> bytes:
        return canonical_bytes(self.to_dict())

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "Certificate":
        d = dict(d)
        seal = d.pop("seal")
        return cls(d, seal)

    @classmethod
    def from_bytes(cls, data: bytes) -> "Certificate":
        return cls.from_dict(json.loads(data.decode("utf-8")))


def _number(v) -> float | None:
    if v is None:
        return None
    if isinstance(v, str):
        return {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}[v]
    return float(v)


def compute_seal(payload: Mapping[str, Any]) -> str:
    return sha256_hex(canonical_bytes(payload))


def decide_outcome(
    verdict: JudgeVerdict,
    audit: AuditReport | None,
    probes: Sequence[ProbeReport],
    bound_B: float | None,
    tolerance_eps: float | None,
) -> str:
    if verdict.outcome != "accept":
        return "rejected"
    if verdict.flags:
        return "flagged"
    if audit is not None and audit.overall == "flag":
        return "flagged"
    if any(p.flagged for p in probes):
        return "flagged"
    if bound_B is not None and not bound_B <= tolerance_eps:
        return "flagged"
    return "certified"


def emit_certificate(
    verdict: JudgeVerdict,
    spec_digest: str = "",
    plan_digest: str = "",
    budget: ErrorBudget | None = None,
    audit: AuditReport | None = None,
    probes: Sequence[ProbeReport] = (),
    bound_B: float | None = None,
    tolerance_eps: float | None = None,
    extra: Mapping[str, Any] | None = None,
) -> Certificate:
    if verdict is None:
        raise InconsistentInputs("a verdict is required")
    if bound_B is not None and tolerance_eps is None:
        raise InconsistentInputs("bound_B given without a tolerance to compare it with")
    outcome = decide_outcome(verdict, audit, probes, bound_B, tolerance_eps)
    payload: dict[str, Any] = {
        "version": CERT_VERSION,
        "spec_digest": spec_digest,
        "plan_digest": plan_digest,
        "verdict": verdict.to_dict(),
        "budget": budget.to_dict() if budget is not None else None,
        "audit": audit.to_dict() if audit is not None else None,
        "probes": [p.to_dict() for p in probes],
        "bound_B": bound_B,
        "tolerance_eps": tolerance_eps,
        "outcome": outcome,
    }
    if outcome == "rejected":
        payload["rejected_condition"] = verdict.rejected_condition
    if extra:
        payload["extra"] = dict(extra)
    payload = to_jsonable(payload)
    return Certificate(payload, compute_seal(payload))


def verify_certificate(cert: Certificate | bytes | str) -> bool:
    """True iff the seal matches the canonical serialisation of the payload.

    Raw bytes must additionally be in canonical form, so any edit to the
    serialised certificate (even one JSON would ignore) is detected.
    """
    if isinstance(cert, (bytes, str)):
        raw = cert.encode("utf-8") if isinstance(cert, str) else cert
        try:
            parsed = Certificate.from_bytes(raw)
        except (ValueError, KeyError, UnicodeDecodeError, TypeError):
            return False
        if parsed.to_bytes() != raw:
            return False
        cert = parsed
    try:
        return compute_seal(cert.payload) == cert.seal
    except (TypeError, ValueError):
        return False


# --- pipeline ----------------------------------------------------------------------------


@dataclass
class PipelineResult:
    certificate: Certificate
    verdict: JudgeVerdict
    run: Any = None
    audit: AuditReport | None = None
    probes: list[ProbeReport] = field(default_factory=list)
    error: str | None = None


def run_pipeline(
    spec_text: str | bytes,
    plan: Plan,
    limits: Limits | None = None,
    gates: bool = True,
    audit: bool = True,
    probes: bool = True,
    seed: int = 0,
    amendments: Sequence[Plan] = (),
) -> PipelineResult:
    """Parse, judge, execute, audit, probe and certify.

    Turning ``gates`` off skips the judge and lets the executor fill gaps in
    the spec with defaults, reproducing an unchecked workflow.
    """
    from . import runner
    from .audit import audit_solution, declarations_from_spec
    from .probes import BUILTIN_PROBLEMS, run_probes
    from .specmd import extract_six_tuple, parse_spec

    limits = limits or Limits()
    doc = parse_spec(spec_text)
    spec = extract_six_tuple(doc, strict=False)

    if gates:
        verdict = judge_pre(spec, plan, limits, amendments)
        if verdict.outcome == "accept" and verdict.rounds_used:
            plan = list(amendments)[verdict.rounds_used - 1]
    else:
        verdict = JudgeVerdict("accept", (), 0, None, spec.archetype)
    budget, _, _ = plan_budget(spec, plan, limits)
    eps = target_tolerance(spec, plan, limits)
    common = dict(spec_digest=doc.digest_hex, plan_digest=plan.digest(), budget=budget, tolerance_eps=eps)

    if verdict.outcome != "accept":
        cert = emit_certificate(verdict, **common)
        return PipelineResult(cert, verdict)

    error = None
    run = None
    try:
        run = runner.execute(spec, plan, checked=gates, archetype=verdict.archetype)
    except Exception as exc:  # execution failures are reported, not raised
        error = f"{type(exc).__name__}: {exc}"

    report = None
    if audit:
        if run is None:
            report = AuditReport(
                (CheckResult("execution", "flag", math.inf, 0.0, {"error": error}),), ("execution failed",)
            )
        else:
            declarations = declarations_from_spec(spec)
            report = audit_solution(spec, run.solution, declarations, run.evaluator, eps)

    probe_reports: list[ProbeReport] = []
    if probes and plan.probe:
        info = dict(plan.probe)
        name = info.pop("problem")
        problem = BUILTIN_PROBLEMS[name](**info)
        probe_reports = run_probes(problem, seed=seed)

    bound = report.bound if report is not None else None
    extra = {"execution_error": error} if error else None
    cert = emit_certificate(verdict, audit=report, probes=probe_reports, bound_B=bound, extra=extra, **common)
    if error and cert.outcome == "certified":
        # an execution failure never certifies, even with the audit disabled
        payload = dict(cert.payload)
        payload["outcome"] = "flagged"
        cert = Certificate(payload, compute_seal(payload))
    return PipelineResult(cert, verdict, run, report, probe_reports, error)


def certificate_json(cert: Certificate) -> str:
    return canonical_json(cert.to_dict())
