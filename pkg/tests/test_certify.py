import json
import math

import pytest

from simjudge.audit import AuditReport, CheckResult
from simjudge.certify import (
    Certificate,
    InconsistentInputs,
    certificate_json,
    compute_seal,
    decide_outcome,
    emit_certificate,
    run_pipeline,
    verify_certificate,
)
from simjudge.corpus import _resonance_spec, all_cases, make_plan
from simjudge.findings import GateFinding
from simjudge.gates import JudgeVerdict, Limits, Plan
from simjudge.probes import ProbeReport

ACCEPT = JudgeVerdict("accept")
REJECT = JudgeVerdict("reject", (GateFinding("G3-wellposedness", ("S3",), "reject", "unstable"),), 0, "S3")
FLAGGED_VERDICT = JudgeVerdict("accept", (GateFinding("G4-classification", (), "flag", "unknown class"),))
AUDIT_FLAG = AuditReport((CheckResult("bounds", "flag", 1.0, 0.0),))
AUDIT_PASS = AuditReport((CheckResult("bounds", "pass", 0.0, 0.0),))
PROBE_FLAG = ProbeReport("lyapunov", True, 0.1, 0.0)


@pytest.mark.parametrize(
    "verdict, audit, probes, B, eps, expected",
    [
        (ACCEPT, None, (), None, None, "certified"),
        (ACCEPT, AUDIT_PASS, (), 1e-3, 1e-3, "certified"),
        (ACCEPT, AUDIT_PASS, (), float.fromhex("0x1.0624dd2f1a9fdp-10"), 1e-3, "flagged"),
        (ACCEPT, AUDIT_PASS, (), math.nan, 1e-3, "flagged"),
        (ACCEPT, AUDIT_FLAG, (), None, None, "flagged"),
        (ACCEPT, None, (PROBE_FLAG,), None, None, "flagged"),
        (FLAGGED_VERDICT, None, (), None, None, "flagged"),
        (REJECT, AUDIT_PASS, (), None, None, "rejected"),
    ],
)
def test_outcome_rules(verdict, audit, probes, B, eps, expected):
    assert decide_outcome(verdict, audit, probes, B, eps) == expected


def test_emit_checks_inputs():
    with pytest.raises(InconsistentInputs):
        emit_certificate(None)
    with pytest.raises(InconsistentInputs):
        emit_certificate(ACCEPT, bound_B=1e-3)


def test_seal_covers_the_payload():
    cert = emit_certificate(REJECT, "spec", "plan")
    assert cert.outcome == "rejected" and cert.payload["rejected_condition"] == "S3"
    assert cert.seal == compute_seal(cert.payload) and len(cert.seal) == 64
    assert verify_certificate(cert)
    assert verify_certificate(cert.to_bytes()) and verify_certificate(cert.to_bytes().decode())
    forged = Certificate({**cert.payload, "outcome": "certified"}, cert.seal)
    assert not verify_certificate(forged)


def test_bytes_must_be_canonical():
    cert = emit_certificate(ACCEPT, bound_B=1e-4, tolerance_eps=1e-3)
    raw = cert.to_bytes()
    assert Certificate.from_bytes(raw) == cert
    pretty = json.dumps(json.loads(raw), indent=1).encode()
    assert not verify_certificate(pretty)  # same JSON value, different bytes
    assert not verify_certificate(b"\xff")
    assert not verify_certificate(b"{}")
    assert certificate_json(cert).encode() == raw


def test_non_finite_bound_round_trips():
    cert = emit_certificate(ACCEPT, bound_B=math.inf, tolerance_eps=1e-3)
    back = Certificate.from_bytes(cert.to_bytes())
    assert back.bound_B == math.inf and back.outcome == "flagged" and verify_certificate(back)


def test_pipeline_with_gates_off_uses_defaults():
    case = next(c for c in all_cases() if c.case_id == "a04")  # diffusivity missing
    plan = Plan.from_dict(case.plan)
    assert run_pipeline(case.spec_text, plan).certificate.outcome == "rejected"
    unchecked = run_pipeline(case.spec_text, plan, gates=False, audit=False, probes=False)
    assert unchecked.certificate.outcome == "certified"
    assert unchecked.run.defaults_used == ["kappa"]


def test_missing_parameter_fails_checked_execution():
    spec = _resonance_spec(3.0).replace("theta: 3.0\n", "")
    plan = Plan.from_dict(make_plan({"time_scheme": "implicit-euler", "dt": 0.1, "h": 0.1}, {"solver": "resonance"}))
    r = run_pipeline(spec, plan)
    assert r.certificate.outcome == "flagged" and "theta" in r.error


def test_execution_failure_never_certifies():
    spec = _resonance_spec(1.0)
    plan = Plan.from_dict(make_plan({"time_scheme": "implicit-euler", "dt": 0.1, "h": 0.1}, {"solver": "resonance"}))
    for audit in (True, False):
        r = run_pipeline(spec, plan, Limits(), gates=False, audit=audit, probes=False)
        assert r.certificate.outcome == "flagged"
        assert "singular" in r.certificate.payload["extra"]["execution_error"]
        assert verify_certificate(r.certificate)
