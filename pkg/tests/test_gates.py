import math

import numpy as np
import pytest

from simjudge.corpus import GRID_SOLVE, make_plan
from simjudge.findings import GATE_ORDER, GateFinding
from simjudge.gates import (
    MAX_ROUNDS,
    JudgeVerdict,
    Limits,
    MissingPlanField,
    Plan,
    gate_classification,
    gate_wellposedness,
    judge_pre,
    judge_round,
    plan_budget,
    run_gates,
    run_operational_gates,
    target_tolerance,
)
from simjudge.mutants import drop_section, fixture_text
from simjudge.opgraph import estimate_cost
from simjudge.specmd import extract_six_tuple, parse_spec
from simjudge.templates import get_template

H = 1 / 32


def spec(name, edit=lambda t: t):
    return extract_six_tuple(parse_spec(edit(fixture_text(name))), strict=False)


def heat_plan(scheme="implicit-euler", dt=1e-3, h=H, **extra):
    return Plan.from_dict(make_plan({"time_scheme": scheme, "h": h, "dt": dt, **extra},
                                    {"solver": "heat_1d", "t_end": 0.1}))


def poisson_plan(coercivity=2 * math.pi**2, **extra):
    return Plan.from_dict(make_plan({"time_scheme": "direct-elliptic", "h": H, "coercivity_constant": coercivity,
                                     **extra}, {"solver": "poisson_2d", "n": 32}, dim=2, nodes=GRID_SOLVE))


def problems(verdict, severity="reject"):
    return [(f.gate, f.evidence.get("rule")) for f in verdict.findings if f.severity == severity]


def test_clean_heat_plan_accepted():
    v = judge_pre(spec("heat"), heat_plan())
    assert v.outcome == "accept" and v.archetype == "heat" and v.rounds_used == 0
    assert not v.rejects and not v.flags


def test_findings_follow_catalogue_order():
    _, findings = run_gates(spec("heat"), heat_plan(), Limits())
    idx = [GATE_ORDER.index(f.gate) for f in findings]
    assert idx == sorted(idx)
    assert {"R1", "R2", "R3", "R4"} <= {f.gate for f in findings}


# G1
def test_wrong_parameter_dimension_rejected_s1():
    v = judge_pre(spec("heat", lambda t: t.replace("1.0 m^2/s", "1.0 m/s")), heat_plan())
    assert v.outcome == "reject" and v.rejected_condition == "S1"
    assert problems(v)[0][0] == "G1-dimensional"


def test_negative_diffusivity_rejected():
    v = judge_pre(spec("heat", lambda t: t.replace("1.0 m^2/s", "-1.0 m^2/s")), heat_plan())
    assert v.outcome == "reject"


# G2
def test_missing_initial_condition_rejected_s2():
    v = judge_pre(spec("heat", lambda t: t.replace("u0: sin(pi*x)", "u0: N/A")), heat_plan())
    assert v.rejected_condition == "S2" and problems(v)[0][0] == "G2-bcic"


def test_contradictory_boundary_values_rejected():
    v = judge_pre(spec("heat", lambda t: t.replace("right: u(1, t) = 0", "right: u(1, t) = 0\nleft: u(0, t) = 1")),
                  heat_plan())
    assert v.rejected_condition == "S2"


def test_pure_neumann_elliptic_rejected():
    v = judge_pre(spec("poisson", lambda t: t.replace("boundary: u = 0", "boundary: neumann du/dn = 0")),
                  poisson_plan())
    assert v.rejected_condition == "S2"


# G3
def test_ftcs_ratio_boundary_is_inclusive():
    dt_at = 0.5 * H * H
    assert judge_pre(spec("heat"), heat_plan("ftcs-explicit", dt_at)).outcome == "accept"
    above = judge_pre(spec("heat"), heat_plan("ftcs-explicit", float(np.nextafter(dt_at, 1.0))))
    assert above.outcome == "reject" and above.rejected_condition == "S3"
    assert ("G3-wellposedness", "ftcs-diffusion") in problems(above)


def test_implicit_scheme_ignores_diffusion_ratio():
    assert judge_pre(spec("heat"), heat_plan("implicit-euler", 10 * H * H)).outcome == "accept"


def test_wave_cfl():
    wave = spec("wave")
    ok = Plan.from_dict(make_plan({"time_scheme": "leapfrog", "h": 0.01, "dt": 0.01}, {}))
    bad = Plan.from_dict(make_plan({"time_scheme": "leapfrog", "h": 0.01, "dt": 0.012}, {}))
    assert judge_pre(wave, ok).outcome == "accept"
    v = judge_pre(wave, bad)
    assert v.rejected_condition == "S3"
    finding = next(f for f in v.rejects if f.gate == "G3-wellposedness")
    assert finding.evidence["cfl"] == pytest.approx(1.2)


def test_missing_scheme_evidence():
    with pytest.raises(MissingPlanField) as info:
        gate_wellposedness(spec("heat"), get_template("heat"), Plan.from_dict(make_plan({"h": H, "dt": 1e-3}, {})))
    assert info.value.name == "time_scheme"
    v = judge_pre(spec("heat"), Plan.from_dict(make_plan({"h": H, "dt": 1e-3}, {})))
    assert v.outcome == "reject" and v.rejected_condition == "S3"


def test_non_positive_coercivity_rejected_s2():
    v = judge_pre(spec("poisson"), poisson_plan(coercivity=-5.0))
    assert v.rejected_condition == "S2"
    assert ("G3-wellposedness", "coercivity") in problems(v)


def test_infinite_lipschitz_rejected_s2():
    plan = make_plan({"time_scheme": "implicit-euler", "h": H, "dt": 1e-3}, {},
                     nodes=[{"id": "a", "primitive": "evaluate", "L": 1.0},
                            {"id": "b", "primitive": "differentiate", "L": "inf"}])
    v = judge_pre(spec("heat"), Plan.from_dict(plan))
    assert v.rejected_condition == "S2"
    assert ("G3-wellposedness", "lipschitz") in problems(v)


def test_condition_flag_does_not_reject():
    v = judge_pre(spec("poisson"), poisson_plan(condition_number=1e13))
    assert v.outcome == "accept"
    assert problems(v, "flag") == [("G3-wellposedness", "conditioning")]


# G4
def test_classification_sources():
    assert gate_classification(spec("heat"))[0].archetype_id == "heat"
    assert gate_classification(spec("wave"))[0].archetype_id == "wave"
    assert gate_classification(spec("poisson"))[0].archetype_id == "poisson"
    explicit = spec("heat", lambda t: t.replace("## Equations\n", "## Equations\narchetype: poisson\n"))
    assert gate_classification(explicit)[0].archetype_id == "poisson"


def test_unknown_class_is_flagged():
    template, findings = gate_classification(spec("generic_template"))
    assert template.archetype_id == "unknown"
    assert [f.severity for f in findings if f.gate == "G4-classification"] == ["flag"]


def test_discriminant_classification():
    text = fixture_text("generic_template").replace(
        "equation: L(u) = f", "equation: a*u_xx + b*u_xy + c*u_yy = f\ncoeff_a: 1\ncoeff_b: 0\ncoeff_c: 1")
    template, _ = gate_classification(extract_six_tuple(parse_spec(text), strict=False))
    assert template.pde_class == "elliptic"
    hyperbolic = text.replace("coeff_c: 1", "coeff_c: -1")
    template, _ = gate_classification(extract_six_tuple(parse_spec(hyperbolic), strict=False))
    assert template.pde_class == "hyperbolic"


# G5 / R4
def test_cost_limit_is_inclusive():
    plan = poisson_plan()
    budget, graph, _ = plan_budget(spec("poisson"), plan, Limits())
    cost = estimate_cost(budget, graph, 2)
    assert judge_pre(spec("poisson"), plan, Limits(cost)).outcome == "accept"
    v = judge_pre(spec("poisson"), plan, Limits(float(np.nextafter(cost, 0.0))))
    assert v.rejected_condition == "S4"
    assert {g for g, _ in problems(v)} == {"G5-cost", "R4"}


def test_target_tolerance_precedence():
    s = spec("heat")
    assert target_tolerance(s, heat_plan(), Limits()) == 1e-3
    assert target_tolerance(s, heat_plan(), Limits(target_eps=1e-4)) == 1e-4
    assert target_tolerance(s, heat_plan().amended(target_eps=1e-2), Limits(target_eps=1e-4)) == 1e-2
    assert target_tolerance(spec("ct_reconstruction"), heat_plan(), Limits()) is None  # a logarithmic threshold is no error target


# R gates
def test_invalid_document_rejected_by_r1():
    s = spec("heat", lambda t: drop_section(t, "Observables"))
    v = judge_pre(s, heat_plan())
    assert ("R1", None) in problems(v)
    assert v.rejected_condition == "S1"


def test_reproducibility_gate():
    s = spec("heat")
    same = run_operational_gates(s, heat_plan(), {"run_digests": ["x", "x"]})
    differ = run_operational_gates(s, heat_plan(), {"run_digests": ["x", "y"]})
    assert next(f for f in same if f.gate == "R2").severity == "info"
    r2 = next(f for f in differ if f.gate == "R2")
    assert r2.severity == "reject" and r2.s_condition == ("S2",)


def test_metric_must_be_an_observable():
    v = judge_pre(spec("heat", lambda t: t.replace("metric: L2_error", "metric: PSNR")), heat_plan())
    assert problems(v) == [("R3", None)]
    assert v.rejected_condition == "S3"


# verdict semantics
def test_amendment_rounds():
    bad = heat_plan("ftcs-explicit", H * H)
    good = heat_plan("implicit-euler", H * H)
    v = judge_pre(spec("heat"), bad, amendments=[bad, good])
    assert v.outcome == "accept" and v.rounds_used == 2
    v = judge_pre(spec("heat"), bad, amendments=[bad] * 3 + [good])
    assert v.outcome == "reject" and v.rounds_used == MAX_ROUNDS


def test_judge_round_redesigns_until_rounds_spent():
    bad = heat_plan("ftcs-explicit", H * H)
    assert [judge_round(spec("heat"), bad, Limits(), k).outcome for k in range(4)] == ["redesign"] * 3 + ["reject"]


def test_verdict_invariants():
    with pytest.raises(ValueError):
        JudgeVerdict("maybe")
    with pytest.raises(ValueError):
        JudgeVerdict("reject")
    with pytest.raises(ValueError):
        JudgeVerdict("accept", rounds_used=4)
    v = judge_pre(spec("heat"), heat_plan("ftcs-explicit", H * H))
    assert JudgeVerdict.from_dict(v.to_dict()) == v


def test_finding_invariants():
    with pytest.raises(ValueError):
        GateFinding("G9", (), "info", "")
    with pytest.raises(ValueError):
        GateFinding("G1-dimensional", (), "reject", "no condition")
    f = GateFinding("R3", ("S3", "S1", "S3"), "reject", "m")
    assert f.s_condition == ("S1", "S3")


def test_plan_round_trip_and_digest():
    p = heat_plan()
    assert Plan.from_dict(p.to_dict()) == p
    assert Plan.from_dict(p.to_dict()).digest() == p.digest()
    assert p.amended(scheme={"dt": 2e-3}).scheme["dt"] == 2e-3
    assert p.amended(scheme={"dt": 2e-3}).digest() != p.digest()


def test_judge_is_deterministic():
    a = judge_pre(spec("heat"), heat_plan("ftcs-explicit", H * H))
    b = judge_pre(spec("heat"), heat_plan("ftcs-explicit", H * H))
    assert a.to_dict() == b.to_dict()
