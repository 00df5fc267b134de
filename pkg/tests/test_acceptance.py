"""Acceptance suite: one group of tests per numbered criterion.

Each group carries a ``criterion`` marker; the conftest summary prints a
PASS/FAIL line per criterion at the end of the run.
"""

import inspect
import math
import random
import time
from fractions import Fraction

import mpmath
import numpy as np
import pytest
import sympy as sp

from simjudge import corpus
from simjudge.audit import check_conservation
from simjudge.certify import run_pipeline, verify_certificate
from simjudge.corpus import (
    DIRICHLET_ENDS,
    GRID_SOLVE,
    ROD,
    SQUARE,
    heat_exact_dirichlet,
    l2_error,
    make_plan,
    spec_text,
)
from simjudge.expressions import compile_expression
from simjudge.gates import CONDITION_LIMIT, STIFFNESS_LIMIT, Limits, Plan, judge_pre
from simjudge.mutants import fixture_text, standard_mutants
from simjudge.opgraph import (
    DagNode,
    Primitive,
    amplification_factors,
    build_graph,
    family_names,
    primitives_for_family,
    select_resolutions,
)
from simjudge.probes import (
    heat_problem,
    pitchfork_problem,
    probe_continuation,
    probe_ensemble,
    resonance_problem,
    run_probes,
)
from simjudge.solvers import SchemeDescriptor, solve_heat_1d, solve_poisson_2d
from simjudge.specmd import extract_six_tuple, parse_spec, validate_spec

HAND_WRITTEN = ["heat", "heat_periodic", "poisson", "wave", "stiff_ode", "burgers", "advection", "pitchfork",
                "resonance", "ct_qc_platform", "ct_qc_copilot"]


# --- 1. spec documents -------------------------------------------------------------------------

c1 = pytest.mark.criterion(1, "spec documents parse and validate; mutants rejected with the right rule")


@c1
def test_ct_reconstruction_document_shape():
    doc = parse_spec(fixture_text("ct_reconstruction"))
    assert doc.title == "CT Reconstruction (LoDoPaB)"
    assert "Primitives Required" in doc.section_names
    assert validate_spec(doc).valid


@c1
def test_generic_template_validates():
    doc = parse_spec(fixture_text("generic_template"))
    assert validate_spec(doc).valid, validate_spec(doc).violations


@c1
@pytest.mark.parametrize("name", HAND_WRITTEN)
def test_hand_written_specs_validate(name):
    report = validate_spec(parse_spec(fixture_text(name)))
    assert report.valid, report.violations


@c1
def test_at_least_ten_hand_written_specs():
    assert len(HAND_WRITTEN) >= 10


@c1
@pytest.mark.parametrize("mutant", standard_mutants(20), ids=lambda m: m.name)
def test_mutant_rejected_with_expected_rule(mutant):
    report = validate_spec(parse_spec(mutant.text))
    assert not report.valid
    assert report.rules == {mutant.expected_rule}


@c1
def test_validation_runtime_under_one_second():
    texts = [fixture_text(n) for n in ["ct_reconstruction", "generic_template", *HAND_WRITTEN]]
    mutants = standard_mutants(20)
    start = time.perf_counter()
    valid = [validate_spec(parse_spec(t)).valid for t in texts]
    rejected = [not validate_spec(parse_spec(m.text)).valid for m in mutants]
    elapsed = time.perf_counter() - start
    assert all(valid) and all(rejected) and len(rejected) == 20
    assert elapsed < 1.0, elapsed


# --- 2. failure funnel -------------------------------------------------------------------------

c2 = pytest.mark.criterion(2, "silent failures decrease strictly as gates, audit and probes are enabled")


@pytest.fixture(scope="module")
def funnel_run():
    start = time.perf_counter()
    results = corpus.funnel()
    return results, time.perf_counter() - start


def _by_id(outcomes):
    return {o.case_id: o for o in outcomes}


@c2
def test_corpus_size():
    faults, clean = corpus.fault_cases(), corpus.clean_cases()
    assert len(faults) >= 30 and len(clean) >= 10
    assert len({c.case_id for c in corpus.all_cases()}) == len(faults) + len(clean)


@c2
def test_unchecked_stage_is_silent_on_every_fault(funnel_run):
    results, _ = funnel_run
    faults = [o for o in results["i"] if o.case_id[0] != "k"]
    assert all(o.silent for o in faults), [o.case_id for o in faults if not o.silent]
    assert corpus.silent_counts(results)["i"] == len(corpus.fault_cases())


@c2
def test_gates_catch_specification_and_wellposedness_faults(funnel_run):
    results, _ = funnel_run
    ab = [o for o in results["ii"] if o.case_id[0] in "ab"]
    missed = [o.case_id for o in ab if o.outcome == "certified"]
    assert not missed


@c2
def test_audit_catches_qualitative_faults_except_boundary_cases(funnel_run):
    results, _ = funnel_run
    stage = _by_id(results["iii"])
    boundary = {"c06", "c07"}
    c_ids = [c.case_id for c in corpus.fault_cases() if c.category == "c"]
    for cid in c_ids:
        if cid in boundary:
            assert stage[cid].silent, cid
        else:
            assert stage[cid].outcome != "certified", cid
            assert any(g.startswith("audit:") for g in stage[cid].caught_by), cid


@c2
def test_probes_catch_boundary_cases(funnel_run):
    results, _ = funnel_run
    stage = _by_id(results["iv"])
    for cid in ("c06", "c07"):
        assert stage[cid].outcome == "flagged"
        assert any(g.startswith("probe:") for g in stage[cid].caught_by)


@c2
def test_silent_counts_strictly_decrease(funnel_run):
    results, _ = funnel_run
    counts = corpus.silent_counts(results)
    assert counts["i"] > counts["ii"] > counts["iii"] > counts["iv"]
    assert counts == {"i": 31, "ii": 7, "iii": 2, "iv": 0}


@c2
def test_clean_cases_certified_and_correct_when_fully_checked(funnel_run):
    results, _ = funnel_run
    clean = [o for o in results["iv"] if o.case_id[0] == "k"]
    assert all(o.outcome == "certified" and o.correct for o in clean), clean


@c2
def test_funnel_runtime(funnel_run):
    _, elapsed = funnel_run
    assert elapsed < 60.0, elapsed


# --- 3. certified bounds -------------------------------------------------------------------------

c3 = pytest.mark.criterion(3, "certified bound dominates the true error; Poisson order near 2")

X, Y = sp.symbols("x y")
POISSON_EXACT = ["sin(pi*x)*sin(pi*y)", "sin(pi*x)*sin(2*pi*y)", "x*(1-x)*y*(1-y)*exp(x)", "exp(x+y)",
                 "cos(x)*sinh(y)+x**2*y"]
HEAT_RUNS = [
    ("sin(pi*x)", 1.0, "implicit-euler", 1e-3, 1 / 32),
    ("sin(pi*x)", 0.5, "implicit-euler", 5e-4, 1 / 64),
    ("sin(pi*x) + 0.5*sin(3*pi*x)", 1.0, "implicit-euler", 2.5e-4, 1 / 64),
    ("x*(1-x)", 1.0, "implicit-euler", 1e-3, 1 / 32),
    ("sin(2*pi*x)**2", 0.2, "implicit-euler", 1e-3, 1 / 32),
    ("sin(pi*x)", 1.0, "ftcs-explicit", 0.4 / 32**2, 1 / 32),
    ("sin(pi*x) + 0.5*sin(3*pi*x)", 1.0, "ftcs-explicit", 0.25 / 32**2, 1 / 32),
    ("x*(1-x)", 1.0, "ftcs-explicit", 0.4 / 64**2, 1 / 64),
    ("sin(2*pi*x)**2", 0.2, "ftcs-explicit", 0.4 / (0.2 * 32**2), 1 / 32),
    ("sin(pi*x)", 0.1, "ftcs-explicit", 0.3 / (0.1 * 16**2), 1 / 16),
]


def _poisson_instance(exact: str, n: int):
    u = sp.sympify(exact)
    f = sp.simplify(-(u.diff(X, 2) + u.diff(Y, 2)))
    text = spec_text("Manufactured Poisson", SQUARE, ["poisson: -laplacian(u) = f", f"forcing: {f}",
                                                      f"bc_expression: {u}"],
                     ["boundary: u = g on the boundary"], ["initial: N/A"],
                     ["u: dimensionless"], ["L2_error: 1e-3", "metric: u"], ["residual: true"])
    plan = make_plan({"time_scheme": "direct-elliptic", "h": 1 / n, "coercivity_constant": 2 * math.pi**2},
                     {"solver": "poisson_2d", "n": n}, dim=2, nodes=GRID_SOLVE)
    result = run_pipeline(text, Plan.from_dict(plan), Limits(1e9))
    g = np.linspace(0.0, 1.0, n + 1)
    gx, gy = np.meshgrid(g, g, indexing="ij")
    exact_values = sp.lambdify((X, Y), u, "numpy")(gx, gy) * np.ones_like(gx)
    return result, l2_error(result.run.solution.array, exact_values, 1 / n**2)


def _heat_instance(ic: str, kappa: float, scheme: str, dt: float, h: float):
    t_end = round(0.1 / dt) * dt
    text = spec_text("Heat", ROD, ["heat: u_t = kappa * u_xx", f"kappa: {kappa} m^2/s"], DIRICHLET_ENDS,
                     [f"u0: {ic}"], ["u: dimensionless"], ["L2_error: 1e-2", "metric: u"], ["residual: true"])
    plan = make_plan({"time_scheme": scheme, "h": h, "dt": dt}, {"solver": "heat_1d", "t_end": t_end})
    result = run_pipeline(text, Plan.from_dict(plan), Limits(1e9))
    final = result.run.solution.final
    xs = np.arange(final.values.size) * h
    exact = heat_exact_dirichlet(compile_expression(ic, ("x",)), kappa, t_end, xs)
    return result, l2_error(final.values, exact, h)


@pytest.fixture(scope="module")
def manufactured_runs():
    start = time.perf_counter()
    runs = [_poisson_instance(e, n) for e in POISSON_EXACT for n in (32, 64)]
    runs += [_heat_instance(*args) for args in HEAT_RUNS]
    return runs, time.perf_counter() - start


@c3
def test_twenty_instances(manufactured_runs):
    runs, _ = manufactured_runs
    assert len(runs) == 20
    assert all(r.error is None for r, _ in runs)


@c3
def test_true_error_within_bound_within_tolerance(manufactured_runs):
    runs, _ = manufactured_runs
    certified = 0
    for result, err in runs:
        cert = result.certificate
        assert cert.bound_B is not None
        assert err <= cert.bound_B  # soundness holds whether or not the run certifies
        if cert.outcome == "certified":
            certified += 1
            assert cert.bound_B <= cert.tolerance_eps
    assert certified >= 10


@c3
def test_poisson_convergence_order():
    exact = lambda gx, gy: np.sin(np.pi * gx) * np.sin(np.pi * gy)  # noqa: E731
    forcing = lambda gx, gy: 2 * np.pi**2 * exact(gx, gy)  # noqa: E731
    sizes = [16, 32, 64, 128]
    errors = []
    for n in sizes:
        sol = solve_poisson_2d(forcing, 0.0, n)
        g = np.linspace(0.0, 1.0, n + 1)
        gx, gy = np.meshgrid(g, g, indexing="ij")
        errors.append(l2_error(sol.array, exact(gx, gy), 1 / n**2))
    order = np.polyfit(np.log([1 / n for n in sizes]), np.log(errors), 1)[0]
    assert 1.9 <= order <= 2.1, order
    assert errors == pytest.approx([1.609e-3, 4.018e-4, 1.004e-4, 2.510e-5], rel=1e-3)


@c3
def test_manufactured_runtime(manufactured_runs):
    _, elapsed = manufactured_runs
    assert elapsed < 120.0, elapsed


# --- 4. resolution selection ---------------------------------------------------------------------

c4 = pytest.mark.criterion(4, "resolution split sums to the target; amplification matches enumeration")

_PRIMS = list(Primitive)


def _random_dag(rng: random.Random, dyadic: bool):
    n = rng.randint(1, 10)
    ids = [f"v{i}" for i in range(n)]
    edges = set()
    for i in range(n - 1):
        # every non-sink node gets at least one later child, so v{n-1} is the unique sink
        edges.add((ids[i], ids[rng.randint(i + 1, n - 1)]))
        for j in range(i + 1, n):
            if rng.random() < 0.25:
                edges.add((ids[i], ids[j]))
    if dyadic:
        lips = [rng.randint(1, 16) / 4 for _ in ids]
    else:
        lips = [rng.uniform(0.2, 5.0) for _ in ids]
    nodes = [DagNode(i, rng.choice(_PRIMS), L, rng.uniform(0.1, 10), rng.choice([1.0, 2.0, 4.0])) for i, L in
             zip(ids, lips)]
    order = list(ids)
    rng.shuffle(order)
    by_id = {nd.id: nd for nd in nodes}
    return build_graph([by_id[i] for i in order], sorted(edges)), dict(zip(ids, lips))


def _enumerated_ell(g, lips) -> dict[str, Fraction]:
    """Exact product of L over every node reachable by some directed path."""
    children: dict[str, list[str]] = {i: [] for i in lips}
    for a, b in g.edges:
        children[a].append(b)
    out = {}
    for start in lips:
        seen, stack = set(), list(children[start])
        while stack:
            v = stack.pop()
            if v not in seen:
                seen.add(v)
                stack.extend(children[v])
        out[start] = math.prod((Fraction(lips[v]) for v in seen), start=Fraction(1))
    return out


@c4
def test_budget_sums_to_target_on_random_dags():
    rng = random.Random(20240607)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(1000):
        g, _ = _random_dag(rng, dyadic=False)
        eps = 10 ** rng.uniform(-10, 0)
        budget = select_resolutions(g, eps)
        total = math.fsum(b.ell * b.eps for b in budget.per_node.values())
        worst = max(worst, abs(total - eps) / math.ulp(eps))
        assert abs(total - eps) <= 8 * math.ulp(eps)
    assert time.perf_counter() - start < 30.0
    assert worst <= 8


@c4
def test_amplification_matches_enumeration_exactly():
    rng = random.Random(7)
    for _ in range(1000):
        g, lips = _random_dag(rng, dyadic=True)
        ell = amplification_factors(g)
        oracle = _enumerated_ell(g, lips)
        assert {k: Fraction(v) for k, v in ell.items()} == oracle


@c4
def test_amplification_matches_enumeration_for_general_floats():
    rng = random.Random(11)
    for _ in range(1000):
        g, lips = _random_dag(rng, dyadic=False)
        ell = amplification_factors(g)
        oracle = _enumerated_ell(g, lips)
        for k, v in ell.items():
            assert abs(Fraction(v) - oracle[k]) <= 16 * Fraction(math.ulp(float(oracle[k])))


# --- 5. stiffness and conditioning -------------------------------------------------------------------

c5 = pytest.mark.criterion(5, "explicit stiff plan rejected at 1e6; Hilbert system flagged at 1e12")


def _stiff_plan(ratio: float, scheme: str = "rk4-explicit") -> Plan:
    return Plan.from_dict(make_plan({"time_scheme": scheme, "dt": 1e-2, "h": 1e-2, "stiffness_ratio": ratio},
                                    {"solver": "stiff_linear", "t_end": 1.0}))


def _stiff_case_spec():
    case = next(c for c in corpus.fault_cases() if c.case_id == "b03")
    return extract_six_tuple(parse_spec(case.spec_text), strict=False)


@c5
def test_stiff_explicit_plan_rejected_with_s3():
    verdict = judge_pre(_stiff_case_spec(), _stiff_plan(1e7))
    assert verdict.outcome == "reject"
    assert verdict.rejected_condition == "S3"
    stiff = [f for f in verdict.rejects if f.evidence.get("rule") == "stiffness"]
    assert len(stiff) == 1
    assert stiff[0].s_condition == ("S3",)
    assert stiff[0].evidence["limit"] == 1e6 == STIFFNESS_LIMIT


@c5
def test_stiffness_threshold_is_exact():
    spec = _stiff_case_spec()
    at = judge_pre(spec, _stiff_plan(1e6))
    above = judge_pre(spec, _stiff_plan(float(np.nextafter(1e6, np.inf))))
    assert at.outcome == "accept"
    assert above.outcome == "reject" and above.rejected_condition == "S3"
    assert judge_pre(spec, _stiff_plan(1e7, "implicit-euler")).outcome == "accept"


def _hilbert_condition(n: int) -> float:
    mpmath.mp.dps = 80
    H = mpmath.matrix(n, n)
    for i in range(n):
        for j in range(n):
            H[i, j] = mpmath.mpf(1) / (i + j + 1)
    s = mpmath.svd_r(H, compute_uv=False)
    values = [s[k] for k in range(n)]
    return float(max(values) / min(values))


def _hilbert_plan(cond: float) -> Plan:
    return Plan.from_dict(make_plan({"time_scheme": "direct-elliptic", "h": 1.0, "coercivity_constant": 1e-18,
                                     "condition_number": cond}, {"solver": "hilbert", "n": 13}, nodes=GRID_SOLVE))


def _hilbert_spec():
    case = next(c for c in corpus.fault_cases() if c.case_id == "b04")
    return extract_six_tuple(parse_spec(case.spec_text), strict=False)


@c5
def test_hilbert_plan_flagged_with_s4():
    cond = _hilbert_condition(13)
    assert cond > 1e17
    verdict = judge_pre(_hilbert_spec(), _hilbert_plan(cond))
    assert verdict.outcome == "accept"
    flags = [f for f in verdict.flags if f.evidence.get("rule") == "conditioning"]
    assert len(flags) == 1
    assert flags[0].s_condition == ("S4",)
    assert flags[0].evidence["limit"] == 1e12 == CONDITION_LIMIT


@c5
def test_conditioning_threshold_is_exact():
    spec = _hilbert_spec()
    at = judge_pre(spec, _hilbert_plan(1e12))
    above = judge_pre(spec, _hilbert_plan(float(np.nextafter(1e12, np.inf))))
    assert not any(f.evidence.get("rule") == "conditioning" for f in at.flags)
    assert any(f.evidence.get("rule") == "conditioning" for f in above.flags)


# --- 6. conservation ---------------------------------------------------------------------------------

c6 = pytest.mark.criterion(6, "periodic FTCS heat conserves mass to 1e-12 over 1000 steps")


@c6
def test_periodic_ftcs_mass_drift():
    h = 1 / 64
    dt = 0.4 * h * h / 0.01
    ic = compile_expression("1 + 0.5*sin(2*pi*x) + 0.25*cos(6*pi*x)", ("x",))
    series = solve_heat_1d(ic, "periodic", 0.01, SchemeDescriptor("ftcs-explicit", h, dt), 1000 * dt)
    assert len(series.frames) == 1001
    masses = np.array([f.values.sum() * h for f in series.frames])
    drift = np.max(np.abs(masses - masses[0])) / abs(masses[0])
    assert drift < 1e-12, drift
    result = check_conservation(series)
    assert not result.flagged and result.measured < 1e-12


@c6
def test_periodic_clean_case_passes_conservation_audit():
    case = next(c for c in corpus.clean_cases() if c.case_id == "k04")
    result = case.run("iv")
    check = next(c for c in result.audit.checks if c.check_id == "conservation")
    assert not check.flagged and check.measured < 1e-12
    assert result.certificate.outcome == "certified"


# --- 7. probes -------------------------------------------------------------------------------------

c7 = pytest.mark.criterion(7, "probes flag boundary problems and leave interior ones alone")


@c7
def test_probe_defaults():
    cont = inspect.signature(probe_continuation).parameters
    ens = inspect.signature(probe_ensemble).parameters
    assert cont["delta_rel"].default == 0.05 and cont["tau"].default == 0.5
    assert ens["n_members"].default == 5
    assert ens["perturb_eps"].default == 1e-3
    assert ens["tau_ens"].default == 0.1


@c7
@pytest.mark.parametrize("problem", [pitchfork_problem(0.1), resonance_problem(1.02)], ids=["pitchfork", "resonance"])
def test_boundary_problems_flagged(problem):
    reports = run_probes(problem)
    assert any(r.flagged for r in reports), [r.to_dict() for r in reports]


@c7
@pytest.mark.parametrize("problem", [pitchfork_problem(-1.0), resonance_problem(2.0), heat_problem()],
                         ids=["pitchfork", "resonance", "heat"])
def test_interior_problems_not_flagged(problem):
    reports = run_probes(problem)
    assert reports and not any(r.flagged for r in reports), [r.to_dict() for r in reports]


# --- 8. reproducibility ------------------------------------------------------------------------------

c8 = pytest.mark.criterion(8, "certificates reproducible and tamper-evident; family table exact")

TABLE = {
    "Finite Difference (FD)": "∂ L E B G",
    "Finite Element (FEM)": "∂ ∫ L B G",
    "Finite Volume (FVM)": "∫ L E B G",
    "Spectral methods": "F L E B",
    "Discontinuous Galerkin (DG)": "∂ ∫ L E B G",
    "Boundary Element (BEM)": "∫ L B G",
    "Smoothed Particle (SPH)": "∂ N E K G",
    "Lattice Boltzmann (LBM)": "E K B G",
    "Density Functional Theory (DFT)": "∂ L N Π B G O",
    "Molecular Dynamics (MD)": "N E S K B",
    "Full Waveform Inversion (FWI)": "∂ L E F O B G",
    "Tensor Networks (DMRG)": "L Π O B",
    "Monte Carlo (MC/MCMC)": "N S B",
    "Configuration Interaction (CI)": "∂ L Π B G",
    "Adaptive Mesh Refinement (AMR)": "∂ L E B G",
    "Isogeometric Analysis (IGA)": "∂ ∫ L B G",
    "Radial Basis Functions (RBF)": "N L B",
    "Peridynamics": "∫ N E K B G",
    "Domain Decomposition (DDM)": "L K B G",
    "Fluid–Structure Interaction (FSI)": "∂ L E N K B G",
    "Computed Tomography (CT recon)": "∫ L O B G",
    "Bayesian Inference (MCMC)": "N S O B",
    "Optimal Control": "∂ L E O B G",
    "Compressed Sensing": "F Π O B",
    "Particle-in-Cell (PIC)": "∂ N E S K G",
}
SYMBOL = {p.symbol: p for p in Primitive}


def _certificate_bytes(case_id: str) -> bytes:
    case = next(c for c in corpus.all_cases() if c.case_id == case_id)
    return case.run("iv", seed=3).certificate.to_bytes()


@c8
@pytest.mark.parametrize("case_id", ["k01", "c06", "b03"])
def test_repeated_runs_byte_identical(case_id):
    assert _certificate_bytes(case_id) == _certificate_bytes(case_id)


@c8
def test_every_single_byte_tamper_detected():
    raw = _certificate_bytes("k01")
    assert verify_certificate(raw)
    rng = random.Random(5)
    for i in range(len(raw)):
        for new in {raw[i] ^ 0x01, rng.randrange(256)} - {raw[i]}:
            tampered = raw[:i] + bytes([new]) + raw[i + 1:]
            assert not verify_certificate(tampered), (i, new)


@c8
def test_family_table():
    assert len(TABLE) == 25
    assert sorted(family_names()) == sorted(TABLE)
    for name, symbols in TABLE.items():
        assert primitives_for_family(name) == frozenset(SYMBOL[s] for s in symbols.split()), name
