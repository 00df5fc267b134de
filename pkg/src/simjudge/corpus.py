"""Fault-injection corpus and the staged failure funnel.

Each :class:`Case` pairs a spec document with a plan and a truth oracle that
decides, independently of the pipeline, whether the delivered solution is
actually right.  A *silent failure* is a case whose certificate says
``certified`` while the oracle says the output is wrong.

:func:`funnel` runs every case through four cumulative stages:

1. unchecked execution (no gates, audit or probes)
2. pre-execution gates
3. gates plus post-run audit
4. gates, audit and stability probes
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np
import scipy.fft
import scipy.optimize

from .certify import PipelineResult, run_pipeline
from .gates import Limits, Plan

Truth = Callable[[PipelineResult], bool]

STAGES: dict[str, dict[str, bool]] = {
    "i": {"gates": False, "audit": False, "probes": False},
    "ii": {"gates": True, "audit": False, "probes": False},
    "iii": {"gates": True, "audit": True, "probes": False},
    "iv": {"gates": True, "audit": True, "probes": True},
}
DEFAULT_LIMIT = 1e9


@dataclass(frozen=True)
class Case:
    case_id: str
    category: str  # "a" specification, "b" well-posedness, "c" qualitative, "clean"
    description: str
    spec_text: str
    plan: dict[str, Any]
    truth: Truth = field(compare=False)
    target: str = ""
    budget_limit: float = DEFAULT_LIMIT

    @property
    def is_fault(self) -> bool:
        return self.category != "clean"

    def run(self, stage: str = "iv", seed: int = 0) -> PipelineResult:
        return run_pipeline(self.spec_text, Plan.from_dict(self.plan), Limits(self.budget_limit), seed=seed,
                            **STAGES[stage])


@dataclass(frozen=True)
class CaseOutcome:
    case_id: str
    stage: str
    outcome: str
    correct: bool | None
    caught_by: tuple[str, ...]

    @property
    def silent(self) -> bool:
        return self.outcome == "certified" and self.correct is False


# --- spec text builder ---------------------------------------------------------------------


def spec_text(
    title: str,
    domain: Sequence[str] | None,
    equations: Sequence[str],
    boundary: Sequence[str],
    initial: Sequence[str],
    observables: Sequence[str],
    tolerance: Sequence[str],
    invariants: Sequence[str] = (),
) -> str:
    parts = [f"# Specification: {title}"]
    blocks = [("Domain", domain), ("Equations", equations), ("Boundary Conditions", boundary),
              ("Initial Conditions", initial), ("Observables", observables), ("Tolerance", tolerance)]
    if invariants:
        blocks.append(("Invariants", invariants))
    for name, lines in blocks:
        if lines is None:  # section omitted entirely
            continue
        parts.append(f"## {name}")
        parts.extend(lines)
        parts.append("")
    return "\n".join(parts)


ROD = ["domain: interval [0, 1]", "dimension: 1"]
RING = ["domain: periodic interval [0, 1)", "dimension: 1"]
SQUARE = ["domain: unit square [0, 1] x [0, 1]", "dimension: 2"]
CLOCK = ["domain: time interval [0, 1]", "dimension: 1"]
DIRICHLET_ENDS = ["left: u(0, t) = 0", "right: u(1, t) = 0"]
L2 = (["L2_error: dimensionless"], ["L2_error: 1e-3", "metric: L2_error"])
HEAT_INV = ['bounds: {"lower": 0.0}', 'monotonicity: {"functional": "max", "direction": "non-increasing"}']


def _heat_spec(kappa: str | None = "kappa: 1.0 m^2/s", initial=("u0: sin(pi*x)",), boundary=DIRICHLET_ENDS,
               invariants=(*HEAT_INV, "residual: true"), equation="heat: u_t = kappa * u_xx",
               title="Heat conduction in a rod", domain=ROD, observables=L2[0], tolerance=L2[1]) -> str:
    eqs = [equation] + ([kappa] if kappa else [])
    return spec_text(title, domain, eqs, list(boundary), list(initial), observables, tolerance, invariants)


def _poisson_spec(forcing="forcing: 2*pi^2*sin(pi*x)*sin(pi*y)", boundary=("boundary: u = 0",), extra=(),
                  invariants=('symmetry: {"axis": 0}', "residual: true"), archetype=None) -> str:
    eqs = (["archetype: " + archetype] if archetype else []) + ["poisson: -laplacian(u) = f", forcing, *extra]
    return spec_text("Poisson problem on the unit square", SQUARE, eqs, list(boundary), ["initial: N/A"],
                     *L2, invariants)


def _wave_spec(c: str | None = "c: 1.0 m/s", title="Vibrating string", domain=ROD, boundary=DIRICHLET_ENDS,
               initial=("u0: sin(pi*x)",)) -> str:
    eqs = ["wave: u_tt = c^2 * u_xx"] + ([c] if c else [])
    return spec_text(title, domain, eqs, list(boundary), list(initial), *L2)


def _stiff_spec(fast: str = "-1e7") -> str:
    return spec_text(
        "Stiff linear relaxation", CLOCK,
        ["system: stiff linear ODE x' = diag(lambda_fast, lambda_slow) x", f"lambda_fast: {fast} 1/s",
         "lambda_slow: -1.0 1/s"],
        ["boundary: N/A"], ["x0: [1.0, 1.0]"], ["slow_component: dimensionless"],
        ["relative_error: 1e-2", "metric: slow_component"],
    )


def _burgers_spec(invariants=('conservation: {"threshold": 1e-12}', "entropy: true")) -> str:
    return spec_text(
        "Inviscid Burgers shock formation", RING, ["burgers: u_t + (u^2/2)_x = 0"], ["ends: periodic"],
        ["u0: 0.5 + 0.5*sin(2*pi*x)"], ["u_final: dimensionless"], ["L1_error: 5e-2", "metric: u_final"],
        invariants,
    )


def _pitchfork_spec(theta: float) -> str:
    return spec_text(
        "Pitchfork normal form", ["domain: time interval [0, 200]", "dimension: 1"],
        ["model: x' = theta*x - x^3", f"theta: {theta}", "x0_uncertainty: 1e-3"],
        ["boundary: N/A"], ["x0: 0.0"], ["x_final: dimensionless"], ["abs_error: 1e-6", "metric: x_final"],
    )


def _resonance_spec(theta: float) -> str:
    return spec_text(
        "Damped responder", ["domain: time interval [0, 50]", "dimension: 1"],
        ["model: y' = 1 - (theta - 1)*y", f"theta: {theta}", "theta_uncertainty: 1e-4"],
        ["boundary: N/A"], ["y0: 0.0"], ["y_steady: dimensionless"], ["rel_error: 1e-3", "metric: y_steady"],
    )


# --- plans ------------------------------------------------------------------------------------------

GRID_STEP = [
    {"id": "grid", "primitive": "discretize", "L": 1.0, "C": 1.0, "q": 2.0, "cost": {"a": 1.0, "w": 1.0}},
    {"id": "step", "primitive": "evolve", "L": 1.0, "C": 1.0, "q": 1.0, "cost": {"a": 1.0, "w": 1.0}},
]
GRID_SOLVE = [
    {"id": "grid", "primitive": "discretize", "L": 1.0, "C": 0.1, "q": 2.0, "cost": {"a": 1.0, "w": 1.0}},
    {"id": "solve", "primitive": "solve_linear", "L": 1.0, "C": 0.1, "q": 2.0, "cost": {"a": 1.0, "w": 1.0}},
]


def make_plan(scheme: dict, execute: dict, dim: int = 1, target_eps: float | None = None,
              nodes: Sequence[dict] = GRID_STEP, probe: dict | None = None) -> dict[str, Any]:
    ids = [n["id"] for n in nodes]
    plan: dict[str, Any] = {"nodes": [dict(n) for n in nodes], "edges": [[a, b] for a, b in zip(ids, ids[1:])],
                            "dim": dim, "scheme": dict(scheme), "execute": dict(execute)}
    if target_eps is not None:
        plan["target_eps"] = target_eps
    if probe is not None:
        plan["probe"] = dict(probe)
    return plan


def _heat_plan(scheme: str, h: float, dt: float, t_end: float, target_eps=None, **ex) -> dict:
    return make_plan({"time_scheme": scheme, "h": h, "dt": dt}, {"solver": "heat_1d", "t_end": t_end, **ex},
                     target_eps=target_eps)


def _poisson_plan(n, coercivity: float = 2 * math.pi**2, target_eps=None, **ex) -> dict:
    h = 1.0 / n if isinstance(n, int) else 0.05
    return make_plan({"time_scheme": "direct-elliptic", "h": h, "coercivity_constant": coercivity},
                     {"solver": "poisson_2d", "n": n, **ex}, dim=2, target_eps=target_eps, nodes=GRID_SOLVE)


def _ftcs_dt(r: float, h: float, kappa: float = 1.0) -> float:
    return r * h * h / kappa


# --- independent oracles ------------------------------------------------------------------------------


def l2_error(values: np.ndarray, exact: np.ndarray, h: float) -> float:
    d = np.asarray(values, dtype=float) - np.asarray(exact, dtype=float)
    if not np.all(np.isfinite(d)):
        return math.inf
    return math.sqrt(h * float(np.sum(d * d)))


def heat_exact_dirichlet(ic: Callable, kappa: float, t: float, x: np.ndarray, modes: int = 2048) -> np.ndarray:
    """Sine-series solution of u_t = kappa u_xx on [0, 1] with zero ends."""
    m = 4 * modes
    xs = np.arange(1, m) / m
    # DST-I of the interior samples gives the sine coefficients
    b = scipy.fft.dst(np.asarray(ic(xs), dtype=float), type=1) / m
    k = np.arange(1, m)[:modes]
    coeff = b[:modes] * np.exp(-kappa * (k * math.pi) ** 2 * t)
    return np.sin(np.outer(x, k) * math.pi) @ coeff


def heat_exact_periodic(ic: Callable, kappa: float, t: float, x: np.ndarray, m: int = 4096) -> np.ndarray:
    xs = np.arange(m) / m
    c = np.fft.rfft(np.asarray(ic(xs), dtype=float)) / m
    k = np.arange(c.size)
    c = c * np.exp(-kappa * (2 * math.pi * k) ** 2 * t)
    phase = np.exp(2j * math.pi * np.outer(x, k))
    weights = np.where(k == 0, 1.0, 2.0)
    if m % 2 == 0:
        weights[-1] = 1.0
    return np.real(phase @ (c * weights))


def burgers_exact(x: np.ndarray, t: float, mean: float = 0.5, amp: float = 0.5) -> np.ndarray:
    """Entropy solution for u0 = mean + amp sin(2 pi x) on the unit circle.

    In the frame moving with ``mean`` the profile is odd about 1/2 and the
    shock, once formed, sits there; each point takes the characteristic from
    its own side that has not yet reached the shock.
    """
    xi_star = 0.5
    if 2 * math.pi * amp * t > 1:
        xi_star = math.acos(-1.0 / (2 * math.pi * amp * t)) / (2 * math.pi)
    out = np.empty_like(np.asarray(x, dtype=float))
    for i, xv in enumerate(np.asarray(x, dtype=float)):
        s = (xv - mean * t) % 1.0
        flip = s > 0.5
        y = 1.0 - s if flip else s
        if y == 0.0:
            out[i] = mean
            continue
        if y == 0.5:
            out[i] = mean  # shock position or the matching characteristic, both give the mean
            continue
        g = lambda xi: xi + amp * math.sin(2 * math.pi * xi) * t - y  # noqa: E731
        xi = scipy.optimize.brentq(g, 0.0, xi_star, xtol=1e-14) if g(xi_star) >= 0 else xi_star
        v = amp * math.sin(2 * math.pi * xi)
        out[i] = mean + (-v if flip else v)
    return out


def _final(result: PipelineResult):
    if result.run is None:
        return None
    sol = result.run.solution
    return sol.final if hasattr(sol, "final") else sol


def _accurate(exact_fn: Callable[[np.ndarray], np.ndarray], eps: float, norm: str = "l2") -> Truth:
    """Truth oracle: the final field is within ``eps`` of ``exact_fn`` on its own nodes."""

    def truth(result: PipelineResult) -> bool:
        f = _final(result)
        if f is None:
            return False
        a = f.array
        if a.ndim == 1:
            h = f.spacing[0]
            x = np.arange(a.size) * h
            exact = exact_fn(x)
        else:
            n = a.shape[0] - 1
            g = np.linspace(0.0, 1.0, n + 1)
            X, Y = np.meshgrid(g, g, indexing="ij")
            exact = exact_fn(X, Y)
            h = f.spacing[0] * f.spacing[1]
        if not np.all(np.isfinite(a)):
            return False
        if norm == "l1":
            return float(np.sum(np.abs(a - exact)) * f.spacing[0]) <= eps
        return l2_error(a, exact, h) <= eps

    return truth


def _always_wrong(reason: str) -> Truth:
    """Oracle for problems with no well-defined answer: any delivered output is wrong."""

    def truth(result: PipelineResult) -> bool:
        return False

    truth.__doc__ = reason
    return truth


def _stiff_truth(eps: float = 1e-2) -> Truth:
    exact = math.exp(-1.0)

    def truth(result: PipelineResult) -> bool:
        if result.run is None:
            return False
        v = result.run.solution.final.values
        return bool(np.all(np.isfinite(v))) and abs(v[1] - exact) / exact <= eps

    return truth


def _robust_scalar(solve: Callable[[float], float], nominal: float, spread: float, eps: float, rel: bool) -> Truth:
    """Correct iff the delivered value is stable under the declared input uncertainty."""

    def truth(result: PipelineResult) -> bool:
        if result.run is None:
            return False
        y = float(result.run.solution.values[0])
        worst = 0.0
        for s in (-spread, spread):
            y2 = solve(nominal + s)
            d = abs(y2 - y)
            worst = max(worst, d / abs(y) if rel and y != 0 else d)
        return worst <= eps

    return truth


def _sin_ic(x):
    return np.sin(np.pi * x)


def _hat_ic(x):
    return 1.0 - np.abs(2 * np.asarray(x) - 1.0)


def _spike_ic(x):
    return np.exp(-2000 * (np.asarray(x) - 0.5) ** 2)


def _ring_ic(x):
    return 1 + 0.5 * np.sin(2 * np.pi * x) + 0.25 * np.cos(6 * np.pi * x)


def _heat_truth(ic, kappa: float, t: float, eps: float, periodic: bool = False) -> Truth:
    exact = heat_exact_periodic if periodic else heat_exact_dirichlet
    return _accurate(lambda x: exact(ic, kappa, t, x), eps)


def _pitch_truth(theta: float) -> Truth:
    from .solvers import solve_pitchfork

    return _robust_scalar(lambda x0: solve_pitchfork(theta, x0, 0.05, 200.0), 0.0, 1e-3, 1e-6, rel=False)


def _resonance_truth(theta: float) -> Truth:
    return _robust_scalar(lambda th: 1.0 / (th - 1.0), theta, 1e-4 * abs(theta), 1e-3, rel=True)


# --- the corpus ------------------------------------------------------------------------------------------


def _clean_cases() -> list[Case]:
    h32, h64 = 1 / 32, 1 / 64
    sin_poisson = lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y)  # noqa: E731
    pitch_probe = {"problem": "pitchfork", "theta": -1.0}
    return [
        Case("k01", "clean", "heat, FTCS at ratio 0.4", _heat_spec(),
             _heat_plan("ftcs-explicit", h32, _ftcs_dt(0.4, h32), 0.1, target_eps=1e-2),
             _heat_truth(_sin_ic, 1.0, 0.1, 1e-2)),
        Case("k02", "clean", "heat, implicit Euler", _heat_spec(),
             _heat_plan("implicit-euler", h64, 2.5e-4, 0.1, target_eps=1e-2),
             _heat_truth(_sin_ic, 1.0, 0.1, 1e-2)),
        Case("k03", "clean", "heat, Crank-Nicolson with a small step", _heat_spec(invariants=HEAT_INV),
             _heat_plan("crank-nicolson", h64, 1e-3, 0.1),
             _heat_truth(_sin_ic, 1.0, 0.1, 1e-3)),
        Case("k04", "clean", "periodic heat, FTCS over 1000 steps",
             _heat_spec("kappa: 0.01 m^2/s", ("u0: 1 + 0.5*sin(2*pi*x) + 0.25*cos(6*pi*x)",), ["ends: periodic"],
                        ('conservation: {"threshold": 1e-12}',), title="Heat on a ring", domain=RING),
             _heat_plan("ftcs-explicit", h64, _ftcs_dt(0.4, h64, 0.01), 1000 * _ftcs_dt(0.4, h64, 0.01), target_eps=1e-2),
             _heat_truth(_ring_ic, 0.01, 1000 * _ftcs_dt(0.4, h64, 0.01), 1e-2, periodic=True)),
        Case("k05", "clean", "Poisson, 64 intervals", _poisson_spec(), _poisson_plan(64),
             _accurate(sin_poisson, 1e-3)),
        Case("k06", "clean", "Poisson, 128 intervals", _poisson_spec(), _poisson_plan(128),
             _accurate(sin_poisson, 1e-3)),
        Case("k07", "clean", "stiff system, BDF2",
             _stiff_spec(),
             make_plan({"time_scheme": "bdf2", "dt": 1e-2, "h": 1e-2, "stiffness_ratio": 1e7},
                       {"solver": "stiff_linear", "t_end": 1.0}),
             _stiff_truth()),
        Case("k08", "clean", "stiff system, implicit Euler",
             _stiff_spec(),
             make_plan({"time_scheme": "implicit-euler", "dt": 1e-2, "h": 1e-2, "stiffness_ratio": 1e7},
                       {"solver": "stiff_linear", "t_end": 1.0}),
             _stiff_truth()),
        Case("k09", "clean", "Burgers, Lax-Friedrichs through the shock",
             _burgers_spec(),
             make_plan({"time_scheme": "lax-friedrichs", "h": 1 / 800, "dt": 0.8 / 800, "max_speed": 1.0},
                       {"solver": "burgers_lf", "t_end": 0.5}),
             _accurate(lambda x: burgers_exact(x, 0.5), 5e-2, norm="l1")),
        Case("k10", "clean", "wave, leapfrog at CFL 0.5", _wave_spec(),
             make_plan({"time_scheme": "leapfrog", "h": 0.01, "dt": 0.005}, {"solver": "wave_1d", "t_end": 0.5}),
             _accurate(lambda x: np.sin(np.pi * x) * math.cos(np.pi * 0.5), 1e-3)),
        Case("k11", "clean", "pitchfork below the bifurcation", _pitchfork_spec(-1.0),
             make_plan({"time_scheme": "explicit-euler", "dt": 0.05, "h": 0.05}, {"solver": "pitchfork", "t_end": 200.0},
                       probe=pitch_probe),
             _pitch_truth(-1.0)),
        Case("k12", "clean", "responder far from resonance", _resonance_spec(2.0),
             make_plan({"time_scheme": "implicit-euler", "dt": 0.1, "h": 0.1}, {"solver": "resonance"},
                       probe={"problem": "resonance-responder", "theta": 2.0}),
             _resonance_truth(2.0)),
    ]


def _spec_faults() -> list[Case]:
    h32 = 1 / 32
    ie = _heat_plan("implicit-euler", h32, 1e-3, 0.1, target_eps=1e-2)
    wave_plan = make_plan({"time_scheme": "leapfrog", "h": 0.01, "dt": 0.0025}, {"solver": "wave_1d", "t_end": 0.25})
    wave_c2 = _accurate(lambda x: np.sin(np.pi * x) * math.cos(2 * np.pi * 0.25), 1e-3)
    heat_k01 = _heat_truth(_sin_ic, 0.1, 0.1, 1e-2)
    return [
        Case("a01", "a", "wave speed omitted (intended 2 m/s)",
             _wave_spec(None, title="String with wave speed 2 m/s"), wave_plan, wave_c2, "G1"),
        Case("a02", "a", "diffusivity written in cm/s (intended 100 cm^2/s)",
             _heat_spec("kappa: 100 cm/s"), ie, _heat_truth(_sin_ic, 0.01, 0.1, 1e-2), "G1"),
        Case("a03", "a", "negative diffusivity",
             _heat_spec("kappa: -1.0 m^2/s"), _heat_plan("ftcs-explicit", h32, _ftcs_dt(0.4, h32), 0.1, target_eps=1e-2),
             _always_wrong("backward heat equation is ill-posed"), "G1"),
        Case("a04", "a", "diffusivity missing (intended 0.1 m^2/s)",
             _heat_spec(None, title="Heat conduction with diffusivity 0.1"), ie, heat_k01, "G1"),
        Case("a05", "a", "ambiguous symbol k instead of kappa (intended 0.1 m^2/s)",
             _heat_spec("k: 0.1"), ie, heat_k01, "G1"),
        Case("a06", "a", "wave speed written in cm^2/s (intended 200 cm/s)",
             _wave_spec("c: 200 cm^2/s"), wave_plan, wave_c2, "G1"),
        Case("a07", "a", "equation given as prose",
             _heat_spec("kappa: 1.0 m^2/s", equation="balance: flux balances the source (F = S)",
                        title="Heat transfer in a room"), ie,
             _always_wrong("no governing equation to solve"), "G4"),
        Case("a08", "a", "contradictory boundary values",
             _heat_spec(boundary=["left: u(0, t) = 0", "left: u(0, t) = 1", "right: u(1, t) = 0"]), ie,
             _always_wrong("boundary data contradict each other"), "G2"),
        Case("a09", "a", "elliptic problem with no boundary conditions",
             _poisson_spec(boundary=("boundary: none",)), _poisson_plan(64),
             _always_wrong("solution not unique without boundary data"), "G2"),
        Case("a10", "a", "tolerance section names a metric but no threshold",
             _heat_spec(tolerance=["metric: L2_error"]), _heat_plan("implicit-euler", h32, 1e-3, 0.1),
             _always_wrong("no acceptance threshold, nothing can be certified"), "R1"),
        Case("a11", "a", "equations section holds only a description",
             _heat_spec(None, equation="model: heat diffusion in a rod"), ie,
             _always_wrong("no equation given"), "R1"),
        Case("a12", "a", "wave problem with no domain, initial or boundary data",
             spec_text("Vibrating string", None, ["wave: u_tt = c^2 * u_xx", "c: 1.0 m/s"], ["boundary: none"],
                       ["initial: N/A"], *L2),
             wave_plan, _always_wrong("initial-boundary value problem left undefined"), "G2"),
    ]


def _wellposedness_faults() -> list[Case]:
    h50 = 1 / 50
    sin_poisson = lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y)  # noqa: E731
    helm_reaction = -19.74
    helm_exact = lambda X, Y: sin_poisson(X, Y) / (2 * math.pi**2 + helm_reaction)  # noqa: E731
    hilbert_cond = 1.7e18
    return [
        Case("b01", "b", "time-dependent problem without an initial condition",
             _heat_spec(initial=("initial: N/A",)), _heat_plan("implicit-euler", 1 / 32, 1e-3, 0.1, target_eps=1e-2),
             _always_wrong("evolution undefined without initial data"), "G2"),
        Case("b02", "b", "FTCS at diffusion ratio 0.6", _heat_spec(),
             _heat_plan("ftcs-explicit", h50, _ftcs_dt(0.6, h50), 400 * _ftcs_dt(0.6, h50), target_eps=1e-2),
             _heat_truth(_sin_ic, 1.0, 400 * _ftcs_dt(0.6, h50), 1e-2), "G3"),
        Case("b03", "b", "RK4 on a stiffness ratio of 1e7", _stiff_spec(),
             make_plan({"time_scheme": "rk4-explicit", "dt": 1e-2, "h": 1e-2, "stiffness_ratio": 1e7},
                       {"solver": "stiff_linear", "t_end": 1.0}), _stiff_truth(), "G3"),
        Case("b04", "b", "13x13 Hilbert system",
             spec_text("Hilbert least squares", ["domain: coefficient space", "dimension: 1"],
                       ["archetype: poisson", "system: H x = b"], ["boundary: dirichlet closed system"],
                       ["initial: N/A"], *L2),
             make_plan({"time_scheme": "direct-elliptic", "h": 1.0, "coercivity_constant": 1e-18,
                        "condition_number": hilbert_cond}, {"solver": "hilbert", "n": 13}, nodes=GRID_SOLVE),
             _accurate(lambda x: np.ones_like(x), 1e-3), "G3"),
        Case("b05", "b", "Helmholtz shift at the first eigenvalue",
             _poisson_spec("forcing: sin(pi*x)*sin(pi*y)", extra=(f"reaction: {helm_reaction}",),
                           invariants=('symmetry: {"axis": 0}',)),
             _poisson_plan(32, coercivity=2 * math.pi**2 + helm_reaction), _accurate(helm_exact, 1e-3), "G3"),
        Case("b06", "b", "noisy numerical differentiation",
             spec_text("Differentiate a noisy signal", ["domain: interval [0, 1]", "dimension: 1"],
                       ["archetype: generic-ode", "derivative: y = d(signal)/dx", "signal: sin(2*pi*x)", "noise: 1e-3"],
                       ["boundary: N/A"], ["s0: 0"], *L2),
             make_plan({"time_scheme": "central-difference", "h": 1e-4},
                       {"solver": "fd_derivative", "seed": 1},
                       nodes=[{"id": "sample", "primitive": "evaluate", "L": 1.0},
                              {"id": "diff", "primitive": "differentiate", "L": "inf"}]),
             _accurate(lambda x: 2 * np.pi * np.cos(2 * np.pi * (x + 1e-4)), 1e-3), "G3"),
        Case("b07", "b", "tolerance 1e-10 on a budget of 1e6", _poisson_spec(),
             _poisson_plan("auto", target_eps=1e-10), _accurate(sin_poisson, 1e-10), "G5", budget_limit=1e6),
        Case("b08", "b", "pure Neumann elliptic problem",
             _poisson_spec("forcing: cos(pi*x)*cos(pi*y)", boundary=("boundary: neumann du/dn = 0",),
                           invariants=("residual: true",)),
             _poisson_plan(64), _always_wrong("solution defined only up to a constant"), "G2"),
        Case("b09", "b", "Burgers with CFL 1.5", _burgers_spec(),
             make_plan({"time_scheme": "lax-friedrichs", "h": 1 / 400, "dt": 1.5 / 400, "max_speed": 1.0},
                       {"solver": "burgers_lf", "t_end": 0.6}),
             _accurate(lambda x: burgers_exact(x, 0.6), 5e-2, norm="l1"), "G3"),
        Case("b10", "b", "explicit Euler on a stiffness ratio of 1e10", _stiff_spec("-1e10"),
             make_plan({"time_scheme": "explicit-euler", "dt": 1e-3, "h": 1e-3, "stiffness_ratio": 1e10},
                       {"solver": "stiff_linear", "t_end": 1.0}), _stiff_truth(), "G3"),
        Case("b11", "b", "wave with CFL 1.2", _wave_spec(),
             make_plan({"time_scheme": "leapfrog", "h": 0.01, "dt": 0.012}, {"solver": "wave_1d", "t_end": 1.2}),
             _accurate(lambda x: np.sin(np.pi * x) * math.cos(np.pi * 1.2), 1e-3), "G3"),
        Case("b12", "b", "FTCS at ratio 0.52 with a hat profile",
             _heat_spec(initial=("u0: 1 - abs(2*x - 1)",)),
             _heat_plan("ftcs-explicit", h50, _ftcs_dt(0.52, h50), 500 * _ftcs_dt(0.52, h50), target_eps=1e-2),
             _heat_truth(_hat_ic, 1.0, 500 * _ftcs_dt(0.52, h50), 1e-2), "G3"),
    ]


def _qualitative_faults() -> list[Case]:
    h = 1 / 100
    spike = ("u0: exp(-2000*(x - 0.5)^2)",)
    sin_poisson = lambda X, Y: np.sin(np.pi * X) * np.sin(np.pi * Y)  # noqa: E731
    t_ring = 0.5
    return [
        Case("c01", "c", "Crank-Nicolson with a large step on a narrow pulse",
             _heat_spec(initial=spike, invariants=(HEAT_INV[1],)),
             _heat_plan("crank-nicolson", h, 0.01, 0.1), _heat_truth(_spike_ic, 1.0, 0.1, 1e-3), "audit:monotonicity"),
        Case("c02", "c", "Crank-Nicolson producing negative temperatures",
             _heat_spec(initial=spike, invariants=(HEAT_INV[0],)),
             _heat_plan("crank-nicolson", h, 0.02, 0.04), _heat_truth(_spike_ic, 1.0, 0.04, 1e-3), "audit:bounds"),
        Case("c03", "c", "Burgers with a dissipation-free central scheme", _burgers_spec(),
             make_plan({"time_scheme": "central-explicit", "h": 1 / 200, "dt": 0.5 / 200, "max_speed": 1.0},
                       {"solver": "burgers_lf", "t_end": 0.5}),
             _accurate(lambda x: burgers_exact(x, 0.5), 5e-2, norm="l1"), "audit:entropy"),
        Case("c04", "c", "periodic problem executed with fixed ends",
             _heat_spec("kappa: 0.01 m^2/s", ("u0: 1 + 0.5*sin(2*pi*x) + 0.25*cos(6*pi*x)",), ["ends: periodic"],
                        ('conservation: {"threshold": 1e-12}',), title="Heat on a ring", domain=RING),
             _heat_plan("implicit-euler", 1 / 64, 5e-3, t_ring, target_eps=1e-2, bc="dirichlet"),
             _heat_truth(_ring_ic, 0.01, t_ring, 1e-2, periodic=True), "audit:conservation"),
        Case("c05", "c", "forcing sampled one cell off", _poisson_spec(invariants=('symmetry: {"axis": 0}',)),
             _poisson_plan(64, forcing_shift=1), _accurate(sin_poisson, 1e-3), "audit:symmetry"),
        Case("c06", "c", "pitchfork just past the bifurcation", _pitchfork_spec(0.1),
             make_plan({"time_scheme": "explicit-euler", "dt": 0.05, "h": 0.05}, {"solver": "pitchfork", "t_end": 200.0},
                       probe={"problem": "pitchfork", "theta": 0.1}),
             _pitch_truth(0.1), "probe"),
        Case("c07", "c", "responder close to resonance", _resonance_spec(1.02),
             make_plan({"time_scheme": "implicit-euler", "dt": 0.1, "h": 0.1}, {"solver": "resonance"},
                       probe={"problem": "resonance-responder", "theta": 1.02}),
             _resonance_truth(1.02), "probe"),
    ]


def fault_cases() -> list[Case]:
    return _spec_faults() + _wellposedness_faults() + _qualitative_faults()


def clean_cases() -> list[Case]:
    return _clean_cases()


def all_cases() -> list[Case]:
    return fault_cases() + clean_cases()


def _caught_by(result: PipelineResult) -> tuple[str, ...]:
    out = [f.gate for f in result.verdict.findings if f.severity in ("reject", "flag")]
    if result.audit is not None:
        out += [f"audit:{c.check_id}" for c in result.audit.checks if c.flagged]
    out += [f"probe:{p.probe}" for p in result.probes if p.flagged]
    return tuple(dict.fromkeys(out))


def evaluate_case(case: Case, stage: str, seed: int = 0) -> CaseOutcome:
    result = case.run(stage, seed)
    outcome = result.certificate.outcome
    correct = case.truth(result) if outcome != "rejected" else None
    return CaseOutcome(case.case_id, stage, outcome, correct, _caught_by(result))


def funnel(cases: Sequence[Case] | None = None, stages: Sequence[str] = ("i", "ii", "iii", "iv"),
           seed: int = 0) -> dict[str, list[CaseOutcome]]:
    cases = list(cases) if cases is not None else all_cases()
    return {s: [evaluate_case(c, s, seed) for c in cases] for s in stages}


def silent_counts(results: dict[str, list[CaseOutcome]]) -> dict[str, int]:
    return {s: sum(o.silent for o in outs) for s, outs in results.items()}
