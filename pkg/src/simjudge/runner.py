"""Execute a plan's ``execute`` block with the built-in solvers.

The block names a solver and its discretisation; physical inputs (parameters,
forcing, initial and boundary data) come from the spec.  With
``checked=False`` the runner behaves like an unchecked workflow: it fills
missing inputs with defaults, silently caps resolution and skips solver-side
CFL checks.
"""

from __future__ import annotations

import ast
import math
from dataclasses import dataclass, field
from typing import Any

import numpy as np
import scipy.linalg

from .audit import HeatResidual, PoissonResidual
from .expressions import compile_expression
from .fields import SolutionField, SolutionSeries
from .gates import Plan, plan_budget, Limits
from .solvers import (
    SchemeDescriptor,
    solve_burgers_lf,
    solve_heat_1d,
    solve_pitchfork,
    solve_poisson_2d,
    solve_stiff_linear,
    solve_wave_1d,
)
from .specmd import ProblemSpec
from .units import MissingParameter

RESOLUTION_CAP = 256


class ExecutionError(RuntimeError):
    pass


@dataclass
class RunResult:
    solution: SolutionField | SolutionSeries
    evaluator: Any = None
    inputs: dict[str, Any] = field(default_factory=dict)
    defaults_used: list[str] = field(default_factory=list)


class _Inputs:
    def __init__(self, spec: ProblemSpec, checked: bool):
        self.spec = spec
        self.checked = checked
        self.defaults: list[str] = []
        self.constants = {k: q.si for k, q in spec.parameters.items()}

    def param(self, name: str, default: float) -> float:
        q = self.spec.parameters.get(name)
        if q is not None:
            return q.si
        if self.checked:
            raise MissingParameter(name)
        self.defaults.append(name)
        return default

    def expression(self, names: tuple[str, ...], variables: tuple[str, ...], default: str):
        for n in names:
            text = self.spec.settings.get(n)
            if text:
                return compile_expression(text, variables, self.constants)
        if self.checked:
            raise ExecutionError(f"spec gives none of {names}")
        self.defaults.append(names[0])
        return compile_expression(default, variables)

    def initial(self, variables: tuple[str, ...], default: str = "0"):
        """Callable for the first initial condition, or the literal it holds."""
        if not self.spec.initial:
            if self.checked:
                raise ExecutionError("no initial condition")
            self.defaults.append("initial")
            return compile_expression(default, variables)
        return compile_expression(self.spec.initial[0].expression, variables, self.constants)

    def initial_literal(self, default):
        if not self.spec.initial:
            if self.checked:
                raise ExecutionError("no initial condition")
            self.defaults.append("initial")
            return default
        return ast.literal_eval(self.spec.initial[0].expression.strip())

    def dirichlet(self, target: str, default: float = 0.0) -> float:
        value = default
        for b in self.spec.boundary:
            if b.kind == "dirichlet" and b.value is not None and b.target.lower() in (target, "all", "boundary", "edges"):
                value = b.value
        return value


def _scheme(plan: Plan, **overrides) -> SchemeDescriptor:
    s = dict(plan.scheme)
    s.update(overrides)
    extra = {k: v for k, v in s.items() if k not in ("time_scheme", "h", "dt") and isinstance(v, (int, float))}
    h = s["h"]
    return SchemeDescriptor(s["time_scheme"], tuple(h) if isinstance(h, list) else float(h), s.get("dt"), extra)


def _resolution(spec: ProblemSpec, plan: Plan, checked: bool) -> int:
    n = plan.execute.get("n", "auto")
    if n == "auto":
        budget, _, reason = plan_budget(spec, plan, Limits())
        if budget is None:
            raise ExecutionError(f"cannot choose a resolution: {reason}")
        h = min(b.h for b in budget.per_node.values())
        n = int(math.ceil(1.0 / h))
    n = max(int(n), 3)
    if n > RESOLUTION_CAP:
        if checked:
            raise ExecutionError(f"resolution {n} above the runner cap {RESOLUTION_CAP}")
        n = RESOLUTION_CAP
    return n


def _heat(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    kappa = inp.param("kappa", 1.0)
    periodic_spec = any(b.kind == "periodic" for b in spec.boundary)
    bc = ex.get("bc", "periodic" if periodic_spec else "dirichlet")
    scheme = _scheme(plan)
    bc_values = (inp.dirichlet("left"), inp.dirichlet("right"))
    ic = inp.initial(("x",))
    series = solve_heat_1d(ic, bc, kappa, scheme, float(ex["t_end"]), bc_values)
    evaluator = None
    if bc == "dirichlet" and scheme.time_scheme in ("implicit-euler", "ftcs-explicit"):
        evaluator = HeatResidual(kappa, scheme.time_scheme, bc_values)
    return RunResult(series, evaluator, {"kappa": kappa, "bc": bc, "bc_values": bc_values})


def _poisson(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    n = _resolution(spec, plan, inp.checked)
    forcing = inp.expression(("forcing", "f"), ("x", "y"), "0")
    reaction = float(ex.get("reaction", spec.parameters["reaction"].si if "reaction" in spec.parameters else 0.0))
    bc_text = spec.settings.get("bc_expression")
    bc = compile_expression(bc_text, ("x", "y"), inp.constants) if bc_text else inp.dirichlet("all")
    shift = int(ex.get("forcing_shift", 0))
    solve_forcing = forcing
    if shift:
        h = 1.0 / n
        solve_forcing = lambda X, Y: forcing(X + shift * h, Y)  # noqa: E731
    field_ = solve_poisson_2d(solve_forcing, bc, n, reaction)
    evaluator = PoissonResidual(forcing, reaction) if reaction >= 0 else None
    return RunResult(field_, evaluator, {"n": n, "reaction": reaction})


def _stiff(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    lf = inp.param("lambda_fast", -1.0)
    ls = inp.param("lambda_slow", -1.0)
    x0 = inp.initial_literal([0.0, 0.0])
    s = plan.scheme
    series = solve_stiff_linear(lf, ls, x0, s["time_scheme"], float(s["dt"]), float(ex["t_end"]))
    return RunResult(series, None, {"lambda_fast": lf, "lambda_slow": ls, "x0": list(x0)})


def _burgers_central(u0: np.ndarray, h: float, dt: float, t_end: float) -> SolutionSeries:
    """Forward-time central-flux update; no numerical dissipation at all."""
    u = u0.copy()
    n_steps = int(round(t_end / dt))
    times, frames = [0.0], [SolutionField((u.size,), (h,), u)]
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, n_steps + 1):
            f = 0.5 * u * u
            u = u - dt / (2 * h) * (np.roll(f, -1) - np.roll(f, 1))
            times.append(k * dt)
            frames.append(SolutionField((u.size,), (h,), u))
            if not np.all(np.isfinite(u)):
                break
    return SolutionSeries(tuple(times), tuple(frames), {"scheme": "central-explicit", "bc": "periodic"})


def _burgers(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    s = plan.scheme
    h, dt, t_end = float(s["h"]), float(s["dt"]), float(ex["t_end"])
    ic = inp.initial(("x",))
    if s["time_scheme"] == "central-explicit":
        x = np.arange(int(round(1.0 / h))) * h
        series = _burgers_central(np.asarray(ic(x), dtype=float), h, dt, t_end)
    else:
        series = solve_burgers_lf(ic, h, dt, t_end, check_cfl=inp.checked)
    return RunResult(series)


def _wave(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    s = plan.scheme
    c = inp.param("c", 1.0)
    ic = inp.initial(("x",))
    series = solve_wave_1d(ic, c, float(s["h"]), float(s["dt"]), float(ex["t_end"]))
    return RunResult(series, None, {"c": c})


def _scalar(v: float) -> SolutionField:
    return SolutionField((1,), (1.0,), np.array([v]))


def _pitchfork(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    theta = inp.param("theta", 0.0)
    x0 = float(inp.initial_literal(0.0))
    s = plan.scheme
    return RunResult(_scalar(solve_pitchfork(theta, x0, float(s["dt"]), float(ex["t_end"]))), None,
                     {"theta": theta, "x0": x0})


def _resonance(spec, plan, inp: _Inputs) -> RunResult:
    theta = inp.param("theta", 2.0)
    if theta == 1.0:
        raise ExecutionError("singular response")
    return RunResult(_scalar(1.0 / (theta - 1.0)), None, {"theta": theta})


def _hilbert(spec, plan, inp: _Inputs) -> RunResult:
    n = int(plan.execute.get("n", 13))
    H = scipy.linalg.hilbert(n)
    b = H @ np.ones(n)
    x = np.linalg.solve(H, b)
    return RunResult(SolutionField((n,), (1.0,), x), None, {"n": n})


def _fd_derivative(spec, plan, inp: _Inputs) -> RunResult:
    ex = plan.execute
    h = float(plan.scheme["h"])
    noise = inp.param("noise", 0.0)
    x = np.arange(0.0, 1.0 + h / 2, h)
    rng = np.random.default_rng(int(ex.get("seed", 0)))
    f = inp.expression(("signal",), ("x",), "sin(2*pi*x)")
    samples = f(x) + noise * rng.uniform(-1.0, 1.0, x.size)
    deriv = (samples[2:] - samples[:-2]) / (2 * h)
    return RunResult(SolutionField((deriv.size,), (h,), deriv), None, {"h": h, "noise": noise})


SOLVERS = {
    "heat_1d": _heat,
    "poisson_2d": _poisson,
    "stiff_linear": _stiff,
    "burgers_lf": _burgers,
    "wave_1d": _wave,
    "pitchfork": _pitchfork,
    "resonance": _resonance,
    "hilbert": _hilbert,
    "fd_derivative": _fd_derivative,
}


def execute(spec: ProblemSpec, plan: Plan, checked: bool = True, archetype: str | None = None) -> RunResult:
    name = plan.execute.get("solver")
    if name not in SOLVERS:
        raise ExecutionError(f"unknown solver {name!r}")
    inp = _Inputs(spec, checked)
    result = SOLVERS[name](spec, plan, inp)
    result.defaults_used = list(inp.defaults)
    return result


def evaluator_for(spec: ProblemSpec, solution: SolutionField | SolutionSeries, archetype: str | None = None):
    """Residual evaluator rebuilt from the spec and a stored solution, or None when none applies."""
    archetype = archetype or spec.archetype
    inp = _Inputs(spec, checked=True)
    try:
        if archetype == "poisson":
            forcing = inp.expression(("forcing", "f"), ("x", "y"), "0")
            reaction = spec.parameters["reaction"].si if "reaction" in spec.parameters else 0.0
            return PoissonResidual(forcing, reaction)
        if archetype == "heat":
            scheme = str(solution.metadata.get("scheme", ""))
            return HeatResidual(inp.param("kappa", 1.0), scheme, (inp.dirichlet("left"), inp.dirichlet("right")))
    except (ExecutionError, MissingParameter):
        return None
    return None
