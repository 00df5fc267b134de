"""Post-run checks of computed solutions against declared physical invariants.

Only invariants that are declared get checked.  Declarations are a mapping
such as::

    {"conservation": {"threshold": 1e-12},
     "bounds": {"lower": 0.0},
     "monotonicity": {"functional": "max", "direction": "non-increasing"},
     "symmetry": {"axis": 0},
     "entropy": {},
     "residual": {}}

Each check returns a :class:`CheckResult`; :func:`audit_solution` runs the
declared ones in a fixed order and aggregates them into an :class:`AuditReport`.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache
from importlib import resources
from typing import Any, Callable, Mapping, Protocol, Sequence

import numpy as np

from .fields import SolutionField, SolutionSeries

CHECK_ORDER = ("finite", "conservation", "bounds", "monotonicity", "symmetry", "entropy", "residual")
MASS_FLOOR = 1e-30


class NoEvaluator(LookupError):
    def __init__(self, archetype: str, reason: str = ""):
        super().__init__(f"no residual evaluator for {archetype!r}" + (f": {reason}" if reason else ""))
        self.archetype = archetype


@dataclass(frozen=True)
class CheckResult:
    check_id: str
    status: str  # "pass" or "flag"
    measured: float
    threshold: float
    evidence: dict[str, Any] = field(default_factory=dict, compare=False)

    @property
    def flagged(self) -> bool:
        return self.status == "flag"

    def to_dict(self) -> dict[str, Any]:
        return {
            "check_id": self.check_id,
            "status": self.status,
            "measured": self.measured,
            "threshold": self.threshold,
            "evidence": dict(self.evidence),
        }


@dataclass(frozen=True)
class AuditReport:
    checks: tuple[CheckResult, ...] = ()
    notes: tuple[str, ...] = ()

    @property
    def overall(self) -> str:
        return "flag" if any(c.flagged for c in self.checks) else "pass"

    def check(self, check_id: str) -> CheckResult | None:
        return next((c for c in self.checks if c.check_id == check_id), None)

    @property
    def bound(self) -> float | None:
        """Certified error bound from the residual check, when one ran."""
        res = self.check("residual")
        if res is None or "bound" not in res.evidence:
            return None
        return float(res.evidence["bound"])

    def to_dict(self) -> dict[str, Any]:
        return {"overall": self.overall, "checks": [c.to_dict() for c in self.checks], "notes": list(self.notes)}


def _result(check_id: str, flagged: bool, measured: float, threshold: float, **evidence) -> CheckResult:
    return CheckResult(check_id, "flag" if flagged else "pass", float(measured), float(threshold), evidence)


def _frames(solution: SolutionField | SolutionSeries) -> tuple[SolutionField, ...]:
    return solution.frames if isinstance(solution, SolutionSeries) else (solution,)


def _weights(frame: SolutionField, weight) -> np.ndarray | float:
    if weight is None or weight == "uniform":
        return frame.cell_volume
    if weight == "trapezoid":
        w = np.ones(frame.shape)
        for axis, n in enumerate(frame.shape):
            idx = [slice(None)] * len(frame.shape)
            for end in (0, n - 1):
                idx[axis] = end
                w[tuple(idx)] *= 0.5
        return (w * frame.cell_volume).ravel()
    arr = np.asarray(weight, dtype=np.float64).ravel()
    if arr.size != frame.values.size:
        raise ValueError("quadrature weights must match the field size")
    return arr


def check_finite(solution: SolutionField | SolutionSeries) -> CheckResult:
    bad = sum(int(np.count_nonzero(~np.isfinite(f.values))) for f in _frames(solution))
    evidence: dict[str, Any] = {"non_finite_values": bad}
    if isinstance(solution, SolutionSeries) and "terminated" in solution.metadata:
        evidence["terminated_at"] = solution.metadata.get("terminated_at")
    return _result("finite", bad > 0, bad, 0, **evidence)


def check_conservation(series: SolutionSeries, weight="uniform", threshold: float = 1e-12) -> CheckResult:
    """Relative drift of the weighted total max_t |Q(t) - Q(0)| / max(|Q(0)|, floor)."""
    frames = _frames(series)
    totals = []
    for f in frames:
        w = _weights(f, weight)
        terms = f.values * w
        totals.append(math.fsum(terms.tolist()) if np.all(np.isfinite(terms)) else math.nan)
    q0 = totals[0]
    scale = max(abs(q0), MASS_FLOOR) if math.isfinite(q0) else math.nan
    drift = max((abs(q - q0) for q in totals), default=0.0) / scale if totals else 0.0
    if not math.isfinite(drift):
        drift = math.inf
    return _result("conservation", not drift < threshold, drift, threshold, initial_total=q0, final_total=totals[-1])


def check_bounds(
    solution: SolutionField | SolutionSeries,
    lower: float | None = None,
    upper: float | None = None,
    tol: float = 1e-12,
) -> CheckResult:
    if lower is None and upper is None:
        raise ValueError("declare at least one bound")
    worst = 0.0
    count = 0
    for f in _frames(solution):
        v = f.values
        bad = ~np.isfinite(v)
        if lower is not None:
            below = v < lower - tol
            bad |= below
            if below.any():
                worst = max(worst, float(np.max(lower - v[below])))
        if upper is not None:
            above = v > upper + tol
            bad |= above
            if above.any():
                worst = max(worst, float(np.max(v[above] - upper)))
        count = max(count, int(np.count_nonzero(bad)))
    if count and worst == 0.0:
        worst = math.inf  # only non-finite offenders
    return _result("bounds", count > 0, worst, tol, violations=count, lower=lower, upper=upper)


_FUNCTIONALS: dict[str, Callable[[np.ndarray], float]] = {
    "max": lambda v: float(np.max(v)),
    "min": lambda v: float(np.min(v)),
    "sum": lambda v: math.fsum(v.tolist()),
}


def check_monotonicity(
    series: SolutionSeries, functional: str = "max", direction: str = "non-increasing", tol: float = 1e-12
) -> CheckResult:
    if functional not in _FUNCTIONALS:
        raise ValueError(f"functional must be one of {sorted(_FUNCTIONALS)}")
    if direction not in ("non-increasing", "non-decreasing"):
        raise ValueError("direction must be non-increasing or non-decreasing")
    values = [_FUNCTIONALS[functional](f.values) for f in _frames(series)]
    sign = 1.0 if direction == "non-increasing" else -1.0
    worst, at = 0.0, None
    for k in range(1, len(values)):
        step = sign * (values[k] - values[k - 1])
        if not math.isfinite(step):
            worst, at = math.inf, k
            break
        if step > worst:
            worst, at = step, k
    return _result(
        "monotonicity", worst > tol, worst, tol, functional=functional, direction=direction, worst_frame=at
    )


def check_symmetry(solution: SolutionField | SolutionSeries, axis: int = 0, tol: float = 1e-10) -> CheckResult:
    """Mirror the field about the midpoint of ``axis``; relative max mismatch over all frames."""
    worst = 0.0
    for f in _frames(solution):
        a = f.array
        if axis >= a.ndim:
            raise ValueError(f"axis {axis} out of range for a {a.ndim}-d field")
        scale = float(np.max(np.abs(a))) if a.size else 0.0
        diff = float(np.max(np.abs(a - np.flip(a, axis=axis)))) if a.size else 0.0
        if not (math.isfinite(scale) and math.isfinite(diff)):
            worst = math.inf
            break
        if scale > 0:
            worst = max(worst, diff / scale)
    return _result("symmetry", worst > tol, worst, tol, axis=axis)


def check_entropy(series: SolutionSeries, entropy: str = "square", tol: float = 1e-12) -> CheckResult:
    """Discrete entropy sum(u^2/2) h must not grow from one frame to the next (relative to its start)."""
    if entropy != "square":
        raise ValueError("only the square entropy u^2/2 is supported")
    frames = _frames(series)
    with np.errstate(over="ignore", invalid="ignore"):
        values = [0.5 * math.fsum((f.values**2).tolist()) * f.cell_volume for f in frames]
    scale = max(abs(values[0]), MASS_FLOOR)
    worst, at = 0.0, None
    for k in range(1, len(values)):
        rise = (values[k] - values[k - 1]) / scale
        if not math.isfinite(rise):
            worst, at = math.inf, k
            break
        if rise > worst:
            worst, at = rise, k
    return _result("entropy", worst > tol, worst, tol, initial_entropy=values[0], worst_frame=at)


# --- residual evaluators and certified bounds ---------------------------------------


@lru_cache(maxsize=1)
def stability_data() -> dict[str, Any]:
    return json.loads(resources.files("simjudge.data").joinpath("stability.json").read_text(encoding="utf-8"))


def poisson_stability_constant(h: float) -> float:
    return h * h / (8.0 * math.sin(math.pi * h / 2.0) ** 2)


@dataclass(frozen=True)
class ResidualEstimate:
    algebraic: float
    truncation: float
    stability_constant: float
    bound: float


class ResidualEvaluator(Protocol):
    archetype: str

    def evaluate(self, solution: SolutionField | SolutionSeries) -> ResidualEstimate: ...


def _fourth_difference(a: np.ndarray, axis: int) -> np.ndarray:
    """Five-point fourth difference (unscaled) at every node, stencils shifted inward near the ends."""
    n = a.shape[axis]
    if n < 5:
        raise ValueError("need at least five nodes per axis to estimate a fourth derivative")
    a = np.moveaxis(a, axis, 0)
    out = np.empty_like(a)
    centres = np.clip(np.arange(n), 2, n - 3)
    for i, c in enumerate(centres):
        out[i] = a[c - 2] - 4 * a[c - 1] + 6 * a[c] - 4 * a[c + 1] + a[c + 2]
    return np.moveaxis(out, 0, axis)


def _l2(values: np.ndarray, volume: float) -> float:
    return math.sqrt(volume * math.fsum((np.ravel(values) ** 2).tolist()))


@dataclass(frozen=True)
class PoissonResidual:
    """Bound for -lap(u) + reaction u = f on the unit square with Dirichlet data.

    The bound is C(h) * (||r|| + s ||tau||) where r is the algebraic residual of
    the 5-point system, tau the truncation error estimated from fourth
    differences of the computed field and s a safety factor.
    """

    forcing: Any
    reaction: float = 0.0
    archetype: str = "poisson"

    def evaluate(self, solution: SolutionField | SolutionSeries) -> ResidualEstimate:
        f = _frames(solution)[-1]
        if len(f.shape) != 2 or f.shape[0] != f.shape[1]:
            raise NoEvaluator(self.archetype, "expects a square 2-d nodal field")
        if self.reaction < 0:
            raise NoEvaluator(self.archetype, "negative reaction voids the stability constant")
        n = f.shape[0] - 1
        h = f.spacing[0]
        U = f.array
        x = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(x, x, indexing="ij")
        F = np.asarray(self.forcing(X, Y) if callable(self.forcing) else self.forcing, dtype=np.float64)
        F = np.broadcast_to(F, U.shape)
        c = U[1:-1, 1:-1]
        lap = (4 * c - U[2:, 1:-1] - U[:-2, 1:-1] - U[1:-1, 2:] - U[1:-1, :-2]) / h**2
        r = lap + self.reaction * c - F[1:-1, 1:-1]
        d4 = (_fourth_difference(U, 0) + _fourth_difference(U, 1))[1:-1, 1:-1] / h**4
        tau = -(h * h / 12.0) * d4
        vol = h * h
        alg, trunc = _l2(r, vol), _l2(tau, vol)
        const = poisson_stability_constant(h)
        if self.reaction > 0:
            lam_min = 1.0 / const + self.reaction
            const = 1.0 / lam_min
        safety = float(stability_data()["truncation_safety_factor"])
        bound = const * (alg + safety * trunc)
        return ResidualEstimate(alg, trunc, const, bound if math.isfinite(bound) else math.inf)


@dataclass(frozen=True)
class HeatResidual:
    """Bound for implicit-Euler or stable FTCS runs of u_t = kappa u_xx with Dirichlet ends.

    Every step of either scheme contracts in the discrete L2 norm, so the
    final error is at most the sum of per-step algebraic residuals plus dt
    times the estimated local truncation error.  Needs every time step
    recorded.
    """

    kappa: float
    scheme: str
    bc_values: tuple[float, float] = (0.0, 0.0)
    archetype: str = "heat"

    def evaluate(self, solution: SolutionField | SolutionSeries) -> ResidualEstimate:
        if not isinstance(solution, SolutionSeries):
            raise NoEvaluator(self.archetype, "needs the full time series")
        if self.scheme not in ("implicit-euler", "ftcs-explicit"):
            raise NoEvaluator(self.archetype, f"no bound for scheme {self.scheme!r}")
        frames = solution.stack()
        if frames.ndim != 2 or frames.shape[0] < 3:
            raise NoEvaluator(self.archetype, "needs a 1-d series with at least three frames")
        if solution.metadata.get("bc", "dirichlet") != "dirichlet":
            raise NoEvaluator(self.archetype, "bound shipped for Dirichlet ends only")
        dts = np.diff(solution.times)
        dt = float(dts[0])
        if np.max(np.abs(dts - dt)) > 1e-9 * dt:
            raise NoEvaluator(self.archetype, "needs uniformly recorded steps")
        h = solution.frames[0].spacing[0]
        r = self.kappa * dt / h**2
        if self.scheme == "ftcs-explicit" and r > 0.5:
            raise NoEvaluator(self.archetype, "FTCS step is not a contraction above r = 1/2")

        def d2(v):
            return v[2:] - 2 * v[1:-1] + v[:-2]

        n_frames = frames.shape[0]
        alg_total = 0.0
        trunc_total = 0.0
        for k in range(1, n_frames):
            prev, cur = frames[k - 1], frames[k]
            if self.scheme == "implicit-euler":
                res = (cur[1:-1] - prev[1:-1]) - r * d2(cur)
                space_at = cur
            else:
                res = (cur[1:-1] - prev[1:-1]) - r * d2(prev)
                space_at = prev
            # u_tt from the nearest centred second difference in time
            c = min(max(k, 1), n_frames - 2)
            utt = (frames[c + 1] - 2 * frames[c] + frames[c - 1])[1:-1] / dt**2
            uxxxx = _fourth_difference(space_at, 0)[1:-1] / h**4
            # time and space defects bounded separately: their signs differ between the schemes
            alg_total += _l2(res, h)
            trunc_total += dt * (_l2(0.5 * dt * utt, h) + _l2(self.kappa * h * h / 12.0 * uxxxx, h))
        safety = float(stability_data()["truncation_safety_factor"])
        bound = alg_total + safety * trunc_total
        return ResidualEstimate(alg_total, trunc_total, 1.0, bound if math.isfinite(bound) else math.inf)


def residual_evaluator_for(archetype: str, **data) -> ResidualEvaluator:
    """Shipped evaluators: poisson (needs forcing) and heat (needs kappa and scheme)."""
    if archetype == "poisson":
        return PoissonResidual(data["forcing"], float(data.get("reaction", 0.0)))
    if archetype == "heat":
        return HeatResidual(float(data["kappa"]), str(data["scheme"]), tuple(data.get("bc_values", (0.0, 0.0))))
    raise NoEvaluator(archetype)


def check_residual(
    solution: SolutionField | SolutionSeries, residual_evaluator: ResidualEvaluator | None, tol: float
) -> CheckResult:
    """measured = certified bound B; passes iff B <= tol (the spec tolerance)."""
    if residual_evaluator is None:
        raise NoEvaluator("unknown")
    est = residual_evaluator.evaluate(solution)
    return _result(
        "residual",
        not est.bound <= tol,
        est.bound,
        tol,
        bound=est.bound,
        algebraic_residual=est.algebraic,
        truncation_estimate=est.truncation,
        stability_constant=est.stability_constant,
        archetype=residual_evaluator.archetype,
    )


# --- aggregation --------------------------------------------------------------------


def _as_series(solution: SolutionField | SolutionSeries) -> SolutionSeries:
    if isinstance(solution, SolutionSeries):
        return solution
    return SolutionSeries((0.0,), (solution,), dict(solution.metadata))


def audit_solution(
    spec,
    solution: SolutionField | SolutionSeries,
    declarations: Mapping[str, Any] | None,
    residual_evaluator: ResidualEvaluator | None = None,
    tolerance: float | None = None,
) -> AuditReport:
    """Run every declared check in a fixed order.

    ``spec`` supplies the tolerance for the residual check when ``tolerance``
    is not given.  A non-finite solution always yields a flagged ``finite``
    check, declared or not.
    """
    decl = dict(declarations or {})
    checks: list[CheckResult] = []
    notes: list[str] = []
    finite = check_finite(solution)
    if finite.flagged or "finite" in decl:
        checks.append(finite)
    if not decl:
        notes.append("no invariants declared")
        return AuditReport(tuple(checks), tuple(notes))
    unknown = sorted(set(decl) - set(CHECK_ORDER))
    if unknown:
        notes.append(f"ignored unknown declarations: {', '.join(unknown)}")

    def opts(name: str) -> dict:
        v = decl.get(name)
        return dict(v) if isinstance(v, Mapping) else {}

    if "conservation" in decl:
        o = opts("conservation")
        checks.append(check_conservation(_as_series(solution), o.get("weight", "uniform"), o.get("threshold", 1e-12)))
    if "bounds" in decl:
        o = opts("bounds")
        checks.append(check_bounds(solution, o.get("lower"), o.get("upper"), o.get("tol", 1e-12)))
    if "monotonicity" in decl:
        o = opts("monotonicity")
        checks.append(
            check_monotonicity(
                _as_series(solution), o.get("functional", "max"), o.get("direction", "non-increasing"), o.get("tol", 1e-12)
            )
        )
    if "symmetry" in decl:
        o = opts("symmetry")
        checks.append(check_symmetry(solution, int(o.get("axis", 0)), o.get("tol", 1e-10)))
    if "entropy" in decl:
        o = opts("entropy")
        checks.append(check_entropy(_as_series(solution), o.get("entropy", "square"), o.get("tol", 1e-12)))
    if "residual" in decl:
        tol = tolerance
        if tol is None and spec is not None:
            primary = spec.tolerance.primary()
            tol = primary[1].si if primary else None
        if tol is None:
            notes.append("residual declared but no numeric tolerance available")
            checks.append(_result("residual", True, math.inf, math.nan, reason="no tolerance"))
        else:
            try:
                checks.append(check_residual(solution, residual_evaluator, tol))
            except NoEvaluator as exc:
                checks.append(_result("residual", True, math.inf, tol, reason=str(exc)))
    return AuditReport(tuple(checks), tuple(notes))


def declarations_from_spec(spec) -> dict[str, Any]:
    """Read declarations from an optional ``## Invariants`` section of the spec document.

    Each entry is ``<check>: <json object or true>``.
    """
    doc = getattr(spec, "document", None)
    if doc is None:
        return {}
    sec = doc.section("Invariants")
    if sec is None:
        return {}
    out: dict[str, Any] = {}
    for e in sec.entries:
        text = e.value.strip() if not e.block else "\n".join(e.block)
        if text.lower() in ("true", "yes", ""):
            out[e.key] = {}
            continue
        try:
            val = json.loads(text)
        except json.JSONDecodeError:
            raise ValueError(f"invariant {e.key!r}: expected JSON or 'true', got {text!r}") from None
        out[e.key] = val if isinstance(val, dict) else {}
    return out


def build_ct_like_field(shape: Sequence[int], n_negative: int, seed: int = 0) -> SolutionField:
    """Non-negative image with exactly ``n_negative`` cells pushed below zero."""
    rng = np.random.default_rng(seed)
    values = rng.uniform(0.1, 1.0, size=tuple(shape))
    flat = values.ravel()
    idx = rng.choice(flat.size, size=n_negative, replace=False)
    flat[idx] = -rng.uniform(0.01, 0.5, size=n_negative)
    return SolutionField.from_array(flat.reshape(shape), 1.0 / shape[0])
