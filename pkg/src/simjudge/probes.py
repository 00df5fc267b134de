"""Heuristics that flag parameter points close to a loss of well-posedness.

Three probes, each returning a :class:`ProbeReport`:

* continuation: re-solve at theta(1 +/- delta) and measure the relative jump;
* lyapunov: estimate the rightmost eigenvalue of the linearisation;
* ensemble: re-solve with tiny random perturbations and measure the spread.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Callable, Sequence

import numpy as np

from .fields import SolutionField
from .solvers import SchemeDescriptor, heat_eigenvalue, solve_heat_1d, solve_pitchfork

NORM_FLOOR = 1e-30


class SolveError(RuntimeError):
    pass


class NoLinearization(LookupError):
    pass


@dataclass(frozen=True)
class ProbeReport:
    probe: str
    flagged: bool
    measured: float
    threshold: float
    evidence: dict[str, Any] = field(default_factory=dict, compare=False)

    def to_dict(self) -> dict[str, Any]:
        return {
            "probe": self.probe,
            "flagged": self.flagged,
            "measured": self.measured,
            "threshold": self.threshold,
            "evidence": dict(self.evidence),
        }


Operator = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class ParametricProblem:
    """A solve map theta -> field, with optional hooks for the other two probes.

    ``linearization(theta)`` returns ``(apply, size)`` where ``apply`` maps a
    state vector to the operator applied to it.  ``solve_perturbed(theta,
    perturbation)`` solves with ``perturbation`` (one entry per perturbable
    degree of freedom, ``n_perturb`` of them) added to the initial data.
    """

    name: str
    theta: tuple[float, ...]
    solve: Callable[[np.ndarray], SolutionField]
    linearization: Callable[[np.ndarray], tuple[Operator, int]] | None = None
    solve_perturbed: Callable[[np.ndarray, np.ndarray], SolutionField] | None = None
    n_perturb: int = 1


def _norm(field_: SolutionField) -> float:
    return float(np.linalg.norm(field_.values))


def probe_continuation(
    p: ParametricProblem, delta_rel: float = 0.05, delta_abs_floor: float = 1e-6, tau: float = 0.5
) -> ProbeReport:
    """Largest relative change of the solution under theta_i -> theta_i +/- delta_i, one parameter at a time."""
    theta = np.asarray(p.theta, dtype=np.float64)
    try:
        base = p.solve(theta)
    except Exception as exc:
        raise SolveError(f"nominal solve failed: {exc}") from exc
    if not base.finite:
        raise SolveError("nominal solve is not finite")
    scale = max(_norm(base), NORM_FLOOR)
    worst = 0.0
    samples = []
    failure = None
    for i in range(theta.size):
        delta = max(abs(theta[i]) * delta_rel, delta_abs_floor)
        for sign in (+1, -1):
            t = theta.copy()
            t[i] += sign * delta
            try:
                out = p.solve(t)
                ok = out.finite
            except Exception as exc:  # a failed perturbed solve is itself the signal
                ok, out = False, None
                failure = str(exc)
            if not ok:
                failure = failure or "non-finite result"
                samples.append({"theta": t.tolist(), "relative_change": math.inf})
                worst = math.inf
                continue
            change = float(np.linalg.norm(out.values - base.values)) / scale
            samples.append({"theta": t.tolist(), "relative_change": change})
            worst = max(worst, change)
    evidence: dict[str, Any] = {"samples": samples, "delta_rel": delta_rel}
    if failure is not None:
        evidence["perturbed solve failed"] = failure
    return ProbeReport("continuation", worst > tau, worst, tau, evidence)


def _power(apply: Operator, v: np.ndarray, iterations: int, tol: float) -> tuple[float, np.ndarray, bool]:
    """Rayleigh-quotient power iteration; returns (estimate, vector, converged)."""
    v = v / np.linalg.norm(v)
    est = 0.0
    for _ in range(iterations):
        w = apply(v)
        new_est = float(v @ w)
        nrm = float(np.linalg.norm(w))
        if nrm == 0.0 or not math.isfinite(nrm):
            return new_est, v, nrm == 0.0
        v = w / nrm
        if abs(new_est - est) <= tol * max(1.0, abs(new_est)):
            return new_est, v, True
        est = new_est
    return est, v, False


def probe_lyapunov(
    p: ParametricProblem, iterations: int = 2000, tol: float = 1e-9, seed: int = 0
) -> ProbeReport:
    """Estimate the rightmost eigenvalue by power iteration on a shifted operator.

    A short power run bounds the spectral radius rho; iterating on A + 2 rho I
    makes the rightmost eigenvalue dominant, and subtracting the shift
    recovers it.  Intended for operators with real spectra.
    """
    if p.linearization is None:
        raise NoLinearization(p.name)
    apply, size = p.linearization(np.asarray(p.theta, dtype=np.float64))
    rng = np.random.default_rng(seed)
    v0 = rng.standard_normal(size)

    # crude operator-norm bound from a few applications
    rho = 0.0
    v = v0 / np.linalg.norm(v0)
    for _ in range(30):
        w = apply(v)
        nrm = float(np.linalg.norm(w))
        rho = max(rho, nrm)
        if nrm == 0.0:
            break
        v = w / nrm
    shift = 2.0 * rho

    def shifted(x):
        return apply(x) + shift * x

    est, _, converged = _power(shifted, v0, iterations, tol)
    lam = est - shift
    evidence: dict[str, Any] = {"eigenvalue_estimate": lam, "shift": shift, "iterations": iterations}
    flagged = lam > tol
    if not converged:
        evidence["estimate unconverged"] = True
        flagged = True
    return ProbeReport("lyapunov", flagged, lam, 0.0, evidence)


def probe_ensemble(
    p: ParametricProblem,
    n_members: int = 5,
    perturb_eps: float = 1e-3,
    tau_ens: float = 0.1,
    seed: int = 0,
    summary: str = "mean",
) -> ProbeReport:
    """Coefficient of variation of a scalar summary across perturbed members."""
    if p.solve_perturbed is None:
        raise NoLinearization(f"{p.name}: no perturbation hook")
    if n_members < 2:
        raise ValueError("an ensemble needs at least two members")
    theta = np.asarray(p.theta, dtype=np.float64)
    values = []
    failures = []
    for idx in range(n_members):
        rng = np.random.default_rng([seed, idx])
        pert = rng.uniform(-perturb_eps, perturb_eps, size=p.n_perturb)
        try:
            out = p.solve_perturbed(theta, pert)
        except Exception as exc:
            failures.append({"member": idx, "error": str(exc)})
            continue
        if not out.finite:
            failures.append({"member": idx, "error": "non-finite result"})
            continue
        if summary == "mean":
            values.append(float(np.mean(out.values)))
        elif summary == "norm":
            values.append(_norm(out))
        else:
            raise ValueError("summary must be 'mean' or 'norm'")
    evidence: dict[str, Any] = {"members": values, "summary": summary, "seed": seed}
    if failures:
        evidence["failures"] = failures
        return ProbeReport("ensemble", True, math.inf, tau_ens, evidence)
    arr = np.asarray(values)
    std = float(np.std(arr, ddof=1))
    mean = float(np.mean(arr))
    evidence["std"] = std
    evidence["mean"] = mean
    if abs(mean) < NORM_FLOOR:
        evidence["mean near zero"] = True
        # CV is meaningless here; compare the spread itself against 10 eps instead
        return ProbeReport("ensemble", std > perturb_eps * 10, std, perturb_eps * 10, evidence)
    cv = std / abs(mean)
    return ProbeReport("ensemble", cv > tau_ens, cv, tau_ens, evidence)


# --- built-in parametric problems ------------------------------------------------------


def _scalar(value: float) -> SolutionField:
    return SolutionField((1,), (1.0,), np.array([value]))


def pitchfork_problem(theta: float, x0: float = 0.0, dt: float = 0.05, t_end: float = 200.0) -> ParametricProblem:
    """x' = theta x - x^3 integrated to t_end; the state is the terminal value."""

    def solve(th):
        return _scalar(solve_pitchfork(float(th[0]), x0, dt, t_end))

    def solve_perturbed(th, pert):
        return _scalar(solve_pitchfork(float(th[0]), x0 + float(pert[0]), dt, t_end))

    def linearization(th):
        x_hat = solve_pitchfork(float(th[0]), x0, dt, t_end)
        slope = float(th[0]) - 3.0 * x_hat**2
        return (lambda v: slope * v), 1

    return ParametricProblem("pitchfork", (float(theta),), solve, linearization, solve_perturbed, 1)


def resonance_problem(theta: float) -> ParametricProblem:
    """Steady response y = 1/(theta - 1) of the relaxation y' = 1 - (theta - 1) y."""

    def solve(th):
        d = float(th[0]) - 1.0
        if d == 0.0:
            raise SolveError("singular response at theta = 1")
        return _scalar(1.0 / d)

    def solve_perturbed(th, pert):
        d = float(th[0]) - 1.0
        if d == 0.0:
            raise SolveError("singular response at theta = 1")
        return _scalar((1.0 + float(pert[0])) / d)

    def linearization(th):
        rate = -(float(th[0]) - 1.0)
        return (lambda v: rate * v), 1

    return ParametricProblem("resonance-responder", (float(theta),), solve, linearization, solve_perturbed, 1)


def heat_problem(kappa: float = 1.0, n: int = 32, t_end: float = 0.05, dt: float = 1e-3) -> ParametricProblem:
    """Implicit-Euler heat run from sin(pi x); theta = (kappa,)."""
    h = 1.0 / n
    x = np.linspace(0.0, 1.0, n + 1)
    base_ic = np.sin(np.pi * x)

    def run(k, ic):
        s = solve_heat_1d(ic, "dirichlet", k, SchemeDescriptor("implicit-euler", h=h, dt=dt), t_end)
        return s.final

    def solve(th):
        if th[0] <= 0:
            raise SolveError("kappa must be positive")
        return run(float(th[0]), base_ic)

    def solve_perturbed(th, pert):
        ic = base_ic.copy()
        ic[1:-1] += pert
        return run(float(th[0]), ic)

    def linearization(th):
        k = float(th[0])

        def apply(v):
            out = -2.0 * v
            out[1:] += v[:-1]
            out[:-1] += v[1:]
            return k * out / h**2

        return apply, n - 1

    return ParametricProblem("heat-interior", (float(kappa),), solve, linearization, solve_perturbed, n - 1)


BUILTIN_PROBLEMS: dict[str, Callable[..., ParametricProblem]] = {
    "pitchfork": pitchfork_problem,
    "resonance-responder": resonance_problem,
    "heat-interior": heat_problem,
}


def heat_spectrum(n: int, kappa: float = 1.0) -> np.ndarray:
    """Exact eigenvalues of kappa times the discrete Dirichlet Laplacian on n intervals."""
    h = 1.0 / n
    return np.array([-kappa * heat_eigenvalue(k, h) for k in range(1, n)])


def run_probes(
    p: ParametricProblem, probes: Sequence[str] = ("continuation", "lyapunov", "ensemble"), seed: int = 0
) -> list[ProbeReport]:
    out = []
    for name in probes:
        if name == "continuation":
            out.append(probe_continuation(p))
        elif name == "lyapunov":
            if p.linearization is not None:
                out.append(probe_lyapunov(p, seed=seed))
        elif name == "ensemble":
            if p.solve_perturbed is not None:
                out.append(probe_ensemble(p, seed=seed))
        else:
            raise ValueError(f"unknown probe {name!r}")
    return out
