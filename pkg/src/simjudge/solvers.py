"""Small reference solvers used to exercise the gates, audits and probes end to end.

Everything here is deterministic: sparse LU factorisations for the implicit
and elliptic solves, fixed step counts for time integration.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .fields import SolutionField, SolutionSeries

TIME_SCHEMES = (
    "ftcs-explicit",
    "implicit-euler",
    "crank-nicolson",
    "bdf2",
    "rk4-explicit",
    "explicit-euler",
    "lax-friedrichs",
    "leapfrog",
    "direct-elliptic",
)
_SCHEME_ALIASES = {
    "ftcs": "ftcs-explicit",
    "explicit": "ftcs-explicit",
    "ie": "implicit-euler",
    "backward-euler": "implicit-euler",
    "implicit": "implicit-euler",
    "cn": "crank-nicolson",
    "bdf": "bdf2",
    "rk4": "rk4-explicit",
    "forward-euler": "explicit-euler",
    "lf": "lax-friedrichs",
    "direct": "direct-elliptic",
}


class SingularSystem(RuntimeError):
    pass


class CFLViolation(ValueError):
    def __init__(self, number: float, limit: float = 1.0):
        super().__init__(f"CFL number {number:.6g} exceeds {limit:g}")
        self.number = number
        self.limit = limit


def normalise_scheme(name: str) -> str:
    key = name.strip().lower().replace("_", "-")
    key = _SCHEME_ALIASES.get(key, key)
    if key not in TIME_SCHEMES:
        raise ValueError(f"unknown scheme {name!r}")
    return key


@dataclass(frozen=True)
class SchemeDescriptor:
    """Discretisation choice plus the step sizes that gate 3 inspects."""

    time_scheme: str
    h: float | tuple[float, ...]
    dt: float | None = None
    extra: dict[str, float] = field(default_factory=dict, hash=False)

    def __post_init__(self):
        object.__setattr__(self, "time_scheme", normalise_scheme(self.time_scheme))
        hs = self.h if isinstance(self.h, tuple) else (self.h,)
        if any(not (h > 0 and math.isfinite(h)) for h in hs):
            raise ValueError("h must be finite and > 0")
        if self.time_scheme != "direct-elliptic":
            if self.dt is None or not (self.dt > 0 and math.isfinite(self.dt)):
                raise ValueError("dt must be finite and > 0 for a time-stepping scheme")

    @property
    def h_min(self) -> float:
        return min(self.h) if isinstance(self.h, tuple) else float(self.h)

    def to_dict(self) -> dict:
        d = {"time_scheme": self.time_scheme, "h": self.h, "dt": self.dt}
        d.update(self.extra)
        return d


def _steps(t_end: float, dt: float) -> int:
    n = int(round(t_end / dt))
    if n < 1 or abs(n * dt - t_end) > 1e-9 * max(1.0, t_end):
        raise ValueError(f"t_end={t_end} is not a whole number of steps of dt={dt}")
    return n


def _grid_values(spec, *coords: np.ndarray) -> np.ndarray:
    shape = np.broadcast(*coords).shape
    if callable(spec):
        return np.broadcast_to(np.asarray(spec(*coords), dtype=np.float64), shape).astype(np.float64)
    arr = np.asarray(spec, dtype=np.float64)
    if arr.ndim == 0:
        return np.full(shape, float(arr))
    if arr.shape != shape:
        raise ValueError(f"grid data of shape {arr.shape} does not match grid {shape}")
    return arr.copy()


# --- elliptic -----------------------------------------------------------------


def laplacian_2d(n: int, h: float) -> sp.csc_matrix:
    """Negative 5-point Laplacian on the (n-1)^2 interior nodes, Dirichlet rows eliminated."""
    m = n - 1
    T = sp.diags([-np.ones(m - 1), 2 * np.ones(m), -np.ones(m - 1)], [-1, 0, 1])
    eye = sp.identity(m)
    return ((sp.kron(eye, T) + sp.kron(T, eye)) / h**2).tocsc()


def solve_poisson_2d(forcing, bc=0.0, n: int = 64, reaction: float = 0.0) -> SolutionField:
    """Solve -lap(u) + reaction*u = f on the unit square with Dirichlet data ``bc``.

    ``n`` is the number of intervals per axis; the returned field holds all
    (n+1)^2 nodes including the boundary.  ``forcing`` and ``bc`` may be
    scalars, callables of (x, y) or full nodal arrays.
    """
    if n < 3:
        raise ValueError("n must be at least 3")
    h = 1.0 / n
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    F = _grid_values(forcing, X, Y)
    G = _grid_values(bc, X, Y)

    A = laplacian_2d(n, h)
    if reaction:
        A = (A + reaction * sp.identity(A.shape[0])).tocsc()
    b = F[1:-1, 1:-1].copy()
    b[0, :] += G[0, 1:-1] / h**2
    b[-1, :] += G[-1, 1:-1] / h**2
    b[:, 0] += G[1:-1, 0] / h**2
    b[:, -1] += G[1:-1, -1] / h**2
    rhs = b.ravel()

    try:
        lu = spla.splu(A)
    except RuntimeError as exc:
        raise SingularSystem(str(exc)) from None
    u = lu.solve(rhs)
    u += lu.solve(rhs - A @ u)  # one refinement step
    if not np.all(np.isfinite(u)):
        raise SingularSystem("non-finite solution")
    # residual of the h^2-scaled stencil, i.e. the equation as written on the grid
    residual = float(np.max(np.abs(A @ u - rhs))) * h**2 if rhs.size else 0.0
    if residual > 1e-10:
        raise SingularSystem(f"linear solve residual {residual:.3e} above 1e-10")

    U = G.copy()
    U[1:-1, 1:-1] = u.reshape(n - 1, n - 1)
    meta = {"scheme": "direct-elliptic", "n": n, "h": h, "reaction": reaction, "algebraic_residual": residual}
    return SolutionField(U.shape, (h, h), U.ravel(), meta)


# --- heat equation --------------------------------------------------------------


def _second_difference(n: int, periodic: bool) -> sp.csc_matrix:
    """Tridiagonal (-1, 2, -1) on n unknowns, wrapped when periodic."""
    K = sp.diags([-np.ones(n - 1), 2 * np.ones(n), -np.ones(n - 1)], [-1, 0, 1], format="lil")
    if periodic:
        K[0, n - 1] = -1
        K[n - 1, 0] = -1
    return K.tocsc()


def solve_heat_1d(
    ic,
    bc: str = "dirichlet",
    kappa: float = 1.0,
    scheme: SchemeDescriptor | None = None,
    t_end: float = 0.1,
    bc_values: tuple[float, float] = (0.0, 0.0),
    length: float = 1.0,
    record_every: int = 1,
) -> SolutionSeries:
    """Integrate u_t = kappa u_xx on [0, length].

    Dirichlet grids carry nodes 0..n including both ends; periodic grids
    carry n nodes x_j = j h.  The run stops early, keeping the offending
    frame, if the solution stops being finite.
    """
    if scheme is None:
        raise ValueError("a scheme descriptor is required")
    name = scheme.time_scheme
    if name not in ("ftcs-explicit", "implicit-euler", "crank-nicolson"):
        raise ValueError(f"heat solver does not support {name!r}")
    if bc not in ("dirichlet", "periodic"):
        raise ValueError("bc must be 'dirichlet' or 'periodic'")
    periodic = bc == "periodic"
    h, dt = scheme.h_min, float(scheme.dt)
    n = int(round(length / h))
    if abs(n * h - length) > 1e-9 * length:
        raise ValueError("h must divide the domain length")
    x = np.arange(n) * h if periodic else np.linspace(0.0, length, n + 1)
    u = _grid_values(ic, x)
    if not periodic:
        u[0], u[-1] = bc_values
    r = kappa * dt / h**2
    steps = _steps(t_end, dt)

    interior = slice(None) if periodic else slice(1, -1)
    m = n if periodic else n - 1
    K = _second_difference(m, periodic)
    boundary = np.zeros(m)
    if not periodic:
        boundary[0], boundary[-1] = bc_values
    eye = sp.identity(m, format="csc")
    if name == "implicit-euler":
        lu = spla.splu((eye + r * K).tocsc())
    elif name == "crank-nicolson":
        lu = spla.splu((eye + 0.5 * r * K).tocsc())
        explicit_half = (eye - 0.5 * r * K).tocsc()

    times, frames = [0.0], [u.copy()]
    terminated = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            v = u[interior]
            if name == "ftcs-explicit":
                if periodic:
                    new = v + r * (np.roll(v, -1) - 2.0 * v + np.roll(v, 1))
                else:
                    new = u[1:-1] + r * (u[2:] - 2.0 * u[1:-1] + u[:-2])
            elif name == "implicit-euler":
                new = lu.solve(v + r * boundary)
            else:
                new = lu.solve(explicit_half @ v + r * boundary)
            u = u.copy()
            u[interior] = new
            finite = bool(np.all(np.isfinite(u)))
            if k % record_every == 0 or k == steps or not finite:
                times.append(k * dt)
                frames.append(u.copy())
            if not finite:
                terminated = k * dt
                break

    meta = {
        "scheme": name,
        "kappa": kappa,
        "dt": dt,
        "h": h,
        "bc": bc,
        "cfl_number": r,
        "steps": steps,
    }
    if terminated is not None:
        meta["terminated"] = "non-finite"
        meta["terminated_at"] = terminated
    fields = tuple(SolutionField((len(f),), (h,), f, {"t": t}) for t, f in zip(times, frames))
    return SolutionSeries(tuple(times), fields, meta)


def heat_eigenvalue(k: int, h: float) -> float:
    """k-th eigenvalue of the discrete operator -D2 with Dirichlet ends on [0, 1]."""
    return 4.0 / h**2 * math.sin(k * math.pi * h / 2.0) ** 2


# --- stiff linear system --------------------------------------------------------


def solve_stiff_linear(
    lambda_fast: float,
    lambda_slow: float,
    x0: Sequence[float],
    scheme: str,
    dt: float,
    t_end: float,
) -> SolutionSeries:
    """Integrate x' = diag(lambda_fast, lambda_slow) x; metadata carries the stiffness ratio."""
    if not (lambda_fast < 0 and lambda_slow < 0):
        raise ValueError("both eigenvalues must be negative")
    name = normalise_scheme(scheme)
    lam = np.array([lambda_fast, lambda_slow], dtype=np.float64)
    z = lam * dt
    steps = _steps(t_end, dt)
    x = np.array(x0, dtype=np.float64)
    if x.shape != (2,):
        raise ValueError("x0 must have two components")

    if name == "rk4-explicit":
        growth = 1 + z + z**2 / 2 + z**3 / 6 + z**4 / 24
    elif name == "explicit-euler":
        growth = 1 + z
    elif name in ("implicit-euler", "bdf2"):
        growth = 1 / (1 - z)
    else:
        raise ValueError(f"stiff solver does not support {name!r}")

    times, frames = [0.0], [x.copy()]
    prev = None
    terminated = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            if name == "bdf2" and prev is not None:
                new = (4 * x - prev) / (3 - 2 * z)
            else:
                new = growth * x  # bdf2 starts with one implicit Euler step
            prev, x = x, new
            times.append(k * dt)
            frames.append(x.copy())
            if not np.all(np.isfinite(x)):
                terminated = k * dt
                break
    meta = {
        "scheme": name,
        "dt": dt,
        "lambda_fast": lambda_fast,
        "lambda_slow": lambda_slow,
        "stiffness_ratio": abs(lambda_fast / lambda_slow),
    }
    if terminated is not None:
        meta["terminated"] = "non-finite"
        meta["terminated_at"] = terminated
    fields = tuple(SolutionField((2,), (1.0,), f, {"t": t}) for t, f in zip(times, frames))
    return SolutionSeries(tuple(times), fields, meta)


# --- Burgers ------------------------------------------------------------------


def solve_burgers_lf(ic, h: float, dt: float, t_end: float, check_cfl: bool = True) -> SolutionSeries:
    """Lax-Friedrichs for u_t + (u^2/2)_x = 0 on a periodic grid of spacing h over [0, 1)."""
    n = int(round(1.0 / h))
    x = np.arange(n) * h
    u = _grid_values(ic, x)
    cfl = float(np.max(np.abs(u))) * dt / h if u.size else 0.0
    if check_cfl and cfl > 1.0:
        raise CFLViolation(cfl)
    steps = _steps(t_end, dt)
    times, frames = [0.0], [u.copy()]
    terminated = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(1, steps + 1):
            f = 0.5 * u * u
            up, um = np.roll(u, -1), np.roll(u, 1)
            u = 0.5 * (up + um) - dt / (2 * h) * (np.roll(f, -1) - np.roll(f, 1))
            times.append(k * dt)
            frames.append(u.copy())
            if not np.all(np.isfinite(u)):
                terminated = k * dt
                break
    meta = {"scheme": "lax-friedrichs", "dt": dt, "h": h, "cfl_number": cfl, "bc": "periodic"}
    if terminated is not None:
        meta["terminated"] = "non-finite"
        meta["terminated_at"] = terminated
    fields = tuple(SolutionField((n,), (h,), f, {"t": t}) for t, f in zip(times, frames))
    return SolutionSeries(tuple(times), fields, meta)


# --- wave equation ------------------------------------------------------------


def solve_wave_1d(ic, c: float, h: float, dt: float, t_end: float, velocity=0.0) -> SolutionSeries:
    """Leapfrog for u_tt = c^2 u_xx on [0, 1] with fixed ends."""
    n = int(round(1.0 / h))
    x = np.linspace(0.0, 1.0, n + 1)
    u = _grid_values(ic, x)
    v = _grid_values(velocity, x)
    u[0] = u[-1] = 0.0
    s2 = (c * dt / h) ** 2
    steps = _steps(t_end, dt)

    def lap(w):
        out = np.zeros_like(w)
        out[1:-1] = w[2:] - 2 * w[1:-1] + w[:-2]
        return out

    prev = u.copy()
    cur = u + dt * v + 0.5 * s2 * lap(u)
    cur[0] = cur[-1] = 0.0
    times, frames = [0.0, dt], [prev.copy(), cur.copy()]
    terminated = None
    with np.errstate(over="ignore", invalid="ignore"):
        for k in range(2, steps + 1):
            prev, cur = cur, 2 * cur - prev + s2 * lap(cur)
            times.append(k * dt)
            frames.append(cur.copy())
            if not np.all(np.isfinite(cur)):
                terminated = k * dt
                break
    meta = {"scheme": "leapfrog", "dt": dt, "h": h, "c": c, "cfl_number": abs(c) * dt / h}
    if terminated is not None:
        meta["terminated"] = "non-finite"
        meta["terminated_at"] = terminated
    fields = tuple(SolutionField((n + 1,), (h,), f, {"t": t}) for t, f in zip(times, frames))
    return SolutionSeries(tuple(times), fields, meta)


# --- pitchfork normal form -----------------------------------------------------


def solve_pitchfork(theta: float, x0: float, dt: float = 0.05, t_end: float = 200.0) -> float:
    """Terminal state of x' = theta x - x^3 by explicit Euler."""
    if dt > 0.1 / max(1.0, abs(theta)):
        raise ValueError("dt too large for a stable explicit step")
    x = float(x0)
    for _ in range(_steps(t_end, dt)):
        x += dt * (theta * x - x**3)
    return x


# --- convergence studies --------------------------------------------------------

MANUFACTURED_POISSON = "sin(pi*x)*sin(pi*y)"


def fit_convergence_order(hs: Sequence[float], errors: Sequence[float]) -> float:
    """Least-squares slope of log(error) against log(h)."""
    hs = np.asarray(hs, dtype=np.float64)
    errors = np.asarray(errors, dtype=np.float64)
    if hs.size < 2 or hs.size != errors.size:
        raise ValueError("need at least two matching (h, error) pairs")
    if np.any(errors <= 0):
        warnings.warn("non-positive error values; order undefined, reporting 0", RuntimeWarning, stacklevel=2)
        return 0.0
    logs = np.log(errors)
    if np.ptp(logs) < 1e-12:
        warnings.warn("errors do not change with h; fitted order is 0", RuntimeWarning, stacklevel=2)
        return 0.0
    slope = np.polyfit(np.log(hs), logs, 1)[0]
    return float(slope)


def discrete_l2(values: np.ndarray, cell_volume: float) -> float:
    return math.sqrt(cell_volume * math.fsum(float(v) * float(v) for v in np.ravel(values)))


def poisson_manufactured_error(n: int, exact: str = MANUFACTURED_POISSON) -> tuple[float, SolutionField]:
    from .expressions import manufacture_poisson

    u_exact, forcing = manufacture_poisson(exact)
    field_ = solve_poisson_2d(forcing, bc=u_exact, n=n)
    h = 1.0 / n
    x = np.linspace(0.0, 1.0, n + 1)
    X, Y = np.meshgrid(x, x, indexing="ij")
    err = field_.array - u_exact(X, Y)
    return discrete_l2(err, h * h), field_


def heat_time_error(steps: int, n: int = 64, kappa: float = 1.0, t_end: float = 0.1) -> float:
    """Implicit-Euler error against the exact semi-discrete decay of the first sine mode.

    Using the semi-discrete solution isolates the time-discretisation error.
    """
    h = 1.0 / n
    dt = t_end / steps
    scheme = SchemeDescriptor("implicit-euler", h=h, dt=dt)
    series = solve_heat_1d(lambda x: np.sin(np.pi * x), "dirichlet", kappa, scheme, t_end, record_every=steps)
    x = np.linspace(0.0, 1.0, n + 1)
    exact = np.sin(np.pi * x) * math.exp(-kappa * heat_eigenvalue(1, h) * t_end)
    return discrete_l2(series.final.array - exact, h)


def convergence_errors(problem: str, sizes: Sequence[int]) -> tuple[list[float], list[float]]:
    """(h values, errors) for a manufactured study; sizes are grid intervals or step counts."""
    if len(sizes) < 3:
        raise ValueError("at least three sizes are needed")
    if problem == "poisson":
        return [1.0 / n for n in sizes], [poisson_manufactured_error(n)[0] for n in sizes]
    if problem == "heat":
        t_end = 0.1
        return [t_end / s for s in sizes], [heat_time_error(s, t_end=t_end) for s in sizes]
    raise ValueError(f"no manufactured study for {problem!r}")


def measure_convergence_order(problem: str, sizes: Sequence[int]) -> float:
    return fit_convergence_order(*convergence_errors(problem, sizes))


