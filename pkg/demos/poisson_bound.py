"""Compare the true error of a Poisson solve with its computable residual bound as the grid is refined.

    python demos/poisson_bound.py
"""

import math

import numpy as np

from simjudge.audit import PoissonResidual
from simjudge.corpus import l2_error
from simjudge.solvers import fit_convergence_order, solve_poisson_2d


def forcing(X, Y):
    return 2 * math.pi**2 * np.sin(math.pi * X) * np.sin(math.pi * Y)


def main() -> None:
    hs, errors = [], []
    print("   n      error      bound   bound/error")
    for n in (16, 32, 64, 128):
        u = solve_poisson_2d(forcing, 0.0, n)
        g = np.linspace(0.0, 1.0, n + 1)
        X, Y = np.meshgrid(g, g, indexing="ij")
        err = l2_error(u.array, np.sin(math.pi * X) * np.sin(math.pi * Y), 1.0 / n**2)
        bound = PoissonResidual(forcing).evaluate(u).bound
        hs.append(1.0 / n)
        errors.append(err)
        print(f"{n:>4} {err:10.3e} {bound:10.3e} {bound / err:9.2f}")
    print(f"\nobserved order {fit_convergence_order(hs, errors):.3f}")


if __name__ == "__main__":
    main()
