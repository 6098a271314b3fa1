"""The three small structures that show how contract cycles behave.

A capped 100% ring passes a shock around until every cap binds; a 99% ring with
a 1% damper converges slowly but to a finite value; an uncapped 100% ring diverges.
"""
import numpy as np

from reinsnet.diagnostics import omega_certificate
from reinsnet.liabilities import solve, solve_fixed_point_iteration
from reinsnet.network import LineGraphSystem

STRUCTURES = {
    "capped ring": LineGraphSystem.from_edges(3, [(1, 0), (2, 1), (0, 2)], 1.0, 0.0, 10.0,
                                              np.array([5.0, 0, 0])),
    "damped ring": LineGraphSystem.from_edges(3, [(1, 0), (0, 1), (2, 1)], [0.99, 0.99, 0.01],
                                              0.0, None, np.array([10.0, 0, 0])),
    "uncapped ring": LineGraphSystem.from_edges(2, [(1, 0), (0, 1)], 1.0, 0.0, None,
                                                np.array([1.0, 0])),
}

for name, sys in STRUCTURES.items():
    report = omega_certificate(sys)
    plain = solve_fixed_point_iteration(sys)
    best = solve(sys)
    print(f"{name}: rho={report.rho_full:.4f}, certificate={report.certificate.value}")
    print(f"  fixed point iteration: {plain.status.value} after {plain.iterations} steps, "
          f"liabilities {np.round(plain.ell, 4).tolist()}")
    print(f"  auto (algorithm {best.algorithm}): {best.status.value} after {best.iterations} steps")
