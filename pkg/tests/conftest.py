import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import settings

from reinsnet.diagnostics import spectral_radius
from reinsnet.network import UNLIMITED, Contract, Firm, LineGraphSystem, ReinsuranceNetwork, Role

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=60)
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


# --- fixtures ------------------------------------------------------------------


def spiral_system(shock=5.0, cap=10.0):
    """Three firms in a 100% ring (each reinsures the previous one fully), capped."""
    return LineGraphSystem.from_edges(3, [(1, 0), (2, 1), (0, 2)], 1.0, 0.0, cap,
                                      np.array([shock, 0.0, 0.0]))


def damped_cycle_system(rate=0.99, damper=0.01, shock=10.0):
    """A and B reinsure each other at ``rate``; D takes ``damper`` of B."""
    return LineGraphSystem.from_edges(3, [(1, 0), (0, 1), (2, 1)], [rate, rate, damper], 0.0,
                                      None, np.array([shock, 0.0, 0.0]))


def multiplicity_system():
    """P cedes half of a 20 loss to A; A and B form a 100% ring whose entry deductible is exactly 10.

    Contracts in order: A covers P, B covers A (d = 10), A covers B.
    """
    return LineGraphSystem.from_edges(3, [(1, 0), (2, 1), (1, 2)], [0.5, 1.0, 1.0],
                                      [0.0, 10.0, 0.0], None, np.array([20.0, 0.0, 0.0]))


def hundred_percent_cycle(shock=1.0):
    return LineGraphSystem.from_edges(2, [(1, 0), (0, 1)], 1.0, 0.0, None, np.array([shock, 0.0]))


def random_network(rng, n_max=20, finite_caps=False, rho_max=0.95, n_min=2,
                   deductible_scale=5.0):
    """Weakly connected random network with ρ(γX) <= rho_max and column sums <= 1."""
    n = int(rng.integers(n_min, n_max + 1))
    pairs = set()
    perm = rng.permutation(n)
    for k in range(1, n):
        a, b = int(perm[k]), int(perm[rng.integers(0, k)])
        pairs.add((a, b) if rng.random() < 0.5 else (b, a))
    density = rng.uniform(0.05, 0.3)
    for i in range(n):
        for j in range(n):
            if i != j and rng.random() < density:
                pairs.add((i, j))
    pairs = sorted(pairs)
    rate = rng.uniform(0.05, 1.0, size=len(pairs))
    col = np.zeros(n)
    for (i, j), g in zip(pairs, rate):
        col[j] += g
    rate = np.array([g / max(1.0, col[j]) for (i, j), g in zip(pairs, rate)])
    sysm = LineGraphSystem.from_edges(n, pairs, rate)
    rho = spectral_radius(sysm.rate_matrix())
    if rho > rho_max:
        rate = rate * (rho_max / rho)
    shock = np.where(rng.random(n) < 0.5, rng.uniform(0, 100, size=n), 0.0)
    if shock.sum() == 0:
        shock[rng.integers(0, n)] = rng.uniform(1, 100)
    contracts = []
    for (i, j), g in zip(pairs, rate):
        d = float(rng.uniform(0, deductible_scale)) if rng.random() < 0.5 else 0.0
        c = float(rng.uniform(1, 60)) if finite_caps and rng.random() < 0.7 else UNLIMITED
        contracts.append(Contract(i, j, float(g), d, c))
    firms = tuple(Firm(f"F{i:02d}", Role.PRIMARY, 100.0) for i in range(n))
    return ReinsuranceNetwork(firms, tuple(contracts), shock)


def random_xl_system(rng, n_max=5):
    """Small layered system: per-layer rates sum to at most 1, so ρ(γX) may exceed 1.

    Most contracts are capped at their share of the layer width; the rest are unlimited.
    """
    n = int(rng.integers(2, n_max + 1))
    edges, gamma, d, c, layer = [], [], [], [], []
    for j in range(n):
        others = [i for i in range(n) if i != j]
        attach = float(rng.uniform(0, 20))
        for lay in range(int(rng.integers(0, 3))):
            k = int(rng.integers(1, min(2, len(others)) + 1))
            shares = rng.dirichlet(np.ones(k)) * rng.uniform(0.5, 1.0)
            width = float(rng.uniform(5, 40))
            for i, g in zip(rng.choice(others, size=k, replace=False), shares):
                edges.append((int(i), j))
                gamma.append(float(g))
                d.append(attach)
                c.append(g * width if rng.random() < 0.8 else None)
                layer.append(lay)
            attach += width
    shock = np.where(rng.random(n) < 0.6, rng.uniform(0, 60, n), 0.0)
    return LineGraphSystem.from_edges(n, edges, gamma, d, c, shock, layer)


def random_system(rng, **kw):
    from reinsnet.network import build_line_graph
    return build_line_graph(random_network(rng, **kw))


def system_args(sys):
    """Plain-Python view used by the oracles."""
    return (sys.n, sys.edges, list(sys.gamma), list(sys.d), list(sys.c), list(sys.firm_shock))


@pytest.fixture
def spiral():
    return spiral_system()


@pytest.fixture
def damped():
    return damped_cycle_system()
