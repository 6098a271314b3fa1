import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import sparse

from conftest import (damped_cycle_system, hundred_percent_cycle, random_system, random_xl_system,
                      spiral_system, system_args)
from oracles import feasible_activations_lp, free_shock_activations_lp, omega_from_states
from reinsnet.diagnostics import (Certificate, TooManyContracts, component_radii,
                                  detect_hundred_percent_cycle, enumerate_feasible_activations,
                                  infinite_cap_radius, omega_certificate, omega_matrix,
                                  spectral_radius)
from reinsnet.liabilities import solve_fixed_point_iteration, solve_with_caps
from reinsnet.network import LineGraphSystem


def complete_graph(n=3):
    edges = [(i, j) for i in range(n) for j in range(n) if i != j]
    return LineGraphSystem.from_edges(n, edges, 1.0 / (n - 1), 0.0, None, np.ones(n))


# --- spectral radius -----------------------------------------------------------


def test_radius_examples():
    assert spectral_radius(0.5 * np.eye(4)) == pytest.approx(0.5)
    assert spectral_radius(hundred_percent_cycle().rate_matrix()) == pytest.approx(1.0, abs=1e-12)
    two = LineGraphSystem.from_edges(2, [(1, 0), (0, 1)], 0.99)
    assert spectral_radius(two.rate_matrix()) == pytest.approx(0.99, rel=1e-12)


def test_radius_rejects_bad_input():
    with pytest.raises(ValueError):
        spectral_radius(np.ones((2, 3)))
    with pytest.raises(ValueError):
        spectral_radius(-np.eye(2))


def test_radius_of_empty_and_acyclic():
    assert spectral_radius(np.zeros((0, 0))) == 0.0
    assert spectral_radius(np.triu(np.ones((5, 5)), 1)) == 0.0


@pytest.mark.parametrize("k", [65, 300])
def test_large_permutation_cycle_uses_power_iteration(k):
    # a big periodic block: plain power iteration would oscillate
    P = sparse.csr_array((np.full(k, 0.7), (np.arange(k), (np.arange(k) + 1) % k)), shape=(k, k))
    assert spectral_radius(P) == pytest.approx(0.7, rel=1e-9)


@given(st.integers(0, 2**32 - 1))
def test_radius_matches_dense_eigenvalues(seed):
    rng = np.random.default_rng(seed)
    k = int(rng.integers(1, 120))
    A = rng.random((k, k)) * (rng.random((k, k)) < rng.uniform(0.01, 0.2))
    ref = np.abs(np.linalg.eigvals(A)).max()
    assert spectral_radius(A) == pytest.approx(ref, rel=1e-8, abs=1e-12)


@given(st.integers(0, 2**32 - 1))
def test_removing_edges_never_raises_radius(seed):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, n_max=15, rho_max=2.0)
    G = sys.rate_matrix().toarray()
    mask = rng.random(sys.m) < 0.6
    assert spectral_radius(mask[:, None] * G) <= spectral_radius(G) + 1e-9


def test_component_radii_reports_each_cycle():
    A = np.zeros((5, 5))
    A[0, 1] = A[1, 0] = 0.5
    A[2, 3] = A[3, 4] = A[4, 2] = 1.0
    found = sorted((round(r, 9), tuple(idx)) for r, idx in component_radii(A))
    assert found == [(0.5, (0, 1)), (1.0, (2, 3, 4))]


# --- cycle detection -----------------------------------------------------------


def test_cycle_detection():
    rep = detect_hundred_percent_cycle(hundred_percent_cycle())
    assert rep.detected and set(rep.component) == {0, 1}
    full = detect_hundred_percent_cycle(complete_graph(3))
    assert full.detected
    assert full.radius == pytest.approx(np.abs(np.linalg.eigvals(complete_graph(3).rate_matrix().toarray())).max())
    assert not detect_hundred_percent_cycle(damped_cycle_system()).detected


# --- feasible activations ------------------------------------------------------


def single(cap):
    return LineGraphSystem.from_edges(2, [(1, 0)], 0.5, 10.0, cap, np.array([5.0, 0.0]))


def test_single_contract_states():
    assert enumerate_feasible_activations(single(3.0), free_shocks=True) == {
        ((0,), (0,)), ((1,), (0,)), ((1,), (1,))}
    assert enumerate_feasible_activations(single(None), free_shocks=True) == {
        ((0,), (0,)), ((1,), (0,))}
    # with the shock held fixed the one contract sees a fixed loss
    assert enumerate_feasible_activations(single(3.0)) == {((0,), (0,))}


def test_upper_layer_needs_lower_layer_exhausted():
    # the covered firm also reinsures someone, so its loss can rise without bound
    sys = LineGraphSystem.from_edges(3, [(1, 0), (2, 0), (0, 2)], [1.0, 1.0, 0.5],
                                     [20.0, 60.0, 0.0], [40.0, 40.0, None], np.array([0, 0, 1.0]))
    states = enumerate_feasible_activations(sys)
    assert not any(B[:2] == (0, 1) for B, C in states)
    assert any(B[:2] == (1, 1) and C[:2] == (1, 0) for B, C in states)


def test_enumeration_limit():
    with pytest.raises(TooManyContracts):
        enumerate_feasible_activations(complete_graph(5), limit_m=14)


@given(st.integers(0, 2**32 - 1), st.booleans(), st.booleans())
def test_enumeration_matches_lp_oracle(seed, caps, free):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, n_max=4, finite_caps=caps, rho_max=3.0)
    if sys.m > 5:
        return
    mine = enumerate_feasible_activations(sys, free_shocks=free)
    shock = np.zeros(sys.n) if free else sys.firm_shock
    args = list(system_args(sys))
    if free:
        # a free shock is the same as an extra unbounded outside loss per firm
        ref = free_shock_activations_lp(sys)
    else:
        args[5] = list(shock)
        ref = feasible_activations_lp(*args)
    assert mine == ref
    zero = (tuple(int(x) for x in (sys.s - sys.d >= 0)),
            tuple(int(x) for x in (sys.gamma * (sys.s - sys.d) >= sys.c)))
    if not free:
        assert zero in mine
    if not caps:
        assert all(not any(C) for _, C in mine)


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_omega_matches_elementwise_max_over_states(seed, caps):
    rng = np.random.default_rng(seed)
    sys = random_system(rng, n_max=5, finite_caps=caps, rho_max=3.0)
    if sys.m > 8:
        return
    states = enumerate_feasible_activations(sys)
    ref = omega_from_states(states, sys.edges, sys.gamma)
    om = omega_matrix(sys)
    assert np.array_equal(om, ref)
    assert (om <= sys.rate_matrix().toarray()).all()


# --- certificates --------------------------------------------------------------


def test_certificate_classes():
    G = LineGraphSystem.from_edges(2, [(1, 0), (0, 1)], 0.8)
    assert omega_certificate(G).certificate is Certificate.UNIQUE_FOR_ALL_SHOCKS
    spiral = omega_certificate(spiral_system())
    assert spiral.rho_infinite_caps == 0.0
    assert spiral.certificate in (Certificate.UNIQUE_BY_OMEGA, Certificate.LEAST_AND_GREATEST)
    cyc = omega_certificate(hundred_percent_cycle())
    assert cyc.certificate is Certificate.NONE and cyc.cycle.detected
    big = omega_certificate(complete_graph(5), limit_m=14)
    assert big.omega_skipped and big.rho_omega is None


def test_certificate_by_omega_when_shock_saturates_the_cycle():
    # a 100% ring whose entry contract is capped and always saturated by the shock
    sys = LineGraphSystem.from_edges(2, [(1, 0), (0, 1)], 1.0, 0.0, [5.0, None], np.array([50.0, 0.0]))
    rep = omega_certificate(sys)
    assert rep.rho_full == pytest.approx(1.0)
    assert rep.rho_omega == 0.0 and rep.certificate is Certificate.UNIQUE_BY_OMEGA


@given(st.integers(0, 2**32 - 1), st.booleans())
def test_certified_systems_have_one_answer(seed, saturate):
    sys = random_xl_system(np.random.default_rng(seed))
    if sys.m > 10:
        return
    if saturate:
        sys = sys.with_shock(sys.firm_shock * 1e3)
    rep = omega_certificate(sys)
    assert rep.rho_omega <= rep.rho_full + 1e-9
    if rep.certificate in (Certificate.UNIQUE_FOR_ALL_SHOCKS, Certificate.UNIQUE_BY_OMEGA):
        a1, a3 = solve_fixed_point_iteration(sys), solve_with_caps(sys)
        assert a1.converged and a3.converged
        assert np.max(np.abs(a1.ell - a3.ell), initial=0) <= 1e-8 * (1 + np.abs(a1.ell).max(initial=0))


def test_infinite_cap_radius():
    sys = LineGraphSystem.from_edges(2, [(1, 0), (0, 1)], 1.0, 0.0, [5.0, None])
    assert infinite_cap_radius(sys) == 0.0
    assert infinite_cap_radius(hundred_percent_cycle()) == pytest.approx(1.0)


def test_report_serializes():
    d = omega_certificate(spiral_system()).to_dict()
    assert d["certificate"] in {c.value for c in Certificate}
    assert d["hundred_percent_cycle"] is True
