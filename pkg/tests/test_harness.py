import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from reinsnet.harness import (PerturbationConfig, change_histogram, compare_systems,
                              perturb_network, perturbation_study, prepare, run_scenario,
                              weighted_return_histogram)
from reinsnet.network import Contract, Firm, ReinsuranceNetwork, Role
from reinsnet.synthesis import (SynthesisConfig, build_xl_network, calibrate_firms, core_ids,
                                core_periphery_cessions, infer_firms, layering_from_network,
                                substream)


def spiral_network(equity=50.0):
    firms = tuple(Firm(x, Role.PRIMARY, equity, 100.0) for x in "ABC")
    contracts = (Contract(1, 0, 1.0, 0.0, 10.0), Contract(2, 1, 1.0, 0.0, 10.0),
                 Contract(0, 2, 1.0, 0.0, 10.0))
    return ReinsuranceNetwork(firms, contracts, np.array([5.0, 0.0, 0.0]))


def small_market(seed=0, n=40, core=8):
    ces = core_periphery_cessions(n, core, seed=seed)
    cfg = SynthesisConfig(seed=seed)
    firms = calibrate_firms(infer_firms(ces, core_ids(ces)), ces, cfg)
    return ces, firms, cfg


def test_zero_shock_changes_nothing():
    rep = run_scenario(spiral_network(), np.zeros(3))
    assert rep.n_defaults == 0 and rep.uncovered_primary == 0.0
    assert rep.returns.tolist() == [1.0, 1.0, 1.0]
    assert not rep.equity_delta.any()


def test_spiral_pipeline():
    # every firm pays 10 and receives 10; only firm 0's 5 shock is left
    rep = run_scenario(spiral_network(50.0))
    assert rep.status == "converged" and not rep.failed
    assert rep.returns.tolist() == [(50 - 5) / 50, 1.0, 1.0]
    assert rep.net_liability_sum == 0.0 and rep.total_liabilities == 30.0


def test_failed_scenario_carries_diagnosis():
    firms = tuple(Firm(x, Role.PRIMARY, 10.0) for x in "AB")
    net = ReinsuranceNetwork(firms, (Contract(1, 0, 1.0), Contract(0, 1, 1.0)), np.array([1.0, 0]))
    rep = run_scenario(net)
    assert rep.failed and rep.status == "diverging"
    assert rep.diagnosis["hundred_percent_cycle"] is True
    assert np.isnan(rep.returns).all()


def test_prepared_matches_plain():
    net = spiral_network()
    a, b = run_scenario(net), run_scenario(prepare(net))
    assert a.returns.tolist() == b.returns.tolist()


def test_delta_zero_rebuild_is_identity():
    ces, firms, cfg = small_market()
    net = build_xl_network(ces, firms, cfg)
    again = perturb_network(net, layering_from_network(net), 0.0, substream(0, "t"), cfg)
    assert again.contracts == net.contracts and again.firms == net.firms


@settings(max_examples=15)
@given(st.integers(0, 2**32 - 1), st.sampled_from([0.025, 0.1, 0.2]))
def test_perturbation_stays_in_range_and_keeps_layers(seed, delta):
    ces, firms, cfg = small_market()
    net = build_xl_network(ces, firms, cfg)
    lay = layering_from_network(net)
    new = perturb_network(net, lay, delta, substream(seed, "t"), cfg)
    assert layering_from_network(new) == lay
    for a, b in zip(net.firms, new.firms):
        for x, y in ((a.equity, b.equity), (a.primary_premiums, b.primary_premiums)):
            assert (1 - delta) * x - 1e-6 <= y <= (1 + delta) * x + 1e-6
    old = {k.key: k.premium for k in net.contracts}
    for k in new.contracts:
        assert (1 - delta) * old[k.key] * (1 - 1e-12) <= k.premium <= (1 + delta) * old[k.key] * (1 + 1e-12)


def test_perturbation_study_delta_zero():
    ces, firms, cfg = small_market()
    net = build_xl_network(ces, firms, cfg)
    sh = np.where(net.is_primary, 0.4 * np.array([f.primary_premiums for f in net.firms]), 0.0)
    out = perturbation_study(net, PerturbationConfig(0.0, samples=5, seed=1, shock=sh), cfg)
    assert out["completed_samples"] == 5
    assert out["max_return_change"] == 0.0 and out["default_flips"] == 0
    assert out["return_change_histogram"][0]["count"] == net.n


def test_perturbation_study_is_deterministic():
    ces, firms, cfg = small_market()
    net = build_xl_network(ces, firms, cfg)
    sh = np.where(net.is_primary, 0.4 * np.array([f.primary_premiums for f in net.firms]), 0.0)
    conf = PerturbationConfig(0.1, samples=6, seed=3, shock=sh)
    a = perturbation_study(net, conf, cfg)
    assert a == perturbation_study(net, conf, cfg)
    assert a == perturbation_study(net, conf, cfg, workers=2)
    assert a["max_return_change"] > 0


def test_change_histogram_bins():
    rows = change_histogram([0.0, 0.0, 3e-13, 0.05, 0.5, 5.0, 500.0, np.nan])
    counts = {r["bin"]: r["count"] for r in rows}
    assert counts["0"] == 2 and counts["1e-12"] == 1
    assert counts["1e-2"] == 1 and counts["1e-1"] == 1 and counts["1e0"] == 1 and counts["1e1"] == 1
    assert sum(counts.values()) == 7


def test_weighted_histogram():
    h = weighted_return_histogram({"1-in-100": [0.01, 0.02], "1-in-250": [0.5]})
    assert h == {0: pytest.approx(0.6), 10: pytest.approx(0.4)}
    assert sum(weighted_return_histogram({"1-in-100": [0.3, np.nan, 1.1]}).values()) == pytest.approx(1.0)


def test_compare_with_zero_shocks():
    ces, firms, _ = small_market()
    cfg = SynthesisConfig(shock_1_in_100=0.0, shock_1_in_250=0.0)
    out = compare_systems(ces, firms, cfg, n_scenarios=3, calibrated=True)
    assert not out["failures"]
    assert all(p["xl_defaults"] == 0 == p["proportional_defaults"] for p in out["paired"])
    assert out["fraction_proportional_at_least_xl"] == 1.0


def test_compare_proportional_needs_one_solve():
    ces, firms, cfg = small_market(seed=4)
    out = compare_systems(ces, firms, cfg, n_scenarios=4, calibrated=True)
    assert len(out["paired"]) == 8
    assert all(p["proportional_algorithm"] == 2 and p["proportional_iterations"] == 1
               for p in out["paired"] if p["proportional_status"] == "converged")
    assert out["spectral_radius"]["proportional"] < 1
    again = compare_systems(ces, firms, cfg, n_scenarios=4, calibrated=True, workers=2)
    assert out == again
