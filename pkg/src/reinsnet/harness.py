"""Scenario pipeline and the two experiment families.

A scenario solves contract liabilities under a shock, clears the resulting
firm-to-firm liabilities and records returns, defaults and uncovered primary
claims.  ``perturbation_study`` measures how far results move when inputs are
jittered by ``U[1−δ, 1+δ]``; ``compare_systems`` runs XL and proportional
versions of one market on the same shocks.

Randomness comes from :func:`synthesis.substream`, keyed by purpose and
index, so results do not depend on execution order or worker count.
"""
from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import clearing, diagnostics
from .liabilities import Status, solve
from .network import (Firm, LineGraphSystem, ReinsuranceNetwork, build_line_graph,
                      liabilities_matrix, net_liabilities)
from .synthesis import (SynthesisConfig, build_proportional_network, build_xl_network,
                        calibrate_firms, cessions_of, generate_shock, layering_from_network,
                        substream)

FAMILY_WEIGHTS = {"1-in-100": 0.6, "1-in-250": 0.4}
RETURN_BIN_WIDTH = 0.05
#: Decade bins for absolute changes: exact zeros, then [10^k, 10^(k+1)) for k in this range.
CHANGE_DECADES = (-12, 2)


@dataclass(frozen=True)
class PerturbationConfig:
    delta: float
    samples: int = 50
    seed: int = 0
    shock: np.ndarray | None = None

    def __post_init__(self):
        if not 0 <= self.delta < 1:
            raise ValueError(f"delta must lie in [0, 1), got {self.delta}")
        if self.samples < 1:
            raise ValueError("samples must be at least 1")


@dataclass(frozen=True)
class Prepared:
    """A network's line graph and shock-independent radii, computed once."""

    net: ReinsuranceNetwork
    system: LineGraphSystem
    rho_full: float
    rho_infinite_caps: float


def prepare(net: ReinsuranceNetwork) -> Prepared:
    system = build_line_graph(net)
    rho = diagnostics.spectral_radius(system.rate_matrix())
    return Prepared(net, system, rho, diagnostics.infinite_cap_radius(system))


@dataclass
class ScenarioReport:
    returns: np.ndarray
    defaults: np.ndarray
    n_defaults: int
    uncovered_primary: float
    equity_delta: np.ndarray
    end_equity: np.ndarray
    status: str
    algorithm: int
    iterations: int
    failed: bool = False
    diagnosis: dict | None = None
    clearing_rounds: int = 0
    net_liability_sum: float = 0.0
    total_liabilities: float = 0.0
    multiplicity_warning: bool = False
    notes: tuple = field(default=())


def run_scenario(net, sh=None, recovery: float = 1.0, shock_in_clearing: bool = True,
                 omega_limit: int = diagnostics.DEFAULT_OMEGA_LIMIT) -> ScenarioReport:
    """Solve, clear and score one shock.  ``net`` may be a :class:`Prepared`."""
    prep = net if isinstance(net, Prepared) else prepare(net)
    net = prep.net
    sh = net.shock if sh is None else np.asarray(sh, dtype=float)
    sys = prep.system.with_shock(sh)
    sol = solve(sys, rho_full=prep.rho_full, rho_infinite_caps=prep.rho_infinite_caps,
                omega_limit=omega_limit)
    e0 = net.equities
    if sol.status is not Status.CONVERGED:
        nan = np.full(net.n, np.nan)
        diag = diagnostics.omega_certificate(sys, omega_limit).to_dict()
        return ScenarioReport(nan, np.zeros(net.n, dtype=bool), 0, math.nan, nan, nan,
                              sol.status.value, sol.algorithm, sol.iterations, True, diag,
                              notes=sol.notes)
    L = liabilities_matrix(sys, sol.ell)
    res = clearing.clear(L, e0, sh, recovery=recovery, shock_in_clearing=shock_in_clearing)
    return ScenarioReport(
        returns=res.returns,
        defaults=res.defaults,
        n_defaults=res.n_defaults,
        uncovered_primary=clearing.uncovered_primary_liabilities(res, net.is_primary),
        equity_delta=res.end_equity - e0,
        end_equity=res.end_equity,
        status=sol.status.value,
        algorithm=sol.algorithm,
        iterations=sol.iterations,
        clearing_rounds=res.rounds,
        net_liability_sum=float(net_liabilities(L).sum()),
        total_liabilities=float(L.sum()),
        multiplicity_warning=sol.multiplicity_warning,
        notes=sol.notes,
    )


def _map(fn, items, workers):
    if workers and workers > 1:
        with ProcessPoolExecutor(workers) as pool:
            return list(pool.map(fn, items))
    return [fn(x) for x in items]


# --- perturbation --------------------------------------------------------------


def perturb_network(net: ReinsuranceNetwork, layering, delta: float, rng,
                    config: SynthesisConfig = SynthesisConfig()) -> ReinsuranceNetwork:
    """Jitter premiums ceded, outside premiums and equity, then rebuild the contracts.

    XL networks keep ``layering`` (reinsurer id, ceding id) -> layer fixed.
    Draw order is cessions (contract order), then per firm primary premiums,
    foreign premiums and equity.
    """
    cessions = cessions_of(net)
    lo, hi = 1.0 - delta, 1.0 + delta
    f_ces = rng.uniform(lo, hi, size=len(cessions))
    f_firm = rng.uniform(lo, hi, size=(net.n, 3))
    cessions = [type(c)(c.ceding_firm, c.reinsurer, c.premium_ceded * f)
                for c, f in zip(cessions, f_ces)]
    firms = tuple(Firm(f.id, f.role, f.equity * k[2], f.primary_premiums * k[0],
                       f.foreign_reins_premiums * k[1]) for f, k in zip(net.firms, f_firm))
    if net.kind == "xl":
        return build_xl_network(cessions, firms, config, layering, net.shock)
    if net.kind == "proportional":
        return build_proportional_network(cessions, firms, net.shock)
    raise ValueError(f"cannot rebuild a network of kind {net.kind!r}")


def _delta_key(delta):
    return int(round(delta * 1e9))


def _perturbed_scenario(args):
    net, layering, delta, seed, k, config, sh = args
    rng = substream(seed, "perturbation", _delta_key(delta), k)
    return run_scenario(perturb_network(net, layering, delta, rng, config), sh)


def change_histogram(values):
    """Counts of nonnegative changes: exact zeros, then decade bins (underflow folds into the lowest)."""
    values = np.asarray(values, dtype=float)
    values = values[np.isfinite(values)]
    lo, hi = CHANGE_DECADES
    rows = [{"bin": "0", "lower": 0.0, "upper": 0.0, "count": int((values == 0).sum())}]
    pos = values[values > 0]
    k = np.clip(np.floor(np.log10(pos)), lo, hi - 1).astype(int) if len(pos) else np.zeros(0, int)
    for d in range(lo, hi):
        rows.append({"bin": f"1e{d}", "lower": 10.0 ** d, "upper": 10.0 ** (d + 1),
                     "count": int((k == d).sum())})
    return rows


def perturbation_study(base_net: ReinsuranceNetwork, config: PerturbationConfig,
                       synth: SynthesisConfig = SynthesisConfig(), layering=None,
                       workers: int | None = None) -> dict:
    """Per-firm sensitivity of returns, equity and default status to input jitter."""
    sh = base_net.shock if config.shock is None else np.asarray(config.shock, dtype=float)
    layering = layering_from_network(base_net) if layering is None else layering
    base = run_scenario(base_net, sh)
    if base.failed:
        raise RuntimeError(f"base scenario did not solve: {base.status}; {base.diagnosis}")
    jobs = [(base_net, layering, config.delta, config.seed, k, synth, sh)
            for k in range(config.samples)]
    reports = _map(_perturbed_scenario, jobs, workers)

    n = base_net.n
    max_ret = np.zeros(n)
    max_eq = np.zeros(n)
    flipped = np.zeros(n, dtype=bool)
    failed = []
    for k, rep in enumerate(reports):
        if rep.failed:
            failed.append({"sample": k, "status": rep.status, "diagnosis": rep.diagnosis})
            continue
        dr = np.abs(rep.returns - base.returns)
        max_ret = np.fmax(max_ret, np.where(np.isnan(dr), 0.0, dr))
        max_eq = np.maximum(max_eq, np.abs(rep.end_equity - base.end_equity))
        flipped |= rep.defaults != base.defaults
    ids = base_net.firm_ids
    per_firm = [{"firm": ids[i], "role": base_net.firms[i].role.value,
                 "base_return": _num(base.returns[i]), "base_default": bool(base.defaults[i]),
                 "max_return_change": float(max_ret[i]), "max_equity_change": money(max_eq[i]),
                 "default_flipped": bool(flipped[i])} for i in range(n)]
    return {
        "delta": config.delta,
        "samples": config.samples,
        "seed": config.seed,
        "completed_samples": config.samples - len(failed),
        "failed_samples": failed,
        "base": scenario_summary(base),
        "default_flips": int(flipped.sum()),
        "flipped_firms": [ids[i] for i in np.nonzero(flipped)[0]],
        "max_return_change": float(max_ret.max(initial=0.0)),
        "max_equity_change": money(max_eq.max(initial=0.0)),
        "per_firm": per_firm,
        "return_change_histogram": change_histogram(max_ret),
        "histogram_binning": ("per-firm maximum absolute return change; bin '0' holds exact zeros, "
                              "bin '1eK' holds [10^K, 10^(K+1)), values under 1e-12 fold into "
                              "the lowest decade and values of 100 or more into the highest"),
    }


# --- XL versus proportional ----------------------------------------------------


def _paired_scenario(args):
    xl, prop, sh = args
    return run_scenario(xl, sh), run_scenario(prop, sh)


def weighted_return_histogram(returns_by_family, width: float = RETURN_BIN_WIDTH):
    """Weighted frequency of returns on fixed-width bins.

    Each family's observations share that family's weight equally, so the
    frequencies sum to 1 over defined returns.  Bin k covers [k·w, (k+1)·w).
    """
    keys, weights = [], []
    for fam, values in returns_by_family.items():
        v = np.asarray(values, dtype=float)
        v = v[np.isfinite(v)]
        if len(v) == 0:
            continue
        keys.append(np.floor(v / width).astype(np.int64))
        weights.append(np.full(len(v), FAMILY_WEIGHTS[fam] / len(v)))
    if not keys:
        return {}
    k = np.concatenate(keys)
    w = np.concatenate(weights)
    w = w / w.sum()
    out = {}
    for b in np.unique(k):
        out[int(b)] = float(w[k == b].sum())
    return out


def compare_systems(cessions, firms, config: SynthesisConfig, n_scenarios: int = 50,
                    workers: int | None = None, calibrated: bool = False) -> dict:
    """XL and proportional systems from the same cessions, run on identical shocks.

    Both share calibrated equities and outside premiums.  ``n_scenarios`` is
    per shock family.
    """
    if not calibrated:
        firms = calibrate_firms(firms, cessions, config)
    xl = prepare(build_xl_network(cessions, firms, config))
    prop = prepare(build_proportional_network(cessions, firms))
    jobs, labels = [], []
    for fi, (fam, agg) in enumerate(config.shock_aggregates.items()):
        for i in range(n_scenarios):
            sh = generate_shock(firms, agg, substream(config.seed, "shock", fi, i)) if agg > 0 \
                else np.zeros(len(firms))
            jobs.append((xl, prop, sh))
            labels.append((fam, i))
    results = _map(_paired_scenario, jobs, workers)

    paired = []
    rets = {"xl": {f: [] for f in FAMILY_WEIGHTS}, "proportional": {f: [] for f in FAMILY_WEIGHTS}}
    diff_sum = np.zeros(len(firms))
    diff_w = np.zeros(len(firms))
    ge, pairs = 0, 0
    failures = []
    for (fam, i), (rx, rp) in zip(labels, results):
        paired.append({
            "family": fam, "scenario": i,
            "xl_status": rx.status, "proportional_status": rp.status,
            "xl_defaults": rx.n_defaults, "proportional_defaults": rp.n_defaults,
            "xl_uncovered_primary": money(rx.uncovered_primary),
            "proportional_uncovered_primary": money(rp.uncovered_primary),
            "xl_iterations": rx.iterations, "proportional_iterations": rp.iterations,
            "proportional_algorithm": rp.algorithm,
        })
        for name, rep in (("xl", rx), ("proportional", rp)):
            if rep.failed:
                failures.append({"family": fam, "scenario": i, "system": name,
                                 "status": rep.status, "diagnosis": rep.diagnosis})
            else:
                rets[name][fam].extend(rep.returns.tolist())
        if rx.failed or rp.failed:
            continue
        ok = np.isfinite(rx.returns) & np.isfinite(rp.returns)
        ge += int((rp.returns[ok] >= rx.returns[ok]).sum())
        pairs += int(ok.sum())
        w = FAMILY_WEIGHTS[fam] / n_scenarios
        diff_sum[ok] += w * (rp.returns[ok] - rx.returns[ok])
        diff_w[ok] += w
    mean_diff = np.divide(diff_sum, diff_w, out=np.full(len(firms), np.nan), where=diff_w > 0)
    ids = [f.id for f in firms]
    return {
        "n_scenarios_per_family": n_scenarios,
        "seed": config.seed,
        "family_weights": dict(FAMILY_WEIGHTS),
        "shock_aggregates": {k: money(v) for k, v in config.shock_aggregates.items()},
        "paired": paired,
        "failures": failures,
        "fraction_proportional_at_least_xl": ge / pairs if pairs else None,
        "per_firm_mean_return_difference": [
            {"firm": ids[i], "proportional_minus_xl": _num(mean_diff[i])} for i in range(len(firms))],
        "return_histograms": {name: weighted_return_histogram(r) for name, r in rets.items()},
        "return_bin_width": RETURN_BIN_WIDTH,
        "spectral_radius": {"xl": xl.rho_full, "proportional": prop.rho_full},
    }


# --- formatting helpers --------------------------------------------------------


def money(x) -> str | None:
    """Currency as a decimal string (shortest round-trip form)."""
    x = float(x)
    if math.isnan(x):
        return None
    return repr(x)


def _num(x):
    x = float(x)
    return None if math.isnan(x) else x


def scenario_summary(rep: ScenarioReport, firm_ids=None) -> dict:
    out = {
        "status": rep.status, "failed": rep.failed, "algorithm": rep.algorithm,
        "iterations": rep.iterations, "n_defaults": rep.n_defaults,
        "uncovered_primary": money(rep.uncovered_primary),
        "clearing_rounds": rep.clearing_rounds,
        "multiplicity_warning": rep.multiplicity_warning,
        "notes": list(rep.notes),
    }
    if rep.diagnosis is not None:
        out["diagnosis"] = rep.diagnosis
    if firm_ids is not None:
        out["firms"] = [{"firm": f, "return": _num(r), "default": bool(d), "end_equity": money(e)}
                        for f, r, d, e in zip(firm_ids, rep.returns, rep.defaults, rep.end_equity)]
    return out

