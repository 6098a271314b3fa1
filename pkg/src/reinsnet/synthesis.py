"""Turn premium cession data into XL or proportional reinsurance networks.

Tower arithmetic for a firm ceding total premium P (defaults): coverage limit
``P / 0.1``, deductible ``limit / 4``, split into equal-limit layers stacked
from the deductible up.  Reinsurers are packed into layers by premium so the
top layer receives about 20% of the ceded premium; within a layer each
reinsurer's rate is its share of that layer's premium.
"""
from __future__ import annotations

import csv
import dataclasses
import math
import zlib
from dataclasses import dataclass
from decimal import Decimal, InvalidOperation

import numpy as np
import yaml

from .network import UNLIMITED, Contract, Firm, ReinsuranceNetwork, Role

CESSION_HEADER = ("ceding_firm", "reinsurer", "premium_ceded")


class CessionFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


class SynthesisError(ValueError):
    pass


@dataclass(frozen=True)
class CessionRecord:
    ceding_firm: str
    reinsurer: str
    premium_ceded: float

    def __post_init__(self):
        if self.ceding_firm == self.reinsurer:
            raise ValueError(f"firm {self.ceding_firm} cannot cede to itself")
        if not self.premium_ceded > 0:
            raise ValueError(f"premium ceded must be positive, got {self.premium_ceded}")


@dataclass(frozen=True)
class SynthesisConfig:
    premium_to_limit: float = 0.1
    limit_to_deductible: float = 4.0
    top_layer_premium_share: float = 0.2
    n_layers: int = 2
    primary_cede_ratio_bounds: tuple[float, float] = (0.05, 0.5)
    reinsurer_cede_ratio_bounds: tuple[float, float] = (0.1, 0.3)
    leverage_bounds: tuple[float, float] = (0.7, 2.0)
    shock_1_in_100: float = 215.2e9
    shock_1_in_250: float = 290.6e9
    seed: int = 0

    def __post_init__(self):
        for name in ("primary_cede_ratio_bounds", "reinsurer_cede_ratio_bounds", "leverage_bounds"):
            lo, hi = (float(x) for x in getattr(self, name))
            if not 0 < lo <= hi:
                raise ConfigError(f"{name} must satisfy 0 < low <= high, got ({lo}, {hi})")
            object.__setattr__(self, name, (lo, hi))
        for name in ("premium_to_limit", "top_layer_premium_share"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {v}")
        if not self.limit_to_deductible > 0:
            raise ConfigError(f"limit_to_deductible must be positive, got {self.limit_to_deductible}")
        if int(self.n_layers) != self.n_layers or self.n_layers < 1:
            raise ConfigError(f"n_layers must be a positive integer, got {self.n_layers}")
        if self.shock_1_in_100 < 0 or self.shock_1_in_250 < 0:
            raise ConfigError("shock aggregates must be nonnegative")

    @property
    def shock_aggregates(self) -> dict[str, float]:
        return {"1-in-100": self.shock_1_in_100, "1-in-250": self.shock_1_in_250}

    def to_dict(self):
        return dataclasses.asdict(self)


def load_config(path) -> SynthesisConfig:
    """Read a flat YAML mapping; every field of :class:`SynthesisConfig` must be present."""
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh)
    return config_from_mapping(raw)


def config_from_mapping(raw) -> SynthesisConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a key-value mapping")
    names = [f.name for f in dataclasses.fields(SynthesisConfig)]
    missing = [k for k in names if k not in raw]
    if missing:
        raise ConfigError(f"config is missing key(s): {', '.join(missing)}")
    unknown = sorted(set(raw) - set(names))
    if unknown:
        raise ConfigError(f"config has unknown key(s): {', '.join(unknown)}")
    try:
        return SynthesisConfig(**{k: raw[k] for k in names})
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def write_config(config: SynthesisConfig, path) -> None:
    data = config.to_dict()
    for k, v in data.items():
        if isinstance(v, tuple):
            data[k] = list(v)
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=False)


def read_cessions(path) -> list[CessionRecord]:
    """Parse a cession CSV; malformed rows raise :class:`CessionFormatError` with the line number."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CESSION_HEADER:
            raise CessionFormatError(f"line 1: expected header {','.join(CESSION_HEADER)}, got {header}")
        for row in reader:
            line = reader.line_num
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != 3:
                raise CessionFormatError(f"line {line}: expected 3 fields, got {len(row)}")
            ceding, reins, prem = (c.strip() for c in row)
            if not ceding or not reins:
                raise CessionFormatError(f"line {line}: empty firm id")
            try:
                amount = float(Decimal(prem))
            except InvalidOperation:
                raise CessionFormatError(f"line {line}: premium {prem!r} is not a number") from None
            try:
                out.append(CessionRecord(ceding, reins, amount))
            except ValueError as exc:
                raise CessionFormatError(f"line {line}: {exc}") from None
    return out


def write_cessions(cessions, path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CESSION_HEADER)
        for c in cessions:
            w.writerow([c.ceding_firm, c.reinsurer, repr(float(c.premium_ceded))])


def infer_firms(cessions, reinsurers=()) -> tuple[Firm, ...]:
    """Firms sorted by id; those that only ever receive cessions are reinsurers.

    Ids listed in ``reinsurers`` are reinsurers regardless, which covers
    reinsurers that also retrocede.
    """
    ceding = {c.ceding_firm for c in cessions}
    ids = sorted(ceding | {c.reinsurer for c in cessions})
    forced = set(reinsurers)
    unknown = sorted(forced - set(ids))
    if unknown:
        raise SynthesisError(f"reinsurer ids not in the cession data: {', '.join(unknown)}")
    return tuple(Firm(i, Role.PRIMARY if i in ceding and i not in forced else Role.REINSURER)
                 for i in ids)


def _index(firms, cessions):
    idx = {f.id: k for k, f in enumerate(firms)}
    missing = sorted({x for c in cessions for x in (c.ceding_firm, c.reinsurer)} - set(idx))
    if missing:
        raise SynthesisError(f"cessions name firms without premium data: {', '.join(missing)}")
    return idx


def premium_flows(firms, cessions) -> tuple[np.ndarray, np.ndarray]:
    """Per firm: total premium ceded, total reinsurance premium received."""
    idx = _index(firms, cessions)
    ceded = np.zeros(len(firms))
    received = np.zeros(len(firms))
    for c in cessions:
        ceded[idx[c.ceding_firm]] += c.premium_ceded
        received[idx[c.reinsurer]] += c.premium_ceded
    return ceded, received


# --- layering ------------------------------------------------------------------


def split_layers(premiums: dict[str, float], top_share: float = 0.2):
    """Greedy two-way split: returns (bottom ids, top ids).

    Largest premiums go to the bottom layer while its total stays at or under
    ``(1 − top_share)`` of the whole; the first item that would overshoot goes
    wherever the bottom total lands closer to target (ties stay at the bottom);
    everything after it goes on top.
    """
    order = sorted(premiums, key=lambda k: (-premiums[k], k))
    if len(order) <= 1:
        return list(order), []
    target = (1.0 - top_share) * math.fsum(premiums.values())
    bottom, acc, k = [], 0.0, 0
    while k < len(order) and acc + premiums[order[k]] <= target:
        acc += premiums[order[k]]
        bottom.append(order[k])
        k += 1
    if k < len(order):
        with_item = abs(acc + premiums[order[k]] - target)
        if with_item <= abs(acc - target):
            bottom.append(order[k])
            k += 1
    return bottom, order[k:]


def assign_layers(premiums: dict[str, float], n_layers: int = 2, top_share: float = 0.2):
    """Map reinsurer id -> layer (0 = bottom).

    For more than two layers the bottom cut is made first and the remainder is
    split again, with the remaining layers sharing the top premium equally.
    """
    out = {}
    rest = dict(premiums)
    for layer in range(n_layers - 1):
        if not rest:
            break
        remaining = n_layers - layer
        share = top_share if layer == 0 else (remaining - 1) / remaining
        bottom, top = split_layers(rest, share)
        for k in bottom:
            out[k] = layer
        rest = {k: rest[k] for k in top}
    for k in rest:
        out[k] = n_layers - 1
    return out


@dataclass(frozen=True)
class Tower:
    deductible: float
    limit: float
    layer_limit: float
    attachments: tuple[float, ...]

    @property
    def coverage(self) -> float:
        """Loss level at which the tower is exhausted."""
        return self.deductible + self.limit


def tower(total_ceded: float, config: SynthesisConfig = SynthesisConfig()) -> Tower:
    limit = total_ceded / config.premium_to_limit
    deductible = limit / config.limit_to_deductible
    per = limit / config.n_layers
    return Tower(deductible, limit, per, tuple(deductible + k * per for k in range(config.n_layers)))


def layering_of(firms, cessions, config: SynthesisConfig = SynthesisConfig()):
    """``{(reinsurer id, ceding id): layer}`` for every cession pair."""
    grouped = _grouped(cessions)
    out = {}
    for ceding, prem in grouped.items():
        for r, k in assign_layers(prem, config.n_layers, config.top_layer_premium_share).items():
            out[(r, ceding)] = k
    return out


def _grouped(cessions) -> dict[str, dict[str, float]]:
    out: dict[str, dict[str, float]] = {}
    for c in cessions:
        per = out.setdefault(c.ceding_firm, {})
        per[c.reinsurer] = per.get(c.reinsurer, 0.0) + c.premium_ceded
    return out


def build_xl_network(cessions, firms, config: SynthesisConfig = SynthesisConfig(),
                     layering=None, shock=None) -> ReinsuranceNetwork:
    """XL towers per ceding firm.  ``layering`` freezes the reinsurer-to-layer assignment."""
    idx = _index(firms, cessions)
    if layering is None:
        layering = layering_of(firms, cessions, config)
    contracts = []
    for ceding, prem in sorted(_grouped(cessions).items()):
        tw = tower(math.fsum(prem.values()), config)
        in_layer: dict[int, list[float]] = {}
        for r, amount in prem.items():
            in_layer.setdefault(layering[(r, ceding)], []).append(amount)
        # exact sums keep the rebuild independent of cession order
        layer_total = {k: math.fsum(v) for k, v in in_layer.items()}
        for r, amount in sorted(prem.items()):
            k = layering[(r, ceding)]
            rate = amount / layer_total[k]
            contracts.append(Contract(idx[r], idx[ceding], rate, tw.attachments[k],
                                      rate * tw.layer_limit, k, amount))
    return ReinsuranceNetwork(tuple(firms), tuple(contracts), shock, kind="xl")


def build_proportional_network(cessions, firms, shock=None) -> ReinsuranceNetwork:
    """Rate = premium ceded / (primary + foreign reinsurance + reinsurance premiums received)."""
    idx = _index(firms, cessions)
    _, received = premium_flows(firms, cessions)
    written = np.array([f.primary_premiums + f.foreign_reins_premiums for f in firms]) + received
    contracts = []
    for ceding, prem in sorted(_grouped(cessions).items()):
        j = idx[ceding]
        if not written[j] > 0:
            raise SynthesisError(f"firm {ceding} cedes premium but has no premiums written")
        for r, amount in sorted(prem.items()):
            contracts.append(Contract(idx[r], j, amount / written[j], 0.0, UNLIMITED, 0, amount))
    return ReinsuranceNetwork(tuple(firms), tuple(contracts), shock, kind="proportional")


def cessions_of(net: ReinsuranceNetwork) -> list[CessionRecord]:
    """Recover cession records from contracts that carry their premium."""
    ids = net.firm_ids
    out = []
    for k in net.contracts:
        if k.premium is None:
            raise SynthesisError(f"contract {k.key} has no premium; network was not synthesized")
        out.append(CessionRecord(ids[k.reinsured], ids[k.reinsurer], k.premium))
    return out


def layering_from_network(net: ReinsuranceNetwork):
    ids = net.firm_ids
    return {(ids[k.reinsurer], ids[k.reinsured]): k.layer for k in net.contracts}


# --- calibration ---------------------------------------------------------------


def substream(seed: int, purpose: str, *index: int) -> np.random.Generator:
    """Independent PCG64 stream for ``(seed, purpose, index...)``.

    ``purpose`` is mapped to an integer with CRC-32 so the key is stable across
    runs and platforms.
    """
    key = (zlib.crc32(purpose.encode()),) + tuple(int(i) for i in index)
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(int(seed), spawn_key=key)))


def _ratio_bounds(firm: Firm, config: SynthesisConfig):
    if firm.role is Role.PRIMARY:
        return config.primary_cede_ratio_bounds
    return config.reinsurer_cede_ratio_bounds


def outside_premiums_from_ratios(ceded, received, ratios) -> np.ndarray:
    ceded = np.asarray(ceded, dtype=float)
    out = np.zeros_like(ceded)
    cedes = ceded > 0
    out[cedes] = ceded[cedes] / np.asarray(ratios, dtype=float)[cedes] - np.asarray(received)[cedes]
    return np.maximum(out, 0.0)


def sample_outside_premiums(firms, cessions, config: SynthesisConfig, rng) -> np.ndarray:
    """Premiums written outside the network, backed out of a sampled cede ratio.

    Primary insurers' outside premiums are primary premiums; reinsurers' are
    foreign reinsurance premiums.  Firms that cede nothing get 0.
    """
    ceded, received = premium_flows(firms, cessions)
    lo = np.array([_ratio_bounds(f, config)[0] for f in firms])
    hi = np.array([_ratio_bounds(f, config)[1] for f in firms])
    ratios = rng.uniform(lo, hi)
    return outside_premiums_from_ratios(ceded, received, ratios)


def net_written_premiums(outside, ceded, received) -> np.ndarray:
    return np.maximum(np.asarray(outside) + np.asarray(received) - np.asarray(ceded), 0.0)


def sample_equities(net_written, config: SynthesisConfig, rng) -> np.ndarray:
    lo, hi = config.leverage_bounds
    return rng.uniform(lo, hi, size=len(net_written)) * np.asarray(net_written, dtype=float)


def calibrate_firms(firms, cessions, config: SynthesisConfig, seed: int | None = None):
    """Fill in outside premiums and equity for each firm from seeded draws."""
    seed = config.seed if seed is None else seed
    ceded, received = premium_flows(firms, cessions)
    outside = sample_outside_premiums(firms, cessions, config, substream(seed, "outside-premiums"))
    nwp = net_written_premiums(outside, ceded, received)
    equity = sample_equities(nwp, config, substream(seed, "equity"))
    out = []
    for f, o, e in zip(firms, outside, equity):
        primary = float(o) if f.role is Role.PRIMARY else 0.0
        foreign = 0.0 if f.role is Role.PRIMARY else float(o)
        out.append(Firm(f.id, f.role, float(e), primary, foreign))
    return tuple(out)


def generate_shock(firms, aggregate: float, rng, max_redraws: int = 100) -> np.ndarray:
    """Catastrophe loss spread over primary insurers in proportion to uniform draws.

    Firm i draws ``U[0, primary premiums_i]``; reinsurers get nothing.
    """
    size = np.array([f.primary_premiums if f.role is Role.PRIMARY else 0.0 for f in firms])
    if not (size > 0).any():
        raise SynthesisError("no primary insurer has positive primary premiums")
    for _ in range(max_redraws):
        u = rng.uniform(0.0, 1.0, size=len(size)) * size
        total = u.sum()
        if total > 0:
            return aggregate * u / total
    raise SynthesisError("shock draws were all zero")


# --- synthetic data ------------------------------------------------------------


def core_ids(cessions, prefix: str = "R") -> list[str]:
    return sorted({c.reinsurer for c in cessions if c.reinsurer.startswith(prefix)})


def core_periphery_cessions(n_firms: int = 100, n_core: int = 15, seed: int = 0,
                            links_per_firm: tuple[int, int] = (2, 6),
                            retro_links: tuple[int, int] = (1, 3),
                            mean_premium: float = 1e9) -> list[CessionRecord]:
    """Stand-in for statutory cession data: periphery primaries cede to a reinsurer core.

    Core reinsurers retrocede among themselves, which creates cycles.  Core
    firm ``k`` has popularity weight ``1/(k+1)`` so premiums concentrate on a
    few large reinsurers.
    """
    if not 2 <= n_core < n_firms:
        raise ValueError("need 2 <= n_core < n_firms")
    rng = substream(seed, "core-periphery")
    width = len(str(n_firms - 1))
    core = [f"R{k:0{width}d}" for k in range(n_core)]
    periphery = [f"P{k:0{width}d}" for k in range(n_firms - n_core)]
    weight = 1.0 / np.arange(1, n_core + 1)
    out = []
    for name in periphery:
        k = int(rng.integers(links_per_firm[0], links_per_firm[1] + 1))
        picks = rng.choice(n_core, size=min(k, n_core), replace=False, p=weight / weight.sum())
        size = mean_premium * rng.lognormal(0.0, 1.0)
        shares = rng.dirichlet(np.ones(len(picks)))
        for r, s in zip(sorted(picks.tolist()), shares):
            out.append(CessionRecord(name, core[r], float(size * s)))
    received = {r: 0.0 for r in core}
    for c in out:
        received[c.reinsurer] += c.premium_ceded
    for i, name in enumerate(core):
        others = [j for j in range(n_core) if j != i]
        k = int(rng.integers(retro_links[0], retro_links[1] + 1))
        p = weight[others] / weight[others].sum()
        picks = rng.choice(others, size=min(k, len(others)), replace=False, p=p)
        total = received[name] * rng.uniform(0.05, 0.15)
        if total <= 0:
            total = mean_premium * 0.1
        shares = rng.dirichlet(np.ones(len(picks)))
        for r, s in zip(sorted(picks.tolist()), shares):
            out.append(CessionRecord(name, core[r], float(total * s)))
    return out
