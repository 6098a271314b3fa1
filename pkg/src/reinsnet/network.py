"""Firm-level and contract-level views of a reinsurance network.

The firm-level view (:class:`ReinsuranceNetwork`) stores contracts as an edge
list keyed by ``(reinsurer, reinsured, layer)``; the n x n matrices are derived
views.  The contract-level view (:class:`LineGraphSystem`) is the line graph on
which the liability operator acts.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph

#: Sentinel for an unlimited contract.  Never substitute a large float.
UNLIMITED = math.inf

#: Tolerance on the per-layer 100% rule, relative to 1.
COLUMN_SUM_TOL = 1e-9


class Role(str, enum.Enum):
    PRIMARY = "primary-insurer"
    REINSURER = "reinsurer"


class NetworkDimensionError(ValueError):
    """Inputs whose shapes do not agree with the firm list."""


class InvalidNetworkError(ValueError):
    def __init__(self, violations):
        self.violations = list(violations)
        lines = "\n".join(f"  - {v}" for v in self.violations)
        super().__init__(f"network fails validation:\n{lines}")


@dataclass(frozen=True)
class Firm:
    id: str
    role: Role = Role.PRIMARY
    equity: float = 0.0
    primary_premiums: float = 0.0
    foreign_reins_premiums: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "role", Role(self.role))


@dataclass(frozen=True)
class Contract:
    """One reinsurance contract: ``reinsurer`` covers ``reinsured`` in ``layer``.

    ``premium`` is the ceded premium the contract was derived from, when known.
    """

    reinsurer: int
    reinsured: int
    rate: float
    deductible: float = 0.0
    cap: float = UNLIMITED
    layer: int = 0
    premium: float | None = None

    @property
    def key(self) -> tuple[int, int, int]:
        return (self.reinsurer, self.reinsured, self.layer)


def _frozen(a, dtype=float):
    arr = np.array(a, dtype=dtype)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class ReinsuranceNetwork:
    firms: tuple[Firm, ...]
    contracts: tuple[Contract, ...]
    shock: np.ndarray = None  # type: ignore[assignment]
    kind: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "firms", tuple(self.firms))
        object.__setattr__(self, "contracts", tuple(self.contracts))
        sh = np.zeros(len(self.firms)) if self.shock is None else self.shock
        object.__setattr__(self, "shock", _frozen(sh))

    @classmethod
    def from_matrices(cls, firms, gamma, deductibles=None, caps=None, shock=None,
                      layers=None, kind="custom"):
        """Build from n x n matrices ``Γ``, ``DD``, ``CP`` (entry (i, j): i reinsures j).

        A contract is created wherever any of the three matrices is nonzero, so
        pattern mismatches surface in :func:`validate_network`.  ``caps`` entries
        of ``inf`` mean unlimited; ``caps=None`` makes every contract unlimited.
        """
        firms = tuple(firms)
        n = len(firms)
        gamma = np.asarray(gamma, dtype=float)
        dd = np.zeros_like(gamma) if deductibles is None else np.asarray(deductibles, dtype=float)
        if caps is None:
            cp = np.where(gamma > 0, UNLIMITED, 0.0)
        else:
            cp = np.asarray(caps, dtype=float)
        lay = np.zeros(gamma.shape, dtype=int) if layers is None else np.asarray(layers, dtype=int)
        for name, mat in (("gamma", gamma), ("deductibles", dd), ("caps", cp), ("layers", lay)):
            if mat.shape != (n, n):
                raise NetworkDimensionError(f"{name} has shape {mat.shape}, expected {(n, n)}")
        contracts = []
        for i, j in zip(*np.nonzero((gamma != 0) | (dd != 0) | (cp != 0))):
            contracts.append(Contract(int(i), int(j), float(gamma[i, j]), float(dd[i, j]),
                                      float(cp[i, j]), int(lay[i, j])))
        return cls(firms, tuple(contracts), shock, kind)

    @property
    def n(self) -> int:
        return len(self.firms)

    @property
    def firm_ids(self) -> list[str]:
        return [f.id for f in self.firms]

    def index_of(self, firm_id: str) -> int:
        return self.firm_ids.index(firm_id)

    @property
    def equities(self) -> np.ndarray:
        return np.array([f.equity for f in self.firms], dtype=float)

    @property
    def is_primary(self) -> np.ndarray:
        return np.array([f.role is Role.PRIMARY for f in self.firms], dtype=bool)

    @property
    def layer_of(self) -> dict[tuple[int, int], int]:
        """Map (reinsurer, reinsured) -> layer.  Pairs in several layers keep the lowest."""
        out: dict[tuple[int, int], int] = {}
        for k in sorted(self.contracts, key=lambda k: k.layer, reverse=True):
            out[(k.reinsurer, k.reinsured)] = k.layer
        return out

    def _matrix(self, attr, layer):
        out = np.zeros((self.n, self.n))
        for k in self.contracts:
            if layer is None or k.layer == layer:
                out[k.reinsurer, k.reinsured] += getattr(k, attr)
        return out

    def gamma_matrix(self, layer: int | None = None) -> np.ndarray:
        """Γ view; with ``layer=None`` rates of all layers are summed per pair."""
        return self._matrix("rate", layer)

    def deductible_matrix(self, layer: int) -> np.ndarray:
        return self._matrix("deductible", layer)

    def cap_matrix(self, layer: int) -> np.ndarray:
        return self._matrix("cap", layer)

    def with_shock(self, shock) -> "ReinsuranceNetwork":
        return ReinsuranceNetwork(self.firms, self.contracts, shock, self.kind)


@dataclass(frozen=True)
class Violation:
    rule: str
    message: str
    firm: str | None = None
    contract: tuple[int, int, int] | None = None
    severity: str = "error"

    def __str__(self):
        return f"[{self.severity}] {self.rule}: {self.message}"


def _check_dimensions(net: ReinsuranceNetwork) -> None:
    n = net.n
    if net.shock.shape != (n,):
        raise NetworkDimensionError(f"shock has shape {net.shock.shape}, expected ({n},)")
    for k in net.contracts:
        if not (0 <= k.reinsurer < n and 0 <= k.reinsured < n):
            raise NetworkDimensionError(f"contract {k.key} refers to a firm outside 0..{n - 1}")


def validate_network(net: ReinsuranceNetwork) -> list[Violation]:
    """Return every broken structural rule; an empty list means the network is valid.

    Disconnection is reported with severity ``"warning"``.
    """
    _check_dimensions(net)
    ids = net.firm_ids
    out: list[Violation] = []

    for f in net.firms:
        if f.role is Role.REINSURER and f.primary_premiums != 0:
            out.append(Violation("reinsurer-primary-premiums",
                                 f"reinsurer {f.id} has primary premiums {f.primary_premiums}", f.id))
        if f.equity < 0:
            out.append(Violation("negative-equity", f"firm {f.id} has equity {f.equity}", f.id))
    for i, f in enumerate(net.firms):
        if net.shock[i] < 0:
            out.append(Violation("negative-shock", f"firm {f.id} has shock {net.shock[i]}", f.id))
        elif f.role is Role.REINSURER and net.shock[i] != 0:
            out.append(Violation("reinsurer-shock", f"reinsurer {f.id} has shock {net.shock[i]}", f.id))

    seen = set()
    col_sums: dict[tuple[int, int], float] = {}
    for k in net.contracts:
        name = f"{ids[k.reinsurer]} covers {ids[k.reinsured]} (layer {k.layer})"
        if k.key in seen:
            out.append(Violation("duplicate-contract", f"{name} appears twice", contract=k.key))
        seen.add(k.key)
        if not k.rate > 0 or not k.cap > 0:
            out.append(Violation("sparsity-pattern",
                                 f"{name}: rate {k.rate} and cap {k.cap} must both be positive",
                                 ids[k.reinsured], k.key))
            continue
        if k.rate > 1 + COLUMN_SUM_TOL:
            out.append(Violation("rate-above-one", f"{name}: rate {k.rate} > 1", ids[k.reinsured], k.key))
        if not k.deductible >= 0:
            out.append(Violation("negative-deductible", f"{name}: deductible {k.deductible}",
                                 ids[k.reinsured], k.key))
        col_sums[(k.reinsured, k.layer)] = col_sums.get((k.reinsured, k.layer), 0.0) + k.rate
    for (j, layer), total in sorted(col_sums.items()):
        if total > 1 + COLUMN_SUM_TOL:
            out.append(Violation("over-100-percent",
                                 f"firm {ids[j]} is reinsured {total:.6g} > 1 in layer {layer}", ids[j]))

    if net.n > 1:
        rows = [k.reinsurer for k in net.contracts]
        cols = [k.reinsured for k in net.contracts]
        adj = sparse.coo_array((np.ones(len(rows)), (rows, cols)), shape=(net.n, net.n))
        ncomp, _ = csgraph.connected_components(adj, directed=True, connection="weak")
        if ncomp > 1:
            out.append(Violation("disconnected", f"firm graph has {ncomp} weakly connected components",
                                 severity="warning"))
    return out


def _caps(c) -> np.ndarray:
    """Caps as floats, with ``None`` (alone or as an entry) meaning unlimited."""
    if c is None:
        return np.array(UNLIMITED)
    if np.ndim(c) == 0:
        return np.asarray(float(c))
    return np.array([UNLIMITED if x is None else float(x) for x in c])


@dataclass(frozen=True)
class LineGraphSystem:
    """Contract-level system ``(X, γ, d, c, s)``.

    Contract ``e`` is the edge ``reinsurer[e] -> reinsured[e]``.  ``X[e, f] = 1``
    iff ``reinsured[e] == reinsurer[f]``: the liability on ``f`` is a loss of the
    firm that ``e`` covers.
    """

    n: int
    reinsurer: np.ndarray
    reinsured: np.ndarray
    layer: np.ndarray
    gamma: np.ndarray
    d: np.ndarray
    c: np.ndarray
    firm_shock: np.ndarray
    X: sparse.csr_array = field(repr=False, default=None)  # type: ignore[assignment]

    def __post_init__(self):
        for name, dtype in (("reinsurer", int), ("reinsured", int), ("layer", int),
                            ("gamma", float), ("d", float), ("c", float), ("firm_shock", float)):
            object.__setattr__(self, name, _frozen(getattr(self, name), dtype))
        m = len(self.reinsurer)
        for name in ("reinsured", "layer", "gamma", "d", "c"):
            if getattr(self, name).shape != (m,):
                raise NetworkDimensionError(f"{name} must have length {m}")
        if self.firm_shock.shape != (self.n,):
            raise NetworkDimensionError(f"firm_shock must have length {self.n}")
        for name in ("gamma", "d", "c", "firm_shock"):
            if np.isnan(getattr(self, name)).any():
                raise ValueError(f"{name} contains NaN")
        if self.X is None:
            object.__setattr__(self, "X", line_graph_adjacency(self.reinsurer, self.reinsured, self.n))

    @classmethod
    def from_edges(cls, n, edges, gamma, d=None, c=None, firm_shock=None, layer=None):
        """Contract-level constructor; ``edges`` are ``(reinsurer, reinsured)`` pairs in order."""
        edges = np.asarray(edges, dtype=int).reshape(-1, 2)
        m = len(edges)
        return cls(
            n=n,
            reinsurer=edges[:, 0],
            reinsured=edges[:, 1],
            layer=np.zeros(m, dtype=int) if layer is None else layer,
            gamma=np.broadcast_to(np.asarray(gamma, dtype=float), (m,)),
            d=np.zeros(m) if d is None else np.broadcast_to(np.asarray(d, dtype=float), (m,)),
            c=np.broadcast_to(_caps(c), (m,)),
            firm_shock=np.zeros(n) if firm_shock is None else firm_shock,
        )

    @property
    def m(self) -> int:
        return len(self.reinsurer)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return list(zip(self.reinsurer.tolist(), self.reinsured.tolist()))

    @property
    def s(self) -> np.ndarray:
        """Contract-level shock: each contract sees the shock of the firm it covers."""
        return self.firm_shock[self.reinsured]

    @property
    def finite_caps(self) -> np.ndarray:
        return np.isfinite(self.c)

    def rate_matrix(self) -> sparse.csr_array:
        """``γX`` as a sparse matrix."""
        return sparse.csr_array(sparse.diags_array(self.gamma) @ self.X)

    def with_shock(self, firm_shock) -> "LineGraphSystem":
        return LineGraphSystem(self.n, self.reinsurer, self.reinsured, self.layer, self.gamma,
                               self.d, self.c, firm_shock, self.X)


def line_graph_adjacency(reinsurer: Sequence[int], reinsured: Sequence[int],
                         n: int | None = None) -> sparse.csr_array:
    reinsurer = np.asarray(reinsurer, dtype=int)
    reinsured = np.asarray(reinsured, dtype=int)
    m = len(reinsurer)
    if m == 0:
        return sparse.csr_array((0, 0))
    if n is None:
        n = int(max(reinsurer.max(), reinsured.max())) + 1
    ones = np.ones(m)
    covers = sparse.csr_array((ones, (np.arange(m), reinsured)), shape=(m, n))
    owed_by = sparse.csr_array((ones, (reinsurer, np.arange(m))), shape=(n, m))
    X = sparse.csr_array(covers @ owed_by)
    X.sort_indices()
    return X


def build_line_graph(net: ReinsuranceNetwork, shock=None) -> LineGraphSystem:
    """Contract-level view of ``net``; contracts sorted by (reinsured, reinsurer, layer)."""
    errors = [v for v in validate_network(net) if v.severity == "error"]
    if errors:
        raise InvalidNetworkError(errors)
    ks = sorted(net.contracts, key=lambda k: (k.reinsured, k.reinsurer, k.layer))
    sh = net.shock if shock is None else np.asarray(shock, dtype=float)
    if sh.shape != (net.n,):
        raise NetworkDimensionError(f"shock has shape {sh.shape}, expected ({net.n},)")
    return LineGraphSystem(
        n=net.n,
        reinsurer=[k.reinsurer for k in ks],
        reinsured=[k.reinsured for k in ks],
        layer=[k.layer for k in ks],
        gamma=[k.rate for k in ks],
        d=[k.deductible for k in ks],
        c=[k.cap for k in ks],
        firm_shock=sh,
    )


def liabilities_matrix(sys: LineGraphSystem, ell) -> np.ndarray:
    """Firm-to-firm matrix: ``L[i, j]`` is what reinsurer ``i`` owes ``j``."""
    ell = np.asarray(ell, dtype=float)
    if ell.shape != (sys.m,):
        raise ValueError(f"liability vector has shape {ell.shape}, expected ({sys.m},)")
    L = np.zeros((sys.n, sys.n))
    np.add.at(L, (sys.reinsurer, sys.reinsured), ell)
    return L


def net_liabilities(L) -> np.ndarray:
    """Δ(L) = Lᵀ1 − L1: amount due to each firm minus amount it owes."""
    L = np.asarray(L, dtype=float)
    return L.sum(axis=0) - L.sum(axis=1)


def firms_from_ids(ids: Iterable[str], role=Role.PRIMARY) -> tuple[Firm, ...]:
    return tuple(Firm(i, role) for i in ids)
