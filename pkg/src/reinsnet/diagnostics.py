"""Structural risk diagnostics for a contract system.

Spectral radii are computed per strongly connected component of the matrix
graph.  Each irreducible block is handled by power iteration on ``A + I`` with
Collatz-Wielandt bracketing (the shift makes the block aperiodic, so
permutation cycles converge), falling back to a dense eigensolver for small
or slowly converging blocks.
"""
from __future__ import annotations

import enum
import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.sparse import csgraph
from scipy.sparse import linalg as spla

from .network import LineGraphSystem

#: ρ(γX) at or above this counts as a 100% cycle.
HUNDRED_PERCENT = 1.0 - 1e-9
DENSE_BLOCK = 64
DEFAULT_OMEGA_LIMIT = 14


class Certificate(str, enum.Enum):
    UNIQUE_FOR_ALL_SHOCKS = "unique-for-all-shocks"
    UNIQUE_BY_OMEGA = "unique-by-omega"
    LEAST_AND_GREATEST = "least-and-greatest-exist"
    NONE = "no-certificate"


class TooManyContracts(ValueError):
    pass


def _as_matrix(A):
    if sparse.issparse(A):
        A = sparse.csr_array(A)
    else:
        A = sparse.csr_array(np.asarray(A, dtype=float))
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise ValueError(f"spectral radius needs a square matrix, got shape {A.shape}")
    if A.nnz and A.data.min() < 0:
        raise ValueError("spectral radius expects a nonnegative matrix")
    return A


def _dense_radius(block) -> float:
    dense = block.toarray() if sparse.issparse(block) else block
    return float(np.max(np.abs(np.linalg.eigvals(dense)))) if dense.size else 0.0


def _perron_root(block: sparse.csr_array, tol: float, max_iter: int) -> float | None:
    """Perron root of an irreducible block, or None if bracketing does not close."""
    k = block.shape[0]
    x = np.ones(k) + 1e-12 * np.arange(k) / k
    for _ in range(max_iter):
        y = block @ x + x
        ratios = y / x
        lo, hi = ratios.min(), ratios.max()
        if hi - lo <= tol * max(hi - 1.0, 1e-300):
            return 0.5 * (lo + hi) - 1.0
        x = y / y.max()
    return None


def _block_radius(block, tol, max_iter) -> float:
    k = block.shape[0]
    if k <= DENSE_BLOCK:
        return _dense_radius(block)
    r = _perron_root(block, tol, max_iter)
    if r is not None:
        return max(r, 0.0)
    if k <= 3000:
        return _dense_radius(block)
    vals = spla.eigs(block.astype(float), k=1, which="LM", return_eigenvectors=False)
    return float(np.abs(vals).max())


def component_radii(A, tol: float = 1e-10, max_iter: int = 10_000):
    """List of ``(radius, indices)`` for every nontrivial strongly connected component."""
    A = _as_matrix(A)
    n = A.shape[0]
    if n == 0:
        return []
    ncomp, labels = csgraph.connected_components(A, directed=True, connection="strong")
    diag = A.diagonal()
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(ncomp + 1))
    out = []
    for k in range(ncomp):
        idx = order[bounds[k]:bounds[k + 1]]
        if len(idx) == 1:
            if diag[idx[0]] > 0:
                out.append((float(diag[idx[0]]), idx))
            continue
        block = A[idx][:, idx]
        out.append((_block_radius(block, tol, max_iter), idx))
    return out


def spectral_radius(A, tol: float = 1e-10, max_iter: int = 10_000) -> float:
    """ρ(A) for a nonnegative square matrix (dense or sparse)."""
    radii = component_radii(A, tol, max_iter)
    return max((r for r, _ in radii), default=0.0)


@dataclass(frozen=True)
class CycleReport:
    detected: bool
    radius: float
    component: tuple[int, ...] = ()


def detect_hundred_percent_cycle(sys: LineGraphSystem) -> CycleReport:
    """Flag ρ(γX) ≥ 1 − 1e-9; ``component`` lists the contracts of the worst block."""
    radii = component_radii(sys.rate_matrix())
    if not radii:
        return CycleReport(False, 0.0)
    r, idx = max(radii, key=lambda t: t[0])
    return CycleReport(bool(r >= HUNDRED_PERCENT), r, tuple(int(i) for i in idx))


# --- (B, C)-constant sets -------------------------------------------------------
#
# Every threshold inequality for contract e involves only T_j, the total loss of
# the firm j that e covers: T_j = shock_j + sum of liabilities on contracts where
# j is the reinsurer.  Those liabilities are disjoint across firms, so over
# ℓ >= 0 the T_j range independently over
#   [shock_j, inf)   if j reinsures some contract,
#   {shock_j}        otherwise,
# and the feasible set is a product of per-firm local state sets.  With
# free_shocks=True the shock is a free variable too and every T_j ranges over
# [0, inf).


def _local_state(T, gamma, d, c):
    z = T - d
    B = z >= 0
    C = gamma * z >= c
    return tuple(B.astype(int)), tuple(C.astype(int))


def _firm_local_states(sys: LineGraphSystem, free_shocks: bool):
    """Map firm -> (contract indices, set of feasible local (B, C) states)."""
    out = {}
    is_reinsurer = np.zeros(sys.n, dtype=bool)
    is_reinsurer[sys.reinsurer] = True
    for j in np.unique(sys.reinsured):
        es = np.nonzero(sys.reinsured == j)[0]
        g, d, c = sys.gamma[es], sys.d[es], sys.c[es]
        if free_shocks:
            lo, unbounded = 0.0, True
        else:
            lo, unbounded = float(sys.firm_shock[j]), bool(is_reinsurer[j])
        if unbounded:
            exhaust = d + c / g
            pts = np.concatenate([[lo], d, exhaust[np.isfinite(exhaust)]])
            pts = np.unique(pts[pts >= lo])
            mids = 0.5 * (pts[:-1] + pts[1:])
            cands = np.concatenate([pts, mids, [pts[-1] + 1.0 + abs(pts[-1])]])
        else:
            cands = np.array([lo])
        states = {_local_state(T, g, d, c) for T in cands}
        out[int(j)] = (es, states)
    return out


def enumerate_feasible_activations(sys: LineGraphSystem, limit_m: int = DEFAULT_OMEGA_LIMIT,
                                   free_shocks: bool = False):
    """All (B, C) pairs whose constant set meets {ℓ >= 0}, as 0/1 tuples of length m.

    ``free_shocks=True`` also lets the firm shocks vary over [0, inf), which
    gives the shock-independent superset.
    """
    if sys.m > limit_m:
        raise TooManyContracts(
            f"{sys.m} contracts exceed the enumeration limit {limit_m}; "
            "use the ρ(γX) certificate instead")
    local = _firm_local_states(sys, free_shocks)
    firms = sorted(local)
    result = set()
    for combo in itertools.product(*(sorted(local[j][1]) for j in firms)):
        B = np.zeros(sys.m, dtype=int)
        C = np.zeros(sys.m, dtype=int)
        for j, (b, c) in zip(firms, combo):
            es = local[j][0]
            B[es] = b
            C[es] = c
        result.add((tuple(B.tolist()), tuple(C.tolist())))
    return result


def omega_matrix(sys: LineGraphSystem, free_shocks: bool = False) -> np.ndarray:
    """Ω: element-wise max of (I−C)γBX(I−C) over feasible (B, C)."""
    local = _firm_local_states(sys, free_shocks)
    pos = {}
    for j, (es, _) in local.items():
        for k, e in enumerate(es):
            pos[int(e)] = (j, k)

    def exists(j, pred):
        return any(pred(b, c) for b, c in local[j][1])

    omega = np.zeros((sys.m, sys.m))
    X = sys.X.tocoo()
    for e, f in zip(X.row.tolist(), X.col.tolist()):
        je, ke = pos[e]
        jf, kf = pos[f]
        if je == jf:
            ok = exists(je, lambda b, c: b[ke] and not c[ke] and not c[kf])
        else:
            ok = (exists(je, lambda b, c: b[ke] and not c[ke])
                  and exists(jf, lambda b, c: not c[kf]))
        if ok:
            omega[e, f] = sys.gamma[e]
    return omega


@dataclass(frozen=True)
class StructureReport:
    rho_full: float
    rho_infinite_caps: float
    rho_omega: float | None
    certificate: Certificate
    omega_skipped: bool = False
    cycle: CycleReport = field(default_factory=lambda: CycleReport(False, 0.0))

    def to_dict(self):
        return {
            "rho_full": self.rho_full,
            "rho_infinite_caps": self.rho_infinite_caps,
            "rho_omega": self.rho_omega,
            "omega_skipped": self.omega_skipped,
            "certificate": self.certificate.value,
            "hundred_percent_cycle": self.cycle.detected,
            "cycle_component": list(self.cycle.component),
        }


def infinite_cap_radius(sys: LineGraphSystem) -> float:
    """ρ(Ψ₀γXΨ₀ᵀ): the subsystem of unlimited contracts (0 if every cap is finite)."""
    idx = np.nonzero(~sys.finite_caps)[0]
    if len(idx) == 0:
        return 0.0
    return spectral_radius(sys.rate_matrix()[idx][:, idx])


def omega_certificate(sys: LineGraphSystem, limit_m: int = DEFAULT_OMEGA_LIMIT,
                      free_shocks: bool = False) -> StructureReport:
    cycle = detect_hundred_percent_cycle(sys)
    rho_full = cycle.radius
    rho_inf = infinite_cap_radius(sys)
    rho_omega = None
    if sys.m <= limit_m:
        rho_omega = spectral_radius(omega_matrix(sys, free_shocks))
    if rho_full < 1:
        cert = Certificate.UNIQUE_FOR_ALL_SHOCKS
    elif rho_omega is not None and rho_omega < 1:
        cert = Certificate.UNIQUE_BY_OMEGA
    elif rho_inf < 1:
        cert = Certificate.LEAST_AND_GREATEST
    else:
        cert = Certificate.NONE
    return StructureReport(rho_full, rho_inf, rho_omega, cert,
                           omega_skipped=rho_omega is None, cycle=cycle)
