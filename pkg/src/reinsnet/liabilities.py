"""Equilibrium contract liabilities: the operator Φ and three solvers.

    Φ(ℓ) = min(c, max(0, γ(Xℓ + s − d)))

``solve_fixed_point_iteration`` climbs from 0 to the least fixed point.
``solve_no_caps`` and ``solve_with_caps`` replace the climb by a short
sequence of linear solves over activation states; the capped variant walks
down from the all-activated state.
"""
from __future__ import annotations

import enum
import warnings
from dataclasses import dataclass, field

import numpy as np
import scipy.linalg
from scipy import sparse
from scipy.sparse import linalg as spla

from . import diagnostics
from .network import LineGraphSystem

DEFAULT_TOL = 1e-9
DIVERGENCE_FACTOR = 1e6
DENSE_LIMIT = 2000
AGREEMENT_TOL = 1e-8
_CYCLE_CHECK_EVERY = 32
_EPS = np.finfo(float).eps


class Status(str, enum.Enum):
    CONVERGED = "converged"
    MAX_ITERS = "max-iters-exceeded"
    DIVERGING = "diverging"


class StructuralFailure(RuntimeError):
    """A linear subsystem over the active contracts is singular."""

    def __init__(self, active, message="singular linear system"):
        self.active = tuple(int(i) for i in active)
        super().__init__(f"{message}; active contracts: {list(self.active)}")


@dataclass(frozen=True)
class ActivationState:
    B: np.ndarray
    C: np.ndarray

    def key(self):
        return tuple(self.B.astype(int).tolist()), tuple(self.C.astype(int).tolist())


@dataclass(frozen=True)
class LiabilitySolution:
    ell: np.ndarray
    activation: ActivationState
    iterations: int
    status: Status
    residual: float
    algorithm: int
    multiplicity_warning: bool = False
    notes: tuple[str, ...] = field(default=())

    @property
    def converged(self) -> bool:
        return self.status is Status.CONVERGED


def default_max_iters(m: int) -> int:
    return 10 * m + 1000


def excess(ell, sys: LineGraphSystem) -> np.ndarray:
    """Xℓ + s − d: each contract's covered loss above its deductible."""
    return sys.X @ ell + sys.s - sys.d


def phi(ell, sys: LineGraphSystem) -> np.ndarray:
    ell = np.asarray(ell, dtype=float)
    return np.minimum(sys.c, np.maximum(0.0, sys.gamma * excess(ell, sys)))


def activation_state(ell, sys: LineGraphSystem) -> ActivationState:
    """Deductible (B) and cap (C) activation; exact ties count as activated."""
    z = excess(np.asarray(ell, dtype=float), sys)
    return ActivationState(z >= 0, sys.gamma * z >= sys.c)


def residual(ell, sys: LineGraphSystem) -> float:
    ell = np.asarray(ell, dtype=float)
    return float(np.max(np.abs(ell - phi(ell, sys)), initial=0.0))


def _scale(ell) -> float:
    return 1.0 + float(np.max(np.abs(ell), initial=0.0))


def _activated_cycle(sys: LineGraphSystem, ell, step) -> bool:
    """True if growing, unlimited contracts contain a block with ρ ≥ 1.

    On such a block Φ acts linearly and ``u·step`` cannot shrink for the
    block's left Perron vector u > 0, so the iterates grow without bound.
    """
    live = np.nonzero((ell > 0) & ~sys.finite_caps)[0]
    if len(live) == 0:
        return False
    sub = sys.rate_matrix()[live][:, live]
    for r, idx in diagnostics.component_radii(sub):
        if r >= diagnostics.HUNDRED_PERCENT and step[live[idx]].max() > 0:
            return True
    return False


def solve_fixed_point_iteration(sys: LineGraphSystem, tol: float = DEFAULT_TOL,
                                max_iters: int | None = None,
                                ceiling: float | None = None, callback=None) -> LiabilitySolution:
    """Iterate ℓ ← Φ(ℓ) from 0.

    Stops when the step and the geometric error estimate ``step·r/(1−r)`` are
    both within ``tol·(1 + ‖ℓ‖)``, where r is the observed contraction rate.
    Reports ``diverging`` when a 100% block is activated or an iterate passes
    ``ceiling`` (default ``1e6·Σs``) while still rising.  ``callback`` sees
    every iterate.
    """
    m = sys.m
    max_iters = default_max_iters(m) if max_iters is None else max_iters
    if ceiling is None:
        ceiling = DIVERGENCE_FACTOR * float(sys.s.sum())
    ell = np.zeros(m)
    sizes: list[float] = []
    status = Status.MAX_ITERS
    t = 0
    while t < max_iters:
        new = phi(ell, sys)
        t += 1
        if callback is not None:
            callback(new)
        step = new - ell
        size = float(np.max(np.abs(step), initial=0.0))
        scale = _scale(new)
        sizes.append(size)
        if size == 0.0:
            status = Status.CONVERGED
            ell = new
            break
        if size <= tol * scale:
            k = min(len(sizes) - 1, 16)
            rate = (size / sizes[-1 - k]) ** (1.0 / k) if k and sizes[-1 - k] > 0 else 1.0
            est = size * rate / (1.0 - rate) if rate < 1.0 else np.inf
            if est <= tol * scale or size <= 64 * _EPS * scale:
                status = Status.CONVERGED
                ell = new
                break
        rising = step > 0
        if rising.any() and new[rising].max() > ceiling:
            status = Status.DIVERGING
            ell = new
            break
        if t % _CYCLE_CHECK_EVERY == 0 and _activated_cycle(sys, new, step):
            status = Status.DIVERGING
            ell = new
            break
        ell = new
    return LiabilitySolution(ell, activation_state(ell, sys), t, status,
                             residual(ell, sys), algorithm=1)


def _linear_solve(M, rhs, active) -> np.ndarray:
    """Solve M x = rhs; ``active`` names the contracts for error reporting."""
    k = M.shape[0]
    if k == 0:
        return np.zeros(0)
    if k < DENSE_LIMIT:
        with warnings.catch_warnings():
            warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
            try:
                return scipy.linalg.solve(M.toarray(), rhs)
            except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
                raise StructuralFailure(active) from None
    M = sparse.csc_array(M)
    x, info = spla.gmres(M, rhs, rtol=1e-13, atol=0.0, restart=200, maxiter=50)
    if info == 0:
        return x
    with warnings.catch_warnings():
        warnings.simplefilter("error", spla.MatrixRankWarning)
        try:
            x = spla.spsolve(M, rhs)
        except spla.MatrixRankWarning:
            raise StructuralFailure(active) from None
    if not np.all(np.isfinite(x)):
        raise StructuralFailure(active)
    return x


def _solve_state(sys: LineGraphSystem, B, C) -> np.ndarray:
    """Liabilities of the affine piece with activation (B, C).

    Capped contracts sit at their caps; active uncapped ones satisfy
    ℓ_A = γ_A (X_AA ℓ_A + X_AK c_K + s_A − d_A); the rest are zero.
    """
    ell = np.zeros(sys.m)
    capped = np.nonzero(C)[0]
    ell[capped] = sys.c[capped]
    act = np.nonzero(B & ~C)[0]
    if len(act) == 0:
        return ell
    X = sys.X
    rhs = sys.s[act] - sys.d[act]
    if len(capped):
        rhs = rhs + X[act][:, capped] @ sys.c[capped]
    g = sys.gamma[act]
    M = sparse.eye_array(len(act), format="csr") - sparse.diags_array(g) @ X[act][:, act]
    ell[act] = _linear_solve(M, g * rhs, act)
    return ell


def solve_no_caps(sys: LineGraphSystem, tol: float = DEFAULT_TOL, callback=None) -> LiabilitySolution:
    """Activation-set iteration for systems whose caps are all infinite.

    Each outer step solves ℓ = γB(s + Xℓ − d) and re-reads B from the result.
    Zero-deductible systems finish after one solve.  ``callback(B, ell)``
    sees each outer step.
    """
    if sys.finite_caps.any():
        raise ValueError("solve_no_caps requires every cap to be infinite")
    no_caps = np.zeros(sys.m, dtype=bool)
    B = (sys.s - sys.d) >= 0
    limit = max(sys.m, 1)
    status = Status.MAX_ITERS
    notes = []
    it = 0
    while True:
        ell = _solve_state(sys, B, no_caps)
        it += 1
        if callback is not None:
            callback(B.copy(), ell)
        nb = excess(ell, sys) >= 0
        if np.array_equal(nb, B):
            status = Status.CONVERGED
            break
        if (B & ~nb).any():
            notes.append(f"activation set shrank at outer step {it}")
        if it >= limit:
            break
        B = nb
    res = residual(ell, sys)
    if status is Status.CONVERGED and res > tol * _scale(ell):
        status = Status.MAX_ITERS
        notes.append(f"residual {res:.3g} above tolerance")
    return LiabilitySolution(ell, ActivationState(B, no_caps), it, status, res,
                             algorithm=2, notes=tuple(notes))


def solve_with_caps(sys: LineGraphSystem, tol: float = DEFAULT_TOL,
                    check_least: bool = True, callback=None) -> LiabilitySolution:
    """Activation-set iteration downward from B = 1, C = finite caps.

    With ``check_least`` the result is compared with fixed point iteration; a
    mismatch sets ``multiplicity_warning`` (this walk ends at the greatest
    fixed point when several exist).  ``callback(B, C, ell)`` sees each outer step.
    """
    finite = sys.finite_caps
    B = np.ones(sys.m, dtype=bool)
    C = finite.copy()
    limit = 2 * sys.m + 1
    status = Status.MAX_ITERS
    notes = []
    it = 0
    while True:
        ell = _solve_state(sys, B, C)
        it += 1
        if callback is not None:
            callback(B.copy(), C.copy(), ell)
        z = excess(ell, sys)
        nb = z >= 0
        nc = finite & (sys.gamma * z >= sys.c)
        if np.array_equal(nb, B) and np.array_equal(nc, C):
            status = Status.CONVERGED
            break
        if (nb & ~B).any() or (nc & ~C).any():
            # happens when a linear solve overshoots to negative liabilities
            notes.append(f"activation rose after outer step {it}")
        if it >= limit:
            break
        B, C = nb, nc
    res = residual(ell, sys)
    if status is Status.CONVERGED and res > tol * _scale(ell):
        status = Status.MAX_ITERS
        notes.append(f"residual {res:.3g} above tolerance")
    elif status is not Status.CONVERGED and res <= tol * _scale(ell):
        # the walk stalled on a boundary tie but already sits at a fixed point
        status = Status.CONVERGED
    if status is Status.CONVERGED:
        act = activation_state(ell, sys)
        B, C = act.B, act.C
    multiple = False
    if check_least and status is Status.CONVERGED:
        least = solve_fixed_point_iteration(sys, tol)
        if least.converged and np.max(np.abs(least.ell - ell), initial=0.0) > AGREEMENT_TOL * _scale(ell):
            multiple = True
            notes.append("differs from the least fixed point; several fixed points exist")
    return LiabilitySolution(ell, ActivationState(B, C), it, status, res, algorithm=3,
                             multiplicity_warning=multiple, notes=tuple(notes))


def solve(sys: LineGraphSystem, algorithm: str | int = "auto", tol: float = DEFAULT_TOL,
          max_iters: int | None = None, rho_full: float | None = None,
          rho_infinite_caps: float | None = None,
          omega_limit: int = diagnostics.DEFAULT_OMEGA_LIMIT) -> LiabilitySolution:
    """Dispatch to one algorithm, or pick one with ``algorithm="auto"``.

    ``auto`` uses the linear-solve iteration for cap-free systems with
    ρ(γX) < 1.  Otherwise it runs fixed point iteration and, when uniqueness
    is certified, cross-checks against the capped activation-set iteration.
    Radii may be passed in to avoid recomputing them per shock.
    """
    algorithm = str(algorithm)
    if algorithm == "1":
        return solve_fixed_point_iteration(sys, tol, max_iters)
    if algorithm == "2":
        return solve_no_caps(sys, tol)
    if algorithm == "3":
        return solve_with_caps(sys, tol)
    if algorithm != "auto":
        raise ValueError(f"unknown algorithm {algorithm!r}")

    if rho_full is None:
        rho_full = diagnostics.spectral_radius(sys.rate_matrix())
    if not sys.finite_caps.any() and rho_full < 1:
        return solve_no_caps(sys, tol)

    first = solve_fixed_point_iteration(sys, tol, max_iters)
    if first.status is Status.DIVERGING:
        return first
    certified = rho_full < 1
    if not certified and sys.m <= omega_limit:
        certified = diagnostics.spectral_radius(diagnostics.omega_matrix(sys)) < 1
    if certified:
        if rho_infinite_caps is None:
            rho_infinite_caps = diagnostics.infinite_cap_radius(sys)
        certified = rho_infinite_caps < 1
    if not certified:
        return first
    try:
        check = solve_with_caps(sys, tol, check_least=False)
    except StructuralFailure as exc:
        return _with_note(first, f"cross-check skipped: {exc}")
    if not first.converged:
        if check.converged:
            return _with_note(check, f"fixed point iteration stopped: {first.status.value}")
        return first
    gap = float(np.max(np.abs(first.ell - check.ell), initial=0.0))
    if gap > AGREEMENT_TOL * _scale(first.ell):
        return LiabilitySolution(first.ell, first.activation, first.iterations, first.status,
                                 first.residual, 1, True,
                                 first.notes + (f"cross-check gap {gap:.3g}",))
    return first


def _with_note(sol: LiabilitySolution, note: str) -> LiabilitySolution:
    return LiabilitySolution(sol.ell, sol.activation, sol.iterations, sol.status, sol.residual,
                             sol.algorithm, sol.multiplicity_warning, sol.notes + (note,))
