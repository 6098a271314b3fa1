"""Greatest clearing payments for a liability matrix, and end-of-period equity.

Firm i owes ``L[i].sum()`` to its counterparties and pays
``p = min(p̄, max(0, e0 − sh + Πᵀp))`` where ``Π`` is ``L`` with rows scaled
to sum to one.  Payments are found by fictitious default: start from full
payment, mark the firms that cannot pay, solve the linear system those
defaults imply, and repeat until the default set stops growing.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg

DEFAULT_TOL = 1e-6


@dataclass(frozen=True)
class ClearingResult:
    payments: np.ndarray
    obligations: np.ndarray
    alpha: np.ndarray
    defaults: np.ndarray
    end_equity: np.ndarray
    returns: np.ndarray
    rounds: int

    @property
    def n_defaults(self) -> int:
        return int(self.defaults.sum())


def relative_liabilities(L) -> tuple[np.ndarray, np.ndarray]:
    """Return ``(Π, p̄)``; rows of firms that owe nothing are left at zero."""
    L = np.asarray(L, dtype=float)
    pbar = L.sum(axis=1)
    Pi = np.zeros_like(L)
    owes = pbar > 0
    Pi[owes] = L[owes] / pbar[owes, None]
    return Pi, pbar


def _default_gap(pbar, tol):
    return tol * (1.0 + pbar)


def _round_solve(Pi, base, pbar, paying, partial, recovery):
    """Payments when ``paying`` settle in full, ``partial`` pay ``β·resources``, others pay 0."""
    p = np.where(paying, pbar, 0.0)
    idx = np.nonzero(partial)[0]
    if len(idx) == 0:
        return p
    known = base[idx] + Pi.T[idx] @ p
    A = np.eye(len(idx)) - recovery * Pi.T[np.ix_(idx, idx)]
    with warnings.catch_warnings():
        warnings.simplefilter("error", scipy.linalg.LinAlgWarning)
        p[idx] = scipy.linalg.solve(A, recovery * known)
    return p


def _picard(Pi, base, pbar, recovery, p, tol, max_iter=100_000):
    gap = _default_gap(pbar, tol)
    for _ in range(max_iter):
        r = base + Pi.T @ p
        new = np.where(r >= pbar - gap, pbar, np.clip(recovery * r, 0.0, pbar))
        if np.max(np.abs(new - p), initial=0.0) <= 1e-15 * (1.0 + pbar.max(initial=0.0)):
            return new
        p = new
    return p


def clearing_vector(L, e0, sh, tol: float = DEFAULT_TOL, recovery: float = 1.0,
                    shock_in_clearing: bool = True) -> tuple[np.ndarray, int]:
    """Greatest clearing payments and the number of default-set expansions.

    ``recovery`` scales the resources a defaulter distributes (1 means no
    default cost).  With ``shock_in_clearing=False`` the shock is left out of
    the resources used to pay reinsurance obligations.
    """
    if not 0 < recovery <= 1:
        raise ValueError(f"recovery factor must lie in (0, 1], got {recovery}")
    Pi, pbar = relative_liabilities(L)
    e0 = np.asarray(e0, dtype=float)
    sh = np.asarray(sh, dtype=float)
    base = e0 - sh if shock_in_clearing else e0.copy()
    gap = _default_gap(pbar, tol)
    n = len(pbar)

    p = pbar.copy()
    defaulted = np.zeros(n, dtype=bool)
    rounds = 0
    while True:
        r = base + Pi.T @ p
        grown = defaulted | (r < pbar - gap)
        if rounds and np.array_equal(grown, defaulted):
            break
        if not grown.any():
            break
        defaulted = grown
        rounds += 1
        # defaulters with no resources at the current (upper) payments pay nothing
        partial = defaulted & (r > 0)
        try:
            while True:
                trial = _round_solve(Pi, base, pbar, ~defaulted, partial, recovery)
                negative = partial & (trial < 0)
                if not negative.any():
                    break
                partial &= ~negative
        except (np.linalg.LinAlgError, scipy.linalg.LinAlgWarning):
            trial = _picard(Pi, base, pbar, recovery, p, tol)
        p = np.clip(trial, 0.0, pbar)

    r = base + Pi.T @ p
    target = np.where(r >= pbar - gap, pbar, np.clip(recovery * r, 0.0, pbar))
    if np.max(np.abs(target - p), initial=0.0) > tol * (1.0 + pbar.max(initial=0.0)):
        p = _picard(Pi, base, pbar, recovery, p, tol)
    return p, rounds


def end_equities(L, p, e0, sh) -> tuple[np.ndarray, np.ndarray]:
    """``e1 = e0 − p + Lᵀα − sh`` and returns ``e1/e0`` (NaN where ``e0 == 0``)."""
    L = np.asarray(L, dtype=float)
    p = np.asarray(p, dtype=float)
    e0 = np.asarray(e0, dtype=float)
    pbar = L.sum(axis=1)
    alpha = np.divide(p, pbar, out=np.zeros_like(p), where=pbar > 0)
    e1 = e0 - p + L.T @ alpha - np.asarray(sh, dtype=float)
    returns = np.divide(e1, e0, out=np.full_like(e1, np.nan), where=e0 > 0)
    return e1, returns


def clear(L, e0, sh, tol: float = DEFAULT_TOL, recovery: float = 1.0,
          shock_in_clearing: bool = True) -> ClearingResult:
    L = np.asarray(L, dtype=float)
    if L.ndim != 2 or L.shape[0] != L.shape[1]:
        raise ValueError(f"liability matrix must be square, got {L.shape}")
    p, rounds = clearing_vector(L, e0, sh, tol, recovery, shock_in_clearing)
    pbar = L.sum(axis=1)
    alpha = np.divide(p, pbar, out=np.zeros_like(p), where=pbar > 0)
    e1, ret = end_equities(L, p, e0, sh)
    defaults = p < pbar - _default_gap(pbar, tol)
    return ClearingResult(p, pbar, alpha, defaults, e1, ret, rounds)


def uncovered_primary_liabilities(result: ClearingResult, is_primary) -> float:
    """Total negative end equity over primary insurers."""
    is_primary = np.asarray(is_primary, dtype=bool)
    return float(np.maximum(0.0, -result.end_equity[is_primary]).sum())
