"""Nonnegative quadratic programs  min 1/2 w'Kw - b'w  s.t. w >= 0.

The solver is cyclic projected coordinate descent (exact 1-d minimisation,
sorted index order) with a periodic active-set polish: the support of the
current iterate is solved exactly by Cholesky and accepted only if the KKT
certificate holds.  Everything is deterministic for fixed inputs.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import cho_factor, cho_solve, LinAlgError

from . import _accel

__all__ = ["ConvergenceError", "NnqpProblem", "NnqpSolution", "KktReport", "solve", "verify_kkt", "dump_debug"]

log = logging.getLogger(__name__)


class ConvergenceError(RuntimeError):
    """The solver stopped before the KKT residuals met the tolerance."""


@dataclass(frozen=True)
class KktReport:
    """Residuals of the optimality conditions.

    stationarity
        max(0, max_i (b - Kw)_i): violation of (Kw - b)_i >= 0.
    complementarity
        max_i |w_i (Kw - b)_i| / ||b||_inf (unscaled when b = 0).
    primal_negativity
        max(0, -min_i w_i).
    """

    stationarity: float
    complementarity: float
    primal_negativity: float

    def max(self) -> float:
        return max(self.stationarity, self.complementarity, self.primal_negativity)

    def ok(self, tol: float) -> bool:
        return self.max() <= tol

    def as_dict(self) -> dict:
        return {"stationarity": self.stationarity, "complementarity": self.complementarity,
                "primal_negativity": self.primal_negativity}


@dataclass(frozen=True, eq=False)
class NnqpProblem:
    K: np.ndarray
    b: np.ndarray
    tol: float = 1e-10
    max_iter: int = 20000

    def __post_init__(self):
        K = np.ascontiguousarray(self.K, dtype=float)
        b = np.ascontiguousarray(self.b, dtype=float).reshape(-1)
        if K.ndim != 2 or K.shape[0] != K.shape[1] or K.shape[0] != b.shape[0]:
            raise ValueError(f"shape mismatch: K {K.shape}, b {b.shape}")
        if not (np.all(np.isfinite(K)) and np.all(np.isfinite(b))):
            raise ValueError("NaN or Inf in problem data")
        if not self.tol > 0:
            raise ValueError("tol must be positive")
        if len(b) and not np.all(np.diag(K) > 0):
            raise ValueError("K must have a positive diagonal")
        object.__setattr__(self, "K", K)
        object.__setattr__(self, "b", b)


@dataclass(frozen=True, eq=False)
class NnqpSolution:
    w: np.ndarray
    kkt: KktReport
    iterations: int
    converged: bool


def verify_kkt(K, b, w, r=None) -> KktReport:
    """Recompute the KKT residuals of ``w`` from scratch (``r`` may pass a trusted Kw)."""
    K = np.ascontiguousarray(K, dtype=float)
    b = np.asarray(b, dtype=float).reshape(-1)
    w = np.ascontiguousarray(w, dtype=float).reshape(-1)
    if K.shape != (len(b), len(b)) or len(w) != len(b):
        raise ValueError("shape mismatch")
    if len(b) == 0:
        return KktReport(0.0, 0.0, 0.0)
    g = (_accel.matvec(K, w) if r is None else r) - b
    scale = float(np.max(np.abs(b)))
    if scale == 0.0:
        scale = 1.0
    stat = max(0.0, float(np.max(-g)))
    comp = float(np.max(np.abs(w * g))) / scale
    neg = max(0.0, float(-np.min(w)))
    return KktReport(stat, comp, neg)


def _polish(K, b, w, tol):
    """Exact solve on the current support plus violated coordinates.

    Returns the new iterate (always feasible and no worse in objective) and a
    flag telling whether the face solution was taken in full.
    """
    g = _accel.matvec(K, w) - b
    S = np.flatnonzero((w > 0) | (g < -tol))
    if S.size == 0:
        return w, False
    try:
        c = cho_factor(K[np.ix_(S, S)], lower=True, check_finite=False)
    except LinAlgError:
        return w, False
    x = cho_solve(c, b[S], check_finite=False)
    if np.all(x > 0):
        out = np.zeros_like(w)
        out[S] = x
        return out, True
    # walk from w towards the face minimiser until the first coordinate hits zero
    cur = w[S]
    d = x - cur
    neg = d < 0
    t = 1.0
    if np.any(neg):
        t = min(1.0, float(np.min(cur[neg] / -d[neg])))
    step = np.maximum(cur + t * d, 0.0)
    out = w.copy()
    out[S] = step
    return out, False


def solve(problem: NnqpProblem, w0=None, polish_every: int = 5) -> NnqpSolution:
    """Minimise 1/2 w'Kw - b'w over w >= 0.

    Parameters
    ----------
    problem : NnqpProblem
    w0 : array, optional
        Warm start; negative entries are clamped to zero.
    polish_every : int
        Number of coordinate sweeps between active-set polish attempts.

    Returns
    -------
    NnqpSolution
        ``converged`` is true iff every KKT residual is <= ``problem.tol``.
        When ``max_iter`` sweeps pass without convergence the best iterate
        found (smallest KKT residual) is returned.
    """
    K, b, tol = problem.K, problem.b, problem.tol
    n = len(b)
    if n == 0:
        return NnqpSolution(np.zeros(0), KktReport(0.0, 0.0, 0.0), 0, True)
    w = np.zeros(n) if w0 is None else np.maximum(np.array(w0, dtype=float).reshape(-1), 0.0)
    if len(w) != n:
        raise ValueError("warm start has the wrong length")
    r = _accel.matvec(K, w)
    best_w, best_kkt = w.copy(), verify_kkt(K, b, w, r)
    if best_kkt.ok(tol):
        return NnqpSolution(w, best_kkt, 0, True)
    for it in range(1, problem.max_iter + 1):
        _accel.cd_sweep(K, b, w, r)
        if it % polish_every == 0 or it == 1:
            cand, full = _polish(K, b, w, tol)
            w = cand
            r = _accel.matvec(K, w)
            kkt = verify_kkt(K, b, w, r)
            if kkt.max() < best_kkt.max():
                best_w, best_kkt = w.copy(), kkt
            if kkt.ok(tol):
                return NnqpSolution(w, kkt, it, True)
    log.warning("nnqp: no convergence after %d sweeps (kkt %.3e)", problem.max_iter, best_kkt.max())
    return NnqpSolution(best_w, best_kkt, problem.max_iter, False)


def dump_debug(problem: NnqpProblem, sol: NnqpSolution) -> str:
    """JSON dump of (K, b, w, residuals) for offline inspection."""
    return json.dumps({
        "K": problem.K.tolist(),
        "b": problem.b.tolist(),
        "w": sol.w.tolist(),
        "kkt": sol.kkt.as_dict(),
        "iterations": sol.iterations,
        "converged": sol.converged,
    })
