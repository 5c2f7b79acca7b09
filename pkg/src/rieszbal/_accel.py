"""Hot numeric kernels with a numba path and a pure-numpy fallback.

Set ``RIESZBAL_DISABLE_NUMBA=1`` (or ``NUMBA_DISABLE_JIT=1``) before import to
force the numpy implementations.  Both paths use a fixed reduction order, so a
given backend is bit-reproducible; the two backends may differ in the last
ulp.
"""
from __future__ import annotations

import os

import numpy as np

_FLAG = os.environ.get("RIESZBAL_DISABLE_NUMBA", "").strip().lower()
_DISABLED = _FLAG not in ("", "0", "false", "no") or os.environ.get("NUMBA_DISABLE_JIT") == "1"

try:
    if _DISABLED:
        raise ImportError
    from numba import njit
    HAVE_NUMBA = True
except ImportError:
    HAVE_NUMBA = False

BACKEND = "numba" if HAVE_NUMBA else "numpy"


# ---------------------------------------------------------------------------
# numpy reference implementations
# ---------------------------------------------------------------------------

def _sqdist_np(X, Y):
    d2 = np.zeros((X.shape[0], Y.shape[0]))
    for k in range(X.shape[1]):
        diff = X[:, k][:, None] - Y[:, k][None, :]
        d2 += diff * diff
    return d2


def kernel_matrix_np(X, diag, p):
    d2 = _sqdist_np(X, X)
    np.fill_diagonal(d2, 1.0)
    K = d2 ** (0.5 * p)
    np.fill_diagonal(K, diag)
    return K


def cross_kernel_np(P, X, diag, p):
    """K(P_a, X_i); exact coincidences take ``diag[i]``."""
    d2 = _sqdist_np(P, X)
    hit = d2 == 0.0
    d2[hit] = 1.0
    K = d2 ** (0.5 * p)
    if hit.any():
        K[hit] = np.broadcast_to(diag[None, :], K.shape)[hit]
    return K


def potential_np(P, X, w, diag, p):
    nz = w != 0.0
    if not nz.any():
        return np.zeros(P.shape[0])
    K = cross_kernel_np(P, X[nz], diag[nz], p)
    return (K * w[nz][None, :]).sum(axis=1)


def matvec_np(K, w):
    # pairwise row reduction: single-threaded, fixed order
    return (K * w[None, :]).sum(axis=1)


def cd_sweep_np(K, b, w, r):
    """One cyclic projected coordinate-descent sweep; updates ``w`` and ``r = Kw`` in place."""
    n = w.shape[0]
    moved = 0.0
    for i in range(n):
        kii = K[i, i]
        wi = w[i]
        new = wi + (b[i] - r[i]) / kii
        if new < 0.0:
            new = 0.0
        delta = new - wi
        if delta != 0.0:
            w[i] = new
            r += delta * K[i]
            step = abs(delta) * kii
            if step > moved:
                moved = step
    return moved


# ---------------------------------------------------------------------------
# numba implementations
# ---------------------------------------------------------------------------

if HAVE_NUMBA:

    @njit(cache=True)
    def kernel_matrix_nb(X, diag, p):
        n, dim = X.shape
        K = np.empty((n, n))
        half = 0.5 * p
        for i in range(n):
            K[i, i] = diag[i]
            for j in range(i + 1, n):
                d2 = 0.0
                for k in range(dim):
                    t = X[i, k] - X[j, k]
                    d2 += t * t
                v = d2 ** half
                K[i, j] = v
                K[j, i] = v
        return K

    @njit(cache=True)
    def cross_kernel_nb(P, X, diag, p):
        m, dim = P.shape
        n = X.shape[0]
        K = np.empty((m, n))
        half = 0.5 * p
        for a in range(m):
            for i in range(n):
                d2 = 0.0
                for k in range(dim):
                    t = P[a, k] - X[i, k]
                    d2 += t * t
                if d2 == 0.0:
                    K[a, i] = diag[i]
                else:
                    K[a, i] = d2 ** half
        return K

    @njit(cache=True)
    def potential_nb(P, X, w, diag, p):
        m, dim = P.shape
        n = X.shape[0]
        out = np.empty(m)
        half = 0.5 * p
        for a in range(m):
            s = 0.0
            for i in range(n):
                if w[i] == 0.0:
                    continue
                d2 = 0.0
                for k in range(dim):
                    t = P[a, k] - X[i, k]
                    d2 += t * t
                if d2 == 0.0:
                    s += w[i] * diag[i]
                else:
                    s += w[i] * d2 ** half
            out[a] = s
        return out

    @njit(cache=True)
    def matvec_nb(K, w):
        n = K.shape[0]
        out = np.empty(n)
        for i in range(n):
            s = 0.0
            for j in range(K.shape[1]):
                s += K[i, j] * w[j]
            out[i] = s
        return out

    @njit(cache=True)
    def cd_sweep_nb(K, b, w, r):
        n = w.shape[0]
        moved = 0.0
        for i in range(n):
            kii = K[i, i]
            wi = w[i]
            new = wi + (b[i] - r[i]) / kii
            if new < 0.0:
                new = 0.0
            delta = new - wi
            if delta != 0.0:
                w[i] = new
                # K is symmetric: row i is contiguous, column i is not
                for j in range(n):
                    r[j] += delta * K[i, j]
                step = abs(delta) * kii
                if step > moved:
                    moved = step
        return moved

    kernel_matrix = kernel_matrix_nb
    cross_kernel = cross_kernel_nb
    potential = potential_nb
    matvec = matvec_nb
    cd_sweep = cd_sweep_nb
else:
    kernel_matrix = kernel_matrix_np
    cross_kernel = cross_kernel_np
    potential = potential_np
    matvec = matvec_np
    cd_sweep = cd_sweep_np
