"""Hot inner loops.

Each kernel has a compiled variant (``*_nb``) and a numpy/scipy variant
(``*_np``). The public name is bound to one of them according to
``SCALCURV_NO_NUMBA``; both stay importable so they can be benchmarked and
cross-checked against each other.
"""
from __future__ import annotations

import math

import numpy as np
from scipy.linalg import eigvalsh_tridiagonal, solve_banded

from ._accel import NUMBA_ENABLED, njit

__all__ = [
    "tridiag_solve",
    "tridiag_negcount",
    "rk4_fowler",
    "NUMBA_ENABLED",
]


# ---------------------------------------------------------------- tridiagonal


@njit
def _tridiag_solve_nb(sub, diag, sup, rhs):
    n = diag.shape[0]
    beta = np.empty(n)
    gam = np.empty(n)
    y = np.empty(n)
    x = np.empty(n)
    beta[0] = diag[0]
    y[0] = rhs[0] / beta[0]
    for i in range(1, n):
        gam[i - 1] = sup[i - 1] / beta[i - 1]
        beta[i] = diag[i] - sub[i - 1] * gam[i - 1]
        y[i] = (rhs[i] - sub[i - 1] * y[i - 1]) / beta[i]
    x[n - 1] = y[n - 1]
    for i in range(n - 2, -1, -1):
        x[i] = y[i] - gam[i] * x[i + 1]
    return x


def _tridiag_solve_np(sub, diag, sup, rhs):
    n = diag.shape[0]
    ab = np.zeros((3, n))
    ab[0, 1:] = sup
    ab[1] = diag
    ab[2, :-1] = sub
    return solve_banded((1, 1), ab, rhs)


@njit
def _tridiag_negcount_nb(diag, off, shift):
    # Sturm count via the LDL^T pivots of T - shift*I.
    n = diag.shape[0]
    count = 0
    d = diag[0] - shift
    if d < 0.0:
        count += 1
    for i in range(1, n):
        if d == 0.0:
            d = 1e-300
        d = diag[i] - shift - off[i - 1] * off[i - 1] / d
        if d < 0.0:
            count += 1
    return count


def _tridiag_negcount_np(diag, off, shift):
    w = eigvalsh_tridiagonal(diag, off)
    return int(np.count_nonzero(w < shift))


# ---------------------------------------------------------------- Fowler RK4


@njit
def _fowler_rhs(v, expo, kappa, a2):
    # v'' = -V'(v) = (a^2) v - kappa v^expo,   expo = (n+2)/(n-2)
    if v > 0.0:
        return a2 * v - kappa * v**expo
    return a2 * v + kappa * (-v) ** expo


@njit
def _rk4_fowler_nb(n, kappa, v0, w0, dt, nsteps):
    expo = (n + 2.0) / (n - 2.0)
    a2 = ((n - 2.0) / 2.0) ** 2
    v = np.empty(nsteps + 1)
    w = np.empty(nsteps + 1)
    v[0] = v0
    w[0] = w0
    for i in range(nsteps):
        vi = v[i]
        wi = w[i]
        k1v = wi
        k1w = _fowler_rhs(vi, expo, kappa, a2)
        k2v = wi + 0.5 * dt * k1w
        k2w = _fowler_rhs(vi + 0.5 * dt * k1v, expo, kappa, a2)
        k3v = wi + 0.5 * dt * k2w
        k3w = _fowler_rhs(vi + 0.5 * dt * k2v, expo, kappa, a2)
        k4v = wi + dt * k3w
        k4w = _fowler_rhs(vi + dt * k3v, expo, kappa, a2)
        v[i + 1] = vi + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        w[i + 1] = wi + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
    return v, w


def _rk4_fowler_np(n, kappa, v0, w0, dt, nsteps):
    expo = (n + 2.0) / (n - 2.0)
    a2 = ((n - 2.0) / 2.0) ** 2

    def acc(x):
        return a2 * x - kappa * math.copysign(abs(x) ** expo, x)

    v = np.empty(nsteps + 1)
    w = np.empty(nsteps + 1)
    v[0], w[0] = v0, w0
    vi, wi = float(v0), float(w0)
    for i in range(nsteps):
        k1v, k1w = wi, acc(vi)
        k2v, k2w = wi + 0.5 * dt * k1w, acc(vi + 0.5 * dt * k1v)
        k3v, k3w = wi + 0.5 * dt * k2w, acc(vi + 0.5 * dt * k2v)
        k4v, k4w = wi + dt * k3w, acc(vi + dt * k3v)
        vi = vi + dt / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v)
        wi = wi + dt / 6.0 * (k1w + 2.0 * k2w + 2.0 * k3w + k4w)
        v[i + 1], w[i + 1] = vi, wi
    return v, w


# ---------------------------------------------------------------- dispatch


def tridiag_solve(sub, diag, sup, rhs):
    """Solve a tridiagonal system; ``sub``/``sup`` have length ``len(diag) - 1``."""
    args = [np.ascontiguousarray(a, dtype=np.float64) for a in (sub, diag, sup, rhs)]
    if NUMBA_ENABLED:
        return _tridiag_solve_nb(*args)
    return _tridiag_solve_np(*args)


def tridiag_negcount(diag, off, shift=0.0):
    """Number of eigenvalues of the symmetric tridiagonal matrix below ``shift``."""
    diag = np.ascontiguousarray(diag, dtype=np.float64)
    off = np.ascontiguousarray(off, dtype=np.float64)
    if NUMBA_ENABLED:
        return int(_tridiag_negcount_nb(diag, off, float(shift)))
    return _tridiag_negcount_np(diag, off, float(shift))


def rk4_fowler(n, kappa, v0, w0, dt, nsteps):
    """Classical RK4 for ``v'' = ((n-2)/2)^2 v - kappa v^((n+2)/(n-2))``."""
    if NUMBA_ENABLED:
        return _rk4_fowler_nb(float(n), float(kappa), float(v0), float(w0), float(dt), int(nsteps))
    return _rk4_fowler_np(float(n), float(kappa), float(v0), float(w0), float(dt), int(nsteps))
