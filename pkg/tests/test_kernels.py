from __future__ import annotations

import os
import subprocess
import sys

import numpy as np

from scalcurv import kernels


def test_tridiag_paths_agree(rng):
    n = 300
    off = rng.uniform(-1, 1, n - 1)
    diag = 4 + rng.uniform(0, 1, n)
    rhs = rng.standard_normal(n)
    a = kernels._tridiag_solve_nb(off, diag, off.copy(), rhs)
    b = kernels._tridiag_solve_np(off, diag, off.copy(), rhs)
    assert np.allclose(a, b, rtol=1e-12, atol=1e-14)
    T = np.diag(diag) + np.diag(off, 1) + np.diag(off, -1)
    assert np.allclose(T @ a, rhs)


def test_negcount_paths_agree(rng):
    for _ in range(20):
        n = int(rng.integers(2, 60))
        d, o = rng.standard_normal(n), rng.standard_normal(n - 1)
        s = float(rng.standard_normal())
        exact = int(np.sum(np.linalg.eigvalsh(np.diag(d) + np.diag(o, 1) + np.diag(o, -1)) < s))
        assert kernels._tridiag_negcount_nb(d, o, s) == exact == kernels._tridiag_negcount_np(d, o, s)


def test_rk4_paths_agree():
    a = kernels._rk4_fowler_nb(6.0, 4.0, 0.8, 0.1, 1e-3, 500)
    b = kernels._rk4_fowler_np(6.0, 4.0, 0.8, 0.1, 1e-3, 500)
    assert np.allclose(a[0], b[0], rtol=1e-13) and np.allclose(a[1], b[1], rtol=1e-13)


def test_fallback_switch():
    env = dict(os.environ, SCALCURV_NO_NUMBA="1")
    code = "import scalcurv; print(scalcurv.NUMBA_ENABLED)"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    code = ("from scalcurv.fowler import *; s = FowlerSystem(6, 4.0); v, w = orbit_start(s, -0.5);"
            "print(integrate(s, v, w, (0, 5)).drift < 1e-8)")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"
