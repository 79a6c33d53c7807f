from __future__ import annotations

import numpy as np

from scalcurv.fields import ConstantField, QuadraticField, axisym_poly, height_field, multi_peak_field, tangent_basis
from scalcurv.sphere import random_sphere_points


def _fd_check(K, n, rng, h=1e-6):
    X = random_sphere_points(n, 20, rng)
    ev = K.evaluate(X)
    T = tangent_basis(X)
    for k in range(n):
        v = T[:, :, k]
        Xp = np.cos(h) * X + np.sin(h) * v
        Xm = np.cos(h) * X - np.sin(h) * v
        fd = (K.value(Xp) - K.value(Xm)) / (2 * h)
        assert np.max(np.abs(fd - np.einsum("ij,ij->i", ev.grad, v))) < 1e-6


def test_gradients_match_geodesic_differences(rng):
    n = 4
    B = rng.standard_normal((n + 1, n + 1))
    for K in (height_field(n), axisym_poly(n, [1.0, 0.2, -0.3, 0.1]), QuadraticField(B + B.T, rng.standard_normal(n + 1)),
              multi_peak_field(n, np.eye(n + 1)[[n, 0]])):
        _fd_check(K, n, rng)


def test_height_laplacian_is_eigenfunction(rng):
    n = 5
    X = random_sphere_points(n, 50, rng)
    ev = height_field(n).evaluate(X)
    assert np.allclose(ev.laplacian, -n * X[:, -1], atol=1e-12)


def test_constant_field():
    ev = ConstantField(3, 2.5).evaluate(np.eye(4))
    assert np.all(ev.value == 2.5) and np.all(ev.grad == 0)
