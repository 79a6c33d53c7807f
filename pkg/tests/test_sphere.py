from __future__ import annotations

import math

import numpy as np
import pytest

from scalcurv.sphere import (
    AxisymProfile,
    ChartPoint,
    DomainError,
    RoundMetricConstants,
    SpherePoint,
    geodesic_distance,
    integrate_axisym,
    laplace_beltrami_axisym,
    mobius_dilate_array,
    random_sphere_points,
    sphere_volume,
    stereo_lift,
    stereo_lift_array,
    stereo_project,
    stereo_project_array,
    uniform_theta_grid,
)


def test_constants_positive():
    for n in range(3, 11):
        c = RoundMetricConstants.for_dim(n)
        assert c.c_n > 4 and c.vol_n > 0 and c.R0 == n * (n - 1)


def test_volume_closed_forms():
    assert sphere_volume(3) == pytest.approx(2 * math.pi**2, rel=1e-14)
    assert sphere_volume(4) == pytest.approx(8 * math.pi**2 / 3, rel=1e-14)


def test_point_rejects_off_sphere():
    with pytest.raises(DomainError):
        SpherePoint(np.array([1.0, 1.0, 0.0]))


def test_stereographic_examples(rng):
    n = 4
    assert np.allclose(stereo_project(SpherePoint.south(n)).y, 0.0)
    e1 = np.eye(n + 1)[0]
    assert np.allclose(stereo_project_array(e1), np.eye(n)[0])
    X = random_sphere_points(n, 1000, rng)
    X = X[X[:, -1] < 0.99]
    assert np.max(np.abs(stereo_lift_array(stereo_project_array(X)) - X)) < 1e-12
    p = stereo_lift(ChartPoint(np.array([0.3, -0.1, 0.2, 0.5]), "S"))
    assert abs(np.linalg.norm(p.coords) - 1) < 1e-12
    assert np.allclose(stereo_project(p, "S").y, [0.3, -0.1, 0.2, 0.5])


def test_mobius_group_law(rng):
    X = random_sphere_points(5, 200, rng)
    assert np.allclose(mobius_dilate_array(X, 1.0), X, atol=1e-14)
    assert np.max(np.abs(mobius_dilate_array(mobius_dilate_array(X, 0.3), 2.5) - mobius_dilate_array(X, 0.75))) < 1e-12
    eq = np.eye(6)[:1]
    far = mobius_dilate_array(eq, 1e-6)
    assert geodesic_distance(far[0], -np.eye(6)[5]) < 1e-5


def test_axisym_laplacian_examples():
    n, th = 5, uniform_theta_grid(801)
    h = th[1] - th[0]
    one = laplace_beltrami_axisym(AxisymProfile(th, np.ones_like(th), n))
    assert np.max(np.abs(one.values)) < 1e-10
    c = laplace_beltrami_axisym(AxisymProfile(th, np.cos(th), n))
    assert np.max(np.abs(c.values + n * np.cos(th))) < 20 * h**2
    c2 = laplace_beltrami_axisym(AxisymProfile(th, np.cos(th) ** 2, n))
    assert np.max(np.abs(c2.values - (2 - (2 * n + 2) * np.cos(th) ** 2))) < 50 * h**2


def test_axisym_quadrature():
    th = uniform_theta_grid(2001)
    assert integrate_axisym(AxisymProfile(th, np.ones_like(th), 3)) == pytest.approx(2 * math.pi**2, rel=1e-8)
    assert abs(integrate_axisym(AxisymProfile(th, np.cos(th), 3))) < 1e-10
    assert integrate_axisym(AxisymProfile(th, np.cos(th) ** 2, 3)) == pytest.approx(math.pi**2 / 2, rel=1e-8)


def test_profile_csv_roundtrip(tmp_path):
    th = uniform_theta_grid(65)
    p = AxisymProfile(th, np.cos(th) + 2, 5)
    p.to_csv(tmp_path / "p.csv")
    q = AxisymProfile.from_csv(tmp_path / "p.csv", 5)
    assert np.array_equal(q.values, p.values) and np.array_equal(q.theta_grid, p.theta_grid)
