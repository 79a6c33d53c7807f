from __future__ import annotations

import math

import numpy as np
import pytest

from scalcurv.fowler import (
    FowlerSystem,
    flux_identity,
    integrate,
    lift_to_radial,
    orbit_start,
    period,
    radial_residual,
)
from scalcurv.sphere import DomainError


def test_equilibrium_examples(rng):
    s = FowlerSystem(6, 4.0)
    assert s.v0 == 1.0 and s.H0 == -2.0 / 3.0
    for _ in range(100):
        S = FowlerSystem(int(rng.integers(3, 12)), float(rng.uniform(0.1, 10)))
        assert abs(float(S.dV(S.v0))) < 1e-12 * max(1.0, S.v0)
        assert float(S.d2V(S.v0)) == pytest.approx(S.n - 2, rel=1e-10)


def test_equilibrium_trajectory_is_constant():
    s = FowlerSystem(5, 2.0)
    tr = integrate(s, s.v0, 0.0, (0.0, 10.0))
    assert tr.drift < 1e-14 and np.allclose(tr.v, s.v0)


def test_drift_on_symmetric_span():
    s = FowlerSystem(6, 4.0)
    v, w = orbit_start(s, s.H0 / 2)
    tr = integrate(s, v, w, (-20.0, 20.0))
    assert tr.drift < 1e-8 and not tr.left_positive_branch


def test_period_limits_and_monotonicity():
    s = FowlerSystem(6, 4.0)
    assert period(s, s.H0 * (1 - 1e-9)) == pytest.approx(math.pi, rel=1e-3)
    Hs = np.linspace(s.H0 * 0.999, s.H0 * 1e-3, 50)
    T = [period(s, H) for H in Hs]
    assert all(b > a for a, b in zip(T, T[1:]))
    # divergence near the homoclinic is logarithmic: T grows by a fixed amount per decade of |H|
    Td = [period(s, -10.0**-k) for k in (4, 6, 8)]
    assert Td[2] - Td[1] == pytest.approx(Td[1] - Td[0], rel=0.05)
    with pytest.raises(DomainError):
        period(s, 0.1)


def test_lift_and_radial_residual():
    s = FowlerSystem(5, 3.0)
    v, w = orbit_start(s, 0.6 * s.H0)
    tr = integrate(s, v, w, (0.0, 3.0), dt=1e-3)
    prof = lift_to_radial(tr)
    res = radial_residual(prof, s.kappa)
    assert np.max(np.abs(res)) < 1e-7
    assert np.all(prof.u >= tr.v.min() * prof.r ** ((2 - s.n) / 2) * (1 - 1e-12))


def test_flux_examples():
    s = FowlerSystem(6, 4.0)
    tr = integrate(s, 1.0, 0.0, (0.0, 2.0))
    flux, om_h, diff = flux_identity(s, tr, 2.0)
    assert om_h == pytest.approx(-2 * math.pi**3 / 3, rel=1e-12) and abs(diff) < 1e-8
    v, w = orbit_start(s, -0.3)
    tr = integrate(s, v, w, (0.0, math.log(200.0)), dt=1e-3)
    vals = [flux_identity(s, tr, r) for r in (1.0, 10.0, 100.0)]
    assert max(abs(x[2]) for x in vals) < 1e-6
