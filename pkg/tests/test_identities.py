from __future__ import annotations

import numpy as np

from scalcurv.bubbles import BubbleParams, SphereBubble, standard_bubble
from scalcurv.fields import ConstantField, height_field
from scalcurv.identities import (
    BallGridFunction,
    classify_blowup,
    first_harmonic,
    kazdan_warner,
    pohozaev_residual,
    pohozaev_translational,
    radial_average,
    sphere_rule,
)


def _const_K(n, c):
    return lambda x: (np.full(x.shape[0], c), np.zeros_like(x))


def _wavy_K(x):
    return 1.0 + 0.3 * x[:, 0], np.tile([0.3] + [0.0] * (x.shape[1] - 1), (x.shape[0], 1))


def test_sphere_rule_harmonics():
    om, w = sphere_rule(4, None, 64)
    for deg in range(1, 4):
        assert abs(np.sum(w * om[:, 0] ** deg * (deg % 2))) < 1e-10


def test_pohozaev_centered_and_control():
    n = 5
    P = BubbleParams(np.zeros(n), 2.0, n)
    f = BallGridFunction(n, lambda x: standard_bubble(x, P), _const_K(n, 4.0 * n * (n - 1)))
    rep = pohozaev_residual(f, 1.0)
    assert abs(rep.residual) < 1e-6 and rep.volume_term == 0.0
    assert all(abs(pohozaev_translational(f, 1.0, i)) < 1e-8 for i in range(n))
    g = BallGridFunction(n, lambda x: standard_bubble(x, P), _wavy_K)
    assert abs(pohozaev_residual(g, 1.0).residual) > 1e-3
    assert abs(pohozaev_translational(g, 1.0, 0)) > 1e-3


def test_kazdan_warner_examples():
    n = 4
    K = ConstantField(n, n * (n - 1))
    one = ConstantField(n, 1.0)
    assert all(kazdan_warner(one, K, first_harmonic(n, i)) == 0.0 for i in range(n + 1))
    c = np.zeros(n + 1)
    c[1], c[-1] = 0.6, 0.8
    u = SphereBubble(c, 3.0)
    # a bubble is not a solution for non-constant K, so the integral does not vanish
    assert abs(kazdan_warner(u, height_field(n), first_harmonic(n, n), axis=c)) > 1e-3


def test_radial_average_examples():
    n = 5
    radii = np.geomspace(1e-3, 10, 200)
    c = radial_average(lambda x: np.ones(x.shape[0]), n, np.zeros(n), radii)
    assert classify_blowup(c, 10.0) == "degenerate"
    P1, P2 = BubbleParams(np.zeros(n), 1.0, n), BubbleParams(np.zeros(n), 1e4, n)
    radii = np.geomspace(1e-6, 10, 500)
    t = radial_average(lambda x: standard_bubble(x, P1)[0] + standard_bubble(x, P2)[0], n, np.zeros(n), radii)
    assert len(t.critical_radii) >= 2 and classify_blowup(t, 10.0) == "multi-critical"
