from __future__ import annotations

import numpy as np
import pytest

from scalcurv.bubbles import limit_energy
from scalcurv.fields import ConstantField, axisym_poly
from scalcurv.solver import (
    AxisymProblem,
    bubble_seed,
    continuation,
    flow,
    gradient,
    hessian_sector_spectrum,
    morse_index,
    newton_refine,
    reference_minimum,
    sector_multiplicity,
    solve,
)
from scalcurv.sphere import DomainError

N = 5


def test_constant_state_value_and_gradient():
    pb = AxisymProblem(1.0, N, 0.05, 1024)
    st = pb.constant_state()
    assert pb.J(st.u) == pytest.approx(reference_minimum(N, 0.05), rel=1e-12)
    assert gradient(st).norm < 1e-12


def test_scaling_invariance(rng):
    pb = AxisymProblem(axisym_poly(N, [1.0, 0.1]), N, 0.03, 512)
    u = 1.0 + 0.2 * np.cos(pb.theta) + 0.05 * rng.standard_normal(pb.theta.size)
    assert pb.J(3.7 * u) == pytest.approx(pb.J(u), rel=1e-12)


def test_flow_from_random_positive_state_reaches_constant(rng):
    pb = AxisymProblem(ConstantField(N, 1.0), N, 0.05, 512)
    u = 1.0 + 0.4 * rng.uniform(size=pb.theta.size)
    fr = flow(pb.state(u), tol=1e-9)
    assert fr.converged or fr.reason == "roundoff_floor"
    assert pb.J(fr.state.u) == pytest.approx(reference_minimum(N, 0.05), rel=1e-8)
    assert min(fr.min_u_history) > 0 and max(abs(x - 1) for x in fr.norm_history) < 1e-10


def test_newton_refines_constant():
    pb = AxisymProblem(1.0, N, 0.02, 512)
    rep = newton_refine(pb.state(pb.constant_state().u * (1 + 1e-3 * np.cos(pb.theta))), tol=1e-12)
    assert rep.grad_norm < 1e-12 and rep.iterations <= 3


def test_constant_solution_index_zero():
    pb = AxisymProblem(1.0, N, 0.02, 512)
    assert morse_index(hessian_sector_spectrum(pb.constant_state())) == 0


def test_single_bubble_at_maximum():
    pb = AxisymProblem(axisym_poly(N, [1.0, 0.1]), N, 0.02, 2048)
    rep = solve(bubble_seed(pb, 0.0, 4.0))
    assert rep.converged and rep.grad_norm < 1e-10
    assert rep.morse_index_total == 0
    assert rep.state.peak()[0] == 0.0


def test_bubble_energy_matches_limit_energy():
    pb = AxisymProblem(4.0 * N * (N - 1), N, 0.0, 4096)
    st = bubble_seed(pb, 0.0, 100.0)
    assert pb.J(st.u) == pytest.approx(limit_energy([4.0 * N * (N - 1)], N), rel=5e-3)


def test_sector_multiplicity():
    assert [sector_multiplicity(5, l) for l in range(4)] == [1, 5, 14, 30]


def test_tau_domain():
    with pytest.raises(DomainError):
        AxisymProblem(1.0, N, 0.5, 64)


def test_constant_K_does_not_concentrate():
    rep = continuation(1.0, N, [0.08, 0.05, 0.03, 0.02, 0.01], nodes=512)
    assert all(s.lam < 2.0 for s in rep.steps)
