from __future__ import annotations

import numpy as np
import pytest

from scalcurv.kmfactory import (
    KmParams,
    SeparableTemplate,
    TemplateError,
    assemble_km,
    base_monotone_field,
    build_sequence,
    calibrate_eps_scale,
    check_monotone_field,
    normal_form_patch,
    realize_template,
    shear_deform,
    verify_km,
)
from scalcurv.sphere import DomainError

N = 5


def test_template_counts_and_euler():
    for d in range(N):
        tpl = SeparableTemplate(N, d)
        M = tpl.counts()
        assert sum((-1) ** j * m for j, m in enumerate(M)) == 1 + (-1) ** N and M[N] == 1
    assert realize_template(N, [2, 1, 0, 0, 0, 1]).d == 1
    with pytest.raises(TemplateError):
        realize_template(N, [3, 2, 0, 0, 0, 1])
    with pytest.raises(TemplateError):
        realize_template(N, [1, 1, 0, 0, 0, 1])


def test_monotone_field():
    eps0, d0 = 0.004, 0.2
    K = base_monotone_field(N, eps0, d0)
    north = np.eye(N + 1)[N][None]
    # away from S the field is eps0 (1 + h - 3 delta0 / 2)
    assert K.value(north)[0] == pytest.approx(eps0 * (2 - 1.5 * d0), rel=1e-12)
    assert K.value(-north)[0] == pytest.approx(0.0, abs=1e-15)
    rep = check_monotone_field(K, d0, samples=20000)
    assert rep["min_monotone"] >= -1e-12 and rep["c"] > 0
    with pytest.raises(DomainError):
        base_monotone_field(8, eps0, 0.2)


def test_params_schedule():
    p = KmParams.default(N, [1, 0, 0, 0, 0, 1], 0.004)
    calibrate_eps_scale(p, samples=5000)
    eps = [p.eps(m) for m in range(6)]
    assert all(b < a for a, b in zip(eps, eps[1:]))
    assert all(b < a for a, b in zip(p.deltas, p.deltas[1:]))
    with pytest.raises(ValueError):
        KmParams.default(N, [1, 0, 0, 0, 1, 1], 0.004)


def test_member_positive_and_single_max():
    p = KmParams.default(N, [2, 1, 0, 0, 0, 1], 0.004)
    calibrate_eps_scale(p, samples=5000)
    F = assemble_km(p, 2)
    idx = [r.morse_index for r in F.analytic_crits]
    assert idx.count(N) == 1 and min(F.field.value(np.eye(N + 1))) > 0
    d = F.to_dict()
    assert d["m"] == 2 and "params" in d


def _rotation(angle):
    R = np.eye(3)
    R[:2, :2] = [[np.cos(angle), -np.sin(angle)], [np.sin(angle), np.cos(angle)]]
    return R


def test_normal_form_patch():
    A = np.diag([1.0, -2.0, 0.5])
    p = np.array([0.1, 0.0, -0.2])
    patch = normal_form_patch(p, A, _rotation(0.3), 0.3, 0.1, scan=50000)
    assert patch.scan_min_ratio > 0
    d = np.array([0.01, -0.02, 0.03])
    v, _ = patch.value_grad(p + d)
    assert v[0] == pytest.approx(float(d @ A @ d), rel=1e-12)
    assert np.allclose(patch.value_grad(p)[1], 0.0)
    with pytest.raises(DomainError):
        normal_form_patch(p, np.diag([1.0, 1.0, -1.0]), np.eye(3), 0.3, 0.1)


def test_shear_moves_critical_points():
    A = np.diag([1.0, -2.0, 0.5])
    c = np.array([0.5, 0.2, 0.3])
    patch = normal_form_patch(c, A, np.eye(3), 0.3, 0.1, scan=1000)
    sh = shear_deform(patch.value_grad, c[None], 0.05)
    assert np.allclose(sh.value_grad(np.array([0.5, 0.2, 0.0]))[1], 0.0, atol=1e-14)
    # zero shear leaves the field unchanged
    flat = shear_deform(patch.value_grad, np.array([[0.5, 0.2, 0.0]]), 0.05)
    y = c + 0.05 * np.random.default_rng(0).standard_normal((20, 3))
    assert np.array_equal(flat.value_grad(y)[0], patch.value_grad(y)[0])
    with pytest.raises(DomainError):
        shear_deform(patch.value_grad, np.array([[0.0, 0.0, 0.1], [0.01, 0.0, 0.2]]), 0.05)


@pytest.mark.slow
def test_sabotaged_schedule_fails_clause_c():
    p = KmParams.default(N, [1, 0, 0, 0, 0, 1], 0.004)
    p.eps_ratio = 1.0
    rep = verify_km(build_sequence(p, range(4)), samples=5000, seeds=200)
    assert not rep.clause_c


def test_short_sequence_passes():
    p = KmParams.default(N, [1, 0, 0, 0, 0, 1], 0.004)
    rep = verify_km(build_sequence(p, range(3)), samples=5000, seeds=200)
    assert rep.clause_a and rep.clause_b and rep.clause_c and rep.details["pinch_max"] <= 1.01
