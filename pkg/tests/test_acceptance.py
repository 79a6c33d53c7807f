"""Acceptance criteria 1-10.

Each test records one PASS/FAIL line (printed in the terminal summary) for the
criterion as stated, and asserts what is actually attainable. Where the two
differ the line says FAIL and gives the reason.
"""
from __future__ import annotations

import itertools
import math
import time

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from scalcurv.bubbles import (
    BubbleParams,
    bubble_residual_study,
    critical_norm,
    euclidean_bubble_critical_integral,
    kelvin_invert,
    kelvin_transform,
    sobolev_report,
    standard_bubble,
)
from scalcurv.fields import ConstantField, QuadraticField, axisym_poly, height_field
from scalcurv.fowler import FowlerSystem, flux_identity, integrate, orbit_start, period
from scalcurv.identities import (
    BallGridFunction,
    classify_blowup,
    first_harmonic,
    kazdan_warner,
    pohozaev_residual,
    pohozaev_translational,
    radial_average,
)
from scalcurv.bubbles import SphereBubble
from scalcurv.kmfactory import KmParams, build_sequence, verify_km
from scalcurv.morse import (
    MorseReport,
    degree_count,
    degree_count_bruteforce,
    find_critical_points,
    implication_chain,
    index_formula,
    pinch_from_values,
)
from scalcurv.solver import AxisymProblem, continuation, flow, reference_minimum
from scalcurv.sphere import sphere_volume


def record(k: int, ok: bool, detail: str, elapsed: float) -> None:
    line = f"{'PASS' if ok else 'FAIL'} criterion {k}: {detail} [{elapsed:.1f} s]"
    ACCEPTANCE_LINES[k] = line
    print(line)


def test_criterion_1_sobolev_constant():
    t0 = time.perf_counter()
    errs, flagged = [], []
    for n in range(3, 11):
        rep = sobolev_report(n)
        exact = n * (n - 1) * sphere_volume(n) ** (2.0 / n)
        # c_hat0 must agree with the independent Talenti route c_n * S_n
        errs.append(max(abs(rep.c_hat0 / exact - 1.0), abs(rep.talenti_route / exact - 1.0)))
        flagged.append(not rep.printed_matches)
    ok = max(errs) < 1e-10 and all(flagged)
    record(1, ok, f"max rel error (Talenti vs Yamabe route) {max(errs):.1e}, printed display flagged for all n", time.perf_counter() - t0)
    assert ok


def test_criterion_2_bubble_exactness():
    t0 = time.perf_counter()
    worst, slopes = 0.0, []
    for n in range(3, 9):
        st = bubble_residual_study(n)
        worst = max(worst, st.residuals[-1])
        slopes.append(st.slope)
    ok = worst < 1e-9 and min(slopes) >= 2.0
    record(2, ok, f"finest residual {worst:.1e}, min convergence slope {min(slopes):.2f}", time.perf_counter() - t0)
    assert ok


def test_criterion_3_fowler():
    t0 = time.perf_counter()
    sysm = FowlerSystem(6, 4.0)
    exact_eq = sysm.v0 == 1.0 and sysm.H0 == -2.0 / 3.0
    # drift order
    v, w = orbit_start(sysm, -0.5)
    T = period(sysm, -0.5)
    dts = [T / 40, T / 80, T / 160]
    drifts = [integrate(sysm, v, w, (0, 3 * T), dt=d, tol=1.0).drift for d in dts]
    order = np.polyfit(np.log(dts), np.log(drifts), 1)[0]
    # flux over two decades of r
    traj = integrate(sysm, v, w, (0.0, math.log(1000.0)), dt=1e-3, tol=1e-10)
    flux = [flux_identity(sysm, traj, r) for r in (1.0, 3.0, 10.0, 30.0, 100.0)]
    flux_res = max(abs(f[2]) for f in flux)
    spread = max(f[0] for f in flux) - min(f[0] for f in flux)
    # small-oscillation limit
    periods = {n: period(FowlerSystem(n, 4.0), FowlerSystem(n, 4.0).H0 * (1 - 1e-8)) for n in (3, 5, 6, 8)}
    per_err = max(abs(p * math.sqrt(n - 2) / (2 * math.pi) - 1) for n, p in periods.items())
    ok = exact_eq and order >= 3.8 and flux_res < 1e-6 and spread < 1e-6 and per_err < 1e-3
    record(3, ok, f"drift order {order:.2f}, flux residual {flux_res:.1e}, r-spread {spread:.1e}, "
                  f"period error {per_err:.1e}, (v0,H0)=({sysm.v0},{sysm.H0:.12g})", time.perf_counter() - t0)
    assert ok


def test_criterion_4_identities():
    t0 = time.perf_counter()
    worst = 0.0
    for n in (3, 5, 6):
        Kc = 4.0 * n * (n - 1)
        Kfun = lambda x, Kc=Kc: (np.full(x.shape[0], Kc), np.zeros_like(x))  # noqa: E731
        for off in (0.0, 0.25):
            a = np.zeros(n)
            a[0] = off
            P = BubbleParams(a, 3.0, n)
            f = BallGridFunction(n, lambda x, P=P: standard_bubble(x, P), Kfun, axis=a if off else None)
            for r in (0.5, 1.0):
                worst = max(worst, abs(pohozaev_residual(f, r).residual))
                worst = max(worst, *(abs(pohozaev_translational(f, r, i)) for i in range(n)))
    kw = 0.0
    for n in (3, 5):
        c = np.zeros(n + 1)
        c[0], c[-1] = 0.6, 0.8
        u = SphereBubble(c, 2.0)
        K = ConstantField(n, 1.0)
        kw = max(kw, *(abs(kazdan_warner(u, K, first_harmonic(n, i), axis=c)) for i in range(n + 1)))
    ok = worst < 1e-6 and kw < 1e-8
    record(4, ok, f"max Pohozaev residual {worst:.1e}, max Kazdan-Warner {kw:.1e}", time.perf_counter() - t0)
    assert ok


def test_criterion_5_morse_criteria():
    t0 = time.perf_counter()
    g = np.random.default_rng(5)
    euler_ok = 0
    for trial in range(100):
        n = int(g.integers(2, 6))
        B = g.standard_normal((n + 1, n + 1))
        K = QuadraticField(0.5 * (B + B.T), 0.3 * g.standard_normal(n + 1), 3.0)
        rep = find_critical_points(K, n, seeds=600, rng=trial)
        euler_ok += rep.euler_check == 1 + (-1) ** n
    hf = [index_formula(find_critical_points(height_field(n), n, seeds=100, rng=0), n)[1] for n in (3, 4, 5, 6)]
    height_fails = not any(hf)

    printed_bad = energy_bad = 0
    for _ in range(10000):
        n = int(g.integers(3, 11))
        l = int(g.integers(1, 7))
        v = np.exp(g.uniform(0.0, g.choice([0.01, 0.1, 0.5]), l))
        P = pinch_from_values(n, float(v.max()), float(v.min() * np.exp(-g.uniform(0, 0.05))), v)
        printed_bad += not implication_chain(P, "printed")
        energy_bad += not implication_chain(P, "energy")

    degree_ok = True
    n = 5
    for l in range(1, 7):
        for idx in itertools.product(range(n + 1), repeat=l):
            rep = MorseReport.synthetic(n, list(idx), [-1.0] * l)
            for q in range(1, l + 1):
                degree_ok &= degree_count(rep, n, q) == degree_count_bruteforce(rep, n, q)
            if degree_count(rep, n, 1) == 1:
                d2 = degree_count_bruteforce(rep, n, 2)
                degree_ok &= (d2 == 0) == (l == 1)
    ok = euler_ok == 100 and height_fails and printed_bad == 0 and degree_ok
    detail = (f"Euler {euler_ok}/100, height index formula fails={height_fails}, degree identity={degree_ok}, "
              f"chain violations printed (P~_m) {printed_bad}/10000, energy-exponent form {energy_bad}/10000")
    if printed_bad:
        detail += " (printed (P~_m) exponent (n-2)/2 is stronger than (P_m) implies)"
    record(5, ok, detail, time.perf_counter() - t0)
    assert euler_ok == 100 and height_fails and degree_ok and energy_bad == 0


@pytest.mark.slow
def test_criterion_6_km_factory():
    t0 = time.perf_counter()
    results = {}
    for name, counts in {"2-point": [1, 0, 0, 0, 0, 1], "3-point": [2, 1, 0, 0, 0, 1]}.items():
        p = KmParams.default(5, counts, 0.004)
        rep = verify_km(build_sequence(p, range(9)))
        results[name] = (rep.clause_a, rep.clause_b, rep.clause_c, rep.details["pinch_max"])
    ok = all(a and b and c and pk <= 1.01 for a, b, c, pk in results.values())
    detail = "; ".join(f"{k}: a={a} b={b} c={c} pinch={pk:.5f}" for k, (a, b, c, pk) in results.items())
    record(6, ok, detail, time.perf_counter() - t0)
    assert ok


def test_criterion_7_solver():
    t0 = time.perf_counter()
    n = 5
    pb = AxisymProblem(axisym_poly(n, [1.0, 0.1]), n, 0.05, 2048)
    g = np.random.default_rng(7)
    th = pb.theta
    worst = 0.0
    for _ in range(100):
        c = g.uniform(-0.3, 0.3, 4)
        u = pb.normalize(1.0 + sum(c[k] * np.cos((k + 1) * th) for k in range(4)))
        v = sum(g.standard_normal() * np.cos(k * th) for k in range(5))
        d = float(pb.dJ(u) @ v)
        # Richardson-extrapolated central difference, O(h^4)
        h = 1e-4
        c1 = (pb.J(u + h * v) - pb.J(u - h * v)) / (2 * h)
        c2 = (pb.J(u + 2 * h * v) - pb.J(u - 2 * h * v)) / (4 * h)
        fd = (4 * c1 - c2) / 3
        worst = max(worst, abs(d - fd) / max(abs(fd), 1e-12))
    fl = flow(pb.state(pb.normalize(1.0 + 0.2 * np.cos(th))), tol=1e-7)
    J = np.array(fl.J_history)
    mono = bool(np.all(np.diff(J) <= 1e-14 * np.abs(J[1:])))
    norm_ok = max(abs(x - 1.0) for x in fl.norm_history) < 1e-12
    pos_ok = min(fl.min_u_history) > 0
    ref = AxisymProblem(ConstantField(n, 1.0), n, 0.05, 2048)
    fr = flow(ref.state(ref.normalize(1.0 + 0.3 * np.cos(ref.theta) + 0.1 * np.cos(2 * ref.theta))), tol=1e-10)
    u = fr.state.u
    Jerr = abs(ref.J(u) / reference_minimum(n, 0.05) - 1.0)
    # J is quadratic at the minimum, so descent resolves u only to about sqrt(eps)
    const = float(np.ptp(u) / u.mean())
    ok = worst < 1e-6 and mono and norm_ok and pos_ok and Jerr < 1e-8 and const < 1e-5
    record(7, ok, f"gradient rel error {worst:.1e}, monotone={mono}, norm={norm_ok}, positive={pos_ok}, "
                  f"constant-K value rel error {Jerr:.1e}, spread {const:.1e}", time.perf_counter() - t0)
    assert ok


def test_criterion_8_bubbling():
    t0 = time.perf_counter()
    n = 5
    K = axisym_poly(n, [1.0, 0.1])

    def lap(theta):
        x = np.zeros((1, n + 1))
        x[0, 0], x[0, -1] = math.sin(theta), math.cos(theta)
        return float(K.evaluate(x).laplacian[0])

    taus = [0.08, 0.06, 0.04, 0.03, 0.02, 0.015, 0.01, 0.0075, 0.005]
    rep = continuation(K, n, taus, nodes=2048, K_lap=lap)
    slope_ok = rep.slope is not None and abs(rep.slope + 0.5) <= 0.05
    gap_ok = rep.relative_energy_gap is not None and rep.relative_energy_gap < 0.03
    lap_ok = rep.blowup_laplacian is not None and rep.blowup_laplacian < 0
    idx_ok = all(s.morse_index == 0 for s in rep.steps)
    ok = rep.complete and slope_ok and gap_ok and lap_ok and idx_ok
    record(8, ok, f"lambda exponent {rep.slope:.4f}, energy gap {rep.relative_energy_gap:.2%}, "
                  f"Delta K at concentration {rep.blowup_laplacian:.3g}, sector indices "
                  f"{sorted({s.morse_index for s in rep.steps})}", time.perf_counter() - t0)
    assert ok


def test_criterion_9_kelvin():
    t0 = time.perf_counter()
    n, mu = 5, 1.3
    g = np.random.default_rng(9)
    inv = pw = 0.0
    for _ in range(1000):
        P = BubbleParams(g.standard_normal(n), float(np.exp(g.uniform(-1, 1))), n)
        Q = kelvin_invert(P, mu)
        R = kelvin_invert(Q, mu)
        inv = max(inv, float(np.max(np.abs(R.a - P.a))), abs(R.lam / P.lam - 1))
        x = g.standard_normal((4, n))
        val = kelvin_transform(lambda y, P=P: standard_bubble(y, P)[0], x, mu, n)
        pw = max(pw, float(np.max(np.abs(val / standard_bubble(x, Q)[0] - 1))))
    P = BubbleParams(np.array([0.4, -0.2, 0.1, 0.0, 0.3]), 1.7, n)
    Q = kelvin_invert(P, mu)
    ku = lambda y: kelvin_transform(lambda z: standard_bubble(z, P)[0], y, mu, n)  # noqa: E731
    nerr = abs(critical_norm(ku, Q.a, n, Q.lam) / euclidean_bubble_critical_integral(n) - 1)
    ok = inv < 1e-12 and pw < 1e-10 and nerr < 1e-8
    record(9, ok, f"involution {inv:.1e}, pointwise {pw:.1e}, norm {nerr:.1e}", time.perf_counter() - t0)
    assert ok


def test_criterion_10_classifier():
    t0 = time.perf_counter()
    n = 5
    radii = np.geomspace(1e-4, 10.0, 400)
    errs, single_ok = [], True
    for lam in (0.5, 2.0, 10.0, 100.0):
        P = BubbleParams(np.zeros(n), lam, n)
        c = radial_average(lambda x, P=P: standard_bubble(x, P)[0], n, np.zeros(n), radii)
        single_ok &= classify_blowup(c, 10.0) == "isolated-simple candidate"
        errs.append(abs(c.critical_radii[0] * lam - 1.0))
    P1, P2 = BubbleParams(np.zeros(n), 1.0, n), BubbleParams(np.zeros(n), 1000.0, n)
    tower = lambda x: standard_bubble(x, P1)[0] + standard_bubble(x, P2)[0]  # noqa: E731
    ct = radial_average(tower, n, np.zeros(n), radii)
    tower_ok = classify_blowup(ct, 10.0) == "multi-critical"
    s = 7.0
    scaled = lambda x: s ** ((n - 2) / 2) * tower(s * x)  # noqa: E731
    cs = radial_average(scaled, n, np.zeros(n), radii / s)
    scale_ok = classify_blowup(cs, 10.0 / s) == classify_blowup(ct, 10.0) and np.allclose(
        cs.critical_radii * s, ct.critical_radii, rtol=1e-6)
    ok = single_ok and max(errs) < 1e-3 and tower_ok and scale_ok
    record(10, ok, f"single-bubble radius error {max(errs):.1e}, tower multi-critical={tower_ok}, "
                   f"scale invariant={scale_ok}", time.perf_counter() - t0)
    assert ok
