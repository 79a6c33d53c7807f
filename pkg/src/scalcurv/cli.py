"""Command-line harness: ``scalcurv <command> [--config FILE] [--out DIR] [--key value ...]``.

Every command reads a parameter record (defaults, then an optional JSON
config, then long-form flags), writes ``config.json``, ``report.json`` and
its CSV series into the output directory and prints one PASS/FAIL line.
``scalcurv replay DIR/config.json`` re-executes a stored run and diffs it.

Exit codes: 0 all checks pass, 1 a mathematical check failed, 2 usage or
configuration error.
"""
from __future__ import annotations

import argparse
import copy
import json
import math
import sys
import tempfile
from concurrent.futures import ProcessPoolExecutor, as_completed
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from . import __version__
from .io import diff_json, output_root, read_json, write_csv, write_json
from .sphere import DomainError, SchemaError

TAUS = [0.08, 0.06, 0.04, 0.03, 0.02, 0.015, 0.01, 0.0075, 0.005]
TWO_POINT_K = {"family": "axisym-poly", "coeffs": [1.0, 0.1]}


@dataclass
class Outcome:
    result: dict
    checks: dict
    series: dict = field(default_factory=dict)  # file name -> (header, rows)
    summary: str = ""

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


@dataclass
class Command:
    name: str
    help: str
    defaults: dict
    run: Callable[[dict], Outcome]
    docs: dict = field(default_factory=dict)


# ---------------------------------------------------------------- K families


def _multi_peak_centers(n: int, count: int) -> np.ndarray:
    axes = [np.eye(n + 1)[n]] + [np.eye(n + 1)[i] for i in range(n)]
    axes += [-a for a in axes]
    if not 1 <= count <= len(axes):
        raise SchemaError(f"pinched-multi-peak supports 1..{len(axes)} centers")
    return np.array(axes[:count])


def build_K(spec: dict, n: int):
    """Curvature from a declarative family record."""
    from .fields import ConstantField, QuadraticField, axisym_poly, height_field, multi_peak_field

    if not isinstance(spec, dict) or "family" not in spec:
        raise SchemaError("K must be an object with a 'family' key")
    fam = spec["family"]
    allowed = {
        "constant": {"value"},
        "height": {"scale", "offset"},
        "axisym-poly": {"coeffs"},
        "pinched-multi-peak": {"centers", "amplitude", "width", "tilt"},
        "quadratic": {"A", "b", "c"},
        "km": {"m", "target_counts", "eps0", "eps_ratio", "mobius_base"},
    }
    if fam not in allowed:
        raise SchemaError(f"unknown K family {fam!r}; choose from {sorted(allowed)}")
    extra = set(spec) - allowed[fam] - {"family"}
    if extra:
        raise SchemaError(f"K family {fam!r} does not take {sorted(extra)}")
    if fam == "constant":
        return ConstantField(n, float(spec.get("value", 1.0)))
    if fam == "height":
        return height_field(n, float(spec.get("scale", 1.0)), float(spec.get("offset", 0.0)))
    if fam == "axisym-poly":
        return axisym_poly(n, spec.get("coeffs", [1.0, 0.1]))
    if fam == "pinched-multi-peak":
        c = spec.get("centers", 2)
        C = _multi_peak_centers(n, c) if isinstance(c, int) else np.asarray(c, dtype=float)
        return multi_peak_field(n, C, float(spec.get("amplitude", 0.05)), float(spec.get("width", 0.3)),
                                float(spec.get("tilt", 1e-3)))
    if fam == "quadratic":
        A = np.asarray(spec.get("A", np.zeros((n + 1, n + 1))), dtype=float)
        if A.shape != (n + 1, n + 1):
            raise SchemaError(f"quadratic A must be {n + 1}x{n + 1}")
        return QuadraticField(A, spec.get("b"), float(spec.get("c", 0.0)))
    from .kmfactory import KmParams, assemble_km, calibrate_eps_scale

    p = KmParams.default(n, spec.get("target_counts", [1] + [0] * (n - 1) + [1]), float(spec.get("eps0", 0.004)))
    p.eps_ratio = float(spec.get("eps_ratio", p.eps_ratio))
    p.mobius_base = float(spec.get("mobius_base", p.mobius_base))
    calibrate_eps_scale(p)
    return assemble_km(p, int(spec.get("m", 0))).field


def _axisym_laplacian(K, n: int):
    def lap(theta):
        x = np.zeros((1, n + 1))
        x[0, 0], x[0, -1] = math.sin(theta), math.cos(theta)
        return float(K.evaluate(x).laplacian[0])

    return lap


# ---------------------------------------------------------------- runners


def run_morse_report(cfg: dict) -> Outcome:
    from .morse import find_critical_points, index_formula

    n = cfg["n"]
    K = build_K(cfg["K"], n)
    rep = find_critical_points(K, n, seeds=cfg["seeds"], tol=cfg["tol"], nd_tol=cfg["nd_tol"], rng=cfg["seed"])
    s, differs = index_formula(rep, n) if rep.negative_laplacian else (0, True)
    result = rep.to_dict()
    result["index_sum"] = s
    result["index_formula"] = "holds" if differs else "fails"
    rows = [[r.value, r.morse_index, r.laplacian, r.hessian_margin, *map(float, r.location)] for r in rep.records]
    header = ["value", "morse_index", "laplacian", "hessian_margin"] + [f"x{i}" for i in range(n + 1)]
    ok = rep.euler_check == 1 + (-1) ** n
    return Outcome(result, {"euler": ok}, {"critical_points.csv": (header, rows)},
                   f"counts={rep.counts} index sum {s}, existence criterion {result['index_formula']}")


def run_pinch_report(cfg: dict) -> Outcome:
    from .morse import find_critical_points, implication_chain, pinch_from_values, pinch_report

    n = cfg["n"]
    if cfg["values"] is not None:
        if cfg["K_max"] is None or cfg["K_min"] is None:
            raise SchemaError("values requires K_max and K_min")
        P = pinch_from_values(n, cfg["K_max"], cfg["K_min"], cfg["values"])
    else:
        K = build_K(cfg["K"], n)
        P = pinch_report(find_critical_points(K, n, seeds=cfg["seeds"], rng=cfg["seed"]), n)
    rows = [[m, P.E_lower[m - 1], P.E_upper[m - 1], P.P[m], P.P_tilde.get(m, "")] for m in sorted(P.P)]
    ok = implication_chain(P, "energy")
    result = {**P.to_dict(), "chain_printed_form": implication_chain(P, "printed"), "chain_energy_form": ok}
    return Outcome(result, {"implication_chain": ok},
                   {"pinch.csv": (["m", "E_lower", "E_upper", "P", "P_tilde"], rows)},
                   f"K_max/K_min={P.K_max / P.K_min:.6g}")


def run_degree(cfg: dict) -> Outcome:
    from .morse import MorseReport, degree_count, degree_count_bruteforce

    n, idx = cfg["n"], [int(i) for i in cfg["indices"]]
    if not idx or any(not 0 <= i <= n for i in idx):
        raise SchemaError(f"indices must be a nonempty list in [0, {n}]")
    laps = cfg["laplacians"] or [-1.0] * len(idx)
    if len(laps) != len(idx):
        raise SchemaError("laplacians must match indices")
    rep = MorseReport.synthetic(n, idx, laps)
    l = len(rep.negative_laplacian)
    degs = {q: degree_count(rep, n, q) for q in range(1, l + 1)}
    brute = {q: degree_count_bruteforce(rep, n, q) for q in range(1, l + 1)}
    rows = [[q, degs[q], brute[q]] for q in degs]
    line = ", ".join(f"q={q} degree {d}" for q, d in degs.items())
    return Outcome({"n": n, "indices": idx, "degrees": degs, "bruteforce": brute},
                   {"bruteforce_identity": degs == brute},
                   {"degree.csv": (["q", "degree", "bruteforce"], rows)}, line)


def run_minmax(cfg: dict) -> Outcome:
    from .morse import MorseReport, XiComponent, find_critical_points, minmax_criterion

    n = cfg["n"]
    if cfg["K"] is not None:
        rep = find_critical_points(build_K(cfg["K"], n), n, seeds=cfg["seeds"], rng=cfg["seed"])
    else:
        idx, vals = cfg["indices"], cfg["values"]
        if len(idx) != len(vals):
            raise SchemaError("indices and values must have equal length")
        laps = cfg["laplacians"] or [-1.0 if i == n else 1.0 for i in idx]
        rep = MorseReport.synthetic(n, idx, laps, vals)
    comps = cfg["components"]
    if comps is None:
        e = (2.0 - n) / 2.0
        maxima = [i for i, r in enumerate(rep.records) if r.morse_index == n]
        lo = min(r.value for r in rep.records if r.morse_index == n) * 0.97
        comps = [{"maxima": maxima, "max_K_pow": lo**e}]
    try:
        xi = [XiComponent(list(c["maxima"]), float(c["max_K_pow"])) for c in comps]
    except (KeyError, TypeError) as exc:
        raise SchemaError(f"components need 'maxima' and 'max_K_pow': {exc}") from exc
    res = minmax_criterion(rep, xi, n)
    return Outcome({"n": n, "p": res.p, "components": res.components, "q": res.q_required,
                    "gap_holds": res.gap_holds, "holds": res.holds, "reason": res.reason,
                    "morse": rep.to_dict()},
                   {"criterion": res.holds}, {}, f"p={res.p} C={res.components} q={res.q_required}")


def _km_params(cfg: dict):
    from .kmfactory import KmParams, calibrate_eps_scale

    p = KmParams.default(cfg["n"], cfg["target_counts"], cfg["eps0"])
    p.eps_ratio, p.mobius_base = cfg["eps_ratio"], cfg["mobius_base"]
    p.__post_init__()
    calibrate_eps_scale(p, safety=cfg["safety"])
    return p


def run_km_build(cfg: dict) -> Outcome:
    from .kmfactory import assemble_km

    p = _km_params(cfg)
    members, rows, pinch = [], [], []
    e = np.eye(cfg["n"] + 1)[cfg["n"]]
    for m in cfg["m"]:
        F = assemble_km(p, m)
        vmin = min(r.value for r in F.analytic_crits)
        pk = float(F.field.value(e[None])[0]) / vmin
        pinch.append(pk)
        members.append(F.to_dict())
        rows.append([m, F.eps_m, F.t_m, pk])
    result = {"params": p.to_dict(), "members": members, "pinch_max": max(pinch)}
    return Outcome(result, {"pinch": max(pinch) <= cfg["pinch_max"]},
                   {"km_schedule.csv": (["m", "eps_m", "t_m", "pinch"], rows)},
                   f"{len(members)} members, pinch {max(pinch):.6f}")


def _km_member(cfg: dict, m: int, c: float) -> dict:
    from .kmfactory import assemble_km, verify_member

    p = _km_params(cfg)
    return verify_member(assemble_km(p, m), c, cfg["samples"], cfg["seeds"], cfg["seed"])


def run_km_verify(cfg: dict) -> Outcome:
    from .kmfactory import aggregate_verification, base_monotone_field, laplacian_floor

    p = _km_params(cfg)
    c = laplacian_floor(base_monotone_field(p.n, p.eps0, p.deltas[0]), p.deltas[0], rng=cfg["seed"])
    ms = list(cfg["m"])
    if cfg["jobs"] > 1:
        entries = []
        with ProcessPoolExecutor(max_workers=cfg["jobs"]) as ex:
            futs = [ex.submit(_km_member, cfg, m, c) for m in ms]
            for f in as_completed(futs):
                entries.append(f.result())
    else:
        entries = [_km_member(cfg, m, c) for m in ms]
    rep = aggregate_verification(entries, c)
    per = rep.details["per_m"]
    rows = [[d["m"], d["eps_m"], d["t_m"], d["c3_distance"], d["min_laplacian_U"],
             d.get("max_dist_to_S", float("nan")), d["pinch"]] for d in per]
    pinch = rep.details["pinch_max"]
    checks = {"clause_a": rep.clause_a, "clause_b": rep.clause_b, "clause_c": rep.clause_c,
              "pinch": pinch <= cfg["pinch_max"]}
    return Outcome({"params": p.to_dict(), **rep.to_dict()}, checks,
                   {"km_convergence.csv": (["m", "eps_m", "t_m", "c3_distance", "min_laplacian_U",
                                            "max_dist_to_S", "pinch"], rows)},
                   f"clauses a={rep.clause_a} b={rep.clause_b} c={rep.clause_c} pinch={pinch:.6f}")


def run_fowler(cfg: dict) -> Outcome:
    from .fowler import FowlerSystem, flux_identity, integrate, orbit_start, period

    sysm = FowlerSystem(cfg["n"], cfg["kappa"])
    if cfg["H"] is not None:
        v, w = orbit_start(sysm, cfg["H"])
        T = period(sysm, cfg["H"])
        span = cfg["periods"] * T
    else:
        if cfg["v"] is None or cfg["vprime"] is None:
            raise SchemaError("give H or both v and vprime")
        v, w, T = cfg["v"], cfg["vprime"], None
        span = cfg["t_max"]
    traj = integrate(sysm, v, w, (0.0, span), dt=cfg["dt"], tol=cfg["tol"])
    flux = []
    if not traj.left_positive_branch:
        for t in np.linspace(traj.t[0], traj.t[-1], 7)[1:-1]:
            flux.append(abs(flux_identity(sysm, traj, math.exp(t))[2]))
    small = 2.0 * math.pi / math.sqrt(float(sysm.d2V(sysm.v0)))
    E = traj.energy
    rows = list(zip(traj.t, traj.v, traj.vprime, E))
    result = {"n": sysm.n, "kappa": sysm.kappa, "v0": sysm.v0, "H0": sysm.H0, "H": traj.H, "period": T,
              "small_oscillation_period": small, "dt": traj.dt, "drift": traj.drift,
              "left_positive_branch": traj.left_positive_branch, "flux_residuals": flux}
    checks = {"drift": traj.drift < cfg["tol"]}
    if flux:
        checks["flux"] = max(flux) < 1e-6
    return Outcome(result, checks, {"trajectory.csv": (["t", "v", "vprime", "H"], rows)},
                   f"drift={traj.drift:.3e} period={T}")


def run_bubble_check(cfg: dict) -> Outcome:
    from .bubbles import (BubbleParams, bubble_residual_study, critical_norm, euclidean_bubble_critical_integral,
                          kelvin_invert, kelvin_transform, sobolev_report, standard_bubble)

    rows, per_n, ok_res, ok_sob = [], {}, True, True
    for n in cfg["dims"]:
        st = bubble_residual_study(n, cfg["lam"])
        sb = sobolev_report(n)
        per_n[n] = {"residuals": st.residuals, "steps": st.steps, "slope": st.slope, "c_hat0": sb.c_hat0,
                    "printed_display": sb.printed_display, "printed_display_matches": sb.printed_matches}
        rows += [[n, h, r] for h, r in zip(st.steps, st.residuals)]
        ok_res &= st.residuals[-1] < 1e-9 and st.slope >= 2.0
        ok_sob &= not sb.printed_matches
    g = np.random.default_rng(cfg["seed"])
    inv_err = fn_err = 0.0
    n = cfg["kelvin_n"]
    mu = cfg["mu_check"]
    for _ in range(cfg["kelvin_samples"]):
        P = BubbleParams(g.standard_normal(n), float(np.exp(g.uniform(-1, 1))), n)
        Q = kelvin_invert(P, mu)
        R = kelvin_invert(Q, mu)
        inv_err = max(inv_err, float(np.max(np.abs(R.a - P.a))), abs(R.lam / P.lam - 1.0))
        x = g.standard_normal((4, n))
        u = lambda y, P=P: standard_bubble(y, P)[0]  # noqa: E731
        fn_err = max(fn_err, float(np.max(np.abs(kelvin_transform(u, x, mu, n) / standard_bubble(x, Q)[0] - 1.0))))
    ku = lambda y: kelvin_transform(lambda z: standard_bubble(z, P)[0], y, mu, n)  # noqa: E731
    norm_err = abs(critical_norm(ku, Q.a, n, Q.lam) / euclidean_bubble_critical_integral(n) - 1.0)
    result = {"per_n": per_n, "kelvin": {"involution_error": inv_err, "pointwise_error": fn_err,
                                         "norm_error": norm_err}}
    checks = {"residual": bool(ok_res), "sobolev_crosscheck": bool(ok_sob), "kelvin_involution": inv_err < 1e-12,
              "kelvin_pointwise": fn_err < 1e-10, "kelvin_norm": norm_err < 1e-8}
    return Outcome(result, checks, {"bubble_residuals.csv": (["n", "h", "residual"], rows)},
                   f"finest-step residual {max(d['residuals'][-1] for d in per_n.values()):.2e}, "
                   f"Kelvin norm error {norm_err:.1e}")


def run_identities(cfg: dict) -> Outcome:
    from .bubbles import BubbleParams, SphereBubble, standard_bubble
    from .fields import ConstantField
    from .identities import BallGridFunction, first_harmonic, kazdan_warner, pohozaev_residual, pohozaev_translational

    n, lam = cfg["n"], cfg["lam"]
    Kc = 4.0 * n * (n - 1)
    Kfun = lambda x: (np.full(x.shape[0], Kc), np.zeros_like(x))  # noqa: E731
    rows, result, worst = [], {"pohozaev": [], "translational": [], "kazdan_warner": []}, 0.0
    for off in (0.0, cfg["offset"]):
        a = np.zeros(n)
        a[0] = off
        P = BubbleParams(a, lam, n)
        f = BallGridFunction(n, lambda x, P=P: standard_bubble(x, P), Kfun, axis=a if off else None)
        for r in cfg["radii"]:
            rep = pohozaev_residual(f, r)
            result["pohozaev"].append({"offset": off, "r": r, **rep.to_dict()})
            rows.append(["pohozaev", off, r, -1, rep.residual])
            worst = max(worst, abs(rep.residual))
            for i in range(n):
                t = pohozaev_translational(f, r, i)
                result["translational"].append({"offset": off, "r": r, "i": i, "residual": t})
                rows.append(["translational", off, r, i, t])
                worst = max(worst, abs(t))
    kw = 0.0
    c = np.zeros(n + 1)
    c[0], c[-1] = 0.3, 1.0
    if cfg["kw_center"] is not None:
        c = np.asarray(cfg["kw_center"], dtype=float)
        if c.shape != (n + 1,):
            raise SchemaError(f"kw_center must have {n + 1} entries")
    c = c / np.linalg.norm(c)
    u = SphereBubble(c, cfg["kw_lam"])
    K = ConstantField(n, 1.0)
    for i in range(n + 1):
        v = kazdan_warner(u, K, first_harmonic(n, i), axis=u.a)
        result["kazdan_warner"].append({"i": i, "value": v})
        rows.append(["kazdan_warner", 0.0, 0.0, i, v])
        kw = max(kw, abs(v))
    checks = {"pohozaev": worst < 1e-6, "kazdan_warner": kw < 1e-8}
    return Outcome(result, checks, {"identities.csv": (["identity", "offset", "r", "i", "residual"], rows)},
                   f"max Pohozaev residual {worst:.2e}, max KW {kw:.2e}")


def run_solve(cfg: dict) -> Outcome:
    from .solver import AxisymProblem, bubble_seed, solve

    n = cfg["n"]
    K = build_K(cfg["K"], n)
    pb = AxisymProblem(K, n, cfg["tau"], cfg["nodes"])
    seed = cfg["seed_state"]
    st = pb.constant_state() if seed.get("kind") == "constant" else bubble_seed(
        pb, float(seed.get("theta0", 0.0)), float(seed.get("lam", 3.0)))
    rep = solve(st, tol=cfg["tol"])
    rows = list(zip(rep.state.problem.theta, rep.state.u))
    return Outcome(rep.to_dict(), {"converged": rep.converged},
                   {"profile.csv": (["theta", "value"], rows)},
                   f"J={rep.J_value:.12g} grad={rep.grad_norm:.2e} index={rep.morse_index_total}")


def run_continuation(cfg: dict) -> Outcome:
    from .solver import continuation

    n = cfg["n"]
    K = build_K(cfg["K"], n)
    rep = continuation(K, n, cfg["taus"], nodes=cfg["nodes"], K_lap=_axisym_laplacian(K, n), tol=cfg["tol"])
    rows = [[s.tau, s.J, s.lam, s.peak_theta, s.peak_value, s.grad_norm,
             -1 if s.morse_index is None else s.morse_index] for s in rep.steps]
    checks = {"complete": rep.complete}
    if rep.slope is not None:
        checks["slope"] = abs(rep.slope + 0.5) <= cfg["slope_tol"]
        checks["energy"] = rep.relative_energy_gap <= cfg["energy_tol"]
        checks["laplacian_negative"] = rep.blowup_laplacian is not None and rep.blowup_laplacian < 0
        checks["morse_index"] = all(s.morse_index == 0 for s in rep.steps)
    return Outcome(rep.to_dict(), checks,
                   {"continuation.csv": (["tau", "J", "lam", "peak_theta", "peak_value", "grad_norm",
                                          "morse_index"], rows)},
                   f"slope={rep.slope} energy gap={rep.relative_energy_gap}")


COMMANDS = {
    c.name: c
    for c in [
        Command("morse-report", "critical points of K with Morse indices and Laplacian signs",
                {"n": 5, "K": {"family": "pinched-multi-peak", "centers": 2}, "seeds": 400, "tol": 1e-9,
                 "nd_tol": None, "seed": 0}, run_morse_report),
        Command("pinch-report", "pinching conditions and energy strata",
                {"n": 5, "K": {"family": "pinched-multi-peak", "centers": 2}, "values": None, "K_max": None,
                 "K_min": None, "seeds": 400, "seed": 0}, run_pinch_report),
        Command("degree", "signed degree counts for q-bubble configurations",
                {"n": 5, "indices": [5, 5], "laplacians": None}, run_degree),
        Command("minmax", "min-max criterion q < p - C",
                {"n": 5, "K": None, "indices": [5, 5, 1, 0], "values": [1.0, 0.98, 0.9, 0.8],
                 "laplacians": None, "components": None, "seeds": 400, "seed": 0}, run_minmax),
        Command("km-build", "assemble members of the K_m sequence",
                {"n": 5, "target_counts": [2, 1, 0, 0, 0, 1], "eps0": 0.004, "m": [0, 1, 2], "eps_ratio": 0.5,
                 "mobius_base": 1.2, "safety": 0.25, "pinch_max": 1.01}, run_km_build),
        Command("km-verify", "verify clauses (a)(b)(c) over a range of m",
                {"n": 5, "target_counts": [2, 1, 0, 0, 0, 1], "eps0": 0.004, "m": list(range(9)),
                 "eps_ratio": 0.5, "mobius_base": 1.2, "safety": 0.25, "pinch_max": 1.01, "seeds": 400,
                 "samples": 20000, "seed": 0, "jobs": 1}, run_km_verify),
        Command("fowler", "Fowler orbit, period and conservation law",
                {"n": 6, "kappa": 4.0, "H": -0.5, "v": None, "vprime": None, "periods": 3.0, "t_max": 20.0,
                 "dt": 0.01, "tol": 1e-8}, run_fowler),
        Command("bubble-check", "bubble exactness, Sobolev constant and Kelvin inversion",
                {"dims": [3, 4, 5, 6, 7, 8], "lam": 1.0, "kelvin_n": 5, "kelvin_samples": 1000,
                 "mu_check": 1.3, "seed": 0}, run_bubble_check),
        Command("identities", "Pohozaev and Kazdan-Warner residuals on exact bubbles",
                {"n": 5, "lam": 3.0, "offset": 0.2, "radii": [0.5, 1.0], "kw_lam": 2.0,
                 "kw_center": None}, run_identities),
        Command("solve", "one critical point of J_tau for axisymmetric K",
                {"n": 5, "K": TWO_POINT_K, "tau": 0.05, "nodes": 2048, "tol": 1e-10,
                 "seed_state": {"kind": "bubble", "theta0": 0.0, "lam": 3.0}}, run_solve),
        Command("continuation", "warm-started solves along a tau schedule",
                {"n": 5, "K": TWO_POINT_K, "taus": TAUS, "nodes": 2048, "tol": 1e-10, "slope_tol": 0.05,
                 "energy_tol": 0.03}, run_continuation),
    ]
}


# ---------------------------------------------------------------- config plumbing


def _parse_value(text: str):
    try:
        return json.loads(text)
    except json.JSONDecodeError:
        pass
    if "," in text and not text.lstrip().startswith(("[", "{")):
        return [_parse_value(t) for t in text.split(",")]
    return text


def _coerce(key: str, default, value):
    if default is None or value is None:
        return value
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise SchemaError(f"{key}: expected true/false, got {value!r}")
        return value
    if isinstance(default, float):
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise SchemaError(f"{key}: expected a number, got {value!r}")
        return float(value)
    if isinstance(default, int):
        if isinstance(value, bool) or not isinstance(value, int):
            raise SchemaError(f"{key}: expected an integer, got {value!r}")
        return value
    if isinstance(default, list):
        if not isinstance(value, list):
            value = [value]
        return value
    if isinstance(default, dict) and not isinstance(value, dict):
        raise SchemaError(f"{key}: expected an object, got {value!r}")
    return value


def resolve_config(cmd: Command, file_params: dict | None, overrides: dict) -> dict:
    cfg = copy.deepcopy(cmd.defaults)
    for src in (file_params or {}, overrides):
        for k, v in src.items():
            if k not in cfg:
                raise SchemaError(f"unknown parameter {k!r} for {cmd.name}; allowed: {sorted(cfg)}")
            cfg[k] = _coerce(k, cmd.defaults[k], v)
    return cfg


def _load_config_file(path, command: str) -> dict:
    try:
        data = read_json(path)
    except (OSError, json.JSONDecodeError) as exc:
        raise SchemaError(f"cannot read config {path}: {exc}") from exc
    if not isinstance(data, dict):
        raise SchemaError("config must be a JSON object")
    if "params" in data:
        if data.get("command", command) != command:
            raise SchemaError(f"config is for {data.get('command')!r}, not {command!r}")
        return data["params"]
    return data


def execute(command: str, cfg: dict, outdir: Path) -> int:
    """Run one command with a resolved config; write artifacts; return the exit code."""
    cmd = COMMANDS[command]
    outdir.mkdir(parents=True, exist_ok=True)
    write_json(outdir / "config.json", {"command": command, "version": __version__, "params": cfg})
    meta = {"command": command, "version": __version__, "config": cfg}
    try:
        out = cmd.run(cfg)
    except (SchemaError, DomainError, TypeError, ValueError) as exc:
        print(f"error: {command}: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001 - any numerical failure is a failed check
        write_json(outdir / "report.json", {"metadata": meta, "result": None, "checks": {"run": False},
                                            "passed": False, "error": f"{type(exc).__name__}: {exc}"})
        print(f"FAIL {command}: {type(exc).__name__}: {exc}")
        return 1
    write_json(outdir / "report.json", {"metadata": meta, "result": out.result, "checks": out.checks,
                                        "passed": out.passed})
    for name, (header, rows) in out.series.items():
        write_csv(outdir / name, header, rows)
    failed = [k for k, v in out.checks.items() if not v]
    status = "PASS" if not failed else "FAIL"
    extra = f" (failed: {', '.join(failed)})" if failed else ""
    print(f"{status} {command}: {out.summary}{extra}")
    return 0 if not failed else 1


def replay(config_path: Path, outdir: Path | None) -> int:
    """Re-run a stored config next to its artifacts and diff the results."""
    config_path = Path(config_path)
    data = _load_config_file(config_path, read_json(config_path).get("command", ""))
    stored = read_json(config_path)
    command = stored.get("command")
    if command not in COMMANDS:
        raise SchemaError(f"config has no known command: {command!r}")
    if stored.get("version") != __version__:
        print(f"warning: config version {stored.get('version')} differs from {__version__}", file=sys.stderr)
    cfg = resolve_config(COMMANDS[command], data, {})
    src = config_path.parent
    tmp = None
    if outdir is None:
        tmp = tempfile.TemporaryDirectory()
        outdir = Path(tmp.name)
    code = execute(command, cfg, outdir)
    meta_diffs, art_diffs = [], []
    old_rep, new_rep = src / "report.json", outdir / "report.json"
    if old_rep.exists() and new_rep.exists():
        for p, a, b in diff_json(read_json(old_rep), read_json(new_rep)):
            (meta_diffs if p.startswith("metadata") else art_diffs).append({"path": p, "stored": a, "replayed": b})
    else:
        art_diffs.append({"path": "report.json", "stored": old_rep.exists(), "replayed": new_rep.exists()})
    for csv_path in sorted(set(p.name for p in src.glob("*.csv")) | set(p.name for p in outdir.glob("*.csv"))):
        a, b = src / csv_path, outdir / csv_path
        if not (a.exists() and b.exists()) or a.read_bytes() != b.read_bytes():
            art_diffs.append({"path": csv_path, "stored": a.exists(), "replayed": b.exists()})
    summary = {"command": command, "identical": not art_diffs and not meta_diffs,
               "artifact_diffs": art_diffs, "metadata_diffs": meta_diffs, "run_exit_code": code}
    write_json(outdir / "replay.json", summary)
    if tmp is not None:
        tmp.cleanup()
    if art_diffs:
        print(f"FAIL replay: {len(art_diffs)} artifact differences ({', '.join(d['path'] for d in art_diffs[:5])})")
        return 1
    note = f", {len(meta_diffs)} metadata differences" if meta_diffs else ""
    print(f"PASS replay: artifacts identical{note}")
    return 0 if code != 2 else 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="scalcurv", description=__doc__.split("\n")[0])
    parser.add_argument("--version", action="version", version=f"scalcurv {__version__}")
    sub = parser.add_subparsers(dest="command", metavar="command")
    for cmd in COMMANDS.values():
        sp = sub.add_parser(cmd.name, help=cmd.help, description=cmd.help)
        sp.add_argument("--config", help="JSON config (a params object, or a stored config.json)")
        sp.add_argument("--out", help="output directory (default $SCALCURV_OUT/<command>)")
        for key, default in cmd.defaults.items():
            sp.add_argument(f"--{key.replace('_', '-')}", dest=f"p_{key}", type=_parse_value, default=None,
                            metavar="VALUE", help=f"default: {json.dumps(default)}")
    rp = sub.add_parser("replay", help="re-run a stored config and diff against its artifacts")
    rp.add_argument("config", help="config.json written by an earlier run")
    rp.add_argument("--out", help="directory for the replayed artifacts (default: temporary)")
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return 2 if exc.code else 0
    if args.command is None:
        parser.print_help()
        return 2
    try:
        if args.command == "replay":
            return replay(Path(args.config), Path(args.out) if args.out else None)
        cmd = COMMANDS[args.command]
        overrides = {k[2:]: v for k, v in vars(args).items() if k.startswith("p_") and v is not None}
        file_params = _load_config_file(args.config, cmd.name) if args.config else None
        cfg = resolve_config(cmd, file_params, overrides)
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    outdir = Path(args.out) if args.out else output_root() / cmd.name
    return execute(cmd.name, cfg, outdir)


if __name__ == "__main__":
    sys.exit(main())
