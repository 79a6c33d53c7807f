"""Fowler singular solutions of -Delta u = kappa u^{(n+2)/(n-2)} on R^n minus the origin.

With u(x) = |x|^{(2-n)/2} v(log|x|) the profile obeys the Newton equation
v'' = -V'(v), V(v) = kappa (n-2)/(2n) v^{2n/(n-2)} - (1/2) a^2 v^2, a = (n-2)/2,
whose Hamiltonian H = v'^2/2 + V(v) is conserved along orbits.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import quad
from scipy.interpolate import CubicHermiteSpline
from scipy.optimize import brentq

from .kernels import rk4_fowler
from .sphere import DomainError, sphere_volume


@dataclass(frozen=True)
class FowlerSystem:
    n: int
    kappa: float

    def __post_init__(self):
        if self.n < 3:
            raise DomainError(f"need n >= 3, got {self.n}")
        if not self.kappa > 0:
            raise DomainError(f"kappa must be positive, got {self.kappa}")

    @property
    def a(self) -> float:
        return 0.5 * (self.n - 2)

    @property
    def crit_exp(self) -> float:
        """2* = 2n/(n-2)."""
        return 2.0 * self.n / (self.n - 2)

    def V(self, v):
        v = np.asarray(v, dtype=float)
        return self.kappa / self.crit_exp * np.abs(v) ** self.crit_exp - 0.5 * self.a**2 * v * v

    def dV(self, v):
        v = np.asarray(v, dtype=float)
        p = (self.n + 2.0) / (self.n - 2.0)
        return self.kappa * np.sign(v) * np.abs(v) ** p - self.a**2 * v

    def d2V(self, v):
        v = np.asarray(v, dtype=float)
        p = (self.n + 2.0) / (self.n - 2.0)
        return self.kappa * p * np.abs(v) ** (p - 1.0) - self.a**2

    def hamiltonian(self, v, vprime):
        return 0.5 * np.asarray(vprime, dtype=float) ** 2 + self.V(v)

    @property
    def v0(self) -> float:
        return equilibrium(self.n, self.kappa)[0]

    @property
    def H0(self) -> float:
        return equilibrium(self.n, self.kappa)[1]


def equilibrium(n: int, kappa: float) -> tuple[float, float]:
    """Positive critical point v0 of V and its energy H0 = V(v0) < 0."""
    base = ((n - 2) / 2.0) ** 2 / kappa
    v0 = base ** ((n - 2) / 4.0)
    H0 = -kappa / n * base ** (n / 2.0)
    return float(v0), float(H0)


@dataclass
class FowlerTrajectory:
    t: np.ndarray
    v: np.ndarray
    vprime: np.ndarray
    H: float
    dt: float
    drift: float
    left_positive_branch: bool = False
    system: FowlerSystem | None = field(default=None, repr=False)

    @property
    def energy(self) -> np.ndarray:
        return self.system.hamiltonian(self.v, self.vprime)

    def to_csv(self, path) -> None:
        E = self.energy
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "v", "vprime", "H"])
            for row in zip(self.t, self.v, self.vprime, E):
                w.writerow([repr(float(x)) for x in row])

    def interpolant(self) -> CubicHermiteSpline:
        acc = -self.system.dV(self.v)
        return CubicHermiteSpline(self.t, np.stack([self.v, self.vprime], axis=1),
                                  np.stack([self.vprime, acc], axis=1))


def integrate(
    system: FowlerSystem,
    v_init: float,
    vprime_init: float,
    t_span: tuple[float, float],
    dt: float = 1e-2,
    tol: float = 1e-8,
    max_halvings: int = 12,
) -> FowlerTrajectory:
    """Classical RK4 with step halving until the Hamiltonian drift is below ``tol``.

    The drift check is the error control: the step is halved until
    max |H(t) - H(t0)| < tol or ``max_halvings`` is exhausted.  Orbits that
    reach v <= 0 are flagged (the odd extension of the force keeps the
    integration defined) but not rejected.
    """
    t0, t1 = map(float, t_span)
    if not t1 > t0:
        raise DomainError("t_span must be increasing")
    H = float(system.hamiltonian(v_init, vprime_init))
    for _ in range(max_halvings + 1):
        nsteps = max(1, int(math.ceil((t1 - t0) / dt)))
        h = (t1 - t0) / nsteps
        v, w = rk4_fowler(system.n, system.kappa, v_init, vprime_init, h, nsteps)
        drift = float(np.max(np.abs(system.hamiltonian(v, w) - H)))
        if drift < tol:
            break
        dt = 0.5 * h
    t = t0 + h * np.arange(nsteps + 1)
    return FowlerTrajectory(t, v, w, H, h, drift, bool(np.any(v <= 0.0)), system)


def turning_points(system: FowlerSystem, H: float) -> tuple[float, float]:
    """Roots v_- < v0 < v_+ of V(v) = H for H in (H0, 0)."""
    v0, H0 = system.v0, system.H0
    if not (H0 < H < 0.0):
        raise DomainError(f"H must lie in (H0, 0) = ({H0}, 0), got {H}")
    f = lambda v: float(system.V(v)) - H  # noqa: E731
    hi = 2.0 * v0
    while f(hi) <= 0:
        hi *= 2.0
    lo = v0
    while f(lo) < 0 and lo > 1e-300:
        lo *= 0.5
    v_minus = brentq(f, lo, v0, xtol=1e-300, rtol=1e-15, maxiter=500)
    v_plus = brentq(f, v0, hi, xtol=1e-300, rtol=1e-15, maxiter=500)
    return v_minus, v_plus


def period(system: FowlerSystem, H: float) -> float:
    """T(H) = 2 int dv / sqrt(2 (H - V)) between the turning points.

    The substitution v = c + d sin(phi) removes the inverse square-root
    endpoint singularities; the lower half is split off since the integrand
    develops a boundary layer of width ~v_- as H -> 0.
    """
    vm, vp = turning_points(system, H)
    c, d = 0.5 * (vp + vm), 0.5 * (vp - vm)

    q = system.crit_exp
    k, a2 = system.kappa, system.a**2

    def vdiff(vref, delta):
        # V(vref) - V(vref - delta) without cancellation
        ratio = math.log1p(-delta / vref)
        pw = -vref**q * math.expm1(q * ratio)
        sq = delta * (2.0 * vref - delta)
        return k / q * pw - 0.5 * a2 * sq

    def g(phi):
        sp, cp = math.sin(phi), math.cos(phi)
        if phi >= 0:
            # v = vp - d (1 - sin phi), and 1 - sin = cos^2 / (1 + sin)
            gap = vdiff(vp, d * cp * cp / (1.0 + sp))
        else:
            gap = vdiff(vm, -d * cp * cp / (1.0 - sp))
        if gap <= 0.0:
            return math.sqrt(d / abs(float(system.dV(vm if phi < 0 else vp))))
        return d * cp / math.sqrt(2.0 * gap)

    # breakpoints at the lower turning point's scale
    phi_lo = math.asin(max(-1.0, min(1.0, (2.0 * vm - c) / d))) if vm > 0 else -0.5 * math.pi
    pts = sorted({-0.5 * math.pi, phi_lo, 0.0, 0.5 * math.pi})
    total = 0.0
    for a, b in zip(pts[:-1], pts[1:]):
        if b > a:
            total += quad(g, a, b, epsabs=0.0, epsrel=1e-10, limit=400)[0]
    return 2.0 * total


def orbit_start(system: FowlerSystem, H: float) -> tuple[float, float]:
    """Initial data (v_-, 0) on the Fowler orbit of energy H."""
    vm, _ = turning_points(system, H)
    return vm, 0.0


@dataclass
class RadialProfile:
    n: int
    r: np.ndarray
    u: np.ndarray
    du: np.ndarray  # d u / d r


def lift_to_radial(traj: FowlerTrajectory) -> RadialProfile:
    """u(r) = r^{(2-n)/2} v(log r) and its radial derivative on r = exp(t)."""
    a = traj.system.a
    r = np.exp(traj.t)
    u = r ** (-a) * traj.v
    du = r ** (-a - 1.0) * (traj.vprime - a * traj.v)
    return RadialProfile(traj.system.n, r, u, du)


def radial_residual(profile: RadialProfile, kappa: float) -> np.ndarray:
    """-Delta u - kappa u^{(n+2)/(n-2)} at interior nodes, by central differences.

    With r = e^t, Delta u = e^{-2t} (u_tt + (n-2) u_t); the lifted grid is
    uniform in t, so fourth-order five-point stencils apply.  The returned
    array has two fewer nodes at each end.
    """
    n = profile.n
    t = np.log(profile.r)
    dt = t[1] - t[0]
    u = profile.u
    um2, um1, u0, up1, up2 = u[:-4], u[1:-3], u[2:-2], u[3:-1], u[4:]
    ut = (um2 - 8.0 * um1 + 8.0 * up1 - up2) / (12.0 * dt)
    utt = (-um2 + 16.0 * um1 - 30.0 * u0 + 16.0 * up1 - up2) / (12.0 * dt**2)
    lap = np.exp(-2.0 * t[2:-2]) * (utt + (n - 2) * ut)
    return -lap - kappa * u0 ** ((n + 2.0) / (n - 2.0))


def flux_identity(system: FowlerSystem, traj: FowlerTrajectory, r: float) -> tuple[float, float, float]:
    """Boundary flux of the Pohozaev integrand on |x| = r versus omega H.

    Returns ``(flux, omega_H, flux - omega_H)`` where omega = |S^{n-1}| and H is
    the initial Hamiltonian of the trajectory.
    """
    from .identities import boundary_B

    t = math.log(r)
    if not (traj.t[0] <= t <= traj.t[-1]):
        raise DomainError(f"radius {r} outside the lifted window")
    v, vp = traj.interpolant()(t)
    n, a = system.n, system.a
    u = r ** (-a) * v
    ur = r ** (-a - 1.0) * (vp - a * v)
    # radial field on the sphere of radius r: x.nu = r, du/dnu = u_r, <grad u, x> = r u_r
    B = boundary_B(n, u, ur, r, ur * ur, r * ur)
    integrand = r * system.kappa * u ** system.crit_exp / system.crit_exp + B
    area = sphere_volume(n - 1) * r ** (n - 1)
    flux = float(area * integrand)
    omega_H = sphere_volume(n - 1) * traj.H
    return flux, omega_H, flux - omega_H
