"""Integral identities and blow-up diagnostics.

Pohozaev identities (radial and translational) on Euclidean balls, the
Kazdan-Warner integral on S^n, and the weighted radial average
w(r) = r^{(n-2)/2} * mean_{|x - xi| = r} u used to tell single bubbles from
towers.

Surface integrals use an axis-adapted product rule: Gauss-Legendre in the
polar angle about a chosen axis times the 2(d-1)-point cross rule on the
orthogonal sphere, exact for integrands that are polynomials of degree <= 3
in the orthogonal direction.  Bubbles and radial data centred on the axis
fall in this class.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from typing import Callable

import numpy as np

from .fields import ScalarField
from .sphere import DomainError, RoundMetricConstants, sphere_volume


# ---------------------------------------------------------------- quadrature


def _orthonormal_complement(axis: np.ndarray) -> np.ndarray:
    """Columns spanning the orthogonal complement of ``axis`` (unit)."""
    d = axis.size
    Q, _ = np.linalg.qr(np.column_stack([axis, np.eye(d)]))
    return Q[:, 1:d]


def sphere_rule(dim: int, axis=None, n_polar: int = 64) -> tuple[np.ndarray, np.ndarray]:
    """Nodes (N, dim+1) and weights on the unit sphere S^dim in R^{dim+1}.

    Integrates exactly any f(cos phi) * P(omega) with P of degree <= 3 on the
    orthogonal S^{dim-1}, up to the Gauss-Legendre error in phi.
    """
    if dim < 1:
        raise DomainError("sphere dimension must be >= 1")
    d = dim + 1
    e = np.zeros(d)
    e[-1] = 1.0
    axis = e if axis is None else np.asarray(axis, dtype=float)
    nrm = np.linalg.norm(axis)
    axis = e if nrm == 0 else axis / nrm
    t, wt = np.polynomial.legendre.leggauss(n_polar)
    phi = 0.5 * math.pi * (t + 1.0)
    wphi = 0.5 * math.pi * wt * np.sin(phi) ** (dim - 1)
    E = _orthonormal_complement(axis)  # (d, dim)
    cross = np.concatenate([E.T, -E.T])  # (2 dim, d)
    wcross = sphere_volume(dim - 1) / cross.shape[0]
    nodes = np.cos(phi)[:, None, None] * axis[None, None, :] + np.sin(phi)[:, None, None] * cross[None]
    weights = wphi[:, None] * wcross * np.ones(cross.shape[0])[None, :]
    return nodes.reshape(-1, d), weights.reshape(-1)


def radial_rule(r: float, panels: int = 24, order: int = 16) -> tuple[np.ndarray, np.ndarray]:
    """Gauss-Legendre nodes on [0, r] over geometric panels r 2^{-k-1}..r 2^{-k}."""
    edges = np.concatenate([[0.0], r * 2.0 ** -np.arange(panels, -1, -1.0)])
    t, w = np.polynomial.legendre.leggauss(order)
    a, b = edges[:-1, None], edges[1:, None]
    nodes = 0.5 * (b - a) * t[None, :] + 0.5 * (a + b)
    weights = 0.5 * (b - a) * w[None, :]
    return nodes.ravel(), weights.ravel()


# ---------------------------------------------------------------- data carriers


@dataclass
class BallGridFunction:
    """u and K on a Euclidean ball in a chart, through callables.

    ``u`` and ``K`` map points (N, n) to (values, gradients).  A missing
    gradient may be replaced by central differences with step ``fd_step``.
    """

    n: int
    u: Callable
    K: Callable
    axis: np.ndarray | None = None
    n_polar: int = 96
    radial_panels: int = 30
    radial_order: int = 16
    fd_step: float | None = None

    def eval_u(self, x: np.ndarray):
        val, grad = self.u(x)
        if grad is None:
            grad = self._fd(lambda y: self.u(y)[0], x)
        if np.any(val <= 0):
            raise DomainError("u must be positive on the sample grid")
        return val, grad

    def eval_K(self, x: np.ndarray):
        val, grad = self.K(x)
        if grad is None:
            grad = self._fd(lambda y: self.K(y)[0], x)
        return val, grad

    def _fd(self, f, x):
        h = self.fd_step
        if h is None:
            raise DomainError("gradient data unavailable and no finite-difference step given")
        g = np.empty_like(x)
        for i in range(x.shape[1]):
            e = np.zeros(x.shape[1])
            e[i] = h
            g[:, i] = (f(x + e) - f(x - e)) / (2.0 * h)
        return g

    def surface(self, r: float, n_polar: int | None = None):
        nodes, w = sphere_rule(self.n - 1, self.axis, n_polar or self.n_polar)
        return r * nodes, nodes, w * r ** (self.n - 1)

    def check_fd_resolution(self, r: float) -> None:
        if self.fd_step is not None and self.fd_step > r / 50.0:
            raise DomainError(f"finite-difference step {self.fd_step} too coarse for radius {r}")


@dataclass
class PohozaevReport:
    volume_term: float
    boundary_K_term: float
    boundary_B_term: float
    residual: float
    tolerance_estimate: float

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def boundary_B(n, u, du_dnu, x_dot_nu, grad_sq, grad_dot_x):
    """B(r, x, u, grad u) = (n-2)/2 u du/dnu - 1/2 <x,nu> |grad u|^2 + du/dnu <grad u, x>."""
    return 0.5 * (n - 2) * u * du_dnu - 0.5 * x_dot_nu * grad_sq + du_dnu * grad_dot_x


# ---------------------------------------------------------------- Pohozaev


def _volume_nodes(f: BallGridFunction, r: float, n_polar: int, order: int):
    rho, wr = radial_rule(r, f.radial_panels, order)
    om, wo = sphere_rule(f.n - 1, f.axis, n_polar)
    x = (rho[:, None, None] * om[None]).reshape(-1, f.n)
    w = (wr[:, None] * rho[:, None] ** (f.n - 1) * wo[None]).ravel()
    return x, w


def _pohozaev_terms(f: BallGridFunction, r: float, n_polar: int, order: int):
    n = f.n
    cn = RoundMetricConstants.for_dim(n).c_n
    ts = 2.0 * n / (n - 2)
    x, nu, w = f.surface(r, n_polar)
    u, du = f.eval_u(x)
    K, _ = f.eval_K(x)
    xnu = np.einsum("ij,ij->i", x, nu)
    dnu = np.einsum("ij,ij->i", du, nu)
    B = boundary_B(n, u, dnu, xnu, np.einsum("ij,ij->i", du, du), np.einsum("ij,ij->i", du, x))
    bK = float(np.sum(w * xnu * K * u**ts) / ts)
    bB = float(cn * np.sum(w * B))
    xv, wv = _volume_nodes(f, r, n_polar, order)
    _, dKv = f.eval_K(xv)
    xdK = np.einsum("ij,ij->i", xv, dKv)
    if np.any(xdK != 0.0):
        uv, _ = f.eval_u(xv)
        vol = float(np.sum(wv * xdK * uv**ts) / ts)
    else:
        vol = 0.0
    return vol, bK, bB


def pohozaev_residual(f: BallGridFunction, r: float) -> PohozaevReport:
    """Volume term minus boundary terms of the Pohozaev identity for -c_n Delta u = K u^{(n+2)/(n-2)}.

    The residual vanishes for solutions; the tolerance estimate is the change
    under halving the angular and radial resolution.
    """
    f.check_fd_resolution(r)
    vol, bK, bB = _pohozaev_terms(f, r, f.n_polar, f.radial_order)
    vol2, bK2, bB2 = _pohozaev_terms(f, r, max(8, f.n_polar // 2), max(4, f.radial_order // 2))
    res = vol - (bK + bB)
    res2 = vol2 - (bK2 + bB2)
    return PohozaevReport(vol, bK, bB, res, abs(res - res2))


def pohozaev_translational(f: BallGridFunction, r: float, i: int) -> float:
    """LHS minus RHS of the translational Pohozaev identity in direction ``i`` (0-based)."""
    n = f.n
    if not 0 <= i < n:
        raise DomainError(f"direction index must be in [0, {n})")
    f.check_fd_resolution(r)
    cn = RoundMetricConstants.for_dim(n).c_n
    ts = 2.0 * n / (n - 2)
    x, nu, w = f.surface(r)
    u, du = f.eval_u(x)
    K, _ = f.eval_K(x)
    dnu = np.einsum("ij,ij->i", du, nu)
    lhs = -cn * np.sum(w * dnu * du[:, i]) + 0.5 * cn * np.sum(w * np.einsum("ij,ij->i", du, du) * nu[:, i])
    rhs = np.sum(w * K * u**ts * nu[:, i]) / ts
    xv, wv = _volume_nodes(f, r, f.n_polar, f.radial_order)
    _, dKv = f.eval_K(xv)
    if np.any(dKv[:, i] != 0.0):
        uv, _ = f.eval_u(xv)
        rhs -= np.sum(wv * uv**ts * dKv[:, i]) / ts
    return float(lhs - rhs)


# ---------------------------------------------------------------- Kazdan-Warner


def first_harmonic(n: int, i: int) -> ScalarField:
    """The coordinate function Y_{i+1} on S^n (0-based ``i``)."""
    from .fields import QuadraticField

    b = np.zeros(n + 1)
    b[i] = 1.0
    return QuadraticField(np.zeros((n + 1, n + 1)), b, 0.0)


def kazdan_warner(u: ScalarField, K: ScalarField, f: ScalarField, axis=None, n_polar: int = 256) -> float:
    """int_{S^n} <grad K, grad f> u^{2n/(n-2)} dmu by the axis-adapted sphere rule.

    ``axis`` should be the symmetry axis of u and K when they have one (the
    rule is then exact in the orthogonal directions for first harmonics f).
    """
    n = K.n
    x, w = sphere_rule(n, axis, n_polar)
    EK, Ef = K.evaluate(x), f.evaluate(x)
    uv = u.value(x)
    ts = 2.0 * n / (n - 2)
    return float(np.sum(w * np.einsum("ij,ij->i", EK.grad, Ef.grad) * uv**ts))


def kazdan_warner_axisym(u_profile, K_profile, i: int) -> float:
    """Fast path for axisymmetric u, K (AxisymProfile) and f = Y_{i+1} (0-based).

    Only f = y_{n+1} = cos(theta) can contribute, and there
    <grad K, grad f> = K'(theta) * (-sin(theta)).
    """
    from scipy.integrate import simpson

    n = u_profile.n
    if i != n:
        return 0.0
    th = K_profile.theta_grid
    dK = np.gradient(K_profile.values, th, edge_order=2)
    ts = 2.0 * n / (n - 2)
    integrand = dK * (-np.sin(th)) * u_profile.values**ts * np.sin(th) ** (n - 1)
    return float(sphere_volume(n - 1) * simpson(integrand, x=th))


# ---------------------------------------------------------------- radial averages


@dataclass
class RadialAverageCurve:
    n: int
    radii: np.ndarray
    wbar: np.ndarray
    critical_radii: np.ndarray
    critical_kinds: list

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "radii": self.radii.tolist(),
            "wbar": self.wbar.tolist(),
            "critical_radii": self.critical_radii.tolist(),
            "critical_kinds": list(self.critical_kinds),
        }


def radial_average(u: Callable, n: int, center, radii, axis=None, n_polar: int = 48) -> RadialAverageCurve:
    """w(r) = r^{(n-2)/2} times the mean of u over the sphere of radius r about ``center``.

    ``u`` maps points (N, n) to values.  Critical radii are located from sign
    changes of d log w / d log r, each refined by a local parabola fit through
    five neighbouring samples.
    """
    radii = np.asarray(radii, dtype=float)
    if radii.ndim != 1 or np.any(np.diff(radii) <= 0) or radii[0] <= 0:
        raise DomainError("radii must be positive and strictly increasing")
    center = np.asarray(center, dtype=float)
    om, wo = sphere_rule(n - 1, axis, n_polar)
    wo = wo / wo.sum()
    pts = center[None, None, :] + radii[:, None, None] * om[None]
    vals = np.asarray(u(pts.reshape(-1, n)), dtype=float).reshape(radii.size, -1)
    wbar = radii ** (0.5 * (n - 2)) * (vals @ wo)
    crit, kinds = _critical_radii(radii, wbar)
    return RadialAverageCurve(n, radii, wbar, crit, kinds)


def _critical_radii(radii, wbar):
    s = np.log(radii)
    y = np.log(np.abs(wbar) + 1e-300)
    m = len(s)
    out, kinds = [], []
    if m < 5:
        return np.array(out), kinds
    slope = np.empty(m)
    for k in range(m):
        lo = min(max(k - 2, 0), m - 5)
        c = np.polyfit(s[lo:lo + 5] - s[k], y[lo:lo + 5], 2)
        slope[k] = c[1]
    scale = np.max(np.abs(slope)) + 1e-300
    for k in range(m - 1):
        a, b = slope[k], slope[k + 1]
        if a == 0.0 or (a > 0) == (b > 0):
            continue
        if max(abs(a), abs(b)) < 1e-9 * scale:
            continue
        lo = min(max(k - 2, 0), m - 5)
        c = np.polyfit(s[lo:lo + 5], y[lo:lo + 5], 2)
        if c[0] != 0.0:
            sv = -c[1] / (2.0 * c[0])
            if not (s[k] - 1e-12 <= sv <= s[k + 1] + 1e-12):
                sv = s[k] + (s[k + 1] - s[k]) * a / (a - b)
        else:
            sv = s[k] + (s[k + 1] - s[k]) * a / (a - b)
        out.append(math.exp(sv))
        kinds.append("max" if a > 0 else "min")
    return np.array(out), kinds


def classify_blowup(curve: RadialAverageCurve, rho: float) -> str:
    """"isolated-simple candidate" iff w has exactly one critical radius in (0, rho)."""
    k = int(np.count_nonzero(curve.critical_radii < rho))
    if k == 1:
        return "isolated-simple candidate"
    if k == 0:
        return "degenerate"
    return "multi-critical"
