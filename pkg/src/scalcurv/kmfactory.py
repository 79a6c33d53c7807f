"""The non-existence curvature sequence K_m = 1 + K + eps_m * Khat_m.

K (the monotone part) is an explicit function of the height h = y_{n+1} and
of the last north-chart coordinate y_n: a small quadratic c y_n^2 near the
south pole glued to eps0 (1 + h) by a quintic step in h.

Khat_m carries the Morse structure of a template.  Templates here are
separable in the rescaled north-chart coordinate z = (t_m / l0) y:

    E(z)    = b |z|^2 + chi(|z|^2) * sum_{j < d} g(z_j),
    Khat    = Psi(E),   Psi(e) = (e - e_lo) / (1 + e - e_lo),

where g <= 0 turns coordinate j into a double well (maximum at 0, minima at
+-s*), chi cuts the wells off and Psi is increasing and bounded, so Khat is
smooth on all of S^n with its maximum at N.  Since dE/dz_n has the sign of
z_n, as does dK/dy_n, every critical point of K_m other than N lies on
{y_n = 0}; there the wells are inside the region where K is flat, so the
critical set of K_m is exactly the product set of the wells, pushed toward
S by the Mobius dilation t_m.  The resulting counts are
M_j = C(d, j) 2^{d-j} for j < n and M_n = 1.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.linalg import expm, logm
from scipy.special import comb

from .fields import LambdaField, ScalarField, tangent_basis
from .jets import Jet, smoothstep
from .morse import CriticalPointRecord, MorseReport, classify_points, find_critical_points
from .sphere import DomainError, geodesic_distance, random_sphere_points, stereo_lift_array


class ConstructionError(RuntimeError):
    """A construction step produced a field violating its stated property."""

    def __init__(self, msg: str, location=None):
        super().__init__(msg)
        self.location = location


class TemplateError(ValueError):
    pass


# ---------------------------------------------------------------- jet helpers


def _sub(J: Jet, mask: np.ndarray) -> Jet:
    return Jet(J.v[mask], J.g[mask], J.h[mask])


def _scatter(J: Jet, mask: np.ndarray, like: Jet) -> Jet:
    out = Jet.const(0.0, like)
    out.v[mask], out.g[mask], out.h[mask] = J.v, J.g, J.h
    return out


def _chart_north(X):
    """North-chart coordinates y_i = x_i / (1 - h) as jets (h = last coordinate)."""
    inv = (1.0 - X[-1]).reciprocal()
    return [Xi * inv for Xi in X[:-1]]


def _bump_pow(u: Jet, k: int) -> Jet:
    """(1 - u)_+^{k+1} with its first two derivatives."""
    w = np.clip(1.0 - u.v, 0.0, None)
    return u.apply(w ** (k + 1), -(k + 1) * w**k, k * (k + 1) * w ** (k - 1))


# ---------------------------------------------------------------- monotone part


def _convex_ramp(u: Jet) -> Jet:
    """P(u) = int_0^u smoothstep: 0 for u <= 0, u - 1/2 for u >= 1, convex in between."""
    c = np.clip(u.v, 0.0, 1.0)
    inside = (u.v > 0.0) & (u.v < 1.0)
    f0 = c**4 * (2.5 - 3.0 * c + c * c) + np.maximum(u.v - 1.0, 0.0)
    f1 = c**3 * (10.0 - 15.0 * c + 6.0 * c * c)
    f2 = np.where(inside, 30.0 * c * c * (1.0 - c) ** 2, 0.0)
    return u.apply(f0, f1, f2)


def base_monotone_field(n: int, eps0: float, delta0: float) -> ScalarField:
    """The monotone field eps0 [(1 - s) y_n^2 / (8 n^4) + psi(h)].

    s is the quintic step in (h + 1 - delta0) / delta0 and psi = delta0 P of
    the same variable, P the integral of the step.  psi vanishes for
    h <= -1 + delta0 and equals 1 + h - 3 delta0 / 2 for h >= -1 + 2 delta0;
    being convex and increasing it keeps Delta psi(h) >= 0 on {h < 0}, which
    the plain product s (1 + h) does not.
    """
    if not 0.0 < delta0 < 0.25:
        raise DomainError(f"delta0 must lie in (0, 1/4), got {delta0}")
    if delta0 / (2.0 - delta0) >= 1.0 / (2.0 * max(n - 2, 1)):
        # Delta y_n^2 > 0 on the flat cap needs |y|^2 < 1 / (2 (n - 2))
        raise DomainError(f"delta0 = {delta0} too large for n = {n}")
    if not eps0 > 0:
        raise DomainError("eps0 must be positive")
    cq = eps0 / (8.0 * n**4)
    cut = -1.0 + 2.0 * delta0

    def amb(X):
        h = X[-1]
        out = _convex_ramp((h + (1.0 - delta0)) * (1.0 / delta0)) * (eps0 * delta0)
        mask = h.v < cut + 1e-12
        if np.any(mask):
            Xs = [_sub(Xi, mask) for Xi in X]
            yn = _chart_north(Xs)[n - 1]
            sq = smoothstep((Xs[-1] + (1.0 - delta0)) * (1.0 / delta0))
            q = (1.0 - sq) * (yn * yn) * cq
            out = out + _scatter(q, mask, h)
        return out

    f = LambdaField(n, amb, name="monotone")
    f.params = {"eps0": eps0, "delta0": delta0, "quad_coeff": cq}
    return f


def check_monotone_field(K: ScalarField, delta0: float, samples: int = 100_000, rng=0) -> dict:
    """Numerical checks: <grad K, grad h> >= 0 on S^n, and c = min_U Delta K > 0.

    Raises ConstructionError at the offending sample otherwise.
    """
    n = K.n
    rng = np.random.default_rng(rng)
    X = random_sphere_points(n, samples, rng)
    E = K.evaluate(X)
    e = np.zeros(n + 1)
    e[-1] = 1.0
    grad_h = e[None, :] - X[:, -1:] * X
    mono = np.einsum("ij,ij->i", E.grad, grad_h)
    U = _sample_U(n, delta0, samples, rng)
    lap = K.evaluate(U).laplacian
    out = {"min_monotone": float(mono.min()), "c": float(lap.min()),
           "laplacian_at_S": float(K.evaluate(-e[None, :]).laplacian[0])}
    if mono.min() < -1e-12:
        i = int(np.argmin(mono))
        raise ConstructionError(f"monotonicity fails: <grad K, grad h> = {mono[i]:.3e}", X[i])
    if lap.min() <= 0:
        i = int(np.argmin(lap))
        raise ConstructionError(f"Laplacian on U is not positive: {lap[i]:.3e}", U[i])
    return out


def laplacian_floor(K: ScalarField, delta0: float, samples: int = 100_000, rng=0) -> float:
    """c = sampled minimum of Delta K over U."""
    return check_monotone_field(K, delta0, samples, rng)["c"]


def _sample_U(n, delta0, count, rng, h_max=None):
    """Points of U = {h < -1 + 2 delta0}, uniform in h-bands and in direction."""
    h_max = -1.0 + 2.0 * delta0 if h_max is None else h_max
    # area-weighted sampling is heavily tilted toward the boundary; mix in a
    # polar-angle-uniform set so the cap near S is resolved too
    theta_max = math.acos(-h_max)
    th = math.pi - theta_max * rng.random(count)
    d = rng.standard_normal((count, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    return np.column_stack([np.sin(th)[:, None] * d, np.cos(th)])


# ---------------------------------------------------------------- templates


@dataclass
class SeparableTemplate:
    """E(z) = b|z|^2 + chi(|z|^2) sum_{j<d} g(z_j) on R^n, wells in the first d coordinates."""

    n: int
    d: int
    b: float = 1.0
    A: float = 4.0
    sigma: float = 1.0
    k: int = 3
    R1: float = 2.0
    R2: float = 3.0

    def __post_init__(self):
        if not 0 <= self.d <= self.n - 1:
            raise TemplateError(f"number of wells must lie in [0, n-1], got {self.d}")
        if self.A <= 1:
            raise TemplateError("well depth A must exceed 1")
        # no critical points in the cut-off annulus needs |z|^2 > d A sigma^2 max u(1-u)^k
        bound = self.d * self.A * self.sigma**2 * self.k**self.k / (self.k + 1) ** (self.k + 1)
        if self.R1**2 <= bound or self.s_star * math.sqrt(max(self.d, 1)) >= self.R1:
            raise TemplateError("cut-off radius R1 too small for the wells")

    @property
    def s_star(self) -> float:
        return self.sigma * math.sqrt(1.0 - self.A ** (-1.0 / self.k))

    def counts(self) -> list[int]:
        M = [int(comb(self.d, j, exact=True)) * 2 ** (self.d - j) for j in range(self.d + 1)]
        M += [0] * (self.n + 1 - len(M))
        M[self.n] += 1
        return M

    def well_value(self, s):
        s = np.asarray(s, dtype=float)
        w = np.clip(1.0 - s * s / self.sigma**2, 0.0, None)
        return self.b * s * s + self.A * self.b * self.sigma**2 / (self.k + 1) * (w ** (self.k + 1) - 1.0)

    @property
    def e_min(self) -> float:
        return self.d * float(self.well_value(self.s_star))

    @property
    def e_lo(self) -> float:
        return self.e_min - 1.0

    def critical_points(self) -> list[tuple[np.ndarray, int]]:
        """Critical points of E as (z, Morse index)."""
        pts = [(np.zeros(self.n), 0)]
        for j in range(self.d):
            new = []
            for z, idx in pts:
                for s, di in ((0.0, 1), (self.s_star, 0), (-self.s_star, 0)):
                    zz = z.copy()
                    zz[j] = s
                    new.append((zz, idx + di))
            pts = new
        return pts

    def energy_jet(self, Z: list[Jet]) -> Jet:
        b, sig2 = self.b, self.sigma**2
        r2 = Z[0] * Z[0]
        for Zi in Z[1:]:
            r2 = r2 + Zi * Zi
        E = r2 * b
        if self.d:
            G = None
            coef = self.A * b * sig2 / (self.k + 1)
            for j in range(self.d):
                gj = (_bump_pow(Z[j] * Z[j] * (1.0 / sig2), self.k) - 1.0) * coef
                G = gj if G is None else G + gj
            chi = 1.0 - smoothstep((r2 - self.R1**2) * (1.0 / (self.R2**2 - self.R1**2)))
            E = E + chi * G
        return E

    def to_dict(self) -> dict:
        return asdict(self)


def realize_template(n: int, target_counts) -> SeparableTemplate:
    """Separable template with the requested Morse counts (raises if not of the form C(d,j) 2^{d-j})."""
    M = [int(x) for x in target_counts]
    if len(M) != n + 1:
        raise TemplateError(f"need n+1 = {n + 1} counts")
    if M[n] != 1:
        raise TemplateError("template must have exactly one local maximum (M_n = 1)")
    if sum((-1) ** j * m for j, m in enumerate(M)) != 1 + (-1) ** n:
        raise TemplateError("counts violate the Morse relation sum (-1)^j M_j = 1 + (-1)^n")
    for d in range(n):
        t = SeparableTemplate(n, d)
        if t.counts() == M:
            return t
    raise TemplateError(
        f"counts {M} are not realizable by a separable template; "
        "available families are M_j = C(d, j) 2^(d-j) for j < n, d = 0..n-1"
    )


# ---------------------------------------------------------------- parameters


@dataclass
class KmParams:
    n: int
    target_counts: list
    eps0: float = 0.004
    deltas: tuple = (0.2, 0.025, 0.003125, 0.000390625)
    eps_scale: float | None = None
    eps_ratio: float = 0.5
    mobius_base: float = 1.2
    length_scale: float | None = None
    template: dict = field(default_factory=dict)

    def __post_init__(self):
        d = list(self.deltas)
        if len(d) != 4 or any(b >= a for a, b in zip(d, d[1:])) or d[-1] <= 0:
            raise DomainError("deltas must be a strictly decreasing positive chain of 4")
        M = [int(c) for c in self.target_counts]
        if len(M) != self.n + 1 or any(c < 0 for c in M):
            raise DomainError(f"target_counts must be {self.n + 1} nonnegative integers")
        if sum((-1) ** j * c for j, c in enumerate(M)) != 1 + (-1) ** self.n:
            raise DomainError(f"target_counts {M} violate the Morse relation on S^{self.n}")
        if M[self.n] != 1:
            raise DomainError("target_counts must have exactly one local maximum")
        if not 0 < self.eps_ratio <= 1:
            raise DomainError("eps_ratio must lie in (0, 1]")
        if self.mobius_base < 1:
            raise DomainError("mobius_base must be >= 1")

    @classmethod
    def default(cls, n: int, target_counts, eps0: float = 0.004) -> "KmParams":
        d0 = 0.2
        return cls(n, list(target_counts), eps0, (d0, d0 / 8, d0 / 64, d0 / 512))

    def t(self, m: int) -> float:
        return self.mobius_base**m

    def eps(self, m: int) -> float:
        if self.eps_scale is None:
            raise DomainError("eps_scale not calibrated; use calibrate_eps_scale")
        return self.eps_scale * self.eps_ratio**m

    def build_template(self) -> SeparableTemplate:
        t = realize_template(self.n, self.target_counts)
        for k, v in self.template.items():
            setattr(t, k, v)
        t.__post_init__()
        return t

    def l0(self, tpl: SeparableTemplate) -> float:
        """Chart length of one template unit at m = 0: support radius at 5/8 of the flat region."""
        if self.length_scale is not None:
            return self.length_scale
        d0 = self.deltas[0]
        flat = math.sqrt(d0 / (2.0 - d0))
        return 0.625 * flat / tpl.R2

    def to_dict(self) -> dict:
        d = asdict(self)
        d["deltas"] = list(self.deltas)
        return d


# ---------------------------------------------------------------- the moving part


def template_field(tpl: SeparableTemplate, n: int, T: float) -> ScalarField:
    """Khat composed with the dilation z = T y (y the north chart), smooth on S^n."""
    e_lo = tpl.e_lo
    b = tpl.b
    # outside the wells E = b T^2 (1+h)/(1-h), so Psi(E) is a rational function of h
    reach = (tpl.R2 / T) ** 2  # |y|^2 bound of the support
    h_cut = (reach - 1.0) / (reach + 1.0)

    def psi_h(h: Jet) -> Jet:
        num = (1.0 + h) * (b * T * T) - (1.0 - h) * e_lo
        den = (1.0 - h) * (1.0 - e_lo) + (1.0 + h) * (b * T * T)
        return num / den

    def amb(X):
        h = X[-1]
        out = psi_h(h)
        mask = h.v < h_cut + 1e-9
        if np.any(mask):
            Xs = [_sub(Xi, mask) for Xi in X]
            Z = [yi * T for yi in _chart_north(Xs)]
            E = tpl.energy_jet(Z)
            psi = (E - e_lo) / (E - e_lo + 1.0)
            out = out + _scatter(psi - psi_h(Xs[-1]), mask, h)
        return out

    f = LambdaField(n, amb, name="template")
    return f


@dataclass
class KmField:
    m: int
    field: ScalarField
    analytic_crits: list
    params: KmParams
    template: SeparableTemplate
    eps_m: float
    t_m: float

    def to_dict(self) -> dict:
        return {
            "m": self.m,
            "eps_m": self.eps_m,
            "t_m": self.t_m,
            "params": self.params.to_dict(),
            "template": self.template.to_dict(),
            "analytic_crits": [
                {"location": r.location.tolist(), "value": r.value, "morse_index": r.morse_index,
                 "laplacian": r.laplacian, "hessian_margin": r.hessian_margin}
                for r in self.analytic_crits
            ],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def _assemble_field(params: KmParams, tpl: SeparableTemplate, m: int, eps_m: float) -> ScalarField:
    n = params.n
    base = base_monotone_field(n, params.eps0, params.deltas[0])
    T = params.t(m) / params.l0(tpl)
    moving = template_field(tpl, n, T)

    def amb(X):
        return base.ambient(X) + moving.ambient(X) * eps_m + 1.0

    f = LambdaField(n, amb, name=f"K_{m}")
    f.base, f.moving = base, moving
    return f


def analytic_critical_points(params: KmParams, tpl: SeparableTemplate, m: int) -> list[np.ndarray]:
    n = params.n
    T = params.t(m) / params.l0(tpl)
    pts = [np.eye(n + 1)[n]]
    for z, _ in tpl.critical_points():
        pts.append(stereo_lift_array(z / T, "N"))
    return pts


def assemble_km(params: KmParams, m: int, eps_m: float | None = None) -> KmField:
    """K_m = 1 + K + eps_m Khat_m with its critical list classified at the analytic points."""
    tpl = params.build_template()
    eps_m = params.eps(m) if eps_m is None else eps_m
    f = _assemble_field(params, tpl, m, eps_m)
    pts = np.array(analytic_critical_points(params, tpl, m))
    recs = classify_points(f, pts)
    g = f.evaluate(pts).grad
    scale = np.array([max(abs(r.hessian_margin), 1e-300) for r in recs])
    if np.any(np.linalg.norm(g, axis=1) > 1e-8 * scale):
        i = int(np.argmax(np.linalg.norm(g, axis=1) / scale))
        raise ConstructionError("analytic critical point has non-zero gradient", pts[i])
    got = MorseReport(params.n, recs).counts
    if got != list(tpl.counts()):
        raise ConstructionError(f"analytic indices {got} differ from template counts {tpl.counts()}; "
                                "eps_m too large relative to the monotone part, decay eps faster")
    vmin = f.value(random_sphere_points(params.n, 2000, np.random.default_rng(m))).min()
    if vmin <= 0:
        raise ConstructionError("K_m is not positive")
    return KmField(m, f, recs, params, tpl, eps_m, params.t(m))


def calibrate_eps_scale(params: KmParams, safety: float = 0.25, samples: int = 20_000, rng=0) -> float:
    """Largest eps_scale (times ``safety``) keeping eps_0 |Delta Khat_0| below c/2 on U.

    c is the sampled minimum over U of the Laplacian of the monotone part.
    Delta Khat_m grows like t_m^2, so with eps_m = eps_scale * eps_ratio^m the
    bound carries over to every m when eps_ratio * mobius_base^2 <= 1; the
    C^3 distance eps_m |Khat_m|_{C^3} ~ (eps_ratio * mobius_base^3)^m decays
    when that product is below 1.
    """
    tpl = params.build_template()
    n = params.n
    base = base_monotone_field(n, params.eps0, params.deltas[0])
    c = laplacian_floor(base, params.deltas[0], rng=rng)
    moving = template_field(tpl, n, 1.0 / params.l0(tpl))
    pts = np.vstack([_sample_U(n, params.deltas[0], samples, np.random.default_rng(rng)),
                     _near_south(n, params, tpl, 0, samples, rng)])
    lap = np.abs(moving.evaluate(pts).laplacian).max()
    params.eps_scale = safety * 0.5 * c / lap
    return params.eps_scale


def _near_south(n, params, tpl, m, count, rng):
    """Points in the chart ball carrying the template's support at stage m."""
    rng = np.random.default_rng(rng)
    rad = tpl.R2 * params.l0(tpl) / params.t(m)
    y = rng.standard_normal((count, n))
    y *= (rad * rng.random(count) ** (1.0 / n) / np.linalg.norm(y, axis=1))[:, None]
    return stereo_lift_array(y, "N")


# ---------------------------------------------------------------- Steps 4-6 as standalone maps


@dataclass
class NormalFormPatch:
    """Theta(y) = <G(y) (y-p), A G(y) (y-p)>, G = exp(f(|y-p|^2) log R)."""

    p: np.ndarray
    A: np.ndarray
    R: np.ndarray
    delta1: float
    delta2: float

    def __post_init__(self):
        self.p = np.asarray(self.p, dtype=float)
        self.A = np.asarray(self.A, dtype=float)
        if self.A.ndim == 1:
            self.A = np.diag(self.A)
        if not np.allclose(self.A, np.diag(np.diag(self.A))) or np.any(np.diag(self.A) == 0):
            raise DomainError("A must be diagonal and nonsingular")
        if self.A[-1, -1] <= 0:
            raise DomainError("last diagonal entry of A must be positive")
        if not 0 < self.delta2 < self.delta1:
            raise DomainError("need 0 < delta2 < delta1")
        L = logm(np.asarray(self.R, dtype=float))
        if np.max(np.abs(L.imag)) > 1e-10:
            raise DomainError("rotation has no real logarithm (angle pi)")
        L = np.real(L)
        self.L = 0.5 * (L - L.T)
        w, V = np.linalg.eig(self.L)
        self._w, self._V, self._Vi = w, V, np.linalg.inv(V)
        # f ramps over [delta2^2, (0.9 delta1)^2]
        self._a, self._b = self.delta2**2, (0.9 * self.delta1) ** 2

    def _G(self, t):
        E = np.exp(t[:, None] * self._w[None, :])
        return np.real(np.einsum("ij,nj,jk->nik", self._V, E, self._Vi))

    def _f(self, rho2):
        u = (rho2 - self._a) / (self._b - self._a)
        s = np.clip(u, 0, 1)
        inside = (u > 0) & (u < 1)
        f0 = s**3 * (10 - 15 * s + 6 * s**2)
        f1 = np.where(inside, 30 * s**2 * (1 - s) ** 2, 0.0) / (self._b - self._a)
        return f0, f1

    def value_grad(self, y: np.ndarray):
        d = np.atleast_2d(y) - self.p
        rho2 = np.sum(d * d, axis=1)
        t, dt = self._f(rho2)
        G = self._G(t)
        v = np.einsum("nij,nj->ni", G, d)
        Av = v @ self.A
        val = np.einsum("ni,ni->n", v, Av)
        Lv = v @ self.L.T
        # dv/dy = G + (L v) (grad t)^T, grad t = 2 dt d
        grad = 2.0 * np.einsum("nij,ni->nj", G, Av) + 2.0 * np.einsum("ni,ni->n", Lv, Av)[:, None] * (2.0 * dt)[:, None] * d
        return val, grad


def normal_form_patch(p, A, R, delta1: float, delta2: float, scan: int = 200_000, rng=0) -> NormalFormPatch:
    """Build the patch and verify that p is its only critical point in B_delta1(p).

    The annulus delta2 <= |y - p| <= delta1 is scanned; a spurious critical
    point shows up as |grad Theta| / |y - p| falling below a small fraction
    of min |A_ii| and raises ConstructionError.
    """
    P = NormalFormPatch(p, A, R, delta1, delta2)
    n = P.p.size
    g = np.random.default_rng(rng)
    d = g.standard_normal((scan, n))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = delta2 + (delta1 - delta2) * g.random(scan)
    _, grad = P.value_grad(P.p + r[:, None] * d)
    ratio = np.linalg.norm(grad, axis=1) / r
    floor = 1e-3 * np.min(np.abs(np.diag(P.A)))
    if ratio.min() < floor:
        i = int(np.argmin(ratio))
        raise ConstructionError("spurious critical point in the normal-form annulus", P.p + r[i] * d[i])
    P.scan_min_ratio = float(ratio.min())
    return P


@dataclass
class ShearedField:
    """Theta~(y', y_n) = Theta(y', y_n + G(y')), G = p_i^n on B_delta3(p_i'), 0 off the 2 delta3 balls."""

    theta: object  # callable y -> (value, grad)
    points: np.ndarray
    delta3: float

    def shift(self, yp: np.ndarray):
        G = np.zeros(yp.shape[0])
        dG = np.zeros_like(yp)
        for p in self.points:
            diff = yp - p[:-1]
            r = np.linalg.norm(diff, axis=1)
            u = (r - self.delta3) / self.delta3
            s = np.clip(u, 0.0, 1.0)
            inside = (u > 0) & (u < 1)
            w = 1.0 - s**3 * (10 - 15 * s + 6 * s**2)
            dw = -np.where(inside, 30 * s**2 * (1 - s) ** 2, 0.0) / self.delta3
            G += p[-1] * w
            safe = np.where(r > 0, r, 1.0)
            dG += p[-1] * (dw / safe)[:, None] * diff
        return G, dG

    def value_grad(self, y: np.ndarray):
        y = np.atleast_2d(y)
        G, dG = self.shift(y[:, :-1])
        ys = y.copy()
        ys[:, -1] += G
        val, g = self.theta(ys)
        out = g.copy()
        out[:, :-1] += g[:, -1:] * dG
        return val, out


def shear_deform(theta, points, delta3: float) -> ShearedField:
    """Shear so that the critical points (p_i', p_i^n) of ``theta`` move to (p_i', 0)."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    for i in range(len(P)):
        for j in range(i + 1, len(P)):
            if np.linalg.norm(P[i, :-1] - P[j, :-1]) < 4.0 * delta3:
                raise DomainError(
                    f"projected points {i} and {j} are closer than 4 delta3; choose another rotation")
    return ShearedField(theta, P, delta3)


def separating_rotation(points, delta3: float, rng=0, tries: int = 1000) -> np.ndarray:
    """Random rotation after which the projections to the first n-1 coordinates are 4 delta3 apart."""
    P = np.atleast_2d(np.asarray(points, dtype=float))
    n = P.shape[1]
    g = np.random.default_rng(rng)
    for _ in range(tries):
        Q, R = np.linalg.qr(g.standard_normal((n, n)))
        Q = Q * np.sign(np.diag(R))
        if np.linalg.det(Q) < 0:
            Q[:, 0] = -Q[:, 0]
        Pr = P @ Q.T
        ok = all(np.linalg.norm(Pr[i, :-1] - Pr[j, :-1]) >= 4.0 * delta3
                 for i in range(len(P)) for j in range(i + 1, len(P)))
        if ok:
            return Q
    raise DomainError("no separating rotation found")


# ---------------------------------------------------------------- verification


@dataclass
class VerificationReport:
    clause_a: bool
    clause_b: bool
    clause_c: bool
    details: dict

    @property
    def passed(self) -> bool:
        return self.clause_a and self.clause_b and self.clause_c

    def to_dict(self) -> dict:
        return {"clause_a": self.clause_a, "clause_b": self.clause_b, "clause_c": self.clause_c,
                "passed": self.passed, "details": self.details}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, default=float)


def c3_norm(field: ScalarField, pts: np.ndarray, step: float) -> float:
    """max over samples of |f|, |grad f|, |Hess f| and a central-difference third derivative.

    Third derivatives are differences of intrinsic Hessians along the tangent
    frame, with geodesic step ``step``.
    """
    E = field.evaluate(pts)
    Q = tangent_basis(pts)
    best = max(np.abs(E.value).max(), np.linalg.norm(E.grad, axis=1).max(),
               np.linalg.norm(E.hess, axis=(1, 2)).max())
    for a in range(Q.shape[2]):
        v = Q[:, :, a]
        xp = np.cos(step) * pts + np.sin(step) * v
        xm = np.cos(step) * pts - np.sin(step) * v
        Hp = np.einsum("nia,nij,njb->nab", Q, field.evaluate(xp).hess, Q)
        Hm = np.einsum("nia,nij,njb->nab", Q, field.evaluate(xm).hess, Q)
        d3 = np.linalg.norm(Hp - Hm, axis=(1, 2)) / (2.0 * step)
        best = max(best, float(d3.max()))
    return float(best)


def verify_member(F: KmField, c: float, samples: int = 20_000, seeds: int = 400, rng=0,
                  root_tol: float = 1e-7) -> dict:
    """Per-member data for clauses (a)-(c); independent of the other members."""
    params, tpl, n = F.params, F.template, F.params.n
    e = np.eye(n + 1)[n]
    rad = tpl.R2 * params.l0(tpl) / F.t_m
    scale = min(abs(r.hessian_margin) for r in F.analytic_crits)
    entry = {"m": F.m, "eps_m": F.eps_m, "t_m": F.t_m}
    try:
        rep = find_critical_points(F.field, n, seeds=seeds, tol=1e-11, nd_tol=1e-3 * scale,
                                   focus=[(-e, 2.0 * rad, seeds)], rng=rng)
    except Exception as exc:  # noqa: BLE001 - any root-finding failure fails clause (a)
        entry["a_error"] = f"{type(exc).__name__}: {exc}"
        entry["a_ok"] = False
    else:
        found = rep.records
        maxima = [r for r in found if r.morse_index == n]
        single_max = len(maxima) == 1 and bool(np.linalg.norm(maxima[0].location - e) < root_tol)
        loc_err = max(min(float(np.linalg.norm(rf.location - ra.location)) for rf in found)
                      for ra in F.analytic_crits)
        idx_ok = all(any(np.linalg.norm(rf.location - ra.location) < 1e-6 and rf.morse_index == ra.morse_index
                         for rf in found) for ra in F.analytic_crits)
        others = [r for r in found if r.morse_index != n]
        dS = max((float(geodesic_distance(r.location, -e)) for r in others), default=0.0)
        entry.update({"counts": rep.counts, "location_error": loc_err, "index_match": bool(idx_ok),
                      "single_max_at_N": single_max, "max_dist_to_S": dS})
        entry["a_ok"] = bool(rep.counts == list(params.target_counts) and single_max and idx_ok
                             and loc_err < root_tol)
    U = np.vstack([_sample_U(n, params.deltas[0], samples, np.random.default_rng(rng + F.m)),
                   _near_south(n, params, tpl, F.m, samples, rng + F.m)])
    entry["min_laplacian_U"] = float(F.field.evaluate(U).laplacian.min())
    entry["b_ok"] = bool(entry["min_laplacian_U"] >= 0.5 * c)
    diff = LambdaField(n, lambda X: F.field.moving.ambient(X) * F.eps_m)
    pts = np.vstack([random_sphere_points(n, 2000, np.random.default_rng(rng)),
                     _near_south(n, params, tpl, F.m, 4000, rng)])
    entry["c3_distance"] = c3_norm(diff, pts, 1e-3 * rad)
    vals = F.field.value(np.vstack([e, -e, U[:2000]]))
    entry["pinch"] = float(vals.max() / vals.min())
    return entry


def aggregate_verification(entries: list[dict], c: float) -> VerificationReport:
    """Clauses from per-member entries, ordered by m whatever order they arrive in."""
    entries = sorted(entries, key=lambda d: d["m"])
    if len(entries) < 3:
        raise DomainError("need at least 3 members of the sequence")
    south = [d.get("max_dist_to_S") for d in entries]
    shrinking = None not in south and all(b <= a + 1e-12 for a, b in zip(south, south[1:]))
    c3 = [d["c3_distance"] for d in entries]
    a_ok = all(d["a_ok"] for d in entries) and shrinking
    b_ok = all(d["b_ok"] for d in entries)
    c_ok = all(b < a for a, b in zip(c3, c3[1:]))
    details = {"c": c, "per_m": entries, "south_distance_shrinking": bool(shrinking),
               "pinch_max": max(d["pinch"] for d in entries)}
    return VerificationReport(bool(a_ok), bool(b_ok), bool(c_ok), details)


def verify_km(fields: list[KmField], samples: int = 20_000, seeds: int = 400, rng=0,
              root_tol: float = 1e-7) -> VerificationReport:
    """Check clauses (a), (b), (c) of the K_m construction on a computed sequence.

    (a) numerical critical points match the analytic list (location, index,
    counts) with a single maximum at N and the rest closing in on S;
    (b) Delta K_m >= c/2 on U, c the floor of the monotone part;
    (c) the C^3 distance to K_0 = 1 + K decreases strictly in m.
    """
    if len(fields) < 3:
        raise DomainError("need at least 3 members of the sequence")
    c = laplacian_floor(fields[0].field.base, fields[0].params.deltas[0], rng=rng)
    entries = [verify_member(F, c, samples, seeds, rng, root_tol) for F in fields]
    return aggregate_verification(entries, c)


def build_sequence(params: KmParams, ms) -> list[KmField]:
    if params.eps_scale is None:
        calibrate_eps_scale(params)
    return [assemble_km(params, m) for m in ms]
