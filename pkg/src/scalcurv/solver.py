"""Subcritical functional J_tau on axisymmetric functions of S^n.

Discretization: cell-centred finite volumes on a uniform polar grid.  Node i
owns the cell [theta_{i-1/2}, theta_{i+1/2}] clipped to [0, pi]; its mass is
the exact volume of the corresponding zone of S^n, and the Dirichlet form uses
face weights omega sin^{n-1}(theta_{i+1/2}) / h.  The discrete functional

    r(u) = u^T A u,   A = c_n S + n(n-1) M,
    k(u) = sum_i m_i K_i u_i^{p+1},
    J(u) = r / k^{2/(p+1)},

is differentiated exactly, so gradients and Hessians are those of the
discrete problem.  A is tridiagonal and symmetric positive definite, which
makes the L-gradient, Newton steps and Sturm counts O(N).
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.linalg import eigh
from scipy.special import comb

from .kernels import tridiag_negcount, tridiag_solve
from .sphere import (
    DEFAULT_NODES,
    AxisymProfile,
    DomainError,
    RoundMetricConstants,
    uniform_theta_grid,
)

BLOWUP_PEAK = 1e6
ARMIJO = 1e-4


class NonConvergenceError(RuntimeError):
    pass


class DegenerateHessianError(RuntimeError):
    def __init__(self, msg: str, smallest: float):
        super().__init__(msg)
        self.smallest = smallest


def _zone_volumes(theta: np.ndarray, n: int) -> np.ndarray:
    """omega_{n-1} int sin^{n-1} over each dual cell, by 8-point Gauss per cell."""
    faces = np.concatenate([[0.0], 0.5 * (theta[1:] + theta[:-1]), [math.pi]])
    t, w = np.polynomial.legendre.leggauss(8)
    a, b = faces[:-1, None], faces[1:, None]
    x = 0.5 * (b - a) * t[None] + 0.5 * (a + b)
    vol = np.sum(0.5 * (b - a) * w[None] * np.sin(x) ** (n - 1), axis=1)
    return RoundMetricConstants.for_dim(n).omega_nm1 * vol


def _sample_K(K, theta: np.ndarray) -> np.ndarray:
    if isinstance(K, (int, float)):
        return np.full(theta.size, float(K))
    if isinstance(K, AxisymProfile):
        if K.theta_grid.size == theta.size and np.allclose(K.theta_grid, theta):
            return K.values.copy()
        return np.interp(theta, K.theta_grid, K.values)
    if hasattr(K, "profile"):
        return np.asarray(K.profile(theta), dtype=float)
    if callable(K):
        return np.asarray(K(theta), dtype=float) * np.ones(theta.size)
    if hasattr(K, "value") and hasattr(K, "n"):
        # a general field is read along the meridian; it is assumed axisymmetric
        X = np.zeros((theta.size, K.n + 1))
        X[:, 0], X[:, -1] = np.sin(theta), np.cos(theta)
        return np.asarray(K.value(X), dtype=float)
    raise DomainError(f"cannot sample curvature from {type(K).__name__}")


class AxisymProblem:
    """Discrete J_tau for a fixed curvature K, dimension n and exponent shift tau."""

    def __init__(self, K, n: int, tau: float, nodes: int = DEFAULT_NODES):
        if not 0.0 <= tau <= 0.2:
            raise DomainError(f"tau must lie in [0, 0.2], got {tau}")
        self.n = n
        self.tau = float(tau)
        self.const = RoundMetricConstants.for_dim(n)
        self.p = (n + 2.0) / (n - 2.0) - self.tau
        self.theta = uniform_theta_grid(nodes)
        self.h = self.theta[1] - self.theta[0]
        self.mass = _zone_volumes(self.theta, n)
        mid = 0.5 * (self.theta[1:] + self.theta[:-1])
        self.face = self.const.omega_nm1 * np.sin(mid) ** (n - 1) / self.h
        self.K = _sample_K(K, self.theta)
        self.K_source = K
        cn, R0 = self.const.c_n, self.const.R0
        sdiag = np.zeros(nodes)
        sdiag[:-1] += self.face
        sdiag[1:] += self.face
        self.A_diag = cn * sdiag + R0 * self.mass
        self.A_off = -cn * self.face

    # -- elementary pieces --------------------------------------------------

    @property
    def alpha(self) -> float:
        return 2.0 / (self.p + 1.0)

    def apply_A(self, u: np.ndarray) -> np.ndarray:
        # flux form: the stiffness part annihilates constants exactly
        flux = self.face * np.diff(u)
        out = self.const.R0 * self.mass * u
        out[:-1] -= self.const.c_n * flux
        out[1:] += self.const.c_n * flux
        return out

    def solve_A(self, rhs: np.ndarray) -> np.ndarray:
        return tridiag_solve(self.A_off, self.A_diag, self.A_off, rhs)

    def r(self, u) -> float:
        return float(u @ self.apply_A(u))

    def k(self, u) -> float:
        return float(np.sum(self.mass * self.K * np.abs(u) ** (self.p + 1.0)))

    def norm(self, u) -> float:
        return math.sqrt(self.r(u))

    def normalize(self, u) -> np.ndarray:
        return u / self.norm(u)

    def J(self, u) -> float:
        k = self.k(u)
        if not k > 0:
            raise DomainError("k_tau <= 0: the denominator of J_tau must be positive")
        return self.r(u) / k**self.alpha

    def b(self, u) -> np.ndarray:
        """Discrete K u^p (cotangent vector)."""
        return self.mass * self.K * np.abs(u) ** self.p

    def dJ(self, u) -> np.ndarray:
        r, k = self.r(u), self.k(u)
        return 2.0 / k**self.alpha * (self.apply_A(u) - r / k * self.b(u))

    def grad(self, u) -> np.ndarray:
        """L-gradient: the vector g with g^T A v = dJ(u) v for all v."""
        return self.solve_A(self.dJ(u))

    def grad_norm(self, u) -> float:
        d = self.dJ(u)
        return math.sqrt(max(float(d @ self.solve_A(d)), 0.0))

    def hessian_apply(self, u, v) -> np.ndarray:
        r, k, a, p = self.r(u), self.k(u), self.alpha, self.p
        Au, b = self.apply_A(u), self.b(u)
        D = self.mass * self.K * np.abs(u) ** (p - 1.0)
        out = 2.0 / k**a * (self.apply_A(v) - p * r / k * D * v)
        out -= 4.0 / k ** (a + 1.0) * (Au * (b @ v) + b * (Au @ v))
        out += 2.0 * (p + 3.0) * r / k ** (a + 2.0) * b * (b @ v)
        return out

    def state(self, u) -> "VariationalState":
        return VariationalState(self, self.normalize(np.asarray(u, dtype=float)))

    def constant_state(self) -> "VariationalState":
        return self.state(np.ones(self.theta.size))

    def with_tau(self, tau: float) -> "AxisymProblem":
        return AxisymProblem(self.K_source, self.n, tau, self.theta.size)

    def reference(self) -> "AxisymProblem":
        return AxisymProblem(1.0, self.n, self.tau, self.theta.size)


@dataclass
class VariationalState:
    problem: AxisymProblem
    u: np.ndarray

    @property
    def tau(self) -> float:
        return self.problem.tau

    @property
    def profile(self) -> AxisymProfile:
        return AxisymProfile(self.problem.theta, self.u, self.problem.n)

    def peak(self) -> tuple[float, float]:
        """(theta*, u(theta*)) refined by a parabola through the three top nodes."""
        u, th = self.u, self.problem.theta
        i = int(np.argmax(u))
        if 0 < i < u.size - 1:
            ym, y0, yp = u[i - 1], u[i], u[i + 1]
            den = ym - 2.0 * y0 + yp
            if den < 0:
                s = 0.5 * (ym - yp) / den
                return float(th[i] + s * self.problem.h), float(y0 - 0.25 * (ym - yp) * s)
        return float(th[i]), float(u[i])

    def lambda_estimate(self) -> float:
        return self.peak()[1] ** (2.0 / (self.problem.n - 2))


def functional(state: VariationalState) -> float:
    return state.problem.J(state.u)


def functional_reference(state: VariationalState) -> float:
    """J-bar_tau: the same functional with K replaced by 1."""
    return state.problem.reference().J(state.u)


def reference_minimum(n: int, tau: float) -> float:
    """n(n-1) Vol(S^n)^{1 - 2/(p+1)}, the value of J-bar_tau at constants."""
    c = RoundMetricConstants.for_dim(n)
    p = (n + 2.0) / (n - 2.0) - tau
    return c.R0 * c.vol_n ** (1.0 - 2.0 / (p + 1.0))


@dataclass
class GradientData:
    cotangent: np.ndarray
    l_gradient: np.ndarray
    norm: float


def gradient(state: VariationalState) -> GradientData:
    pb = state.problem
    d = pb.dJ(state.u)
    g = pb.solve_A(d)
    return GradientData(d, g, math.sqrt(max(float(d @ g), 0.0)))


# ---------------------------------------------------------------- flow


@dataclass
class FlowResult:
    state: VariationalState
    converged: bool
    reason: str
    iterations: int
    J_history: list = field(default_factory=list)
    grad_history: list = field(default_factory=list)
    norm_history: list = field(default_factory=list)
    min_u_history: list = field(default_factory=list)
    rejected_positivity: int = 0

    def to_dict(self) -> dict:
        return {
            "converged": self.converged,
            "reason": self.reason,
            "iterations": self.iterations,
            "J_final": self.J_history[-1] if self.J_history else None,
            "grad_final": self.grad_history[-1] if self.grad_history else None,
            "rejected_positivity": self.rejected_positivity,
        }


def flow(
    state: VariationalState,
    tol: float = 1e-8,
    max_iter: int = 20000,
    step0: float = 1.0,
    min_step: float = 1e-12,
    blowup_peak: float = BLOWUP_PEAK,
    record: bool = True,
) -> FlowResult:
    """Negative L-gradient descent on X with Armijo backtracking.

    The search direction is -g scaled by k^{2/(p+1)}/2, so a unit step is the
    classical normalized fixed-point map u -> A^{-1} (r/k) K u^p.  A trial
    point is projected back onto ||u|| = 1; trials with a non-positive node
    are rejected and the step halved, as are trials failing Armijo.
    """
    pb = state.problem
    u = pb.normalize(state.u.copy())
    if np.any(u <= 0):
        raise DomainError("initial state must be positive")
    J = pb.J(u)
    s = step0
    res = FlowResult(state, False, "max_iter", 0)
    for it in range(max_iter):
        d = pb.dJ(u)
        g = pb.solve_A(d)
        gn = math.sqrt(max(float(d @ g), 0.0))
        if record:
            res.J_history.append(J)
            res.grad_history.append(gn)
            res.norm_history.append(pb.norm(u))
            res.min_u_history.append(float(u.min()))
        if gn < tol:
            res.converged, res.reason = True, "grad_norm"
            break
        if pb.tau == 0.0 and u.max() > blowup_peak:
            res.reason = "divergence"
            break
        direction = -g * (pb.k(u) ** pb.alpha / 2.0)
        slope = float(d @ direction)
        while True:
            trial = u + s * direction
            if trial.min() <= 0.0:
                res.rejected_positivity += 1
                s *= 0.5
            else:
                trial = pb.normalize(trial)
                Jt = pb.J(trial)
                if Jt <= J + ARMIJO * s * slope and Jt < J:
                    break
                s *= 0.5
            if s < min_step:
                # no decrease is resolvable once J sits on its roundoff floor
                floor = abs(slope) * min_step * 1e3 < 1e-13 * abs(J) or gn < 1e-6 * abs(J)
                res.reason = "roundoff_floor" if floor else "step_underflow"
                res.iterations = it
                res.state = VariationalState(pb, u)
                return res
        u, J = trial, Jt
        s = min(step0, 2.0 * s)
        res.iterations = it + 1
    res.state = VariationalState(pb, u)
    return res


# ---------------------------------------------------------------- Newton


@dataclass
class SolveReport:
    state: VariationalState
    grad_norm: float
    J_value: float
    converged: bool
    iterations: int
    hessian_sector_indices: dict = field(default_factory=dict)
    morse_index_total: int | None = None

    def to_dict(self) -> dict:
        th, pk = self.state.peak()
        return {
            "n": self.state.problem.n,
            "tau": self.state.tau,
            "nodes": int(self.state.u.size),
            "grad_norm": self.grad_norm,
            "J_value": self.J_value,
            "converged": self.converged,
            "iterations": self.iterations,
            "peak_theta": th,
            "peak_value": pk,
            "hessian_sector_indices": {str(k): v for k, v in self.hessian_sector_indices.items()},
            "morse_index_total": self.morse_index_total,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def newton_refine(state: VariationalState, tol: float = 1e-10, max_iter: int = 50) -> SolveReport:
    """Newton's method on the rescaled Euler-Lagrange system A w = M K w^p.

    With w = s u and s^{p-1} = r/k, critical points of J on X correspond to
    solutions w; the Jacobian A - p M K w^{p-1} is tridiagonal.  Steps are
    damped by halving until the residual decreases and w stays positive.
    """
    pb = state.problem
    u = pb.normalize(state.u.copy())
    p = pb.p
    s = (pb.r(u) / pb.k(u)) ** (1.0 / (p - 1.0))
    w = s * u

    def F(w):
        return pb.apply_A(w) - pb.b(w)

    def res_norm(Fw):
        return math.sqrt(max(float(Fw @ pb.solve_A(Fw)), 0.0))

    Fw = F(w)
    fn = res_norm(Fw)
    it = 0
    for it in range(1, max_iter + 1):
        u = pb.normalize(w)
        if pb.grad_norm(u) < tol:
            it -= 1
            break
        jd = pb.A_diag - p * pb.mass * pb.K * w ** (p - 1.0)
        delta = tridiag_solve(pb.A_off, jd, pb.A_off, -Fw)
        if not np.all(np.isfinite(delta)):
            raise DegenerateHessianError("singular Newton matrix", _smallest_eig(jd, pb.A_off, pb.mass))
        t = 1.0
        while True:
            trial = w + t * delta
            if trial.min() > 0:
                Ft = F(trial)
                ft = res_norm(Ft)
                if ft < fn or t < 1e-3:
                    break
            t *= 0.5
            if t < 1e-10:
                raise NonConvergenceError("Newton line search failed")
        w, Fw, fn = trial, Ft, ft
    u = pb.normalize(w)
    st = VariationalState(pb, u)
    gn = pb.grad_norm(u)
    return SolveReport(st, gn, pb.J(u), gn < tol, it)


def _smallest_eig(diag, off, mass) -> float:
    from scipy.linalg import eigvalsh_tridiagonal

    sc = 1.0 / np.sqrt(mass)
    ev = eigvalsh_tridiagonal(diag * sc * sc, off * sc[:-1] * sc[1:], select="i", select_range=(0, 0))
    return float(ev[0])


# ---------------------------------------------------------------- sector Hessian


def sector_multiplicity(n: int, ell: int) -> int:
    """Dimension of degree-ell spherical harmonics on S^{n-1}."""
    if ell == 0:
        return 1
    return int(comb(ell + n - 1, n - 1, exact=True) - comb(ell + n - 3, n - 1, exact=True))


@dataclass
class SectorSpectrum:
    ell: int
    multiplicity: int
    negative_count: int
    lowest: list

    def to_dict(self) -> dict:
        return {"ell": self.ell, "multiplicity": self.multiplicity,
                "negative_count": self.negative_count, "lowest": list(self.lowest)}


def hessian_sector_spectrum(state: VariationalState, l_max: int | None = None, n_lowest: int = 4,
                            warn_tol: float = 1e-6) -> list[SectorSpectrum]:
    """Spectra of the second variation of J on X split by spherical-harmonic sector.

    Sector ell collects perturbations v(theta) Y_ell(omega); for ell >= 1 the
    rank-one terms of the second variation integrate to zero and the form is
    the tridiagonal A_ell - p (r/k) M K u^{p-1} with Dirichlet conditions at
    the poles.  For ell = 0 the rank-one terms are kept and the scaling
    direction u (a null direction of J) is lifted by adding (A u)(A u)^T,
    which leaves the index on the tangent space of X unchanged.  Negative
    counts come from Sturm sequences combined with the Haynsworth inertia
    formula; eigenvalues are generalized ones with respect to the mass matrix.
    """
    import warnings

    pb = state.problem
    n, p = pb.n, pb.p
    l_max = n + 1 if l_max is None else l_max
    u = state.u
    gn = pb.grad_norm(u)
    if gn > warn_tol:
        warnings.warn(f"state is not critical (grad norm {gn:.2e}); spectrum lacks variational meaning",
                      stacklevel=2)
    r, k, a = pb.r(u), pb.k(u), pb.alpha
    scale = 2.0 / k**a
    pot = p * r / k * pb.mass * pb.K * u ** (p - 1.0)
    out = []

    # ell = 0 with the rank-one corrections
    d0 = scale * (pb.A_diag - pot)
    o0 = scale * pb.A_off
    Au, b = pb.apply_A(u), pb.b(u)
    U = np.column_stack([Au, b])
    beta = scale / r
    C = np.array([[beta, -4.0 / k ** (a + 1.0)], [-4.0 / k ** (a + 1.0), 2.0 * (p + 3.0) * r / k ** (a + 2.0)]])
    neg_T = tridiag_negcount(d0, o0)
    TiU = np.column_stack([tridiag_solve(o0, d0, o0, U[:, j]) for j in range(2)])
    S2 = -np.linalg.inv(C) - U.T @ TiU
    neg0 = neg_T + int(np.sum(np.linalg.eigvalsh(S2) < 0)) - int(np.sum(np.linalg.eigvalsh(-np.linalg.inv(C)) < 0))
    lowest0 = _lowest_dense(d0, o0, U, C, pb.mass, n_lowest)
    out.append(SectorSpectrum(0, 1, neg0, lowest0))

    interior = slice(1, -1)
    m_in = pb.mass[interior]
    sin2 = np.sin(pb.theta[interior]) ** 2
    for ell in range(1, l_max + 1):
        ang = pb.const.c_n * ell * (ell + n - 2) * m_in / sin2
        dl = scale * (pb.A_diag[interior] + ang - pot[interior])
        ol = scale * pb.A_off[1:-1]
        neg = tridiag_negcount(dl, ol)
        out.append(SectorSpectrum(ell, sector_multiplicity(n, ell), neg, _lowest_tridiag(dl, ol, m_in, n_lowest)))
    return out


def _lowest_tridiag(d, o, mass, k):
    from scipy.linalg import eigvalsh_tridiagonal

    sc = 1.0 / np.sqrt(mass)
    ev = eigvalsh_tridiagonal(d * sc * sc, o * sc[:-1] * sc[1:], select="i", select_range=(0, k - 1))
    return [float(x) for x in ev]


def _lowest_dense(d, o, U, C, mass, k):
    sc = 1.0 / np.sqrt(mass)
    H = np.diag(d) + np.diag(o, 1) + np.diag(o, -1) + U @ C @ U.T
    H = sc[:, None] * H * sc[None, :]
    return [float(x) for x in eigh(H, eigvals_only=True, subset_by_index=[0, k - 1])]


def morse_index(spectrum: list[SectorSpectrum]) -> int:
    return int(sum(s.multiplicity * s.negative_count for s in spectrum))


def solve(state: VariationalState, flow_tol: float = 1e-4, tol: float = 1e-10, l_max: int | None = None,
          max_flow_iter: int = 20000) -> SolveReport:
    """Flow into a basin, refine by Newton, then attach the sector indices."""
    fr = flow(state, tol=flow_tol, max_iter=max_flow_iter, record=False)
    rep = newton_refine(fr.state, tol=tol)
    spec = hessian_sector_spectrum(rep.state, l_max)
    rep.hessian_sector_indices = {s.ell: s.negative_count for s in spec}
    rep.morse_index_total = morse_index(spec)
    return rep


# ---------------------------------------------------------------- continuation


def bubble_seed(pb: AxisymProblem, theta0: float = 0.0, lam: float = 3.0) -> VariationalState:
    """Positive starting state concentrated at polar angle theta0 (0 or pi)."""
    from .bubbles import SphereBubble

    val, _ = SphereBubble.profile(np.abs(pb.theta - theta0), lam, pb.n)
    return pb.state(val)


@dataclass
class ContinuationStep:
    tau: float
    J: float
    grad_norm: float
    peak_theta: float
    peak_value: float
    lam: float
    morse_index: int | None
    converged: bool

    def to_dict(self) -> dict:
        return dict(self.__dict__)


@dataclass
class ContinuationReport:
    n: int
    steps: list
    slope: float | None
    intercept: float | None
    J_extrapolated: float | None
    limit_energy: float | None
    relative_energy_gap: float | None
    concentration_theta: float | None
    blowup_laplacian: float | None
    c2_values: list
    complete: bool
    message: str = ""

    @property
    def tau_schedule(self) -> list:
        return [s.tau for s in self.steps]

    def to_dict(self) -> dict:
        d = {k: v for k, v in self.__dict__.items() if k != "steps"}
        d["steps"] = [s.to_dict() for s in self.steps]
        d["tau_schedule"] = self.tau_schedule
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2)


def continuation(
    K,
    n: int,
    tau_schedule,
    seed: VariationalState | None = None,
    nodes: int = DEFAULT_NODES,
    K_lap: Callable[[float], float] | None = None,
    tol: float = 1e-10,
    l_max: int | None = None,
    fit_last: int | None = None,
) -> ContinuationReport:
    """Warm-started solves along a decreasing tau schedule with blow-up tracking.

    ``K_lap(theta)`` returns Delta K at a polar angle and ``K`` must expose
    ``profile(theta)`` (or be sampled by :func:`_sample_K`).  The exponent of
    lambda ~ tau^slope is fitted over the last ``fit_last`` steps (all by
    default); the energy is extrapolated to tau = 0 linearly over the three
    smallest tau values.
    """
    from .bubbles import limit_energy

    taus = [float(t) for t in tau_schedule]
    if len(taus) < 5:
        raise DomainError("continuation needs at least 5 tau values")
    if any(b >= a for a, b in zip(taus, taus[1:])):
        raise DomainError("tau schedule must be strictly decreasing")
    pb = AxisymProblem(K, n, taus[0], nodes)
    st = seed if seed is not None else bubble_seed(pb)
    st = VariationalState(pb, np.interp(pb.theta, st.problem.theta, st.u))
    steps = []
    msg = ""
    complete = True
    for i, tau in enumerate(taus):
        pb = pb if i == 0 else pb.with_tau(tau)
        st = VariationalState(pb, st.u)
        try:
            rep = solve(st, tol=tol, l_max=l_max)
        except (NonConvergenceError, DegenerateHessianError, DomainError) as exc:
            complete = False
            msg = f"lost convergence at tau={tau}: {exc}"
            break
        st = rep.state
        th, pk = st.peak()
        steps.append(ContinuationStep(tau, rep.J_value, rep.grad_norm, th, pk,
                                      pk ** (2.0 / (n - 2)), rep.morse_index_total, rep.converged))
    slope = intercept = J0 = E = gap = th_c = lapK = None
    c2 = []
    if len(steps) >= 3:
        use = steps[-fit_last:] if fit_last else steps
        lt = np.log([s.tau for s in use])
        ll = np.log([s.lam for s in use])
        slope, intercept = (float(x) for x in np.polyfit(lt, ll, 1))
        tail = steps[-3:]
        cfit = np.polyfit([s.tau for s in tail], [s.J for s in tail], 1)
        J0 = float(cfit[1])
        th_c = steps[-1].peak_theta
        Kc = float(np.interp(th_c, pb.theta, pb.K))
        E = float(limit_energy([Kc], n))
        gap = abs(J0 / E - 1.0)
        if K_lap is not None:
            lapK = float(K_lap(th_c))
            if lapK != 0.0:
                c2 = [s.lam**2 * s.tau * Kc / abs(lapK) for s in steps]
    return ContinuationReport(n, steps, slope, intercept, J0, E, gap, th_c, lapK, c2, complete, msg)
