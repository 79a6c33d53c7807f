"""Round-sphere geometry: stereographic charts, Möbius dilations, and the
axisymmetric Laplace-Beltrami operator and quadrature on a polar-angle grid.

Points on S^n are stored as unit vectors in R^{n+1}; the last coordinate is the
height ``y_{n+1}``, so the north pole is ``e_{n+1}``.  Array-valued functions
accept a single point of shape ``(n+1,)`` or a batch ``(N, n+1)``.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.integrate import simpson
from scipy.special import gammaln

UNIT_TOL = 1e-12
DEFAULT_NODES = 2048


class SchemaError(ValueError):
    """Malformed discretization input (grid ordering, sizes, non-finite values)."""


class DomainError(ValueError):
    """Argument outside the domain of a geometric map."""


# ---------------------------------------------------------------- constants


def sphere_volume(n: int) -> float:
    """Vol(S^n) = 2 pi^{(n+1)/2} / Gamma((n+1)/2)."""
    return float(2.0 * math.exp(0.5 * (n + 1) * math.log(math.pi) - gammaln(0.5 * (n + 1))))


@dataclass(frozen=True)
class RoundMetricConstants:
    n: int
    c_n: float
    R0: float
    omega_nm1: float
    vol_n: float

    @classmethod
    def for_dim(cls, n: int) -> "RoundMetricConstants":
        if n < 3:
            raise DomainError(f"need n >= 3, got {n}")
        return cls(
            n=n,
            c_n=4.0 * (n - 1) / (n - 2),
            R0=float(n * (n - 1)),
            omega_nm1=sphere_volume(n - 1),
            vol_n=sphere_volume(n),
        )


# ---------------------------------------------------------------- points


@dataclass(frozen=True)
class SpherePoint:
    coords: np.ndarray

    def __post_init__(self):
        c = np.asarray(self.coords, dtype=float).reshape(-1)
        if c.size < 4:
            raise DomainError("S^n points need n >= 3")
        nrm = np.linalg.norm(c)
        if nrm == 0 or not np.isfinite(nrm):
            raise DomainError("zero or non-finite vector")
        object.__setattr__(self, "coords", c / nrm)

    @property
    def n(self) -> int:
        return self.coords.size - 1

    @classmethod
    def north(cls, n: int) -> "SpherePoint":
        return cls(np.eye(n + 1)[n])

    @classmethod
    def south(cls, n: int) -> "SpherePoint":
        return cls(-np.eye(n + 1)[n])

    def to_json(self) -> str:
        return json.dumps(self.coords.tolist())

    @classmethod
    def from_json(cls, s: str) -> "SpherePoint":
        return cls(np.array(json.loads(s), dtype=float))


@dataclass(frozen=True)
class ChartPoint:
    y: np.ndarray
    pole: str = "N"

    def __post_init__(self):
        if self.pole not in ("N", "S"):
            raise DomainError(f"pole must be 'N' or 'S', got {self.pole!r}")
        object.__setattr__(self, "y", np.asarray(self.y, dtype=float).reshape(-1))


def _sign(pole: str) -> float:
    if pole == "N":
        return 1.0
    if pole == "S":
        return -1.0
    raise DomainError(f"pole must be 'N' or 'S', got {pole!r}")


def stereo_project_array(x: np.ndarray, pole: str = "N") -> np.ndarray:
    """Stereographic projection from ``pole``: y = x' / (1 -+ x_{n+1})."""
    s = _sign(pole)
    x = np.asarray(x, dtype=float)
    den = 1.0 - s * x[..., -1]
    if np.any(den <= 0.0):
        raise DomainError(f"cannot project the pole {pole} itself")
    return x[..., :-1] / den[..., None]


def stereo_lift_array(y: np.ndarray, pole: str = "N") -> np.ndarray:
    s = _sign(pole)
    y = np.asarray(y, dtype=float)
    r2 = np.sum(y * y, axis=-1)
    out = np.empty(y.shape[:-1] + (y.shape[-1] + 1,))
    out[..., :-1] = 2.0 * y / (1.0 + r2)[..., None]
    out[..., -1] = s * (r2 - 1.0) / (r2 + 1.0)
    return out


def stereo_project(p: SpherePoint, pole: str = "N") -> ChartPoint:
    return ChartPoint(stereo_project_array(p.coords, pole), pole)


def stereo_lift(q: ChartPoint) -> SpherePoint:
    return SpherePoint(stereo_lift_array(q.y, q.pole))


def mobius_dilate_array(x: np.ndarray, t: float) -> np.ndarray:
    """Conjugate of y -> t*y through the north chart.  Fixes both poles.

    Closed form (no chart singularity at N): with h = x_{n+1},
    x' -> 2 t x' / D,  h -> ((t^2 - 1) + (t^2 + 1) h) / D,
    D = (t^2 + 1) + (t^2 - 1) h.
    """
    if not t > 0:
        raise DomainError(f"dilation factor must be positive, got {t}")
    x = np.asarray(x, dtype=float)
    h = x[..., -1]
    t2 = t * t
    D = (t2 + 1.0) + (t2 - 1.0) * h
    out = np.empty_like(x)
    out[..., :-1] = 2.0 * t * x[..., :-1] / D[..., None]
    out[..., -1] = ((t2 - 1.0) + (t2 + 1.0) * h) / D
    return out


def mobius_dilate(p: SpherePoint, t: float) -> SpherePoint:
    return SpherePoint(mobius_dilate_array(p.coords, t))


def geodesic_distance(x: np.ndarray, y: np.ndarray) -> np.ndarray:
    c = np.clip(np.sum(np.asarray(x) * np.asarray(y), axis=-1), -1.0, 1.0)
    return np.arccos(c)


def random_sphere_points(n: int, count: int, rng: np.random.Generator) -> np.ndarray:
    x = rng.standard_normal((count, n + 1))
    return x / np.linalg.norm(x, axis=1, keepdims=True)


# ---------------------------------------------------------------- axisymmetric profiles


@dataclass(frozen=True)
class AxisymProfile:
    """Values of a rotationally symmetric function on S^n sampled at polar angles."""

    theta_grid: np.ndarray
    values: np.ndarray
    n: int

    def __post_init__(self):
        th = np.asarray(self.theta_grid, dtype=float)
        v = np.asarray(self.values, dtype=float)
        if th.ndim != 1 or v.shape != th.shape:
            raise SchemaError("theta_grid and values must be 1-D arrays of equal length")
        if th.size < 5:
            raise SchemaError("need at least 5 nodes")
        if np.any(np.diff(th) <= 0):
            raise SchemaError("theta_grid must be strictly increasing")
        if abs(th[0]) > 1e-14 or abs(th[-1] - math.pi) > 1e-12:
            raise SchemaError("theta_grid must include both poles 0 and pi")
        if not np.all(np.isfinite(v)):
            raise SchemaError("non-finite values")
        object.__setattr__(self, "theta_grid", th)
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, f, n: int, nodes: int = DEFAULT_NODES) -> "AxisymProfile":
        th = uniform_theta_grid(nodes)
        return cls(th, f(th), n)

    def with_values(self, values) -> "AxisymProfile":
        return AxisymProfile(self.theta_grid, values, self.n)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["theta", "value"])
            for t, v in zip(self.theta_grid, self.values):
                w.writerow([repr(float(t)), repr(float(v))])

    @classmethod
    def from_csv(cls, path, n: int) -> "AxisymProfile":
        with open(Path(path), newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or rows[0] != ["theta", "value"]:
            raise SchemaError("expected header 'theta,value'")
        data = np.array([[float(a), float(b)] for a, b in rows[1:]])
        return cls(data[:, 0], data[:, 1], n)


def uniform_theta_grid(nodes: int = DEFAULT_NODES) -> np.ndarray:
    th = np.linspace(0.0, math.pi, nodes)
    th[-1] = math.pi
    return th


def laplace_beltrami_axisym(u: AxisymProfile) -> AxisymProfile:
    """Discrete Delta u = u'' + (n-1) cot(theta) u' with even reflection at the poles.

    At a pole the operator tends to n u'' and the ghost node mirrors the first
    interior node, so Delta u(0) = 2n (u_1 - u_0) / h_1^2.
    """
    th, v, n = u.theta_grid, u.values, u.n
    h = np.diff(th)
    hm, hp = h[:-1], h[1:]
    vm, v0, vp = v[:-2], v[1:-1], v[2:]
    d2 = 2.0 * (hm * vp - (hm + hp) * v0 + hp * vm) / (hm * hp * (hm + hp))
    d1 = (hm**2 * vp + (hp**2 - hm**2) * v0 - hp**2 * vm) / (hm * hp * (hm + hp))
    out = np.empty_like(v)
    out[1:-1] = d2 + (n - 1) * d1 / np.tan(th[1:-1])
    out[0] = 2.0 * n * (v[1] - v[0]) / h[0] ** 2
    out[-1] = 2.0 * n * (v[-2] - v[-1]) / h[-1] ** 2
    return u.with_values(out)


def axisym_weights(theta: np.ndarray, n: int) -> np.ndarray:
    """Quadrature weights w with sum(w * f) = int_{S^n} f dmu for axisymmetric f."""
    eye = np.eye(theta.size)
    # Simpson weights obtained by integrating the cardinal basis once; cached by callers
    base = simpson(eye, x=theta, axis=1)
    return RoundMetricConstants.for_dim(n).omega_nm1 * base * np.sin(theta) ** (n - 1)


def integrate_axisym(f: AxisymProfile) -> float:
    th = f.theta_grid
    om = sphere_volume(f.n - 1)
    return float(om * simpson(f.values * np.sin(th) ** (f.n - 1), x=th))
