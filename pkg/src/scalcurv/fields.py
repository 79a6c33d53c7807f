"""Smooth scalar fields on the round sphere.

A field is given by a jet function of the ambient coordinates (any smooth
extension to a neighbourhood of S^n works).  Intrinsic quantities follow from
the extension F by

    grad K  = P dF,            P = I - x x^T,
    Hess K  = P d2F P - <x, dF> P,
    Delta K = tr(P d2F P) - n <x, dF>.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .jets import Jet


@dataclass
class FieldEval:
    value: np.ndarray  # (N,)
    grad: np.ndarray  # (N, n+1), tangent
    hess: np.ndarray  # (N, n+1, n+1), acts on tangent vectors
    laplacian: np.ndarray  # (N,)


def tangent_basis(x: np.ndarray) -> np.ndarray:
    """Orthonormal frames (N, n+1, n) spanning T_x S^n, via a Householder reflection."""
    x = np.atleast_2d(x)
    N, d = x.shape
    e = np.zeros(d)
    e[-1] = 1.0
    v = x - e
    nv = np.linalg.norm(v, axis=1)
    Q = np.broadcast_to(np.eye(d), (N, d, d)).copy()
    m = nv > 1e-14
    vv = v[m] / nv[m, None]
    Q[m] -= 2.0 * vv[:, :, None] * vv[:, None, :]
    # Q maps e_{n+1} to x, so its first n columns span the tangent space
    return Q[:, :, :-1]


class ScalarField:
    """Base class; subclasses implement :meth:`ambient`."""

    n: int

    def ambient(self, X: Sequence[Jet]) -> Jet:
        raise NotImplementedError

    def jet(self, x: np.ndarray) -> Jet:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        return self.ambient(Jet.variables(x))

    def value(self, x: np.ndarray) -> np.ndarray:
        return self.jet(x).v

    def evaluate(self, x: np.ndarray) -> FieldEval:
        x = np.atleast_2d(np.asarray(x, dtype=float))
        J = self.jet(x)
        d = x.shape[1]
        P = np.eye(d)[None] - x[:, :, None] * x[:, None, :]
        xg = np.einsum("ni,ni->n", x, J.g)
        grad = np.einsum("nij,nj->ni", P, J.g)
        PHP = P @ J.h @ P
        hess = PHP - xg[:, None, None] * P
        lap = np.trace(PHP, axis1=1, axis2=2) - (d - 1) * xg
        return FieldEval(J.v, grad, hess, lap)

    def hessian_eigs(self, x: np.ndarray) -> np.ndarray:
        """Eigenvalues (ascending) of the intrinsic Hessian, shape (N, n)."""
        x = np.atleast_2d(x)
        E = self.evaluate(x)
        Q = tangent_basis(x)
        Ht = np.einsum("nia,nij,njb->nab", Q, E.hess, Q)
        return np.linalg.eigvalsh(Ht)

    def __add__(self, other: "ScalarField") -> "ScalarField":
        return LambdaField(self.n, lambda X: self.ambient(X) + other.ambient(X))


class LambdaField(ScalarField):
    def __init__(self, n: int, fn: Callable[[Sequence[Jet]], Jet], name: str = "custom"):
        self.n = n
        self.fn = fn
        self.name = name

    def ambient(self, X):
        return self.fn(X)


class ConstantField(ScalarField):
    def __init__(self, n: int, c: float = 1.0):
        self.n = n
        self.c = float(c)

    def ambient(self, X):
        return Jet.const(self.c, X[0])


class QuadraticField(ScalarField):
    """K(x) = c + <b, x> + x^T A x restricted to S^n."""

    def __init__(self, A: np.ndarray, b: np.ndarray | None = None, c: float = 0.0):
        A = np.asarray(A, dtype=float)
        self.A = 0.5 * (A + A.T)
        self.n = A.shape[0] - 1
        self.b = np.zeros(self.n + 1) if b is None else np.asarray(b, dtype=float)
        self.c = float(c)

    def ambient(self, X):
        return self.jet_from_array(np.stack([Xi.v for Xi in X], axis=1))

    def jet(self, x):
        return self.jet_from_array(np.atleast_2d(np.asarray(x, dtype=float)))

    def jet_from_array(self, x):
        N = x.shape[0]
        v = self.c + x @ self.b + np.einsum("ni,ij,nj->n", x, self.A, x)
        g = self.b[None, :] + 2.0 * x @ self.A
        h = np.broadcast_to(2.0 * self.A, (N,) + self.A.shape).copy()
        return Jet(v, g, h)


class AxisymField(ScalarField):
    """K depends on the height h = x_{n+1} only: K = k(h).

    ``k`` must return ``(k, k', k'')`` evaluated at an array of heights.
    """

    def __init__(self, n: int, k: Callable[[np.ndarray], tuple], name: str = "axisym"):
        self.n = n
        self.k = k
        self.name = name

    def ambient(self, X):
        h = X[-1]
        f0, f1, f2 = self.k(h.v)
        return h.apply(np.asarray(f0, float), np.asarray(f1, float), np.asarray(f2, float))

    def profile(self, theta: np.ndarray) -> np.ndarray:
        return np.asarray(self.k(np.cos(theta))[0], dtype=float)


def height_field(n: int, scale: float = 1.0, offset: float = 0.0) -> AxisymField:
    return axisym_poly(n, [offset, scale])


def axisym_poly(n: int, coeffs: Sequence[float]) -> AxisymField:
    """K = sum_k coeffs[k] * h^k with h = y_{n+1} = cos(theta)."""
    P = np.polynomial.Polynomial(np.asarray(coeffs, dtype=float))
    d1, d2 = P.deriv(1), P.deriv(2)

    def k(h):
        return P(h), d1(h), d2(h)

    f = AxisymField(n, k, name="axisym-poly")
    f.coeffs = list(map(float, coeffs))
    return f


def multi_peak_field(n: int, centers, amplitude: float = 0.05, width: float = 0.3, tilt: float = 1e-3) -> ScalarField:
    """K = 1 + amplitude * sum_i exp((<x, c_i> - 1) / width) + tilt * sum_j j x_j^2.

    The peaks give one local maximum near each center; the small anisotropic
    tilt breaks the rotational symmetry about the span of the centers, which
    would otherwise leave whole spheres of degenerate critical points.
    """
    C = np.atleast_2d(np.asarray(centers, dtype=float))
    if C.shape[1] != n + 1:
        raise ValueError(f"centers must have {n + 1} coordinates")
    C = C / np.linalg.norm(C, axis=1, keepdims=True)
    D = tilt * np.arange(n + 1, dtype=float)

    def amb(X):
        out = Jet.const(1.0, X[0])
        for c in C:
            dot = sum((ci * Xi for ci, Xi in zip(c, X) if ci != 0.0), Jet.const(0.0, X[0]))
            out = out + ((dot - 1.0) * (1.0 / width)).exp() * amplitude
        for j, Xj in enumerate(X):
            if D[j]:
                out = out + Xj * Xj * D[j]
        return out

    f = LambdaField(n, amb, name="pinched-multi-peak")
    f.centers = C
    return f
