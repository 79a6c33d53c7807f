"""Second-order forward jets.

A :class:`Jet` carries a batch of values together with their exact gradients
and Hessians with respect to ``d`` input variables.  Fields that are built by
composition (cutoffs, stereographic coordinates, quotients) get closed-form
derivatives this way without hand-expanding the chain rule each time.

Shapes: ``v`` is ``(N,)``, ``g`` is ``(N, d)``, ``h`` is ``(N, d, d)``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class Jet:
    v: np.ndarray
    g: np.ndarray
    h: np.ndarray

    @staticmethod
    def variables(x: np.ndarray) -> list["Jet"]:
        """One jet per coordinate column of ``x`` (shape ``(N, d)``)."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        N, d = x.shape
        out = []
        for i in range(d):
            g = np.zeros((N, d))
            g[:, i] = 1.0
            out.append(Jet(x[:, i].copy(), g, np.zeros((N, d, d))))
        return out

    @staticmethod
    def const(c, like: "Jet") -> "Jet":
        N, d = like.g.shape
        v = np.broadcast_to(np.asarray(c, dtype=float), (N,)).copy()
        return Jet(v, np.zeros((N, d)), np.zeros((N, d, d)))

    # -- arithmetic ---------------------------------------------------------

    def _lift(self, other) -> "Jet":
        return other if isinstance(other, Jet) else Jet.const(other, self)

    def __add__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.v + other, self.g, self.h)
        return Jet(self.v + other.v, self.g + other.g, self.h + other.h)

    __radd__ = __add__

    def __neg__(self):
        return Jet(-self.v, -self.g, -self.h)

    def __sub__(self, other):
        return self + (-self._lift(other))

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if not isinstance(other, Jet):
            return Jet(self.v * other, self.g * other, self.h * other)
        a, b = self, other
        outer = a.g[:, :, None] * b.g[:, None, :]
        return Jet(
            a.v * b.v,
            a.g * b.v[:, None] + b.g * a.v[:, None],
            a.h * b.v[:, None, None] + b.h * a.v[:, None, None] + outer + outer.transpose(0, 2, 1),
        )

    __rmul__ = __mul__

    def __truediv__(self, other):
        if not isinstance(other, Jet):
            return self * (1.0 / other)
        return self * other.reciprocal()

    def __rtruediv__(self, other):
        return self.reciprocal() * other

    def __pow__(self, p: float):
        v = self.v
        return self.apply(v**p, p * v ** (p - 1), p * (p - 1) * v ** (p - 2))

    # -- scalar functions ----------------------------------------------------

    def apply(self, f0, f1, f2) -> "Jet":
        """Compose with a scalar function given its value and first two derivatives at ``self.v``."""
        g = self.g
        return Jet(
            np.asarray(f0, dtype=float),
            f1[:, None] * g,
            f1[:, None, None] * self.h + f2[:, None, None] * (g[:, :, None] * g[:, None, :]),
        )

    def reciprocal(self) -> "Jet":
        v = self.v
        return self.apply(1.0 / v, -1.0 / v**2, 2.0 / v**3)

    def exp(self) -> "Jet":
        e = np.exp(self.v)
        return self.apply(e, e, e)

    def sqrt(self) -> "Jet":
        s = np.sqrt(self.v)
        return self.apply(s, 0.5 / s, -0.25 / (s * self.v))


def jsum(jets) -> Jet:
    it = iter(jets)
    acc = next(it)
    for j in it:
        acc = acc + j
    return acc


def smoothstep(t: Jet) -> Jet:
    """Quintic step s^3(10 - 15 s + 6 s^2), clamped to [0, 1]; C^2 at both ends."""
    s = np.clip(t.v, 0.0, 1.0)
    inside = (t.v > 0.0) & (t.v < 1.0)
    f0 = s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
    f1 = np.where(inside, 30.0 * s**2 * (1.0 - s) ** 2, 0.0)
    f2 = np.where(inside, 60.0 * s * (1.0 - s) * (1.0 - 2.0 * s), 0.0)
    return t.apply(f0, f1, f2)


def smoothstep_scalar(s):
    s = np.clip(s, 0.0, 1.0)
    return s**3 * (10.0 - 15.0 * s + 6.0 * s**2)
