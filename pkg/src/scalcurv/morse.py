"""Critical points of candidate curvatures and the counting criteria built on them.

Roots of grad K are located by batched multi-start Newton on S^n, merged,
classified by the intrinsic Hessian and the Laplacian, and validated with the
Morse relation sum_j (-1)^j M_j = 1 + (-1)^n.  The combinatorial criteria
(index sum, pinching strata, degree counts, min-max gap) act on the resulting
report.
"""
from __future__ import annotations

import itertools
import warnings
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .bubbles import limit_energy
from .fields import ScalarField
from .sphere import DomainError, geodesic_distance, random_sphere_points

PINCH_SLACK = 1e-12


class DegenerateCriticalPointError(RuntimeError):
    def __init__(self, msg: str, location: np.ndarray | None = None):
        super().__init__(msg)
        self.location = location


class MissedRootsError(RuntimeError):
    pass


@dataclass
class CriticalPointRecord:
    location: np.ndarray
    value: float
    morse_index: int
    laplacian: float
    hessian_margin: float

    def to_dict(self) -> dict:
        d = asdict(self)
        d["location"] = np.asarray(self.location).tolist()
        return d


@dataclass
class MorseReport:
    n: int
    records: list[CriticalPointRecord]
    counts: list[int] = field(default_factory=list)
    nd_margin: float = float("nan")
    euler_check: int = 0

    def __post_init__(self):
        if not self.counts:
            c = [0] * (self.n + 1)
            for r in self.records:
                c[r.morse_index] += 1
            self.counts = c
        if self.records:
            self.nd_margin = float(min(abs(r.laplacian) for r in self.records))
        self.euler_check = int(sum((-1) ** j * m for j, m in enumerate(self.counts)))

    @classmethod
    def synthetic(cls, n: int, indices: Sequence[int], laplacians: Sequence[float], values: Sequence[float] | None = None):
        """A report from bare (index, Laplacian, value) data; locations are dummies."""
        if values is None:
            values = [1.0] * len(indices)
        recs = [
            CriticalPointRecord(np.full(n + 1, np.nan), float(v), int(m), float(lap), 1.0)
            for m, lap, v in zip(indices, laplacians, values)
        ]
        return cls(n, recs)

    @property
    def negative_laplacian(self) -> list[CriticalPointRecord]:
        return [r for r in self.records if r.laplacian < 0]

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "records": [r.to_dict() for r in self.records],
            "counts": list(self.counts),
            "nd_margin": self.nd_margin,
            "euler_check": self.euler_check,
            "euler_expected": 1 + (-1) ** self.n,
        }


# ---------------------------------------------------------------- root finding


def _seed_points(n: int, seeds: int, rng: np.random.Generator, focus) -> np.ndarray:
    axes = np.vstack([np.eye(n + 1), -np.eye(n + 1)])
    pts = [axes, random_sphere_points(n, seeds, rng)]
    for center, radius, count in focus or ():
        center = np.asarray(center, dtype=float)
        center = center / np.linalg.norm(center)
        # log-spread radii down to radius/100, random tangent directions
        r = radius * 10.0 ** rng.uniform(-2.0, 0.0, count)
        v = rng.standard_normal((count, n + 1))
        v -= (v @ center)[:, None] * center[None, :]
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        pts.append(np.cos(r)[:, None] * center[None, :] + np.sin(r)[:, None] * v)
    return np.vstack(pts)


def newton_on_sphere(K: ScalarField, X: np.ndarray, max_iter: int = 80, step_cap: float = 0.3, xtol: float = 1e-13):
    """Batched Newton for grad K = 0.  Returns final points and a convergence mask."""
    X = np.array(X, dtype=float)
    active = np.ones(len(X), dtype=bool)
    converged = np.zeros(len(X), dtype=bool)
    for _ in range(max_iter):
        idx = np.flatnonzero(active)
        if idx.size == 0:
            break
        x = X[idx]
        E = K.evaluate(x)
        M = E.hess + x[:, :, None] * x[:, None, :]
        try:
            delta = np.linalg.solve(M, -E.grad[:, :, None])[:, :, 0]
        except np.linalg.LinAlgError:
            delta = np.stack([np.linalg.lstsq(Mi, -gi, rcond=None)[0] for Mi, gi in zip(M, E.grad)])
        delta -= np.sum(delta * x, axis=1, keepdims=True) * x
        step = np.linalg.norm(delta, axis=1)
        bad = ~np.isfinite(step)
        scale = np.where(step > step_cap, step_cap / np.where(step > 0, step, 1.0), 1.0)
        xn = x + delta * scale[:, None]
        xn /= np.linalg.norm(xn, axis=1, keepdims=True)
        X[idx] = np.where(bad[:, None], x, xn)
        # a vanishing step is only a root if the gradient is small on the Hessian's scale
        gn = np.linalg.norm(E.grad, axis=1)
        hn = np.linalg.norm(E.hess, axis=(1, 2))
        done = (step < xtol) & ~bad & (gn <= 1e-9 * hn + 1e-300)
        stalled = (step < xtol) & ~done
        bad |= stalled
        converged[idx[done]] = True
        active[idx[done | bad]] = False
    return X, converged


def _merge(points: np.ndarray, radius: float) -> list[np.ndarray]:
    reps: list[np.ndarray] = []
    for p in points:
        # chordal distance; arccos loses ~1e-8 of resolution near coincident points
        if not reps or np.min(np.linalg.norm(np.asarray(reps) - p, axis=1)) > radius:
            reps.append(p)
    return reps


def classify_points(K: ScalarField, pts: np.ndarray) -> list[CriticalPointRecord]:
    pts = np.atleast_2d(pts)
    E = K.evaluate(pts)
    eigs = K.hessian_eigs(pts)
    out = []
    for i, p in enumerate(pts):
        out.append(
            CriticalPointRecord(
                location=p,
                value=float(E.value[i]),
                morse_index=int(np.count_nonzero(eigs[i] < 0)),
                laplacian=float(E.laplacian[i]),
                hessian_margin=float(np.min(np.abs(eigs[i]))),
            )
        )
    return out


def find_critical_points(
    K: ScalarField,
    n: int | None = None,
    seeds: int = 400,
    tol: float = 1e-9,
    *,
    nd_tol: float | None = None,
    focus=None,
    rng: int | np.random.Generator = 0,
    check_euler: bool = True,
) -> MorseReport:
    """Multi-start Newton on grad K = 0 over S^n.

    ``tol`` sets the duplicate-merge radius (10 tol, geodesic).  ``nd_tol``
    (default ``tol``) is the threshold below which |Delta K| or the smallest
    |Hessian eigenvalue| at a root counts as degenerate; pass a smaller value
    for fields whose critical structure lives at a tiny amplitude.  ``focus``
    is an optional list of ``(center, radius, count)`` seed clusters.
    """
    n = K.n if n is None else n
    if seeds < 100:
        raise DomainError("use at least 100 seeds")
    nd_tol = tol if nd_tol is None else nd_tol
    gen = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    X0 = _seed_points(n, seeds, gen, focus)
    X, ok = newton_on_sphere(K, X0)
    roots = X[ok]
    if roots.size == 0:
        raise MissedRootsError("Newton did not converge from any seed; increase seeds")
    # merge in a deterministic order independent of seed completion
    order = np.lexsort(np.round(roots, 10).T[::-1])
    reps = _merge(roots[order], 10.0 * tol)
    records = classify_points(K, np.asarray(reps))
    for r in records:
        if r.hessian_margin < nd_tol:
            if r.hessian_margin < 1e-14 and len(reps) > 2:
                raise DegenerateCriticalPointError(
                    f"degenerate critical manifold near {r.location.tolist()}", r.location
                )
            raise DegenerateCriticalPointError(
                f"degenerate critical point at {r.location.tolist()}: smallest |Hessian eigenvalue| {r.hessian_margin:.3e}",
                r.location,
            )
        if abs(r.laplacian) < nd_tol:
            raise DegenerateCriticalPointError(
                f"critical point with vanishing Laplacian at {r.location.tolist()} (Delta K = {r.laplacian:.3e})",
                r.location,
            )
    records.sort(key=lambda r: (-r.value, r.morse_index))
    report = MorseReport(n, records)
    if check_euler and report.euler_check != 1 + (-1) ** n:
        raise MissedRootsError(
            f"Morse relation fails: sum (-1)^j M_j = {report.euler_check}, expected {1 + (-1) ** n}; "
            "increase seeds or add focus clusters"
        )
    return report


# ---------------------------------------------------------------- criteria


def index_formula(report: MorseReport, n: int | None = None) -> tuple[int, bool]:
    """Sum of (-1)^{m(K,x)} over critical points with negative Laplacian, and whether it differs from (-1)^n."""
    n = report.n if n is None else n
    neg = report.negative_laplacian
    if not neg:
        warnings.warn("no critical points with negative Laplacian: no bounded-energy blow-ups are predicted")
    s = int(sum((-1) ** r.morse_index for r in neg))
    return s, s != (-1) ** n


def _verdict(lhs: float, rhs: float) -> tuple[str, bool]:
    """Strict verdict with relative slack, plus the non-strict one."""
    if abs(lhs - rhs) <= PINCH_SLACK * abs(rhs):
        return "fails (boundary)", True
    return ("holds" if lhs < rhs else "fails"), lhs < rhs


@dataclass
class PinchReport:
    n: int
    K_max: float
    K_min: float
    ordered_values: list[float]
    E_lower: list[float]
    E_upper: list[float]
    P: dict[int, str]
    P_nonstrict: dict[int, bool]
    P_tilde: dict[int, str]
    P_tilde_nonstrict: dict[int, bool]
    # same comparison with the ratio raised to (n-2)/n, the exponent the gap argument uses at tau = 0
    P_tilde_energy: dict[int, str] = field(default_factory=dict)

    @property
    def holds_Pm(self) -> dict[int, bool]:
        return {m: v == "holds" for m, v in self.P.items()}

    @property
    def holds_tPm(self) -> dict[int, bool]:
        return {m: v == "holds" for m, v in self.P_tilde.items()}

    @property
    def holds_tPm_energy(self) -> dict[int, bool]:
        return {m: v == "holds" for m, v in self.P_tilde_energy.items()}

    def to_dict(self) -> dict:
        d = asdict(self)
        d["holds_Pm"] = self.holds_Pm
        d["holds_tPm"] = self.holds_tPm
        d["holds_tPm_energy"] = self.holds_tPm_energy
        return d


def pinch_from_values(n: int, K_max: float, K_min: float, neg_values: Sequence[float]) -> PinchReport:
    vals = sorted((float(v) for v in neg_values), reverse=True)
    l = len(vals)
    if l == 0:
        raise DomainError("no negative-Laplacian critical points")
    E_lo = [limit_energy(vals[:m], n) for m in range(1, l + 1)]
    E_up = [limit_energy(vals[l - m :], n) for m in range(1, l + 1)]
    ratio = K_max / K_min
    P, Pn, Pt, Ptn, Pe = {}, {}, {}, {}, {}
    for m in range(1, l + 1):
        P[m], Pn[m] = _verdict(ratio, ((m + 1) / m) ** (1.0 / (n - 2)))
    for m in range(1, l):
        Pt[m], Ptn[m] = _verdict(ratio ** ((n - 2) / 2.0), E_lo[m] / E_up[m - 1])
        Pe[m] = _verdict(ratio ** ((n - 2) / n), E_lo[m] / E_up[m - 1])[0]
    return PinchReport(n, K_max, K_min, vals, E_lo, E_up, P, Pn, Pt, Ptn, Pe)


def pinch_report(report: MorseReport, n: int | None = None) -> PinchReport:
    n = report.n if n is None else n
    vals = [r.value for r in report.records]
    neg = [r.value for r in report.negative_laplacian]
    return pinch_from_values(n, max(vals), min(vals), neg)


def _elementary_symmetric(s: Sequence[int], q: int) -> int:
    e = [1] + [0] * q
    for x in s:
        for k in range(q, 0, -1):
            e[k] += e[k - 1] * x
    return e[q]


def degree_count(report: MorseReport, n: int | None, q: int) -> int:
    """Sum over q-subsets S of negative-Laplacian points of (-1)^{(q-1) + sum_S (n - m_i)}."""
    n = report.n if n is None else n
    neg = report.negative_laplacian
    if not 1 <= q <= len(neg):
        raise DomainError(f"q must lie in [1, {len(neg)}], got {q}")
    s = [(-1) ** (n - r.morse_index) for r in neg]
    return (-1) ** (q - 1) * _elementary_symmetric(s, q)


def degree_count_bruteforce(report: MorseReport, n: int, q: int) -> int:
    neg = report.negative_laplacian
    return sum(
        (-1) ** ((q - 1) + sum(n - r.morse_index for r in S)) for S in itertools.combinations(neg, q)
    )


@dataclass
class XiComponent:
    """One connected component of the min-max region.

    ``maxima`` indexes local maxima in the report; ``max_K_pow`` is the max of
    K^{(2-n)/2} over the component.
    """

    maxima: list[int]
    max_K_pow: float


@dataclass
class MinmaxResult:
    p: int
    components: int
    q_required: int
    gap_holds: bool
    holds: bool
    reason: str = ""


def minmax_criterion(report: MorseReport, xi: Sequence[XiComponent], n: int | None = None) -> MinmaxResult:
    n = report.n if n is None else n
    e = (2.0 - n) / 2.0
    maxima_all = [r for r in report.records if r.morse_index == n]
    for comp in xi:
        if not comp.maxima:
            raise DomainError("every component must contain a local maximum")
        for i in comp.maxima:
            if report.records[i].morse_index != n:
                raise DomainError(f"record {i} is not a local maximum")
    chosen = sorted({i for c in xi for i in c.maxima})
    p, C = len(chosen), len(xi)
    lhs = max(c.max_K_pow for c in xi)
    pairs = [
        (a.value**e + b.value**e) ** (2.0 / n) for a, b in itertools.combinations(maxima_all, 2)
    ]
    rhs = min(pairs) if pairs else float("inf")
    gap = lhs < rhs
    K_lo = lhs ** (1.0 / e)  # min over the region of K
    K_hi = max(report.records[i].value for i in chosen)
    q = sum(1 for r in report.records if r.morse_index == 1 and K_lo <= r.value < K_hi)
    count_ok = q < p - C
    if not gap:
        reason = "two-bubble level reachable"
    elif not count_ok:
        reason = f"q = {q} is not below p - C = {p - C}"
    else:
        reason = ""
    return MinmaxResult(p=p, components=C, q_required=q, gap_holds=gap, holds=gap and count_ok, reason=reason)


def implication_chain(P: PinchReport, form: str = "printed") -> bool:
    """(P_{m+1}) => (P_m) => (P~_m) and (P~_{m1}) => (P~_{m2}) for m1 >= m2.

    ``form="printed"`` uses P~ with the exponent (n-2)/2; ``form="energy"`` uses
    (n-2)/n, for which the middle implication is actually provable.
    """
    hm = P.holds_Pm
    ht = {"printed": P.holds_tPm, "energy": P.holds_tPm_energy}[form]
    if any(hm[m + 1] and not hm[m] for m in hm if m + 1 in hm):
        return False
    if any(hm[m] and not ht[m] for m in ht):
        return False
    return all(ht[m2] or not ht[m1] for m1 in ht for m2 in ht if m1 >= m2)
