"""Derivatives of N(alpha) = ||x + alpha*y|| on mixed-norm spaces.

For the block norm ||x|| = (sum_k sigma(x(k))^p)^(1/p) the power
tau(alpha) = N(alpha)^p splits into a sum over blocks, and

    tau'  = sum_{k in vs(x)&vs(y)} p N_k^(p-1) N_k'
            + p |alpha|^(p-1) sgn(alpha) sum_{k in vs(y)-vs(x)} sigma(y(k))^p
    tau'' = sum_{k in vs(x)&vs(y)} [p(p-1) N_k^(p-2) N_k'^2 + p N_k^(p-1) N_k'']
            + p(p-1) |alpha|^(p-2) sum_{k in vs(y)-vs(x)} sigma(y(k))^p

with N_k(alpha) = sigma(x(k) + alpha*y(k)).  N' and N'' follow from
tau' = p N^(p-1) N' and tau'' = p(p-1) N^(p-2) N'^2 + p N^(p-1) N''.
Divergence is reported in-band as +inf with ``singular=True``.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .spaces import (DegeneratePointError, Element, SpaceSpec, coords_gradient,
                     coords_norm, norm, vector_support)

INF = math.inf

# geometric grid alpha_i = 2^-i used to read off limits of N'' at 0+
LIMIT_GRID = tuple(2.0 ** -i for i in range(3, 21))
LIMIT_TAIL = 5
ZERO_LEVEL = 1e-6
SLOPE_CUT = 0.1


@dataclass(frozen=True)
class DerivativeValue:
    value: float
    singular: bool = False

    def __float__(self):
        return float(self.value)

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


def _exact_inner_second(z, h, q):
    """D^2 sigma(z)(h, h) for sigma = l_q norm, z != 0; returns (value, singular)."""
    z = np.asarray(z, dtype=float)
    h = np.asarray(h, dtype=float)
    if z.shape[0] == 1:
        # |.| on the line is linear away from 0
        return 0.0, False
    top = np.abs(z).max()
    s = top * np.sum((np.abs(z) / top) ** q) ** (1.0 / q)
    u = np.abs(z) / s
    on = u > 0.0
    off_active = (~on) & (h != 0.0)
    if np.any(off_active):
        if q < 2.0:
            return INF, True
        if q == 2.0:
            extra = float(np.sum(h[off_active] ** 2))
        else:
            extra = 0.0
    else:
        extra = 0.0
    first = float(np.sum(u[on] ** (q - 2.0) * h[on] ** 2)) + extra
    cross = float(np.sum(u[on] ** (q - 1.0) * np.sign(z[on]) * h[on]))
    value = (q - 1.0) * (first - cross * cross) / s
    return max(value, 0.0), False


def inner_second_derivative(z, h, q: float) -> DerivativeValue:
    """Second directional derivative of the l_q norm at z in direction h.

    Equals (q-1) T^(1/q-1) [sum |z_j|^(q-2) h_j^2 - T^-1 (sum |z_j|^(q-2) z_j h_j)^2]
    with T = sum |z_j|^q.  For q < 2 a direction that moves a zero
    coordinate of z gives +inf.
    """
    z = np.asarray(z, dtype=float)
    if not np.any(z):
        raise DegeneratePointError("second derivative of the norm at 0")
    value, singular = _exact_inner_second(z, h, q)
    return DerivativeValue(value, singular)


def _inner_first(z, h, q):
    if z.shape[0] == 1:
        return float(np.sign(z[0]) * h[0])
    top = np.abs(z).max()
    s = top * np.sum((np.abs(z) / top) ** q) ** (1.0 / q)
    return float(np.sum((np.abs(z) / s) ** (q - 1.0) * np.sign(z) * h))


@dataclass(frozen=True, eq=False)
class NormCurve:
    """alpha -> ||x + alpha*y|| with the block bookkeeping cached."""

    x: Element
    y: Element
    common: tuple = field(init=False, repr=False)
    fresh: tuple = field(init=False, repr=False)
    fresh_mass: float = field(init=False, repr=False)

    def __post_init__(self):
        if self.x.space != self.y.space:
            raise ValueError("x and y live in different spaces")
        vx, vy = vector_support(self.x), vector_support(self.y)
        object.__setattr__(self, "common", tuple(sorted(vx & vy)))
        object.__setattr__(self, "fresh", tuple(sorted(vy - vx)))
        sp = self.space
        if sp.is_block:
            mass = sum(_sigma(self.y.block(k), sp.inner_exponent) ** sp.p for k in self.fresh)
        else:
            mass = 0.0
        object.__setattr__(self, "fresh_mass", float(mass))

    @property
    def space(self) -> SpaceSpec:
        return self.x.space

    def point(self, alpha: float) -> np.ndarray:
        return self.x.coords + alpha * self.y.coords


def _sigma(block, q):
    a = np.abs(block)
    top = a.max()
    if top == 0.0:
        return 0.0
    return float(top * np.sum((a / top) ** q) ** (1.0 / q))


def eval_N(curve: NormCurve, alpha: float) -> float:
    return coords_norm(curve.space, curve.point(alpha))


def _require_block(curve):
    if not curve.space.is_block:
        raise ValueError("tau is defined for l_p and l_p(l_q) norms only")


def _tau_terms(curve: NormCurve, alpha: float, order: int):
    """Returns (tau', singular) for order 1 and (tau'', singular) for order 2."""
    sp = curve.space
    p, q, n = sp.p, sp.inner_exponent, sp.n
    z_all = curve.point(alpha).reshape(sp.m, n)
    h_all = curve.y.blocks
    total = 0.0
    singular = False
    for k in curve.common:
        z, h = z_all[k], h_all[k]
        if not np.any(z):
            # N_k(beta) = |beta - alpha| sigma(h) near alpha
            if order == 2:
                if p < 2.0:
                    return INF, True
                if p == 2.0:
                    total += 2.0 * _sigma(h, q) ** 2
            continue
        nk = _sigma(z, q)
        d1 = _inner_first(z, h, q)
        if order == 1:
            total += p * nk ** (p - 1.0) * d1
            continue
        d2, sing = _exact_inner_second(z, h, q)
        if sing:
            return INF, True
        total += p * (p - 1.0) * nk ** (p - 2.0) * d1 * d1 + p * nk ** (p - 1.0) * d2
    if curve.fresh_mass > 0.0:
        a = abs(alpha)
        if order == 1:
            total += p * a ** (p - 1.0) * math.copysign(1.0, alpha) * curve.fresh_mass if a else 0.0
        elif a == 0.0:
            if p < 2.0:
                return INF, True
            if p == 2.0:
                total += 2.0 * curve.fresh_mass
        else:
            total += p * (p - 1.0) * a ** (p - 2.0) * curve.fresh_mass
    return total, singular


def tau_prime(curve: NormCurve, alpha: float) -> DerivativeValue:
    _require_block(curve)
    value, singular = _tau_terms(curve, alpha, 1)
    return DerivativeValue(value, singular)


def tau_double_prime(curve: NormCurve, alpha: float) -> DerivativeValue:
    _require_block(curve)
    value, singular = _tau_terms(curve, alpha, 2)
    return DerivativeValue(value, singular)


def _block_N_derivs(curve, alpha):
    p = curve.space.p
    N = eval_N(curve, alpha)
    if N == 0.0:
        raise DegeneratePointError(f"N({alpha}) = 0")
    t1, _ = _tau_terms(curve, alpha, 1)
    Np = t1 / (p * N ** (p - 1.0))
    t2, sing = _tau_terms(curve, alpha, 2)
    if math.isinf(t2):
        return N, Np, INF, True
    Npp = (t2 - p * (p - 1.0) * N ** (p - 2.0) * Np * Np) / (p * N ** (p - 1.0))
    return N, Np, Npp, sing


def _split_sum_curve(curve):
    sp = curve.space
    parts = []
    for r in (sp.p, sp.q):
        s = SpaceSpec.lp(r, sp.m)
        parts.append(NormCurve(Element(s, curve.x.coords), Element(s, curve.y.coords)))
    return parts


def derivatives(curve: NormCurve, alpha: float):
    """(N, N', N'', singular) at alpha; N'' may be +inf."""
    if curve.space.kind == "sumpq":
        out = [_block_N_derivs(c, alpha) for c in _split_sum_curve(curve)]
        return (out[0][0] + out[1][0], out[0][1] + out[1][1],
                out[0][2] + out[1][2], out[0][3] or out[1][3])
    return _block_N_derivs(curve, alpha)


def N_prime(curve: NormCurve, alpha: float) -> DerivativeValue:
    _, Np, _, _ = derivatives(curve, alpha)
    return DerivativeValue(Np, False)


def N_double_prime(curve: NormCurve, alpha: float) -> DerivativeValue:
    _, _, Npp, sing = derivatives(curve, alpha)
    return DerivativeValue(Npp, sing or math.isinf(Npp))


@dataclass(frozen=True)
class LimitReading:
    """Behaviour of N''(2^-i) as i grows: zero, nonzero, divergent or inconclusive."""

    label: str
    slope: float
    alphas: tuple
    values: tuple


def _loglog_slope(alphas, values):
    la, lv = np.log(alphas), np.log(values)
    return float(np.polyfit(la, lv, 1)[0])


def second_derivative_limit(curve: NormCurve, grid: Sequence[float] = LIMIT_GRID,
                            tail: int = LIMIT_TAIL) -> LimitReading:
    """Reads the limit of N''(alpha) as alpha -> 0+ off a geometric grid.

    Values are scaled by ||x|| / ||y||^2 so the reading is invariant under
    rescaling x and y.  The tail of ``tail`` nonsingular samples decides:
    all +inf, or large and growing with log-log slope < -0.1, is divergent;
    below 1e-6, or shrinking with slope > 0.1, is zero; flat (|slope| <= 0.1)
    is nonzero.
    """
    scale = norm(curve.x) / norm(curve.y) ** 2
    alphas, values, infs = [], [], 0
    for a in grid:
        _, _, v, sing = derivatives(curve, a)
        if math.isinf(v):
            infs += 1
            alphas.append(a)
            values.append(INF)
            continue
        if sing:
            continue
        alphas.append(a)
        values.append(max(v * scale, 0.0))
    if len(values) < tail:
        return LimitReading("inconclusive", math.nan, tuple(alphas), tuple(values))
    ta, tv = np.array(alphas[-tail:]), np.array(values[-tail:])
    if np.all(np.isinf(tv)):
        return LimitReading("divergent", -INF, tuple(alphas), tuple(values))
    if np.any(np.isinf(tv)):
        return LimitReading("inconclusive", math.nan, tuple(alphas), tuple(values))
    if np.all(tv < ZERO_LEVEL) and tv[-1] <= tv[0]:
        return LimitReading("zero", math.nan, tuple(alphas), tuple(values))
    if np.any(tv <= 0.0):
        return LimitReading("inconclusive", math.nan, tuple(alphas), tuple(values))
    slope = _loglog_slope(ta, tv)
    steps = tv[1:] / tv[:-1]
    if slope > SLOPE_CUT and np.all(steps <= 1.1):
        label = "zero"
    elif slope < -SLOPE_CUT and np.all(steps >= 1 / 1.1):
        label = "divergent"
    elif abs(slope) <= SLOPE_CUT:
        label = "nonzero"
    else:
        label = "inconclusive"
    return LimitReading(label, slope, tuple(alphas), tuple(values))


@dataclass(frozen=True, eq=False)
class CurvatureReport:
    x: Element
    y: Element
    kappa: float

    def to_dict(self) -> dict:
        return {"x": self.x.to_dict(), "y": self.y.to_dict(), "kappa": _jsonable(self.kappa)}


def tangent_direction(x: Element, y: Element) -> Element:
    """Euclidean projection of y onto the tangent space of the sphere at x, unit l_2 length."""
    g = coords_gradient(x.space, x.coords)
    yc = np.array(y.coords)
    dot = float(g @ yc)
    if dot != 0.0:
        yc = yc - (dot / float(g @ g)) * g
    length = float(np.linalg.norm(yc))
    if length == 0.0:
        raise DegeneratePointError("y has no tangential component at x")
    return Element(x.space, yc / length)


def curvature(x: Element, y: Element) -> CurvatureReport:
    """Normal curvature of the unit sphere at x/||x|| in the tangent direction of y.

    kappa = N''_{xy}(0) / ||grad rho(x)||_2 with y first projected to the
    tangent space and scaled to Euclidean length one.
    """
    nx = norm(x)
    if nx == 0.0:
        raise DegeneratePointError("curvature at 0")
    xu = Element(x.space, x.coords / nx)
    yt = tangent_direction(xu, y)
    g = coords_gradient(xu.space, xu.coords)
    _, _, Npp, _ = derivatives(NormCurve(xu, yt), 0.0)
    return CurvatureReport(xu, yt, Npp / float(np.linalg.norm(g)))


class InvalidPairError(ValueError):
    pass


@dataclass(frozen=True)
class ConvexPairDiagnostic:
    """Sampled comparison of two convex curves phi <= psi touching at 0."""

    derivative_gap: float
    below_fractions: dict
    phi_diverges: bool
    psi_diverges: bool
    bound: float
    bounded_fraction: float

    def to_dict(self) -> dict:
        return {
            "derivative_gap": self.derivative_gap,
            "below_fractions": {f"{k:.6g}": v for k, v in self.below_fractions.items()},
            "phi_diverges": self.phi_diverges,
            "psi_diverges": self.psi_diverges,
            "bound": _jsonable(self.bound),
            "bounded_fraction": self.bounded_fraction,
        }


def _one_sided_slope(f, h):
    f0 = f(0.0)
    q1 = (f(h) - f0) / h
    q2 = (f(h / 2) - f0) / (h / 2)
    return 2 * q2 - q1


def _diverges_at_zero(d2, grid_h, levels=5):
    # dyadic points 2^-j that are grid points, smallest last
    idx = [int(round(2.0 ** -j / grid_h)) for j in range(1, 12)]
    idx = [i for i in idx if 1 <= i < len(d2) + 1]
    a = np.array([i * grid_h for i in idx])[-levels:]
    v = np.array([d2[i - 1] for i in idx])[-levels:]
    if np.any(v <= 0.0):
        return False
    return _loglog_slope(a, v) < -SLOPE_CUT and np.all(np.diff(v) > 0.0)


def lemma35_probe(phi: Callable[[float], float], psi: Callable[[float], float],
                  points: int = 2 ** 12, bound: float | None = None,
                  step: float = 1e-6, tol: float = 1e-9) -> ConvexPairDiagnostic:
    """Grid diagnostic for convex phi <= psi with phi(0) == psi(0).

    Reports |phi'(0+) - psi'(0+)| (Richardson-corrected one-sided
    quotients), the fraction of grid points in each dyadic interval (0, 2^-j)
    where the second difference of phi does not exceed that of psi, and,
    with C = ``bound`` (default: half the sampled maximum of psi''), the
    fraction of [0, 1] where psi'' <= C.
    """
    h = 1.0 / points
    alphas = np.arange(points + 1) * h
    fv = np.array([phi(a) for a in alphas])
    gv = np.array([psi(a) for a in alphas])
    scale = max(1.0, float(np.max(np.abs(gv))))
    if abs(fv[0] - gv[0]) > tol * scale:
        raise InvalidPairError("phi(0) != psi(0)")
    if np.any(fv > gv + tol * scale):
        raise InvalidPairError("phi exceeds psi on the grid")
    d2f = (fv[2:] - 2 * fv[1:-1] + fv[:-2]) / h ** 2
    d2g = (gv[2:] - 2 * gv[1:-1] + gv[:-2]) / h ** 2
    slack = tol * scale / h ** 2
    if np.any(d2f < -slack) or np.any(d2g < -slack):
        raise InvalidPairError("a curve is not convex on the grid")
    gap = abs(_one_sided_slope(phi, step) - _one_sided_slope(psi, step))
    inner = alphas[1:-1]
    below = {}
    for j in range(0, 11):
        delta = 2.0 ** -j
        sel = inner < delta
        below[delta] = float(np.mean(d2f[sel] <= d2g[sel] + slack)) if np.any(sel) else math.nan
    if bound is None:
        bound = 0.5 * float(np.max(d2g))
    return ConvexPairDiagnostic(
        derivative_gap=float(gap),
        below_fractions=below,
        phi_diverges=bool(_diverges_at_zero(d2f, h)),
        psi_diverges=bool(_diverges_at_zero(d2g, h)),
        bound=float(bound),
        bounded_fraction=float(np.mean(d2g <= bound)),
    )


def _jsonable(v):
    if isinstance(v, float) and math.isinf(v):
        return "inf" if v > 0 else "-inf"
    return v


def curve_table(curve: NormCurve, alphas: Sequence[float]):
    rows = []
    for a in alphas:
        N, Np, Npp, _ = derivatives(curve, a)
        rows.append((float(a), N, Np, Npp))
    return rows


def write_curve_csv(curve: NormCurve, alphas: Sequence[float], fh) -> None:
    """CSV with columns alpha, N, N_prime, N_double_prime; +inf written as ``inf``."""
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["alpha", "N", "N_prime", "N_double_prime"])
    for row in curve_table(curve, alphas):
        w.writerow([repr(float(v)) if math.isfinite(v) else "inf" for v in row])
