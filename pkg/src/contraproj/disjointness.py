"""Second-derivative disjointness test and its audits.

A pair (x, y) with N'(0) = 0 is read as disjoint when N''(alpha) -> 0 as
alpha -> 0+, and as overlapping when the limit is positive or infinite.
Spaces that "reflect disjointness" make this reading exact.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np

from .normcalc import (InvalidPairError, LimitReading, NormCurve, derivatives,
                       second_derivative_limit)
from .spaces import (Element, SpaceSpec, coords_gradient, disjoint, inner_norm, norm,
                     vector_support)
from .util import pmap, signed_magnitudes, trial_rng

FLAT_TOL = 1e-8


def _check_pair(space: SpaceSpec, x: Element, y: Element):
    if x.space != space or y.space != space:
        raise InvalidPairError("x and y must both live in the given space")
    if not np.any(y.coords):
        raise InvalidPairError("y = 0")
    if np.linalg.matrix_rank(np.vstack([x.coords, y.coords]), tol=1e-12) < 2:
        raise InvalidPairError("x lies in span{y}")


@dataclass(frozen=True, eq=False)
class DisjointnessVerdict:
    x: Element
    y: Element
    n_prime_at_0: float
    n_double_limit: str
    slope: float
    inferred_disjoint: bool | None
    ground_truth_disjoint: bool
    # at finite dimension every y is simple; kept for the record
    y_simple: bool = field(default=True)

    @property
    def applicable(self) -> bool:
        return self.n_double_limit != "inapplicable"

    @property
    def correct(self) -> bool:
        return self.inferred_disjoint is not None and self.inferred_disjoint == self.ground_truth_disjoint

    def to_dict(self) -> dict:
        return {
            "x": self.x.coords.tolist(),
            "y": self.y.coords.tolist(),
            "N_prime_at_0": self.n_prime_at_0,
            "N_double_limit": self.n_double_limit,
            "slope": self.slope,
            "inferred_disjoint": self.inferred_disjoint,
            "ground_truth_disjoint": self.ground_truth_disjoint,
        }


def classify_pair(space: SpaceSpec, x: Element, y: Element) -> DisjointnessVerdict:
    """Infer disjointness of x and y from N'(0) and the limit of N'' at 0+.

    When N'(0) is not (numerically) zero the test does not apply; the
    verdict then carries limit "inapplicable" and no inference.
    """
    _check_pair(space, x, y)
    curve = NormCurve(x, y)
    _, np0, _, _ = derivatives(curve, 0.0)
    truth = disjoint(x, y)
    if abs(np0) > FLAT_TOL * norm(y):
        return DisjointnessVerdict(x, y, np0, "inapplicable", math.nan, None, truth)
    reading = second_derivative_limit(curve)
    inferred = {"zero": True, "nonzero": False, "divergent": False}.get(reading.label)
    return DisjointnessVerdict(x, y, np0, reading.label, reading.slope, inferred, truth)


def make_tangent(x: Element, y: Element) -> Element:
    """y minus its component along x that makes N'(0) nonzero: f(y_t) = 0 for f = grad||.||(x)."""
    g = coords_gradient(x.space, x.coords)
    fx = float(g @ x.coords)
    return Element(x.space, y.coords - (float(g @ y.coords) / fx) * x.coords)


def sample_disjoint_pair(space: SpaceSpec, rng: np.random.Generator):
    d = space.dim
    perm = rng.permutation(d)
    nx = int(rng.integers(1, d))
    ny = int(rng.integers(1, d - nx + 1))
    xc, yc = np.zeros(d), np.zeros(d)
    xc[perm[:nx]] = signed_magnitudes(rng, nx)
    yc[perm[nx:nx + ny]] = signed_magnitudes(rng, ny)
    return Element(space, xc), Element(space, yc)


def sample_overlapping_tangent_pair(space: SpaceSpec, rng: np.random.Generator,
                                    min_overlap: float = 0.2, attempts: int = 100):
    """Overlapping pair with N'(0) = 0 and a clearly nonzero overlap."""
    d = space.dim
    if d < 2:
        raise ValueError("overlapping tangent pairs need dimension >= 2")
    for _ in range(attempts):
        perm = rng.permutation(d)
        nx = int(rng.integers(2, d + 1))
        sx = perm[:nx]
        ny = int(rng.integers(1, d + 1))
        sy = rng.choice(d, size=ny, replace=False)
        if not set(sx.tolist()) & set(sy.tolist()):
            continue
        xc, yc = np.zeros(d), np.zeros(d)
        xc[sx] = signed_magnitudes(rng, nx)
        yc[sy] = signed_magnitudes(rng, ny)
        x = Element(space, xc)
        y = make_tangent(x, Element(space, yc))
        on = y.coords[sx]
        if np.linalg.norm(on) < min_overlap * np.linalg.norm(y.coords):
            continue
        if disjoint(x, y):
            continue
        if np.linalg.matrix_rank(np.vstack([x.coords, y.coords]), tol=1e-9) < 2:
            continue
        return x, y
    raise RuntimeError("could not sample an overlapping tangent pair")


def _audit_trial(space: SpaceSpec, seed: int, trial: int) -> dict:
    rng = trial_rng(seed, trial)
    if trial % 2 == 0:
        x, y = sample_disjoint_pair(space, rng)
    else:
        x, y = sample_overlapping_tangent_pair(space, rng)
    v = classify_pair(space, x, y)
    return {"trial": trial, "verdict": v.to_dict(), "correct": v.correct,
            "truth": v.ground_truth_disjoint, "inferred": v.inferred_disjoint,
            "limit": v.n_double_limit}


def _unmixed_below_two(space: SpaceSpec) -> bool:
    return space.kind == "lplq" and space.p < 2.0 and space.q < 2.0 or (
        space.kind == "lp" and space.p < 2.0)


def reflects_disjointness_audit(space: SpaceSpec, trials: int, seed: int, jobs: int = 1,
                                via_duality: bool = True) -> dict:
    """Runs classify_pair on ``trials`` sampled pairs (even trials disjoint, odd overlapping).

    Exponents both in (1, 2) are audited on the dual space, the route by
    which that case inherits the property.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    audited = space.dual() if via_duality and _unmixed_below_two(space) else space
    rows = pmap(partial(_audit_trial, audited, seed), range(trials), jobs)
    conf = {"tp": 0, "tn": 0, "fp": 0, "fn": 0}
    inconclusive = inapplicable = 0
    failures = []
    for r in rows:
        if r["limit"] == "inapplicable":
            inapplicable += 1
        elif r["inferred"] is None:
            inconclusive += 1
        elif r["inferred"] and r["truth"]:
            conf["tp"] += 1
        elif not r["inferred"] and not r["truth"]:
            conf["tn"] += 1
        elif r["inferred"]:
            conf["fp"] += 1
        else:
            conf["fn"] += 1
        if not r["correct"]:
            failures.append({"trial": r["trial"], **r["verdict"]})
    return {
        "space": space.to_dict(),
        "audited_space": audited.to_dict(),
        "via_duality": audited != space,
        "trials": trials,
        "seed": seed,
        "confusion": conf,
        "inconclusive": inconclusive,
        "inapplicable": inapplicable,
        "misclassified": conf["fp"] + conf["fn"] + inconclusive + inapplicable,
        "failures": failures,
    }


# -- mixed exponents: p in (1, 2), inner q > 2 ---------------------------------------

def _slope_ok(slope: float, p: float, rel: float = 0.15) -> bool:
    return math.isfinite(slope) and abs(slope - (p - 2.0)) <= rel * abs(p - 2.0)


def bounded_second_derivative_bound(x: Element, y: Element) -> float:
    """Explicit bound on N'' over [0, 1] when vs(y) in vs(x) and 2 sigma(y(k)) < sigma(x(k)).

    Uses N_k >= sigma(x(k))/2, |N_k'| <= sigma(y(k)) and, for q >= 2,
    N_k'' <= (q-1) sigma(y(k))^2 / N_k.
    """
    sp = x.space
    p, q = sp.p, sp.inner_exponent
    sx = np.array([inner_norm(x, k) for k in range(sp.m)])
    sy = np.array([inner_norm(y, k) for k in range(sp.m)])
    on = sx > 0
    half = sx[on] / 2.0
    top = np.sum((p + q - 2.0) * half ** (p - 2.0) * sy[on] ** 2)
    nmin = np.sum(half ** p) ** (1.0 / p)
    return float(top / nmin ** (p - 1.0))


def prop44_catalogue(space: SpaceSpec, x: Element, y: Element) -> dict:
    """Labels a mixed-exponent pair with the applicable behaviour clauses and checks them.

    Clauses: (b) vs(y) in vs(x), overlapping, N'(0) = 0 -> limit is not zero;
    (c) vs(y) in vs(x), disjoint -> N'(0) = 0 and zero limit;
    (d) vs(y) in vs(x), 2 sigma(y(k)) < sigma(x(k)) on vs(x) -> N'' bounded on [0, 1];
    (e) vs(y) not in vs(x) -> N'' diverges with log-log slope p - 2.
    """
    sp = space
    if sp.kind != "lplq" or not (1.0 < sp.p < 2.0) or not sp.q > 2.0:
        raise ValueError("catalogue covers l_p(l_q) with p in (1, 2) and q > 2")
    _check_pair(space, x, y)
    curve = NormCurve(x, y)
    vx, vy = vector_support(x), vector_support(y)
    _, np0, _, _ = derivatives(curve, 0.0)
    flat = abs(np0) <= FLAT_TOL * norm(y)
    reading: LimitReading = second_derivative_limit(curve)
    clauses = {}
    if not vy <= vx:
        ok = reading.label == "divergent" and _slope_ok(reading.slope, sp.p)
        clauses["e"] = {"expected": "divergent", "observed": reading.label,
                        "slope": reading.slope, "ok": ok}
        verdict = "out of catalogue"
    else:
        truth = disjoint(x, y)
        if truth:
            ok = flat and reading.label == "zero"
            clauses["c"] = {"expected": "zero", "observed": reading.label, "flat": flat, "ok": ok}
        elif flat:
            ok = reading.label in ("nonzero", "divergent")
            clauses["b"] = {"expected": "not zero", "observed": reading.label, "ok": ok}
        if all(2 * inner_norm(y, k) < inner_norm(x, k) for k in vx):
            grid = np.concatenate([np.linspace(0.0, 1.0, 65)[1:], np.array(reading.alphas)])
            vals = np.array([derivatives(curve, a)[2] for a in grid])
            bound = bounded_second_derivative_bound(x, y)
            top = float(np.max(vals))
            ok = bool(np.all(np.isfinite(vals)) and top <= bound * (1 + 1e-9))
            clauses["d"] = {"expected": "bounded", "max_sampled": top, "bound": bound, "ok": ok}
        if truth:
            verdict = "disjoint" if flat and reading.label == "zero" else "undecided"
        elif flat:
            verdict = "overlapping" if reading.label in ("nonzero", "divergent") else "undecided"
        else:
            verdict = "undecided"
    return {
        "x": x.coords.tolist(),
        "y": y.coords.tolist(),
        "n_prime_at_0": np0,
        "limit": reading.label,
        "slope": reading.slope,
        "clauses": clauses,
        "disjointness_verdict": verdict,
        "ok": all(c["ok"] for c in clauses.values()),
    }


def sample_prop44_instance(space: SpaceSpec, clause: str, rng: np.random.Generator):
    """Random (x, y) satisfying the hypotheses of one catalogue clause."""
    m, n = space.m, space.n
    if clause == "e":
        if m < 2:
            raise ValueError("clause e needs at least two blocks")
        blocks = rng.permutation(m)
        kx = int(rng.integers(1, m))
        xb = blocks[:kx]
        yb = np.concatenate([rng.choice(xb, size=int(rng.integers(0, kx + 1)), replace=False),
                             rng.choice(blocks[kx:], size=int(rng.integers(1, m - kx + 1)), replace=False)])
        xc = np.zeros((m, n))
        yc = np.zeros((m, n))
        xc[xb] = signed_magnitudes(rng, (len(xb), n))
        yc[yb] = signed_magnitudes(rng, (len(yb), n))
        return Element(space, xc.ravel()), Element(space, yc.ravel())
    if clause == "c":
        if n < 2:
            raise ValueError("clause c needs inner dimension >= 2")
        xc = np.zeros((m, n))
        yc = np.zeros((m, n))
        kx = rng.choice(m, size=int(rng.integers(1, m + 1)), replace=False)
        ky = rng.choice(kx, size=int(rng.integers(1, len(kx) + 1)), replace=False)
        for k in kx:
            perm = rng.permutation(n)
            cut = int(rng.integers(1, n))
            xc[k, perm[:cut]] = signed_magnitudes(rng, cut)
            if k in ky:
                take = perm[cut:cut + int(rng.integers(1, n - cut + 1))]
                yc[k, take] = signed_magnitudes(rng, len(take))
        return Element(space, xc.ravel()), Element(space, yc.ravel())
    if clause == "b":
        while True:
            xc = np.zeros((m, n))
            kx = rng.choice(m, size=int(rng.integers(1, m + 1)), replace=False)
            xc[kx] = signed_magnitudes(rng, (len(kx), n))
            yc = np.zeros((m, n))
            ky = rng.choice(kx, size=int(rng.integers(1, len(kx) + 1)), replace=False)
            yc[ky] = signed_magnitudes(rng, (len(ky), n))
            x = Element(space, xc.ravel())
            y = make_tangent(x, Element(space, yc.ravel()))
            if (not disjoint(x, y) and np.linalg.norm(y.coords) > 0.2 * np.linalg.norm(yc)
                    and np.linalg.matrix_rank(np.vstack([x.coords, y.coords]), tol=1e-9) == 2):
                return x, y
    if clause == "d":
        xc = np.zeros((m, n))
        kx = rng.choice(m, size=int(rng.integers(1, m + 1)), replace=False)
        xc[kx] = signed_magnitudes(rng, (len(kx), n))
        x = Element(space, xc.ravel())
        yc = np.zeros((m, n))
        ky = rng.choice(kx, size=int(rng.integers(1, len(kx) + 1)), replace=False)
        for k in ky:
            blk = rng.normal(size=n)
            target = rng.uniform(0.05, 0.45) * inner_norm(x, k)
            yc[k] = blk / np.linalg.norm(blk, ord=space.q) * target
        return x, Element(space, yc.ravel())
    raise ValueError(f"unknown clause {clause!r}")


def _catalogue_trial(space, clause, seed, trial):
    rng = trial_rng(seed, ord(clause), trial)
    x, y = sample_prop44_instance(space, clause, rng)
    rec = prop44_catalogue(space, x, y)
    rec["trial"] = trial
    rec["clause"] = clause
    rec["ok_for_clause"] = rec["clauses"].get(clause, {}).get("ok", False)
    return rec


def catalogue_run(space: SpaceSpec, clause: str, trials: int, seed: int, jobs: int = 1) -> dict:
    rows = pmap(partial(_catalogue_trial, space, clause, seed), range(trials), jobs)
    bad = [r for r in rows if not r["ok_for_clause"]]
    out = {"space": space.to_dict(), "clause": clause, "trials": trials, "seed": seed,
           "correct": trials - len(bad), "failures": bad}
    if clause == "e":
        slopes = [r["slope"] for r in rows]
        out["slope_range"] = [min(slopes), max(slopes)]
    return out
