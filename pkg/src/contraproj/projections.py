"""Linear operators on the finite spaces: operator norm, contractiveness and structure.

Structure checks are exact in the combinatorial sense.  Supports of computed
vectors are read with the shared truncation tolerance, and every "false" or
"violation" verdict comes with an explicit witness.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy.linalg import orth

from . import kernels
from .spaces import (SUPPORT_TOL, Element, Functional, SpaceSpec, batch_norms, coords_gradient,
                     coords_norm)
from .util import pmap, signed_magnitudes, trial_rng

IDEM_TOL = 1e-9
CONTRACTIVE_TOL = 1e-6
GRID_MAX_DIM = 4
GRID_POINTS = 41


class NotAProjectionError(ValueError):
    pass


def _readonly(a):
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class ProjectionOperator:
    """A dim x dim matrix acting on flat coordinates (the name is historical: any
    linear operator can be stored; projection-ness is checked where it matters)."""

    space: SpaceSpec
    matrix: np.ndarray = field(repr=False)

    def __post_init__(self):
        M = _readonly(self.matrix)
        d = self.space.dim
        if M.shape != (d, d):
            raise ValueError(f"matrix must be {d}x{d}, got {M.shape}")
        if not np.all(np.isfinite(M)):
            raise ValueError("matrix has non-finite entries")
        object.__setattr__(self, "matrix", M)

    @classmethod
    def identity(cls, space):
        return cls(space, np.eye(space.dim))

    @classmethod
    def band(cls, space, indices):
        """x -> x chi_A for a set A of flat indices."""
        D = np.zeros(space.dim)
        D[list(indices)] = 1.0
        return cls(space, np.diag(D))

    @classmethod
    def rank_one(cls, u: Element, f: Functional):
        return cls(u.space, np.outer(u.coords, f.coeffs))

    def __call__(self, x: Element) -> Element:
        if x.space != self.space:
            raise ValueError("operand lives in a different space")
        return Element(self.space, self.matrix @ x.coords)

    def idempotence_defect(self) -> float:
        M = self.matrix
        return float(np.max(np.abs(M @ M - M))) if M.size else 0.0

    def is_projection(self, tol: float = IDEM_TOL) -> bool:
        return self.idempotence_defect() <= tol

    def require_projection(self, tol: float = IDEM_TOL):
        defect = self.idempotence_defect()
        if defect > tol:
            raise NotAProjectionError(f"not a projection: |P^2 - P| = {defect:.3g} > {tol:g}")

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "matrix": self.matrix.tolist()}

    @classmethod
    def from_dict(cls, d: dict):
        return cls(SpaceSpec.from_dict(d["space"]), np.array(d["matrix"], dtype=float))


# -- operator norm -------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class NormEstimate:
    value: float
    maximizer: Element
    certificate: str
    restarts: int

    def to_dict(self) -> dict:
        return {"value": self.value, "maximizer": self.maximizer.coords.tolist(),
                "certificate": self.certificate, "restarts": self.restarts}


def _layout(space):
    return space.m, space.n, space.p, space.inner_exponent


def _ascend_generic(space, M, x0, maxiter=2000, tol=1e-12, patience=50):
    """Renormalized gradient ascent of ||Mx|| on the unit sphere (any norm in the family)."""
    x = np.array(x0, dtype=float)
    nx = coords_norm(space, x)
    if nx == 0.0:
        return 0.0, x, 0
    x /= nx
    val = coords_norm(space, M @ x)
    stall = it = 0
    while it < maxiter and val > 0.0:
        it += 1
        g = M.T @ coords_gradient(space, M @ x)
        direction = g - val * coords_gradient(space, x)
        best, best_val = x, val
        t = 1.0
        while t > 1e-12:
            cand = x + t * direction
            cn = coords_norm(space, cand)
            if cn > 0.0:
                cand = cand / cn
                cval = coords_norm(space, M @ cand)
                if cval > best_val:
                    best, best_val = cand, cval
                    break
            t *= 0.5
        if best_val <= val:
            break
        gain = (best_val - val) / val
        x, val = best, best_val
        stall = stall + 1 if gain < tol else 0
        if stall >= patience:
            break
    return val, x, it


def _ascend(space, M, x0, **kw):
    if space.is_block:
        m, n, p, q = _layout(space)
        return kernels.ascend(M, x0, m, n, p, q, **kw)
    return _ascend_generic(space, M, x0, **kw)


def _start(space, M, seed, index):
    """The index-th start vector; deterministic ones first, then seeded random ones."""
    d = space.dim
    det = 3 * d
    if index < d:
        x = np.zeros(d)
        x[index] = 1.0
        return x
    if index < 2 * d:
        return np.array(M[index - d])
    if index < det:
        return np.array(M[:, index - 2 * d])
    rng = trial_rng(seed, index - det)
    if (index - det) % 2 == 0:
        return rng.normal(size=d)
    x = np.zeros(d)
    k = int(rng.integers(1, d + 1))
    x[rng.choice(d, size=k, replace=False)] = signed_magnitudes(rng, k)
    return x


def _run_start(space, M, seed, index):
    x0 = _start(space, M, seed, index)
    if not np.any(x0):
        return 0.0, x0
    val, x, _ = _ascend(space, M, x0)
    return float(val), np.asarray(x)


def _grid_faces(d, pts):
    """Points on the boundary of [-1, 1]^d, one of each +-pair (x_i = 1 on face i)."""
    axis = np.linspace(-1.0, 1.0, pts)
    rest = np.stack(np.meshgrid(*([axis] * (d - 1)), indexing="ij"), -1).reshape(-1, d - 1) \
        if d > 1 else np.zeros((1, 0))
    faces = []
    for i in range(d):
        F = np.empty((rest.shape[0], d))
        F[:, :i] = rest[:, :i]
        F[:, i] = 1.0
        F[:, i + 1:] = rest[:, i:]
        faces.append(F)
    return np.vstack(faces)


def _grid_best(space, M, X):
    r = batch_norms(space, X @ M.T) / batch_norms(space, X)
    i = int(np.argmax(r))
    return float(r[i]), X[i]


def _bruteforce(space, M):
    d = space.dim
    h = 2.0 / (GRID_POINTS - 1)
    val, best = _grid_best(space, M, _grid_faces(d, GRID_POINTS))
    local = np.stack(np.meshgrid(*([np.linspace(-1.0, 1.0, 11)] * d), indexing="ij"), -1).reshape(-1, d)
    for _ in range(2):
        X = best + h * local
        X = X[np.any(X != 0.0, axis=1)]
        v, b = _grid_best(space, M, X)
        if v > val:
            val, best = v, b
        h /= 5.0
    return val, best


def operator_norm(P: ProjectionOperator, restarts: int = 64, seed: int = 0,
                  jobs: int = 1) -> NormEstimate:
    """Lower bound on sup ||Px|| / ||x|| by multistart ascent (plus a grid when dim <= 4).

    Start i is a pure function of (seed, i) and starts 0..k-1 are shared by
    every call with restarts >= k, so the estimate is monotone in restarts.
    """
    if restarts < 1:
        raise ValueError("restarts must be >= 1")
    space, M = P.space, P.matrix
    d = space.dim
    if not np.any(M):
        return NormEstimate(0.0, space.basis(0), "multistart", restarts)
    total = 3 * d + restarts
    runs = pmap(partial(_run_start, space, M, seed), range(total), jobs)
    vals = [v for v, _ in runs]
    i = int(np.argmax(vals))
    best_val, best = vals[i], runs[i][1]
    certificate = "multistart"
    if d <= GRID_MAX_DIM:
        certificate = "bruteforce"
        gv, gx = _bruteforce(space, M)
        pv, px, _ = _ascend(space, M, gx)
        for v, x in ((gv, gx), (pv, px)):
            if v > best_val:
                best_val, best = v, x
    best = np.asarray(best, dtype=float) / coords_norm(space, best)
    value = coords_norm(space, M @ best)
    return NormEstimate(float(value), Element(space, best), certificate, restarts)


def is_contractive(P: ProjectionOperator, tol: float = CONTRACTIVE_TOL, restarts: int = 64,
                   seed: int = 0, tol_idem: float = IDEM_TOL, jobs: int = 1):
    """(verdict, estimate).  False verdicts are certificates; true ones are evidence."""
    P.require_projection(tol_idem)
    est = operator_norm(P, restarts, seed, jobs)
    return est.value <= 1.0 + tol, est


def ascent_trace(P: ProjectionOperator, x0, steps: int = 200) -> list:
    """(iteration, ||Px||) along single ascent steps from x0, for diagnostics."""
    space, M = P.space, P.matrix
    x = np.asarray(x0, dtype=float)
    x = x / coords_norm(space, x)
    rows = [(0, coords_norm(space, M @ x))]
    for it in range(1, steps + 1):
        val, x, used = _ascend(space, M, x, maxiter=1, patience=1)
        rows.append((it, float(val)))
        if used == 0 or (len(rows) > 2 and rows[-1][1] <= rows[-2][1]):
            break
    return rows


def write_trace_csv(path, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iteration", "value"])
        for it, v in rows:
            w.writerow([it, repr(float(v))])


# -- range structure --------------------------------------------------------------------

def range_basis(P: ProjectionOperator, tol: float = 1e-9) -> np.ndarray:
    """Orthonormal basis (columns) of the range of P."""
    M = P.matrix
    if not np.any(M):
        return np.zeros((P.space.dim, 0))
    return orth(M, rcond=tol)


def _null(M: np.ndarray, tol: float) -> np.ndarray:
    """Null space with an absolute singular-value cutoff (inputs here are O(1) by construction)."""
    if M.shape[0] == 0:
        return np.eye(M.shape[1])
    _, s, vh = np.linalg.svd(M, full_matrices=True)
    rank = int(np.sum(s > tol))
    return vh[rank:].T


def _orth(M: np.ndarray, tol: float) -> np.ndarray:
    if M.shape[1] == 0:
        return M
    u, s, _ = np.linalg.svd(M, full_matrices=False)
    return u[:, :int(np.sum(s > tol))]


def invariant_atoms(B: np.ndarray, tol: float = 1e-9) -> list:
    """Atoms of the Boolean algebra {A : chi_A Y in Y} for Y = span of the columns of B.

    The indicator vectors delta with (I - BB^T) diag(delta) B = 0 form an
    algebra of diagonal matrices; it is spanned by the indicators of a
    partition, read off by grouping coordinates whose null-space rows agree.
    """
    d, r = B.shape
    if r == 0:
        return [[i] for i in range(d)]
    Q = np.eye(d) - B @ B.T
    M = np.vstack([Q * B[:, c][None, :] for c in range(r)])
    N = _null(M, tol)
    scale = np.sqrt(N.shape[1]) if N.shape[1] else 1.0
    atoms: list = []
    reps: list = []
    for i in range(d):
        for a, rep in zip(atoms, reps):
            if np.linalg.norm(N[i] - rep) <= 1e-6 * scale:
                a.append(i)
                break
        else:
            atoms.append([i])
            reps.append(N[i])
    return atoms


def block_basis_of(B: np.ndarray, space: SpaceSpec, tol: float = 1e-9):
    """Disjoint basis of span(B) (unique up to scaling and order), or None."""
    d, r = B.shape
    vectors = []
    for atom in invariant_atoms(B, tol):
        sub = B[atom]
        s = np.linalg.svd(sub, compute_uv=False)
        if s.size == 0 or s[0] <= tol:
            continue
        if s.size > 1 and s[1] > tol * max(1.0, s[0]):
            return None
        U, _, _ = np.linalg.svd(sub)
        c = np.zeros(d)
        c[atom] = U[:, 0]
        c[np.abs(c) <= SUPPORT_TOL * np.max(np.abs(c))] = 0.0
        i = int(np.flatnonzero(c)[0])
        if c[i] < 0:
            c = -c
        c /= coords_norm(space, c)
        vectors.append(c)
    if len(vectors) != r:
        return None
    vectors.sort(key=lambda v: int(np.flatnonzero(v)[0]))
    return [Element(space, v) for v in vectors]


def range_block_basis(P: ProjectionOperator, tol: float = 1e-9):
    """Mutually disjoint, unit-norm basis of range(P), or None if the range has none."""
    P.require_projection()
    return block_basis_of(range_basis(P, tol), P.space, tol)


@dataclass(frozen=True, eq=False)
class AveragingForm:
    pairs: tuple  # of (Element u_i, Functional v_i)

    def matrix(self) -> np.ndarray:
        if not self.pairs:
            return np.zeros((0, 0))
        return sum(np.outer(u.coords, v.coeffs) for u, v in self.pairs)

    @property
    def localized(self) -> bool:
        """supp(v_i) inside supp(u_i) for every i.

        Without this the form does not force semi-band preservation
        (e1 -> e1, e2 -> e1 is the smallest counterexample); with it the
        two notions coincide.
        """
        return all(set(np.flatnonzero(v.coeffs)) <= set(np.flatnonzero(u.coords)) for u, v in self.pairs)

    def to_dict(self) -> dict:
        return {"pairs": [{"u": u.coords.tolist(), "v": v.coeffs.tolist()} for u, v in self.pairs],
                "localized": self.localized}


def _disjoint_rows(A: np.ndarray) -> bool:
    nz = A != 0.0
    return not np.any(nz.sum(axis=0) > 1)


def extract_averaging_form(P: ProjectionOperator, tol: float = 1e-9):
    """P = sum_i v_i(.) u_i with u_i disjoint, v_i disjoint and v_i(u_j) = delta_ij, or None."""
    P.require_projection()
    space = P.space
    basis = range_block_basis(P, tol)
    if basis is None:
        return None
    if not basis:
        return AveragingForm(()) if not np.any(P.matrix) else None
    U = np.column_stack([u.coords for u in basis])
    W = np.linalg.lstsq(U, P.matrix, rcond=None)[0]
    scale = max(1.0, float(np.max(np.abs(W))))
    W[np.abs(W) <= 1e-12 * scale] = 0.0
    if not _disjoint_rows(W):
        return None
    if np.max(np.abs(W @ U - np.eye(len(basis)))) > tol:
        return None
    pairs = tuple((u, Functional(space, W[i])) for i, u in enumerate(basis))
    form = AveragingForm(pairs)
    if np.max(np.abs(form.matrix() - P.matrix)) > tol:
        return None
    return form


@dataclass(frozen=True)
class SemiBandResult:
    holds: bool
    witness: tuple | None  # (x, y) with Px disjoint from y but Px, Py overlapping
    patterns: int

    def to_dict(self) -> dict:
        w = None
        if self.witness is not None:
            w = {"x": self.witness[0].coords.tolist(), "y": self.witness[1].coords.tolist()}
        return {"holds": self.holds, "witness": w, "patterns": self.patterns}


def _zero_closure(B, Z, tol):
    """Common zero set of {y in span(B) : y_Z = 0}, and a generic element of that subspace."""
    d, r = B.shape
    if Z:
        C = B @ _null(B[sorted(Z)], tol)
    else:
        C = B
    if C.shape[1] == 0:
        return frozenset(range(d)), np.zeros(d)
    C = _orth(C, tol)
    if C.shape[1] == 0:
        return frozenset(range(d)), np.zeros(d)
    zero = frozenset(np.flatnonzero(np.linalg.norm(C, axis=1) <= 1e-9).tolist())
    coeff = np.linspace(1.0, 2.0, C.shape[1]) / np.sqrt(np.arange(1, C.shape[1] + 1))
    g = C @ coeff
    g[sorted(zero)] = 0.0
    return zero, g


def achievable_supports(B: np.ndarray, tol: float = 1e-9):
    """All exact supports of vectors in span(B), each with a generic witness."""
    d = B.shape[0]
    start, g = _zero_closure(B, frozenset(), tol)
    seen = {start: g}
    frontier = [start]
    while frontier:
        nxt = []
        for Z in frontier:
            for i in range(d):
                if i in Z:
                    continue
                Z2, g2 = _zero_closure(B, Z | {i}, tol)
                if Z2 not in seen:
                    seen[Z2] = g2
                    nxt.append(Z2)
        frontier = nxt
    return [(frozenset(range(d)) - Z, g) for Z, g in seen.items()]


def semi_band_preserving(P: ProjectionOperator, tol: float = 1e-9) -> SemiBandResult:
    """Exact test of: Px disjoint from y implies Px disjoint from Py.

    For a fixed support S = supp(Px) the condition is linear in y and reduces
    to P[S, j] = 0 for every coordinate j outside S.  Px ranges over the whole
    range of P, so S runs over every support achieved by a vector of the range.
    """
    space, M = P.space, P.matrix
    scale = max(1.0, float(np.max(np.abs(M))))
    pats = achievable_supports(range_basis(P, tol), tol)
    pats.sort(key=lambda sg: (len(sg[0]), sorted(sg[0])))
    for S, g in pats:
        if not S:
            continue
        Sl = sorted(S)
        outside = [j for j in range(space.dim) if j not in S]
        for j in outside:
            if np.max(np.abs(M[Sl, j])) > tol * scale:
                return SemiBandResult(False, (Element(space, g), space.basis(j // space.n, j % space.n)),
                                      len(pats))
    return SemiBandResult(True, None, len(pats))


# -- mixed-exponent support laws ----------------------------------------------------------

def _vs(space, coords, cut):
    Z = np.abs(np.asarray(coords)).reshape(space.m, space.n)
    return frozenset(np.flatnonzero(np.any(Z > cut, axis=1)).tolist())


def _cut(P, ref_norm):
    return SUPPORT_TOL * max(1.0, ref_norm) * max(1.0, float(np.max(np.abs(P.matrix))))


def range_vs(P: ProjectionOperator) -> frozenset:
    """Union of vs(Pu) over all u: blocks where some row of P is nonzero."""
    return _vs(P.space, np.max(np.abs(P.matrix), axis=1), _cut(P, 1.0))


def _require_outer_below_two(space):
    if space.kind not in ("lp", "lplq") or not 1.0 < space.p < 2.0:
        raise ValueError("these checks need an l_p(l_q) space with p in (1, 2)")


def annihilation_check(P: ProjectionOperator, trials: int = 100, seed: int = 0,
                       tol: float = 1e-6) -> dict:
    """Samples y on blocks no Pu ever touches and checks Py = 0."""
    space = P.space
    _require_outer_below_two(space)
    outside = sorted(set(range(space.m)) - range_vs(P))
    violations = []
    if outside:
        for t in range(trials):
            rng = trial_rng(seed, t)
            k = rng.choice(outside, size=int(rng.integers(1, len(outside) + 1)), replace=False)
            y = np.zeros((space.m, space.n))
            y[k] = rng.normal(size=(len(k), space.n))
            y = y.ravel()
            ny = coords_norm(space, y)
            r = coords_norm(space, P.matrix @ y)
            if r > tol * ny:
                violations.append({"trial": t, "y": y.tolist(), "ratio": r / ny})
    return {"check": "annihilation", "blocks_outside": outside,
            "trials": trials if outside else 0, "violations": violations}


def support_absorption_check(P: ProjectionOperator, trials: int = 100, seed: int = 0) -> dict:
    """Samples x and y with vs(y) in vs(Px), sigma(y(k)) <= sigma(Px(k)); checks vs(Py) in vs(Px)."""
    space = P.space
    _require_outer_below_two(space)
    M = P.matrix
    d, n = space.dim, space.n
    q = space.inner_exponent
    violations = []
    done = 0
    for t in range(trials):
        rng = trial_rng(seed, t)
        for _ in range(20):
            x = np.zeros(d)
            k = int(rng.integers(1, d + 1))
            x[rng.choice(d, size=k, replace=False)] = rng.normal(size=k)
            px = M @ x
            if coords_norm(space, px) > 0:
                break
        else:
            continue
        vpx = sorted(_vs(space, px, _cut(P, coords_norm(space, px))))
        if not vpx:
            continue
        blocks = rng.choice(vpx, size=int(rng.integers(1, len(vpx) + 1)), replace=False)
        y = np.zeros((space.m, n))
        for b in blocks:
            z = rng.normal(size=n)
            if rng.random() < 0.5:
                z[rng.random(n) < 0.5] = 0.0
                if not np.any(z):
                    z[int(rng.integers(n))] = 1.0
            sig_px = np.linalg.norm(px[b * n:(b + 1) * n], ord=q) if n > 1 else abs(px[b])
            y[b] = z / np.linalg.norm(z, ord=q) * rng.uniform(0.05, 1.0) * sig_px
        y = y.ravel()
        py = M @ y
        vpy = _vs(space, py, _cut(P, coords_norm(space, y)))
        done += 1
        if not vpy <= set(vpx):
            violations.append({"trial": t, "x": x.tolist(), "y": y.tolist(),
                               "vs_Px": vpx, "vs_Py": sorted(vpy)})
    return {"check": "support_absorption", "trials": done,
            "hypothesis_inner_above_two": space.inner_exponent > 2.0,
            "violations": violations}


def split_by_support(P: ProjectionOperator, x: Element, y: Element):
    """y = y1 + y2 + y3 by blocks: inside vs(Px), outside vs(range P), and the rest."""
    space = P.space
    px = P.matrix @ x.coords
    inner = _vs(space, px, _cut(P, coords_norm(space, px)))
    reach = range_vs(P)
    masks = [np.zeros(space.m, bool) for _ in range(3)]
    for k in range(space.m):
        masks[0 if k in inner else (1 if k not in reach else 2)][k] = True
    Y = y.blocks
    return tuple(Element(space, (Y * mk[:, None]).ravel()) for mk in masks)


@dataclass(frozen=True, eq=False)
class SupportFamily:
    sets: dict  # frozenset -> witness coords
    complete: bool
    closure_failures: tuple = ()

    def to_dict(self) -> dict:
        return {"sets": sorted(sorted(s) for s in self.sets), "complete": self.complete,
                "closure_failures": [list(map(sorted, f)) for f in self.closure_failures]}


def support_family(P: ProjectionOperator, budget: int = 4096, seed: int = 0,
                   exhaustive_blocks: int = 6) -> SupportFamily:
    """Observed sets vs(Pu), then the intersection check: for observed A, B the vector
    w = (P u_A) chi_{A cap B} must satisfy vs(Pw) = A cap B."""
    space, M = P.space, P.matrix
    d, m, n = space.dim, space.m, space.n
    fam: dict = {}

    def observe(u):
        pu = M @ u
        A = _vs(space, pu, _cut(P, coords_norm(space, u) if np.any(u) else 1.0))
        if A not in fam:
            fam[A] = np.array(u)

    for i in range(d):
        e = np.zeros(d)
        e[i] = 1.0
        observe(e)
    basis = range_block_basis(P)
    gens = [u.coords for u in basis] if basis is not None else list(range_basis(P).T)
    gens = gens + [sum(gens)] if gens else gens
    reach = sorted(range_vs(P))
    complete = True
    if len(reach) <= exhaustive_blocks:
        subsets = [s for r in range(1, len(reach) + 1) for s in itertools.combinations(reach, r)]
    else:
        rng = trial_rng(seed, 0)
        subsets = []
        for _ in range(budget):
            s = tuple(sorted(rng.choice(reach, size=int(rng.integers(1, len(reach) + 1)), replace=False)))
            subsets.append(s)
        complete = False
    used = 0
    for g in gens:
        for s in subsets:
            if used >= budget:
                complete = False
                break
            mask = np.zeros((m, 1))
            mask[list(s)] = 1.0
            observe((g.reshape(m, n) * mask).ravel())
            used += 1
    failures = []
    sets = list(fam)
    for A, B in itertools.combinations(sets, 2):
        C = A & B
        if not C:
            continue
        for src in (A, B):
            pu = M @ fam[src]
            mask = np.zeros((m, 1))
            mask[list(C)] = 1.0
            w = (pu.reshape(m, n) * mask).ravel()
            got = _vs(space, M @ w, _cut(P, coords_norm(space, w)))
            if got != C:
                failures.append((A, B, got))
                break
            if C not in fam:
                fam[C] = w
    return SupportFamily(fam, complete, tuple(failures))


def separation_search(fam: SupportFamily) -> dict:
    """For observed A, B and a in A minus B, look for an observed D with a in D, D inside A minus B.

    Misses mean "not found among observed sets", never a refutation.
    """
    sets = list(fam.sets)
    missing = []
    checked = 0
    for A in sets:
        for B in sets:
            for a in A - B:
                checked += 1
                if not any(a in D and D <= A - B for D in sets):
                    missing.append((sorted(A), sorted(B), a))
    return {"checked": checked, "not_found_within_budget": missing}
