"""Structure of 1-complemented subspaces of l_p(l_q).

A subspace is the range of a contractive projection exactly when it has a
basis whose vectors either have disjoint block supports, or share the same
block supports with disjoint inner supports and proportional block norms.
Such a basis is in particular disjoint, and a disjoint basis is unique up
to scaling, so the search below is exact in every dimension.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.linalg import null_space, orth
from scipy.optimize import linprog

from . import __version__, kernels
from .projections import (CONTRACTIVE_TOL, ProjectionOperator, block_basis_of, is_contractive,
                          operator_norm)
from .spaces import (Element, SpaceSpec, coords_gradient, coords_norm, inner_norm,
                     norming_functional, support_with_tol, vector_support)
from .util import pmap, signed_magnitudes, trial_rng

RANK_TOL = 1e-10
RATIO_TOL = 1e-9
# candidate: a projection of norm <= 1 + CANDIDATE_TOL was found; refuted: the
# certified lower bound exceeds it.  LOOSE_TOL is only recorded for comparison.
CANDIDATE_TOL = 1e-6
LOOSE_TOL = 1e-3


class InvalidBasisError(ValueError):
    pass


class NonCompliantBasisError(ValueError):
    pass


class SynthesisError(RuntimeError):
    pass


@dataclass(frozen=True, eq=False)
class SubspaceBasis:
    space: SpaceSpec
    vectors: tuple

    def __post_init__(self):
        if not self.space.is_block:
            raise InvalidBasisError("subspace bases live in l_p(l_q) (or plain l_p)")
        vecs = tuple(v if isinstance(v, Element) else Element(self.space, v) for v in self.vectors)
        if not vecs:
            raise InvalidBasisError("empty basis")
        if any(v.space != self.space for v in vecs):
            raise InvalidBasisError("basis vectors from a different space")
        s = np.linalg.svd(np.vstack([v.coords for v in vecs]), compute_uv=False)
        if s[0] == 0.0 or s[-1] <= RANK_TOL * s[0] or len(vecs) > self.space.dim:
            raise InvalidBasisError("basis vectors are linearly dependent")
        object.__setattr__(self, "vectors", vecs)

    @property
    def dim(self) -> int:
        return len(self.vectors)

    def matrix(self) -> np.ndarray:
        """Columns are the basis vectors."""
        return np.column_stack([v.coords for v in self.vectors])

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "vectors": [v.coords.tolist() for v in self.vectors]}

    @classmethod
    def from_dict(cls, d: dict):
        sp = SpaceSpec.from_dict(d["space"])
        return cls(sp, tuple(Element(sp, v) for v in d["vectors"]))


@dataclass(frozen=True, eq=False)
class CharacterizationReport:
    compliant: bool
    witness_basis: SubspaceBasis | None
    violations: tuple = ()
    exhaustive: bool = True

    def to_dict(self) -> dict:
        return {
            "compliant": self.compliant,
            "witness_basis": None if self.witness_basis is None else self.witness_basis.to_dict(),
            "violations": [list(v) for v in self.violations],
            "exhaustive": self.exhaustive,
        }


def _inner_support(x: Element, k: int, supp: frozenset) -> frozenset:
    n = x.space.n
    return frozenset(i - k * n for i in supp if i // n == k)


def basis_violations(basis: SubspaceBasis) -> list:
    vecs = basis.vectors
    supps = [support_with_tol(v) for v in vecs]
    vss = [vector_support(v, 1e-10) for v in vecs]
    out = []
    for i in range(len(vecs)):
        for j in range(i + 1, len(vecs)):
            if not vss[i] & vss[j]:
                continue
            if vss[i] != vss[j]:
                out.append((i, j, "vs-overlap-not-equal"))
                continue
            blocks = sorted(vss[i])
            if any(_inner_support(vecs[i], k, supps[i]) & _inner_support(vecs[j], k, supps[j])
                   for k in blocks):
                out.append((i, j, "inner-not-disjoint"))
            si = np.array([inner_norm(vecs[i], k) for k in blocks])
            sj = np.array([inner_norm(vecs[j], k) for k in blocks])
            c = si[0] / sj[0]
            if np.max(np.abs(si - c * sj)) > RATIO_TOL * np.max(si):
                out.append((i, j, "inner-norm-mismatch"))
    return out


def check_basis(basis: SubspaceBasis) -> CharacterizationReport:
    """Pairwise structural test; the norm clause is ratio constancy, so it is scale-free."""
    v = basis_violations(basis)
    return CharacterizationReport(not v, basis if not v else None, tuple(v))


def _as_columns(space, vectors):
    if isinstance(vectors, SubspaceBasis):
        return vectors.space, vectors.matrix()
    rows = []
    for v in vectors:
        if isinstance(v, Element):
            if space is not None and v.space != space:
                raise InvalidBasisError("vectors from different spaces")
            space = v.space
            rows.append(v.coords)
        else:
            rows.append(np.asarray(v, dtype=float))
    if space is None:
        raise InvalidBasisError("space unknown: pass Elements or a space")
    return space, np.column_stack(rows) if rows else np.zeros((space.dim, 0))


def find_compliant_basis(vectors, space: SpaceSpec | None = None) -> CharacterizationReport:
    """Decides whether span(vectors) has a compliant basis and returns one if so.

    The only candidate (up to scaling) is the disjoint basis, found from the
    atoms of the invariant indicator algebra; the verdict is exact.
    """
    space, A = _as_columns(space, vectors)
    if A.size == 0 or not np.any(A):
        raise InvalidBasisError("zero subspace")
    B = orth(A, rcond=RANK_TOL)
    block = block_basis_of(B, space)
    if block is not None:
        rep = check_basis(SubspaceBasis(space, tuple(block)))
        return rep
    # report violations of an independent subset of the input for orientation
    cols = []
    for c in A.T:
        trial = cols + [c]
        s = np.linalg.svd(np.vstack(trial), compute_uv=False)
        if s[-1] > RANK_TOL * s[0]:
            cols = trial
    given = SubspaceBasis(space, tuple(Element(space, c) for c in cols))
    v = basis_violations(given) or [(0, 0, "no-disjoint-basis")]
    return CharacterizationReport(False, None, tuple(v))


def synthesize_projection(basis: SubspaceBasis) -> ProjectionOperator:
    """P = sum_i v_i(.) u_i with u_i = y^i / ||y^i|| and v_i its norming functional."""
    rep = check_basis(basis)
    if not rep.compliant:
        raise NonCompliantBasisError(f"basis is not compliant: {rep.violations}")
    space = basis.space
    us = [v.coords / coords_norm(space, v.coords) for v in basis.vectors]
    vs = [norming_functional(Element(space, u)).coeffs for u in us]
    G = np.array([[vs[i] @ us[j] for j in range(len(us))] for i in range(len(us))])
    off = G - np.diag(np.diag(G))
    if np.max(np.abs(off)) > 1e-12 or np.max(np.abs(np.diag(G) - 1.0)) > 1e-12:
        raise SynthesisError(f"cross terms v_i(u_j) do not vanish: {G.tolist()}")
    P = ProjectionOperator(space, sum(np.outer(u, v) for u, v in zip(us, vs)))
    P.require_projection()
    return P


# -- samplers ---------------------------------------------------------------------------

def random_compliant_basis(space: SpaceSpec, dim: int, rng: np.random.Generator,
                           attempts: int = 200) -> SubspaceBasis:
    """Random compliant basis: groups of vectors on disjoint block sets, inner-disjoint
    within a group, block norms proportional, then random rescaling."""
    m, n = space.m, space.n
    if dim > space.dim:
        raise ValueError("subspace dimension exceeds the space")
    for _ in range(attempts):
        sizes = []
        left = dim
        while left:
            s = int(rng.integers(1, min(left, n) + 1))
            sizes.append(s)
            left -= s
        if len(sizes) > m:
            continue
        blocks = rng.permutation(m)
        cuts = np.sort(rng.choice(np.arange(1, m), size=len(sizes) - 1, replace=False)) if len(sizes) > 1 else []
        groups = np.split(blocks, cuts)
        vecs = []
        for s, grp in zip(sizes, groups):
            grp = rng.choice(grp, size=int(rng.integers(1, len(grp) + 1)), replace=False)
            Ys = np.zeros((s, m, n))
            for k in grp:
                perm = rng.permutation(n)
                take = int(rng.integers(s, n + 1))
                parts = np.array_split(perm[:take], s) if s > 1 else [perm[:take]]
                level = rng.uniform(0.5, 2.0)
                for i, part in enumerate(parts):
                    blk = signed_magnitudes(rng, len(part))
                    Ys[i, k, part] = blk / np.linalg.norm(blk, ord=space.inner_exponent) * level
            for i in range(s):
                vecs.append(Ys[i].ravel() * rng.uniform(0.5, 2.0) * rng.choice((-1.0, 1.0)))
        return SubspaceBasis(space, tuple(Element(space, v) for v in vecs))
    raise RuntimeError("could not fit the requested dimension into the block layout")


def near_miss_basis(space: SpaceSpec, dim: int, rng: np.random.Generator, attempts: int = 200):
    """A compliant basis broken by one clause; returns (basis, clause)."""
    for _ in range(attempts):
        base = random_compliant_basis(space, dim, rng)
        Y = [np.array(v.coords).reshape(space.m, space.n) for v in base.vectors]
        kind = ["inner-norm-mismatch", "inner-not-disjoint", "vs-overlap-not-equal"][int(rng.integers(3))]
        if kind == "vs-overlap-not-equal":
            if dim < 2:
                continue
            i, j = (int(t) for t in rng.choice(dim, size=2, replace=False))
            vi = set(np.flatnonzero(np.any(Y[i] != 0, axis=1)).tolist())
            vj = set(np.flatnonzero(np.any(Y[j] != 0, axis=1)).tolist())
            # grow vs(y^j) so it meets vs(y^i) without equalling it
            options = sorted(vi) if not vi & vj else [k for k in range(space.m) if k not in vi]
            if not options:
                continue
            k = options[int(rng.integers(len(options)))]
            Y[j][k] = signed_magnitudes(rng, space.n) * rng.uniform(0.3, 1.0)
        elif kind == "inner-not-disjoint":
            pairs = [(i, j) for i in range(dim) for j in range(dim) if i != j
                     and np.array_equal(np.any(Y[i] != 0, axis=1), np.any(Y[j] != 0, axis=1))]
            if not pairs:
                continue
            i, j = pairs[int(rng.integers(len(pairs)))]
            k = int(rng.choice(np.flatnonzero(np.any(Y[i] != 0, axis=1))))
            pos = int(rng.choice(np.flatnonzero(Y[j][k] != 0)))
            Y[i][k, pos] = rng.uniform(0.3, 1.0) * np.max(np.abs(Y[i][k])) * rng.choice((-1.0, 1.0))
        else:
            pairs = [(i, j) for i in range(dim) for j in range(dim) if i != j
                     and np.array_equal(np.any(Y[i] != 0, axis=1), np.any(Y[j] != 0, axis=1))
                     and np.sum(np.any(Y[i] != 0, axis=1)) >= 2]
            if not pairs:
                continue
            i, _ = pairs[int(rng.integers(len(pairs)))]
            k = int(rng.choice(np.flatnonzero(np.any(Y[i] != 0, axis=1))))
            Y[i][k] *= rng.uniform(1.3, 2.0)
        basis = SubspaceBasis(space, tuple(Element(space, y.ravel()) for y in Y))
        if not check_basis(basis).compliant:
            return basis, kind
    raise RuntimeError("could not build a near-miss basis")


def random_subspace(space: SpaceSpec, dim: int, rng: np.random.Generator, kind: str):
    """Spanning vectors of a random subspace: 'compliant' (hidden by mixing), 'near-miss',
    'dense' (generic) or 'sparse' (random small supports)."""
    d = space.dim
    if kind == "compliant":
        V = random_compliant_basis(space, dim, rng).matrix()
    elif kind == "near-miss":
        if dim < 2:
            kind = "sparse"
        else:
            V = near_miss_basis(space, dim, rng)[0].matrix()
    if kind == "dense":
        V = rng.normal(size=(d, dim))
    if kind == "sparse":
        while True:
            V = np.zeros((d, dim))
            for c in range(dim):
                k = int(rng.integers(1, min(d, 4) + 1))
                V[rng.choice(d, size=k, replace=False), c] = signed_magnitudes(rng, k)
            if np.linalg.matrix_rank(V) == dim:
                break
    if dim > 1:
        mix = rng.normal(size=(dim, dim))
        while abs(np.linalg.det(mix)) < 0.1:
            mix = rng.normal(size=(dim, dim))
        V = V @ mix
    return V


# -- minimal projection norm ------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class MinimalNorm:
    upper: float
    lower: float
    projection: ProjectionOperator
    iterations: int
    status: str

    def to_dict(self) -> dict:
        return {"upper": self.upper, "lower": self.lower, "iterations": self.iterations,
                "status": self.status}


def _local_maxima(space, M, starts):
    m, n, p, q = space.m, space.n, space.p, space.inner_exponent
    out = []
    for x0 in starts:
        if not np.any(x0):
            continue
        val, x, _ = kernels.ascend(M, x0, m, n, p, q, maxiter=500, tol=1e-10, patience=10)
        if val > 0:
            out.append((float(val), np.asarray(x)))
    return out


def min_projection_norm(space: SpaceSpec, vectors, seed: int = 0, box: float = 4.0,
                        max_iter: int = 300, tol: float = CANDIDATE_TOL,
                        gap: float = 1e-9, refine_restarts: int = 32) -> MinimalNorm:
    """Smallest norm of a projection onto Y = span(vectors), with a certified lower bound.

    Projections onto Y are P(Z) = B B^T + B Z C^T (B, C orthonormal bases of Y
    and its complement).  ||P(Z)|| = max g(P(Z) x) over unit x and unit dual g is
    convex in Z; Kelley cutting planes on the pairs found by ascent give an LP
    whose value bounds the minimum from below.  Entries of a projection are
    bounded by its norm, so the box |P_ij| <= box loses nothing below ``box``.

    ``lower`` is certified.  ``upper`` is the multistart estimate of the norm
    of the returned projection, so it is evidence rather than proof.
    """
    if not space.is_block:
        raise ValueError("minimal projection norms need a block space")
    _, A = _as_columns(space, vectors)
    B = orth(A, rcond=RANK_TOL)
    d, r = B.shape
    C = null_space(B.T)
    k = C.shape[1]
    base = B @ B.T
    if k == 0:
        P = ProjectionOperator(space, np.eye(d))
        return MinimalNorm(1.0, 1.0, P, 0, "full-space")

    def P_of(z):
        return base + B @ z.reshape(r, k) @ C.T

    def z_of(W):
        # W with W B = I; P = B W
        return (W @ C).ravel()

    warm = [np.zeros(r * k)]
    block = block_basis_of(B, space)
    for U in ([np.column_stack([u.coords for u in block])] if block else []) + [B]:
        V = np.vstack([coords_gradient(space, u) for u in U.T])
        G = V @ B
        if abs(np.linalg.det(G)) > 1e-8:
            warm.append(z_of(np.linalg.solve(G, V)))
    rng = trial_rng(seed, 0)
    pool: list = []
    cuts_a, cuts_b = [], []  # a . z - t <= -b

    def add_cuts(P, maxima):
        for val, x in maxima:
            px = P @ x
            g = coords_gradient(space, px)
            a = np.append(np.outer(B.T @ g, C.T @ x).ravel(), -1.0)
            b = -(g @ base @ x)
            if any(np.max(np.abs(a - a0)) <= 1e-9 and abs(b - b0) <= 1e-9 for a0, b0 in zip(cuts_a, cuts_b)):
                continue
            cuts_a.append(a)
            cuts_b.append(b)

    def evaluate(z):
        P = P_of(z)
        starts = [x for _, x in sorted(pool, key=lambda t: -t[0])[:8]]
        starts += [np.eye(d)[i] for i in range(d)] + list(P) + [rng.normal(size=d) for _ in range(6)]
        maxima = _local_maxima(space, P, starts)
        add_cuts(P, maxima)
        best = max(maxima, key=lambda t: t[0])
        pool.extend(maxima)
        del pool[:-40]
        return best[0], P

    upper, bestP = math.inf, None
    for z in warm:
        val, P = evaluate(z)
        if val < upper:
            upper, bestP = val, P
    # box: |(B B^T + B Z C^T)_ij| <= box, linear in z
    lin = np.einsum("ia,jb->ijab", B, C).reshape(d * d, r * k)
    box_a = np.vstack([np.hstack([lin, np.zeros((d * d, 1))]), np.hstack([-lin, np.zeros((d * d, 1))])])
    box_b = np.concatenate([box - base.ravel(), box + base.ravel()])
    cost = np.zeros(r * k + 1)
    cost[-1] = 1.0
    bounds = [(None, None)] * (r * k) + [(0.0, None)]
    lower = 1.0  # every projection has norm >= 1
    status = "max-iter"
    it = 0
    for it in range(1, max_iter + 1):
        if upper <= 1.0 + gap:
            status = "optimal"
            break
        if lower > 1.0 + tol:
            status = "certified-above"
            break
        if upper - lower <= gap * upper:
            status = "converged"
            break
        A_ub = np.vstack([np.array(cuts_a), box_a])
        b_ub = np.concatenate([np.array(cuts_b), box_b])
        # dual simplex occasionally stalls on nearly parallel cuts; the other solvers usually don't
        for method in ("highs-ds", "highs-ipm"):
            res = linprog(cost, A_ub=A_ub, b_ub=b_ub, bounds=bounds, method=method)
            if res.status == 0:
                break
        if res.status != 0:
            status = "lp-failure"
            break
        lower = max(lower, min(float(res.x[-1]), box))
        val, P = evaluate(res.x[:-1])
        if val < upper:
            upper, bestP = val, P
    # the ascents above are few and short; re-estimate the winner properly
    best = ProjectionOperator(space, bestP)
    upper = max(upper, operator_norm(best, restarts=refine_restarts, seed=seed).value)
    if status == "optimal" and upper > 1.0 + tol:
        status = "unconfirmed"
    return MinimalNorm(float(upper), float(min(lower, upper)), best, it, status)


# -- hunter -----------------------------------------------------------------------------

TRIAL_KINDS = ("compliant", "near-miss", "dense", "sparse")


def _hunt_trial(space: SpaceSpec, max_dim: int, seed: int, trial: int) -> dict:
    rng = trial_rng(seed, trial)
    kind = TRIAL_KINDS[trial % len(TRIAL_KINDS)]
    dim = 1 + (trial // len(TRIAL_KINDS)) % max_dim
    if kind == "near-miss" and dim < 2:
        dim = min(2, max_dim)
    V = random_subspace(space, dim, rng, kind)
    mn = min_projection_norm(space, V.T, seed=seed * 1_000_003 + trial)
    hilbert = space.p == 2.0 and space.inner_exponent == 2.0
    rec = {"trial": trial, "kind": kind, "dim": dim, "Y_basis": V.T.tolist(),
           "min_norm": mn.upper, "lower_bound": mn.lower, "solver": mn.to_dict(),
           "below_loose_threshold": mn.upper <= 1.0 + LOOSE_TOL}
    if mn.upper <= 1.0 + CANDIDATE_TOL:
        verdict, est = is_contractive(mn.projection, tol=CANDIDATE_TOL, restarts=64, seed=trial)
        rec["min_norm"] = max(mn.upper, est.value)
        candidate = bool(verdict)
    elif mn.lower > 1.0 + CANDIDATE_TOL:
        candidate = False
    else:
        candidate = None
    rec["candidate"] = candidate
    rep = find_compliant_basis([Element(space, v) for v in V.T])
    rec["compliant"] = rep.compliant
    rec["synthesized_contractive"] = None
    counterexample = None
    if rep.compliant and not hilbert:
        P = synthesize_projection(rep.witness_basis)
        ok, est = is_contractive(P, tol=CONTRACTIVE_TOL, restarts=64, seed=trial)
        rec["synthesized_contractive"] = bool(ok)
        if not ok:
            counterexample = {"reason": "synthesized projection not contractive",
                              "operator": P.to_dict(), "norm_estimate": est.to_dict()}
    if hilbert:
        rec["consistent"] = candidate is True
    elif candidate is None:
        rec["consistent"] = None
    else:
        rec["consistent"] = (candidate == rep.compliant) and rec["synthesized_contractive"] is not False
        if candidate and not rep.compliant:
            counterexample = {"reason": "norm-one projection without compliant basis",
                              "operator": mn.projection.to_dict(), "min_norm": rec["min_norm"]}
        elif rep.compliant and candidate is False:
            counterexample = counterexample or {"reason": "compliant basis but no norm-one projection",
                                                "lower_bound": mn.lower}
    if rec["consistent"] is False and counterexample is not None:
        rec["counterexample"] = counterexample
    return rec


def hunt(space: SpaceSpec, subspace_dim: int, trials: int, seed: int, jobs: int = 1) -> dict:
    """Random subspaces, minimal projection norm vs. existence of a compliant basis."""
    if space.kind != "lplq" and space.kind != "lp":
        raise ValueError("the hunter works on l_p(l_q) spaces")
    if subspace_dim < 1:
        raise ValueError("subspace dimension must be >= 1")
    rows = pmap(partial(_hunt_trial, space, subspace_dim, seed), range(trials), jobs)
    contradictions = sum(1 for r in rows if r["consistent"] is False)
    undetermined = sum(1 for r in rows if r["consistent"] is None)
    return {"space": space.to_dict(), "subspace_dim": subspace_dim, "trials": trials, "seed": seed,
            "version": __version__, "contradictions": contradictions,
            "undetermined": undetermined, "records": rows}
