"""Finite sequence spaces l_p^m, l_p^m(l_q^n) and the sum norm ||.||_p + ||.||_q.

Coordinates are flat arrays.  For ``lplq`` the flat index ``i`` corresponds to
block ``k = i // n`` and inner coordinate ``j = i % n`` (0-based, row-major).
The other two kinds are treated as m blocks of size one.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from . import kernels

SUPPORT_TOL = 1e-10


class DimensionError(ValueError):
    pass


class SpaceMismatchError(ValueError):
    pass


class DegeneratePointError(ValueError):
    """Raised where a formula needs a nonzero point (norm gradient, N'' at N=0)."""


def conjugate(r: float) -> float:
    return r / (r - 1.0)


@dataclass(frozen=True)
class SpaceSpec:
    kind: str
    p: float
    q: float | None = None
    m: int = 1
    n: int = 1

    def __post_init__(self):
        if self.kind not in ("lp", "lplq", "sumpq"):
            raise ValueError(f"unknown space kind {self.kind!r}")
        if not self.p > 1.0:
            raise ValueError("outer exponent must exceed 1")
        if self.kind == "lp":
            if self.q is not None or self.n != 1:
                raise ValueError("plain l_p takes no inner exponent or inner dimension")
        else:
            if self.q is None or not self.q > 1.0:
                raise ValueError("second exponent must exceed 1")
        if self.kind == "sumpq" and self.n != 1:
            raise ValueError("sum norm space has no inner dimension")
        if self.m < 1 or self.n < 1:
            raise ValueError("dimensions must be positive")
        object.__setattr__(self, "p", float(self.p))
        if self.q is not None:
            object.__setattr__(self, "q", float(self.q))

    @classmethod
    def lp(cls, p, m):
        return cls("lp", p, None, m, 1)

    @classmethod
    def lplq(cls, p, q, m, n):
        return cls("lplq", p, q, m, n)

    @classmethod
    def sumpq(cls, p, q, m):
        return cls("sumpq", p, q, m, 1)

    @property
    def dim(self) -> int:
        return self.m * self.n

    @property
    def inner_exponent(self) -> float:
        """Exponent of the block norm; irrelevant (blocks are scalars) unless lplq."""
        return self.q if self.kind == "lplq" else self.p

    @property
    def is_block(self) -> bool:
        """True when the norm is a single mixed l_p(l_q) norm (lp is the n == 1 case)."""
        return self.kind in ("lp", "lplq")

    def dual(self) -> SpaceSpec:
        if self.kind == "sumpq":
            raise ValueError("the dual of the sum norm is not a space of this family")
        if self.kind == "lp":
            return SpaceSpec.lp(conjugate(self.p), self.m)
        return SpaceSpec.lplq(conjugate(self.p), conjugate(self.q), self.m, self.n)

    def index(self, k: int, j: int = 0) -> int:
        if not (0 <= k < self.m and 0 <= j < self.n):
            raise IndexError(f"({k}, {j}) outside {self.m}x{self.n}")
        return k * self.n + j

    def element(self, coords) -> Element:
        return Element(self, coords)

    def zeros(self) -> Element:
        return Element(self, np.zeros(self.dim))

    def basis(self, k: int, j: int = 0) -> Element:
        c = np.zeros(self.dim)
        c[self.index(k, j)] = 1.0
        return Element(self, c)

    def to_dict(self) -> dict:
        d = {"kind": self.kind, "p": self.p}
        if self.kind == "lp":
            d["m"] = self.m
        elif self.kind == "sumpq":
            d.update(q=self.q, m=self.m)
        else:
            d.update(q=self.q, m=self.m, n=self.n)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SpaceSpec:
        kind = d["kind"]
        if kind == "lp":
            return cls.lp(d["p"], int(d["m"]))
        if kind == "sumpq":
            return cls.sumpq(d["p"], d["q"], int(d["m"]))
        return cls.lplq(d["p"], d["q"], int(d["m"]), int(d["n"]))

    @classmethod
    def parse(cls, text: str) -> SpaceSpec:
        """Parse ``lp:<p>:<n>``, ``lplq:<p>,<q>:<m>x<n>`` or ``sumpq:<p>,<q>:<n>``."""
        try:
            kind, exps, dims = text.strip().split(":")
            if kind == "lp":
                return cls.lp(float(exps), int(dims))
            p, q = (float(s) for s in exps.split(","))
            if kind == "sumpq":
                return cls.sumpq(p, q, int(dims))
            if kind == "lplq":
                m, n = (int(s) for s in dims.lower().split("x"))
                return cls.lplq(p, q, m, n)
        except ValueError as exc:
            raise ValueError(f"bad space syntax {text!r}: {exc}") from None
        raise ValueError(f"bad space syntax {text!r}")

    def __str__(self):
        if self.kind == "lp":
            return f"lp:{self.p:g}:{self.m}"
        if self.kind == "sumpq":
            return f"sumpq:{self.p:g},{self.q:g}:{self.m}"
        return f"lplq:{self.p:g},{self.q:g}:{self.m}x{self.n}"


def _frozen(coords, dim):
    arr = np.array(coords, dtype=float).ravel()
    if arr.shape[0] != dim:
        raise DimensionError(f"expected {dim} coordinates, got {arr.shape[0]}")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True, eq=False)
class Element:
    space: SpaceSpec
    coords: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coords", _frozen(self.coords, self.space.dim))

    def block(self, k: int) -> np.ndarray:
        if not 0 <= k < self.space.m:
            raise IndexError(f"block {k} outside 0..{self.space.m - 1}")
        n = self.space.n
        return self.coords[k * n:(k + 1) * n]

    @property
    def blocks(self) -> np.ndarray:
        return self.coords.reshape(self.space.m, self.space.n)

    def __add__(self, other):
        _same_space(self, other)
        return Element(self.space, self.coords + other.coords)

    def __sub__(self, other):
        _same_space(self, other)
        return Element(self.space, self.coords - other.coords)

    def __mul__(self, t):
        return Element(self.space, float(t) * self.coords)

    __rmul__ = __mul__

    def __neg__(self):
        return Element(self.space, -self.coords)

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "coords": self.coords.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Element:
        return cls(SpaceSpec.from_dict(d["space"]), d["coords"])


@dataclass(frozen=True, eq=False)
class Functional:
    """A linear functional on ``space``, coefficients indexed like Element coords."""

    space: SpaceSpec
    coeffs: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "coeffs", _frozen(self.coeffs, self.space.dim))

    def __call__(self, x: Element) -> float:
        _same_space(self, x)
        return float(self.coeffs @ x.coords)

    def to_dict(self) -> dict:
        return {"space": self.space.to_dict(), "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_dict(cls, d: dict) -> Functional:
        return cls(SpaceSpec.from_dict(d["space"]), d["coeffs"])


def _same_space(a, b):
    if a.space != b.space:
        raise SpaceMismatchError(f"{a.space} vs {b.space}")


def coords_norm(space: SpaceSpec, coords) -> float:
    """Norm of a raw coordinate array (no Element wrapping)."""
    c = np.asarray(coords, dtype=float)
    if c.shape[-1] != space.dim:
        raise DimensionError(f"expected {space.dim} coordinates, got {c.shape[-1]}")
    if space.kind == "sumpq":
        return kernels.block_norm(c, space.m, 1, space.p, space.p) + kernels.block_norm(
            c, space.m, 1, space.q, space.q)
    return kernels.block_norm(c, space.m, space.n, space.p, space.inner_exponent)


def coords_gradient(space: SpaceSpec, coords) -> np.ndarray:
    """Gradient of the norm at a raw coordinate array; raises at 0."""
    c = np.asarray(coords, dtype=float)
    try:
        if space.kind == "sumpq":
            return (kernels.block_gradient(c, space.m, 1, space.p, space.p)
                    + kernels.block_gradient(c, space.m, 1, space.q, space.q))
        return kernels.block_gradient(c, space.m, space.n, space.p, space.inner_exponent)
    except ZeroDivisionError:
        raise DegeneratePointError("the norming functional of 0 is undefined") from None


def batch_norms(space: SpaceSpec, rows) -> np.ndarray:
    """Norms of many coordinate rows at once (vectorized, used by grid searches)."""
    X = np.abs(np.asarray(rows, dtype=float))
    if space.kind == "sumpq":
        return _batch_lp(X, space.p) + _batch_lp(X, space.q)
    Z = X.reshape(X.shape[0], space.m, space.n)
    q = space.inner_exponent
    top = Z.max(axis=2, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    sig = np.where(top[..., 0] > 0, safe[..., 0] * np.sum((Z / safe) ** q, axis=2) ** (1 / q), 0.0)
    return _batch_lp(sig, space.p)


def _batch_lp(X, r):
    top = X.max(axis=1, keepdims=True)
    safe = np.where(top > 0, top, 1.0)
    return np.where(top[:, 0] > 0, safe[:, 0] * np.sum((X / safe) ** r, axis=1) ** (1 / r), 0.0)


def norm(x: Element) -> float:
    return coords_norm(x.space, x.coords)


def inner_norm(x: Element, k: int) -> float:
    """sigma(x(k)), the l_q^n norm of block k."""
    blk = np.abs(x.block(k))
    top = blk.max()
    if top == 0.0:
        return 0.0
    return float(top * np.sum((blk / top) ** x.space.inner_exponent) ** (1.0 / x.space.inner_exponent))


def dual_norm(f: Functional) -> float:
    """Norm of f in the dual space (conjugate exponents, same layout)."""
    return coords_norm(f.space.dual(), f.coeffs)


def support(x: Element) -> frozenset:
    return frozenset(np.flatnonzero(x.coords).tolist())


def support_with_tol(x: Element, tol: float = SUPPORT_TOL) -> frozenset:
    """Support of a computed vector: entries below tol * ||x|| count as zero."""
    cut = tol * norm(x)
    return frozenset(np.flatnonzero(np.abs(x.coords) > cut).tolist())


def vector_support(x: Element, tol: float | None = None) -> frozenset:
    """Blocks k with x(k) != 0 (exact, or thresholded when tol is given)."""
    idx = support(x) if tol is None else support_with_tol(x, tol)
    n = x.space.n
    return frozenset(i // n for i in idx)


def disjoint(x: Element, y: Element) -> bool:
    _same_space(x, y)
    return not np.any((x.coords != 0.0) & (y.coords != 0.0))


def truncate(x: Element, tol: float = SUPPORT_TOL) -> Element:
    """Copy of x with entries below tol * ||x|| set to exactly zero."""
    c = np.array(x.coords)
    c[np.abs(c) <= tol * norm(x)] = 0.0
    return Element(x.space, c)


def restrict(x: Element, blocks: Iterable[int]) -> Element:
    """x * chi_B for a set B of blocks."""
    keep = np.zeros((x.space.m, 1), dtype=bool)
    keep[list(blocks)] = True
    return Element(x.space, (x.blocks * keep).ravel())


def norming_functional(x: Element) -> Functional:
    """The unit functional f with f(x) = ||x|| (the gradient of the norm at x)."""
    if not np.any(x.coords):
        raise DegeneratePointError("the norming functional of 0 is undefined")
    return Functional(x.space, coords_gradient(x.space, x.coords))


def dumps(obj) -> str:
    return json.dumps(obj.to_dict())
