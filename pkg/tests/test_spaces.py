import json

import numpy as np
import pytest
from hypothesis import assume, given, strategies as st

from contraproj.spaces import (DegeneratePointError, DimensionError, Element, Functional,
                               SpaceMismatchError, SpaceSpec, batch_norms, conjugate, disjoint,
                               dual_norm, inner_norm, norm, norming_functional, restrict, support,
                               support_with_tol, truncate, vector_support)
from oracles import naive_norm

S34 = SpaceSpec.lplq(3, 4, 2, 2)


def e(space, k, j=0):
    return space.basis(k, j)


class TestSpec:
    def test_parse_round_trip(self):
        for text in ["lp:3:4", "lplq:1.5,3:3x2", "sumpq:3,4:5"]:
            sp = SpaceSpec.parse(text)
            assert SpaceSpec.parse(str(sp)) == sp
            assert SpaceSpec.from_dict(json.loads(json.dumps(sp.to_dict()))) == sp

    @pytest.mark.parametrize("text", ["lp:1:3", "lplq:3:2x2", "lplq:3,4:2", "foo:3:3", "lp:3:0",
                                      "sumpq:3,1:4", "lp:x:3"])
    def test_parse_rejects(self, text):
        with pytest.raises(ValueError):
            SpaceSpec.parse(text)

    def test_dual(self):
        d = SpaceSpec.lplq(3, 4, 2, 5).dual()
        assert (d.p, d.q, d.m, d.n) == (pytest.approx(1.5), pytest.approx(4 / 3), 2, 5)
        assert SpaceSpec.lp(4, 3).dual().p == pytest.approx(4 / 3)
        assert conjugate(conjugate(2.5)) == pytest.approx(2.5)
        with pytest.raises(ValueError):
            SpaceSpec.sumpq(3, 4, 2).dual()

    def test_index_layout(self):
        sp = SpaceSpec.lplq(3, 4, 3, 2)
        assert sp.index(2, 1) == 5
        with pytest.raises(IndexError):
            sp.index(3, 0)


class TestNorm:
    def test_examples(self):
        assert norm(e(S34, 0)) == 1.0
        assert norm(e(S34, 0) + e(S34, 1)) == pytest.approx(2 ** (1 / 3), abs=1e-15)
        sp = SpaceSpec.lplq(4, 2, 3, 2)
        assert norm(Element(sp, [3, 4, 0, 0, 0, 0])) == pytest.approx(5.0, abs=1e-14)

    def test_inner_norm_examples(self):
        assert inner_norm(e(S34, 0), 0) == 1.0
        assert inner_norm(e(S34, 0), 1) == 0.0
        assert inner_norm(Element(S34, [1, 1, 0, 0]), 0) == pytest.approx(2 ** 0.25, abs=1e-15)
        with pytest.raises(IndexError):
            inner_norm(e(S34, 0), 2)

    def test_sum_norm(self):
        sp = SpaceSpec.sumpq(3, 4, 3)
        x = Element(sp, [1, -2, 0.5])
        assert norm(x) == pytest.approx(naive_norm(sp, x.coords), rel=1e-14)

    def test_dimension_error(self):
        with pytest.raises(DimensionError):
            Element(S34, [1, 2, 3])

    def test_space_mismatch(self):
        with pytest.raises(SpaceMismatchError):
            e(S34, 0) + SpaceSpec.lp(3, 4).basis(0)
        with pytest.raises(SpaceMismatchError):
            disjoint(e(S34, 0), SpaceSpec.lp(3, 4).basis(0))

    @given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=6, max_size=6),
           st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=6, max_size=6),
           st.sampled_from([(3, 4), (1.5, 3), (4, 1.5), (1.25, 1.5), (2, 2)]),
           st.floats(-10, 10, allow_nan=False))
    def test_norm_axioms(self, a, b, pq, t):
        sp = SpaceSpec.lplq(pq[0], pq[1], 3, 2)
        x, y = Element(sp, a), Element(sp, b)
        assert norm(x) == pytest.approx(naive_norm(sp, x.coords), rel=1e-12)
        assert norm(x + y) <= (norm(x) + norm(y)) * (1 + 1e-12) + 1e-300
        assert norm(t * x) == pytest.approx(abs(t) * norm(x), rel=1e-12, abs=1e-300)
        flips = np.where(np.arange(6) % 2 == 0, -1.0, 1.0)
        assert norm(Element(sp, x.coords * flips)) == norm(x)

    @given(st.lists(st.floats(-10, 10, allow_nan=False), min_size=9, max_size=9))
    def test_p_sum_for_disjoint_vector_supports(self, a):
        sp = SpaceSpec.lplq(3, 4, 3, 3)
        x = Element(sp, np.array(a) * np.repeat([1, 0, 0], 3))
        y = Element(sp, np.array(a) * np.repeat([0, 1, 1], 3))
        assert norm(x + y) ** 3 == pytest.approx(norm(x) ** 3 + norm(y) ** 3, rel=1e-12, abs=1e-300)

    def test_batch_norms(self, rng):
        for sp in [S34, SpaceSpec.lp(3, 4), SpaceSpec.sumpq(3, 4, 4)]:
            X = rng.normal(size=(20, sp.dim))
            X[0] = 0.0
            np.testing.assert_allclose(batch_norms(sp, X), [naive_norm(sp, x) for x in X], rtol=1e-12)

    def test_scaling_extremes(self):
        sp = SpaceSpec.lplq(3, 4, 2, 2)
        x = np.array([1e-200, 2e-200, 0, 1e-200])
        assert norm(Element(sp, x)) > 0
        assert np.isfinite(norm(Element(sp, 1e200 * np.ones(4))))


class TestSupports:
    def test_disjoint_examples(self):
        assert disjoint(e(S34, 0, 0), e(S34, 0, 1))
        x = Element(S34, [1, 0, 1, 0])
        assert not disjoint(x, x)
        assert disjoint(Element(S34, [1, 0, 1, 0]), Element(S34, [0, 1, 0, -1]))

    def test_vector_support(self):
        x = Element(S34, [0, 1, 0, 0])
        assert vector_support(x) == {0}
        assert vector_support(S34.zeros()) == frozenset()
        assert support(x) == {1}

    def test_tolerant_support_and_truncate(self):
        x = Element(S34, [1, 1e-14, 0, 0.5])
        assert support_with_tol(x) == {0, 3}
        assert support(truncate(x)) == {0, 3}
        assert vector_support(x, 1e-10) == {0, 1}

    def test_restrict(self):
        x = Element(S34, [1, 2, 3, 4])
        np.testing.assert_array_equal(restrict(x, [1]).coords, [0, 0, 3, 4])

    def test_elements_are_immutable(self):
        x = Element(S34, [1, 2, 3, 4])
        with pytest.raises(ValueError):
            x.coords[0] = 5.0


class TestNormingFunctional:
    def test_examples(self):
        sp = SpaceSpec.lp(3, 2)
        np.testing.assert_allclose(norming_functional(Element(sp, [1, 0])).coeffs, [1, 0])
        f = norming_functional(Element(sp, [1, 1]))
        np.testing.assert_allclose(f.coeffs, [2 ** (-2 / 3)] * 2, rtol=1e-14)
        assert f(Element(sp, [1, 1])) == pytest.approx(2 ** (1 / 3), rel=1e-14)

    def test_matches_finite_differences(self):
        sp = SpaceSpec.lp(3, 2)
        x = np.array([1.0, 1.0])
        f = norming_functional(Element(sp, x)).coeffs
        h = 1e-6
        for i in range(2):
            d = np.zeros(2)
            d[i] = h
            fd = (norm(Element(sp, x + d)) - norm(Element(sp, x - d))) / (2 * h)
            assert fd == pytest.approx(f[i], abs=1e-9)

    @given(st.lists(st.floats(-5, 5, allow_nan=False), min_size=6, max_size=6),
           st.sampled_from([(3, 4), (1.5, 3), (4, 1.5), (1.25, 1.5)]))
    def test_defining_identities(self, a, pq):
        sp = SpaceSpec.lplq(pq[0], pq[1], 2, 3)
        x = Element(sp, a)
        assume(norm(x) > 1e-6)
        f = norming_functional(x)
        assert abs(f(x) - norm(x)) <= 1e-12 * max(1.0, norm(x))
        assert dual_norm(f) == pytest.approx(1.0, abs=1e-9)

    def test_zero_raises(self):
        with pytest.raises(DegeneratePointError):
            norming_functional(S34.zeros())

    def test_json(self):
        f = norming_functional(Element(S34, [1, 2, 0, 1]))
        g = Functional.from_dict(json.loads(json.dumps(f.to_dict())))
        np.testing.assert_array_equal(f.coeffs, g.coeffs)
        x = Element(S34, [1, 2, 0, 1])
        assert Element.from_dict(json.loads(json.dumps(x.to_dict()))).coords.tolist() == [1, 2, 0, 1]
        assert x.to_dict()["space"] == {"kind": "lplq", "p": 3.0, "q": 4.0, "m": 2, "n": 2}
