import json

import numpy as np
import pytest

from contraproj.disjointness import (InvalidPairError, bounded_second_derivative_bound,
                                     catalogue_run, classify_pair, make_tangent, prop44_catalogue,
                                     reflects_disjointness_audit, sample_disjoint_pair,
                                     sample_overlapping_tangent_pair, sample_prop44_instance)
from contraproj.normcalc import NormCurve, derivatives
from contraproj.spaces import Element, SpaceSpec, disjoint, inner_norm
from contraproj.util import dumps


def el(space, coords):
    return Element(space, coords)


class TestClassifyPair:
    def test_disjoint_l3(self):
        sp = SpaceSpec.lp(3, 3)
        v = classify_pair(sp, el(sp, [1, 0, 0]), el(sp, [0, 1, 0]))
        assert v.n_double_limit == "zero" and v.inferred_disjoint is True and v.correct

    def test_overlapping_l3(self):
        sp = SpaceSpec.lp(3, 3)
        c = 2 ** (-1 / 3)
        v = classify_pair(sp, el(sp, [c, c, 0]), el(sp, [c, -c, 0]))
        assert v.n_prime_at_0 == pytest.approx(0.0, abs=1e-15)
        assert v.n_double_limit == "nonzero"
        assert v.inferred_disjoint is False and v.correct

    def test_mixed_space_fails_on_fresh_block(self):
        sp = SpaceSpec.lplq(1.5, 4, 2, 2)
        v = classify_pair(sp, el(sp, [1, 0, 0, 0]), el(sp, [0, 0, 1, 0]))
        assert v.n_double_limit == "divergent"
        assert v.inferred_disjoint is False and v.ground_truth_disjoint is True
        assert not v.correct

    def test_hilbert_overlap_is_nonzero(self):
        sp = SpaceSpec.lp(2, 3)
        x = el(sp, [1.0, 1.0, 0.0])
        y = make_tangent(x, el(sp, [1.0, 0.0, 1.0]))
        v = classify_pair(sp, x, y)
        assert v.n_double_limit == "nonzero"
        assert v.slope == pytest.approx(0.0, abs=1e-9)

    def test_inapplicable(self):
        sp = SpaceSpec.lp(3, 2)
        v = classify_pair(sp, el(sp, [1, 1]), el(sp, [1, 0]))
        assert not v.applicable and v.inferred_disjoint is None

    def test_invalid_pairs(self):
        sp = SpaceSpec.lp(3, 3)
        with pytest.raises(InvalidPairError):
            classify_pair(sp, el(sp, [1, 2, 0]), el(sp, [2, 4, 0]))
        with pytest.raises(InvalidPairError):
            classify_pair(sp, el(sp, [1, 2, 0]), el(sp, [0, 0, 0]))
        with pytest.raises(InvalidPairError):
            classify_pair(SpaceSpec.lp(4, 3), el(sp, [1, 0, 0]), el(sp, [0, 1, 0]))

    def test_scale_and_sign_invariance(self, rng):
        sp = SpaceSpec.lplq(3, 4, 3, 2)
        for i in range(20):
            x, y = (sample_disjoint_pair if i % 2 else sample_overlapping_tangent_pair)(sp, rng)
            a = classify_pair(sp, x, y)
            b = classify_pair(sp, x * 3.0, y * -0.25)
            assert a.n_double_limit == b.n_double_limit
            assert a.inferred_disjoint == b.inferred_disjoint


class TestSamplers:
    def test_disjoint_pairs(self, rng):
        sp = SpaceSpec.lplq(3, 4, 3, 3)
        for _ in range(50):
            x, y = sample_disjoint_pair(sp, rng)
            assert disjoint(x, y) and np.any(x.coords) and np.any(y.coords)
            nz = np.abs(np.concatenate([x.coords, y.coords]))
            assert np.all((nz == 0) | ((nz >= 0.5) & (nz <= 1.5)))

    def test_tangent_pairs(self, rng):
        sp = SpaceSpec.lplq(2.5, 4, 2, 3)
        for _ in range(50):
            x, y = sample_overlapping_tangent_pair(sp, rng)
            assert not disjoint(x, y)
            _, np0, _, _ = derivatives(NormCurve(x, y), 0.0)
            assert abs(np0) <= 1e-12 * np.linalg.norm(y.coords)

    def test_one_dimensional_space(self, rng):
        with pytest.raises(ValueError):
            sample_overlapping_tangent_pair(SpaceSpec.lp(3, 1), rng)


class TestAudit:
    @pytest.mark.parametrize("text", ["lp:2.5:6", "lp:3:4", "lp:4:6", "lplq:3,4:4x4",
                                      "lplq:4,2.5:3x2", "lplq:2.5,3:2x4"])
    def test_reflecting_spaces(self, text):
        r = reflects_disjointness_audit(SpaceSpec.parse(text), 120, seed=3)
        assert r["misclassified"] == 0
        c = r["confusion"]
        assert c["tp"] == 60 and c["tn"] == 60

    def test_duality_route(self):
        sp = SpaceSpec.lplq(1.5, 1.25, 3, 3)
        r = reflects_disjointness_audit(sp, 100, seed=1)
        assert r["via_duality"] and r["audited_space"]["p"] == pytest.approx(3.0)
        assert r["misclassified"] == 0

    def test_mixed_space_is_caught(self):
        r = reflects_disjointness_audit(SpaceSpec.lplq(1.5, 3, 3, 3), 100, seed=1)
        assert r["confusion"]["fn"] > 0

    def test_report_shape_and_determinism(self):
        sp = SpaceSpec.lplq(3, 4, 2, 2)
        a = reflects_disjointness_audit(sp, 30, seed=9)
        b = reflects_disjointness_audit(sp, 30, seed=9, jobs=2)
        assert dumps(a) == dumps(b)
        d = json.loads(dumps(a))
        assert set(d) >= {"space", "trials", "seed", "confusion", "failures"}
        assert set(d["confusion"]) == {"tp", "tn", "fp", "fn"}

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            reflects_disjointness_audit(SpaceSpec.lp(3, 3), 0, seed=0)


class TestCatalogue:
    SP = SpaceSpec.lplq(1.5, 3, 3, 3)

    def test_clause_e_example(self):
        sp = self.SP
        x = el(sp, [1, 1, 0, 0, 0, 0, 0, 0, 0])
        y = el(sp, [0, 0, 0, 1, 0, 0, 0, 0, 0])
        r = prop44_catalogue(sp, x, y)
        assert r["limit"] == "divergent" and r["clauses"]["e"]["ok"]
        assert r["slope"] == pytest.approx(-0.5, rel=0.15)
        assert r["disjointness_verdict"] == "out of catalogue"

    def test_clause_c_example(self):
        sp = self.SP
        x = el(sp, [1, 0, 0, 0, 0, 0, 0, 0, 0])
        y = el(sp, [0, 1, 0, 0, 0, 0, 0, 0, 0])
        r = prop44_catalogue(sp, x, y)
        assert r["clauses"]["c"]["ok"] and r["disjointness_verdict"] == "disjoint"

    def test_clause_d_bound_is_respected(self):
        sp = self.SP
        x = el(sp, [1, 1, 1, 1, 0, 0, 0, 0, 0])
        y = el(sp, [0.2, -0.1, 0, 0, 0, 0, 0, 0, 0])
        r = prop44_catalogue(sp, x, y)
        d = r["clauses"]["d"]
        assert d["ok"] and d["max_sampled"] <= d["bound"]
        assert bounded_second_derivative_bound(x, y) == d["bound"]

    @pytest.mark.parametrize("clause", ["b", "c", "d", "e"])
    def test_runs(self, clause):
        r = catalogue_run(self.SP, clause, 40, seed=5)
        assert r["correct"] == 40, r["failures"][:1]

    @pytest.mark.parametrize("clause", ["b", "c", "d", "e"])
    def test_samplers_meet_hypotheses(self, clause, rng):
        sp = self.SP
        for _ in range(20):
            x, y = sample_prop44_instance(sp, clause, rng)
            vx = {k for k in range(3) if inner_norm(x, k) > 0}
            vy = {k for k in range(3) if inner_norm(y, k) > 0}
            if clause == "e":
                assert not vy <= vx
            else:
                assert vy <= vx
            if clause == "c":
                assert disjoint(x, y)
            if clause == "d":
                assert all(2 * inner_norm(y, k) < inner_norm(x, k) for k in vx)

    def test_rejects_other_spaces(self):
        sp = SpaceSpec.lplq(3, 4, 2, 2)
        with pytest.raises(ValueError):
            prop44_catalogue(sp, el(sp, [1, 0, 0, 0]), el(sp, [0, 0, 1, 0]))
        with pytest.raises(ValueError):
            sample_prop44_instance(self.SP, "z", np.random.default_rng(0))
