import json
import subprocess
import sys

import numpy as np
import pytest

from contraproj.characterize import SubspaceBasis, synthesize_projection
from contraproj.cli import main
from contraproj.spaces import SpaceSpec


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


class TestProbe:
    def test_audit(self, tmp_path, capsys):
        out = tmp_path / "a.json"
        code, text, _ = run(["probe", "--space", "lplq:3,4:2x2", "--audit", "--trials", "40",
                             "--seed", "7", "--out", str(out)], capsys)
        assert code == 0 and "fp=0 fn=0" in text
        rep = json.loads(out.read_text())
        assert rep["audit"]["confusion"]["fp"] == 0
        assert rep["config"]["seed"] == 7 and rep["config"]["tol_support"] == 1e-10
        assert rep["backend"] in ("cython", "python")

    def test_audit_on_mixed_space_is_not_an_error(self, capsys):
        code, text, _ = run(["probe", "--space", "lplq:1.5,3:2x2", "--audit", "--trials", "20"], capsys)
        assert code == 0 and "fn=" in text

    def test_pairs(self, tmp_path, capsys):
        pairs = write(tmp_path / "p.json", [{"x": [1, 0, 0, 0], "y": [0, 0, 1, 0]},
                                            {"x": [1, 1, 0, 0], "y": [1, -1, 0, 0]}])
        code, text, _ = run(["probe", "--space", "lplq:3,4:2x2", "--pairs", pairs, "--json"], capsys)
        assert code == 0
        rep = json.loads(text)
        assert [v["verdict"]["inferred_disjoint"] for v in rep["verdicts"]] == [True, False]

    def test_pairs_in_mixed_space_carry_catalogue(self, tmp_path, capsys):
        pairs = write(tmp_path / "p.json", {"pairs": [{"x": [1, 0, 0, 0], "y": [0, 0, 1, 0]}]})
        code, text, _ = run(["probe", "--space", "lplq:1.5,3:2x2", "--pairs", pairs, "--json"], capsys)
        rep = json.loads(text)
        assert rep["verdicts"][0]["catalogue"]["clauses"]["e"]["ok"]

    def test_curve_csv(self, tmp_path, capsys):
        x = write(tmp_path / "x.json", [1, 0])
        y = write(tmp_path / "y.json", {"coords": [0, 1]})
        csv = tmp_path / "c.csv"
        code, text, _ = run(["probe", "--space", "lplq:1.5,3:2x1", "--curve", x, y, "--csv", str(csv),
                             "--points", "5"], capsys)
        assert code == 0
        lines = csv.read_text().splitlines()
        assert lines[0] == "alpha,N,N_prime,N_double_prime" and len(lines) == 6
        assert lines[3].split(",")[0] == "0.0" and lines[3].endswith(",inf")

    def test_clause(self, capsys):
        code, text, _ = run(["probe", "--space", "lplq:1.5,3:3x3", "--clause", "e", "--trials", "10"], capsys)
        assert code == 0 and "10/10" in text

    @pytest.mark.parametrize("argv", [
        ["probe", "--space", "lplq:3,4:2x2"],
        ["probe", "--space", "nonsense", "--audit"],
        ["probe", "--audit"],
        ["probe", "--space", "lp:3:3", "--audit", "--trials", "0"],
        ["probe", "--space", "lp:3:3", "--pairs", "/nonexistent.json"],
        ["frobnicate"],
    ])
    def test_input_errors(self, argv, capsys):
        code, _, err = run(argv, capsys)
        assert code == 2

    def test_collinear_pair_is_input_error(self, tmp_path, capsys):
        pairs = write(tmp_path / "p.json", [{"x": [1, 0, 0], "y": [2, 0, 0]}])
        code, _, err = run(["probe", "--space", "lp:3:3", "--pairs", pairs], capsys)
        assert code == 2 and "span" in err


class TestCheckProjection:
    def test_identity(self, tmp_path, capsys):
        m = write(tmp_path / "m.json", np.eye(4).tolist())
        code, text, _ = run(["check-projection", "--space", "lplq:3,4:2x2", "--matrix", m], capsys)
        assert code == 0 and "all checks pass" in text

    def test_not_a_projection(self, tmp_path, capsys):
        m = write(tmp_path / "m.json", (2 * np.eye(4)).tolist())
        code, _, err = run(["check-projection", "--space", "lplq:3,4:2x2", "--matrix", m], capsys)
        assert code == 2 and "not a projection" in err

    def test_bad_shape(self, tmp_path, capsys):
        m = write(tmp_path / "m.json", np.eye(3).tolist())
        code, _, _ = run(["check-projection", "--space", "lplq:3,4:2x2", "--matrix", m], capsys)
        assert code == 2

    def test_space_conflict(self, tmp_path, capsys):
        sp = SpaceSpec.lplq(3, 4, 2, 2)
        m = write(tmp_path / "m.json", {"space": sp.to_dict(), "matrix": np.eye(4).tolist()})
        code, _, _ = run(["check-projection", "--space", "lplq:3,3:2x2", "--matrix", m], capsys)
        assert code == 2

    def test_synthesized_and_trace(self, tmp_path, capsys):
        P = synthesize_projection(SubspaceBasis(SpaceSpec.lplq(3, 4, 2, 2), ([1, 0, 1, 0], [0, 1, 0, -1])))
        m = write(tmp_path / "m.json", P.to_dict())
        csv = tmp_path / "t.csv"
        code, text, _ = run(["check-projection", "--matrix", m, "--csv", str(csv), "--json"], capsys)
        rep = json.loads(text)
        assert code == 0 and rep["failed"] == [] and rep["averaging_form"]["localized"]
        assert csv.read_text().startswith("iteration,value")

    def test_mixed_case_checks(self, tmp_path, capsys):
        sp = SpaceSpec.lplq(1.5, 3, 3, 2)
        P = synthesize_projection(SubspaceBasis(sp, ([1, 0, 2, 0, 0, 0], [0, 1, 0, -2, 0, 0])))
        m = write(tmp_path / "m.json", P.to_dict())
        code, text, _ = run(["check-projection", "--matrix", m, "--json", "--trials", "30"], capsys)
        rep = json.loads(text)
        assert code == 0
        assert rep["mixed_case"]["annihilation"]["violations"] == []

    def test_non_contractive_is_a_finding(self, tmp_path, capsys):
        M = [[1, 1, 0, 0], [0, 0, 0, 0], [0, 0, 1, 0], [0, 0, 0, 1]]
        m = write(tmp_path / "m.json", M)
        code, text, _ = run(["check-projection", "--space", "lplq:3,4:2x2", "--matrix", m], capsys)
        assert code == 1 and "failed: contractive" in text

    def test_non_semi_band_operator_is_not_contractive(self, tmp_path, capsys):
        # e1 -> e1, e2 -> e1 has norm 2^(2/3) on l_3^2, so it fails as non-contractive
        m = write(tmp_path / "m.json", [[1, 1], [0, 0]])
        code, text, _ = run(["check-projection", "--space", "lp:3:2", "--matrix", m, "--json"], capsys)
        rep = json.loads(text)
        assert code == 1 and rep["norm_estimate"]["value"] == pytest.approx(2 ** (2 / 3), rel=1e-9)


class TestCheckSubspace:
    def test_compliant_pair(self, tmp_path, capsys):
        b = write(tmp_path / "b.json", [[1, 0, 1, 0], [0, 1, 0, -1]])
        code, text, _ = run(["check-subspace", "--space", "lplq:3,4:2x2", "--basis", b], capsys)
        assert code == 0
        assert "given basis compliant: True" in text and "subspace has a compliant basis: True" in text

    def test_hidden_compliant(self, tmp_path, capsys):
        b = write(tmp_path / "b.json", [[1, 0, 1, 0], [1, 0, -1, 0]])
        code, text, _ = run(["check-subspace", "--space", "lplq:3,4:2x2", "--basis", b], capsys)
        assert code == 0
        assert "given basis compliant: False" in text and "subspace has a compliant basis: True" in text

    def test_min_norm(self, tmp_path, capsys):
        b = write(tmp_path / "b.json", [[1, 1, 0, 0], [0, 1, 1, 0]])
        code, text, _ = run(["check-subspace", "--space", "lplq:3,4:2x2", "--basis", b, "--min-norm",
                             "--json"], capsys)
        rep = json.loads(text)
        assert code == 0 and not rep["search"]["compliant"]
        assert rep["min_projection_norm"]["lower"] > 1 + 1e-6

    def test_dependent(self, tmp_path, capsys):
        b = write(tmp_path / "b.json", [[1, 0, 1, 0], [2, 0, 2, 0]])
        code, _, _ = run(["check-subspace", "--space", "lplq:3,4:2x2", "--basis", b], capsys)
        assert code == 2


class TestHunt:
    def test_jsonl(self, tmp_path, capsys):
        out = tmp_path / "h.jsonl"
        code, text, _ = run(["hunt", "--space", "lplq:3,4:2x2", "--trials", "6", "--seed", "3",
                             "--out", str(out)], capsys)
        assert code == 0 and "0 contradictions" in text
        lines = out.read_text().splitlines()
        assert len(lines) == 7
        header = json.loads(lines[0])
        assert header["config"]["command"] == "hunt"
        for line in lines[1:]:
            rec = json.loads(line)
            assert {"trial", "Y_basis", "min_norm", "compliant", "consistent"} <= set(rec)

    def test_json_summary(self, capsys):
        code, text, _ = run(["hunt", "--space", "lplq:2,2:2x2", "--trials", "4", "--json"], capsys)
        rep = json.loads(text)
        assert code == 0 and rep["contradictions"] == 0 and "records" not in rep


def test_console_entry_point():
    out = subprocess.run([sys.executable, "-m", "contraproj.cli", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and "contraproj" in out.stdout
