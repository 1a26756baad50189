"""contraproj command line: probe, check-projection, check-subspace, hunt.

Exit codes: 0 pass, 1 a property failed (a finding), 2 usage or input error.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import __version__, kernels
from .characterize import (InvalidBasisError, SubspaceBasis, check_basis, find_compliant_basis,
                           hunt, min_projection_norm, synthesize_projection)
from .disjointness import (InvalidPairError, catalogue_run, classify_pair, prop44_catalogue,
                           reflects_disjointness_audit)
from .normcalc import NormCurve, curvature, curve_table, write_curve_csv
from .projections import (NotAProjectionError, ProjectionOperator, annihilation_check,
                          ascent_trace, extract_averaging_form, is_contractive, range_block_basis,
                          semi_band_preserving, separation_search, support_absorption_check,
                          support_family, write_trace_csv)
from .spaces import SUPPORT_TOL, Element, SpaceSpec, vector_support
from .util import dumps, trial_rng

EXIT_OK, EXIT_FINDING, EXIT_INPUT = 0, 1, 2


class InputError(Exception):
    pass


def _load_json(path):
    try:
        with open(path) as fh:
            return json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise InputError(f"cannot read {path}: {exc}") from None


def _space(args, payload=None):
    if payload is not None and isinstance(payload, dict) and "space" in payload:
        sp = SpaceSpec.from_dict(payload["space"])
        if args.space is not None and SpaceSpec.parse(args.space) != sp:
            raise InputError("--space disagrees with the space recorded in the input file")
        return sp
    if args.space is None:
        raise InputError("--space is required")
    return SpaceSpec.parse(args.space)


def _element(space, obj):
    coords = obj["coords"] if isinstance(obj, dict) else obj
    return Element(space, coords)


def _config(args):
    cfg = {k: v for k, v in vars(args).items() if k != "func"}
    cfg["tol_support"] = SUPPORT_TOL
    return cfg


def _emit(args, report, default_lines=()):
    report = {"config": _config(args), "version": __version__, "backend": kernels.BACKEND, **report}
    text = dumps(report, indent=1)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
    if args.json:
        print(text)
    else:
        for line in default_lines:
            print(line)


def _reflecting(space):
    if space.kind == "sumpq":
        return space.p > 2 and space.q > 2
    p, q = space.p, space.inner_exponent
    return (p > 2 and q > 2) or (p < 2 and q < 2)


# -- probe ------------------------------------------------------------------------------

def cmd_probe(args):
    space = _space(args)
    if args.audit:
        rep = reflects_disjointness_audit(space, args.trials, args.seed, args.jobs)
        c = rep["confusion"]
        _emit(args, {"audit": rep}, [
            f"audit {space}: tp={c['tp']} tn={c['tn']} fp={c['fp']} fn={c['fn']} "
            f"inconclusive={rep['inconclusive']} inapplicable={rep['inapplicable']}"])
        return EXIT_FINDING if rep["misclassified"] and _reflecting(space) else EXIT_OK
    if args.clause:
        rep = catalogue_run(space, args.clause, args.trials, args.seed, args.jobs)
        _emit(args, {"catalogue": rep},
              [f"clause {args.clause}: {rep['correct']}/{rep['trials']} as predicted"])
        return EXIT_OK if rep["correct"] == rep["trials"] else EXIT_FINDING
    if args.curve:
        x = _element(space, _load_json(args.curve[0]))
        y = _element(space, _load_json(args.curve[1]))
        alphas = np.linspace(-args.radius, args.radius, args.points)
        curve = NormCurve(x, y)
        rows = curve_table(curve, alphas)
        if args.csv:
            with open(args.csv, "w", newline="") as fh:
                write_curve_csv(curve, alphas, fh)
        keys = ("alpha", "N", "N_prime", "N_double_prime")
        rep = {"curve": [dict(zip(keys, r)) for r in rows],
               "verdict": classify_pair(space, x, y).to_dict()}
        try:
            rep["curvature"] = curvature(x, y).to_dict()
        except ValueError as exc:
            rep["curvature"] = {"error": str(exc)}
        _emit(args, rep, [f"{len(rows)} rows" + (f" written to {args.csv}" if args.csv else ""),
                          f"limit: {rep['verdict']['N_double_limit']}"])
        return EXIT_OK
    if args.pairs:
        data = _load_json(args.pairs)
        pairs = data["pairs"] if isinstance(data, dict) else data
        out = []
        mixed = space.kind == "lplq" and 1 < space.p < 2 and space.q > 2
        for i, pr in enumerate(pairs):
            x, y = _element(space, pr["x"]), _element(space, pr["y"])
            rec = {"index": i, "verdict": classify_pair(space, x, y).to_dict()}
            if mixed:
                rec["catalogue"] = prop44_catalogue(space, x, y)
            out.append(rec)
        _emit(args, {"verdicts": out},
              [f"pair {r['index']}: limit={r['verdict']['N_double_limit']} "
               f"inferred_disjoint={r['verdict']['inferred_disjoint']} "
               f"truth={r['verdict']['ground_truth_disjoint']}" for r in out])
        return EXIT_OK
    raise InputError("probe needs one of --audit, --clause, --curve or --pairs")


# -- check-projection -------------------------------------------------------------------

def _load_operator(args):
    data = _load_json(args.matrix)
    space = _space(args, data)
    M = data["matrix"] if isinstance(data, dict) else data
    try:
        return ProjectionOperator(space, np.array(M, dtype=float))
    except (ValueError, TypeError) as exc:
        raise InputError(f"bad matrix: {exc}") from None


def cmd_check_projection(args):
    P = _load_operator(args)
    space = P.space
    defect = P.idempotence_defect()
    if defect > args.tol_idem:
        raise InputError(f"not a projection: idempotence defect {defect:.3g}")
    ok, est = is_contractive(P, args.tol_contractive, args.restarts, args.seed, args.tol_idem,
                             args.jobs)
    rep = {"idempotence_defect": defect, "idempotent": True, "contractive": ok,
           "norm_estimate": est.to_dict()}
    sb = semi_band_preserving(P)
    form = extract_averaging_form(P)
    bb = range_block_basis(P)
    rep["semi_band"] = sb.to_dict()
    rep["averaging_form"] = None if form is None else form.to_dict()
    rep["block_basis"] = None if bb is None else [u.coords.tolist() for u in bb]
    failed = [] if ok else ["contractive"]
    if ok:
        failed += [k for k, bad in (("semi_band", not sb.holds),
                                     ("averaging_form", form is None or not form.localized),
                                     ("block_basis", bb is None)) if bad]
        if space.is_block and 1 < space.p < 2:
            ann = annihilation_check(P, args.trials, args.seed)
            absb = support_absorption_check(P, args.trials, args.seed)
            fam = support_family(P, seed=args.seed)
            rep["mixed_case"] = {"annihilation": ann, "support_absorption": absb,
                                 "support_family": fam.to_dict(),
                                 "separation": separation_search(fam)}
            failed += [k for k, bad in (("annihilation", ann["violations"]),
                                         ("support_absorption", absb["violations"]),
                                         ("support_family", fam.closure_failures)) if bad]
    if args.csv:
        x0 = trial_rng(args.seed, 0).normal(size=space.dim)
        write_trace_csv(args.csv, ascent_trace(P, x0))
    rep["failed"] = failed
    _emit(args, rep, [f"operator norm >= {est.value:.12g} ({est.certificate})",
                      f"contractive: {ok}", f"semi-band preserving: {sb.holds}",
                      f"averaging form: {form is not None}", f"block basis: {bb is not None}",
                      "all checks pass" if not failed else "failed: " + ", ".join(failed)])
    return EXIT_OK if not failed else EXIT_FINDING


# -- check-subspace ---------------------------------------------------------------------

def cmd_check_subspace(args):
    data = _load_json(args.basis)
    space = _space(args, data)
    vecs = data["vectors"] if isinstance(data, dict) else data
    try:
        basis = SubspaceBasis(space, tuple(Element(space, v) for v in vecs))
    except (InvalidBasisError, ValueError) as exc:
        raise InputError(str(exc)) from None
    given = check_basis(basis)
    found = find_compliant_basis(basis)
    rep = {"given_basis": given.to_dict(), "search": found.to_dict(),
           "vector_supports": [sorted(vector_support(v)) for v in basis.vectors]}
    code = EXIT_OK
    if found.compliant:
        P = synthesize_projection(found.witness_basis)
        ok, est = is_contractive(P, args.tol_contractive, args.restarts, args.seed, args.tol_idem)
        rep["synthesized"] = {"operator": P.to_dict(), "contractive": ok, "norm_estimate": est.to_dict()}
        code = EXIT_OK if ok else EXIT_FINDING
    if args.min_norm:
        mn = min_projection_norm(space, basis, seed=args.seed)
        rep["min_projection_norm"] = mn.to_dict()
    lines = [f"given basis compliant: {given.compliant}"]
    lines += [f"  vectors {i},{j}: {clause}" for i, j, clause in given.violations]
    lines.append(f"subspace has a compliant basis: {found.compliant}")
    if "synthesized" in rep:
        lines.append(f"synthesized projection contractive: {rep['synthesized']['contractive']}")
    _emit(args, rep, lines)
    return code


# -- hunt -------------------------------------------------------------------------------

def cmd_hunt(args):
    space = _space(args)
    rep = hunt(space, args.dim, args.trials, args.seed, args.jobs)
    header = {"config": _config(args), "version": __version__, "backend": kernels.BACKEND}
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(dumps(header) + "\n")
            for r in rep["records"]:
                fh.write(dumps(r) + "\n")
    summary = {k: v for k, v in rep.items() if k != "records"}
    cands = sum(1 for r in rep["records"] if r["candidate"])
    comp = sum(1 for r in rep["records"] if r["compliant"])
    if args.json:
        print(dumps({**header, **summary}, indent=1))
    else:
        print(f"hunt {space}: {args.trials} trials, {cands} norm-one candidates, "
              f"{comp} compliant, {rep['contradictions']} contradictions, "
              f"{rep['undetermined']} undetermined")
    return EXIT_OK if rep["contradictions"] == 0 else EXIT_FINDING


# -- parser -----------------------------------------------------------------------------

def _common(p, randomized=True):
    p.add_argument("--space", help="lp:<p>:<n>, lplq:<p>,<q>:<m>x<n> or sumpq:<p>,<q>:<n>")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--tol-contractive", type=float, default=1e-6)
    p.add_argument("--tol-idem", type=float, default=1e-9)
    p.add_argument("--out", help="write the JSON report here")
    p.add_argument("--csv", help="CSV output (curve table or ascent trace)")
    p.add_argument("--json", action="store_true", help="print the JSON report on stdout")


def build_parser():
    ap = argparse.ArgumentParser(prog="contraproj", description=__doc__.splitlines()[0])
    ap.add_argument("--version", action="version", version=f"%(prog)s {__version__} ({kernels.BACKEND})")
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("probe", help="second-derivative disjointness probes")
    _common(p)
    p.add_argument("--audit", action="store_true", help="run the reflects-disjointness audit")
    p.add_argument("--clause", choices=list("bcde"), help="run the mixed-exponent catalogue for one clause")
    p.add_argument("--pairs", help="JSON list of {x, y} pairs")
    p.add_argument("--curve", nargs=2, metavar=("X", "Y"), help="JSON files holding x and y")
    p.add_argument("--radius", type=float, default=0.5)
    p.add_argument("--points", type=int, default=101)
    p.set_defaults(func=cmd_probe)

    p = sub.add_parser("check-projection", help="contractiveness and structure of a projection")
    _common(p)
    p.add_argument("--matrix", required=True, help="operator JSON {space, matrix} or a bare matrix")
    p.add_argument("--restarts", type=int, default=64)
    p.set_defaults(func=cmd_check_projection)

    p = sub.add_parser("check-subspace", help="compliant-basis test for a subspace")
    _common(p)
    p.add_argument("--basis", required=True, help="JSON {space, vectors} or a bare list of vectors")
    p.add_argument("--restarts", type=int, default=64)
    p.add_argument("--min-norm", action="store_true", help="also compute the minimal projection norm")
    p.set_defaults(func=cmd_check_subspace)

    p = sub.add_parser("hunt", help="random subspaces vs. the characterization")
    _common(p)
    p.add_argument("--dim", type=int, default=2, help="largest subspace dimension")
    p.set_defaults(func=cmd_hunt)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_INPUT if exc.code not in (0, None) else EXIT_OK
    if args.trials < 1 or args.jobs < 1:
        print("error: --trials and --jobs must be positive", file=sys.stderr)
        return EXIT_INPUT
    if args.tol_contractive <= 0 or args.tol_idem <= 0:
        print("error: tolerances must be positive", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, NotAProjectionError, InvalidPairError, InvalidBasisError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
