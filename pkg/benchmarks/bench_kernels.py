"""Compiled vs. numpy kernels.

    python3 benchmarks/bench_kernels.py [--repeat N]

Kernel timings call both backend modules directly.  The operator-norm row
runs in a subprocess per backend, since the backend is fixed at import.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from contraproj import _pykernels

try:
    from contraproj import _ckernels
except ImportError:
    _ckernels = None

SHAPES = [(2, 2), (4, 4), (8, 8)]
P, Q = 3.0, 4.0

OPNORM_SNIPPET = """
import json, time
import numpy as np
from contraproj import kernels
from contraproj.characterize import SubspaceBasis, synthesize_projection
from contraproj.projections import operator_norm
from contraproj.spaces import SpaceSpec
sp = SpaceSpec.lplq(3, 4, 3, 3)
P = synthesize_projection(SubspaceBasis(sp, ([1, 0, 0, 1, 0, 0, 0, 0, 0], [0, 1, 0, 0, -1, 0, 0, 0, 0])))
operator_norm(P, restarts=4)
t = time.perf_counter()
operator_norm(P, restarts=64)
print(json.dumps({"backend": kernels.BACKEND, "seconds": time.perf_counter() - t}))
"""


def bench(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.05:
        number *= 4
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def kernel_rows(repeat):
    rng = np.random.default_rng(0)
    rows = []
    for m, n in SHAPES:
        d = m * n
        x = rng.normal(size=d)
        M = rng.normal(size=(d, d)) / d
        cases = {
            "block_norm": lambda k: k.block_norm(x, m, n, P, Q),
            "block_gradient": lambda k: k.block_gradient(x, m, n, P, Q),
            "ascend": lambda k: k.ascend(M, x, m, n, P, Q, 200, 1e-12, 50),
        }
        for name, call in cases.items():
            py = bench(lambda: call(_pykernels), repeat)
            cy = bench(lambda: call(_ckernels), repeat) if _ckernels else float("nan")
            rows.append((name, f"{m}x{n}", py, cy))
    return rows


def opnorm_rows():
    out = {}
    for label, env in (("python", "1"), ("cython", "0")):
        res = subprocess.run([sys.executable, "-c", OPNORM_SNIPPET], capture_output=True, text=True,
                             env={**os.environ, "CONTRAPROJ_PURE_PYTHON": env}, check=True)
        rec = json.loads(res.stdout)
        out[label] = rec["seconds"] if rec["backend"] == label else float("nan")
    return [("operator_norm x64", "3x3", out["python"], out["cython"])]


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not built; only the numpy column is meaningful")
    print(f"{'kernel':<20}{'shape':>6}{'python (s)':>14}{'cython (s)':>14}{'speedup':>10}")
    for name, shape, py, cy in kernel_rows(args.repeat) + opnorm_rows():
        print(f"{name:<20}{shape:>6}{py:>14.3e}{cy:>14.3e}{py / cy:>9.1f}x")


if __name__ == "__main__":
    main()
