"""Compiled vs numpy kernels.

Kernel timings call both implementations in-process. The end-to-end
``integrate`` timing needs the backend fixed at import, so each backend runs
in its own interpreter with TOPODYN_DISABLE_NUMBA set accordingly.

    python benchmarks/bench_kernels.py [--n 30 100 300] [--repeat 5]
"""
import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from topodyn import _accel, kernels

_E2E = """
import json, time
from topodyn import SimConfig, integrate, kernels
from topodyn.io import random_opinions
from topodyn.topology import OpinionState
s = OpinionState.from_values(random_opinions({n}, 0), 3)
integrate(OpinionState.from_values(random_opinions(8, 1), 3), SimConfig(t_max=1.0))  # compile
t = time.perf_counter()
tr = integrate(s, SimConfig(t_max={t_max}))
print(json.dumps({{"backend": kernels.BACKEND, "seconds": time.perf_counter() - t, "t_final": tr.t_final}}))
"""


def best(fn, repeat):
    fn()
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(sizes, k, repeat):
    rng = np.random.default_rng(0)
    nb, npy = kernels.IMPLS["numba"], kernels.IMPLS["numpy"]
    print(f"{'n':>6} {'kernel':<18} {'numba [ms]':>11} {'numpy [ms]':>11} {'speedup':>8}")
    for n in sizes:
        x = rng.uniform(size=n)
        nbr, deg = nb["interaction_table"](x, kernels.MODEL_KNN, k, 0.0)
        cases = {
            "knn_table": lambda impl: impl["knn_table"](x, k),
            "interaction_table": lambda impl: impl["interaction_table"](x, kernels.MODEL_KNN, k, 0.0),
            "field": lambda impl: impl["field"](x, nbr, deg),
        }
        for name, call in cases.items():
            a = best(lambda: call(nb), repeat) * 1e3
            b = best(lambda: call(npy), repeat) * 1e3
            print(f"{n:>6} {name:<18} {a:>11.4f} {b:>11.4f} {b / a:>7.1f}x")


def bench_integrate(n, t_max):
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, TOPODYN_DISABLE_NUMBA=flag)
        r = subprocess.run([sys.executable, "-c", _E2E.format(n=n, t_max=t_max)],
                           env=env, capture_output=True, text=True, check=True)
        doc = json.loads(r.stdout.strip().splitlines()[-1])
        out[doc["backend"]] = doc
    nb, npy = out["numba"]["seconds"], out["numpy"]["seconds"]
    print(f"\nintegrate n={n}, k=3, t_max={t_max}: numba {nb:.3f} s, numpy {npy:.3f} s, "
          f"speedup {npy / nb:.1f}x (t_final {out['numba']['t_final']:.4g})")


def main():
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, nargs="+", default=[30, 100, 300])
    p.add_argument("--k", type=int, default=3)
    p.add_argument("--repeat", type=int, default=5)
    p.add_argument("--integrate-n", type=int, default=30)
    p.add_argument("--t-max", type=float, default=5.0)
    args = p.parse_args()
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    bench_kernels(args.n, args.k, args.repeat)
    bench_integrate(args.integrate_n, args.t_max)


if __name__ == "__main__":
    main()
