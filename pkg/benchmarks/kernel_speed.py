"""Throughput comparison: compiled kernels against the numpy fallback.

Times the four scalar-loop kernels at several sizes, then (with
--end-to-end) a full path-solver run in fresh subprocesses with and
without the extension. Run from the repository root:

    python3 benchmarks/kernel_speed.py
    python3 benchmarks/kernel_speed.py --end-to-end
"""

import argparse
import os
import subprocess
import sys
import time

import numpy as np

from ell1._accel import reference

try:
    from ell1._accel import _fastkernels
except ImportError:
    _fastkernels = None


def best_of(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_elementwise(mod, n, repeats):
    rng = np.random.default_rng(0)
    u = np.ascontiguousarray(rng.standard_normal(n))
    soft = best_of(lambda: mod.soft_threshold(u, 0.3), repeats)
    proj = best_of(lambda: mod.project_box_linf(u), repeats)
    return soft, proj

def bench_factor_ops(mod, m, repeats):
    rng = np.random.default_rng(1)
    M = rng.standard_normal((m, m))
    R0 = np.linalg.cholesky(M @ M.T + m * np.eye(m)).T.copy()
    v0 = rng.standard_normal(m)

    def one_update():
        mod.chol_update(R0.copy(), v0.copy())

    def one_downdate():
        R = R0.copy()
        v = v0.copy()
        mod.chol_update(R, v.copy())
        mod.chol_downdate(R, v0.copy())

    return best_of(one_update, repeats), best_of(one_downdate, repeats)


def run_kernel_table(repeats):
    rows = []
    for n in (1000, 10000, 100000):
        r_soft, r_proj = bench_elementwise(reference, n, repeats)
        f_soft, f_proj = bench_elementwise(_fastkernels, n, repeats)
        rows.append(("soft_threshold n=%d" % n, r_soft, f_soft))
        rows.append(("project_box_linf n=%d" % n, r_proj, f_proj))
    for m in (25, 100, 400):
        r_up, r_down = bench_factor_ops(reference, m, repeats)
        f_up, f_down = bench_factor_ops(_fastkernels, m, repeats)
        rows.append(("chol_update m=%d" % m, r_up, f_up))
        rows.append(("chol_update+downdate m=%d" % m, r_down, f_down))
    print("%-28s %12s %12s %9s" % ("kernel", "fallback", "compiled",
                                   "speedup"))
    for name, slow, fast in rows:
        print("%-28s %10.2fus %10.2fus %8.1fx"
              % (name, slow * 1e6, fast * 1e6, slow / fast))


_E2E = (
    "import time\n"
    "import ell1\n"
    "from ell1.homotopy import homotopy_solve\n"
    "from ell1.model import SolverConfig\n"
    "from ell1.synth import GenSpec, make_instance\n"
    # noise pushes the path through many support leave events, the case
    # where the factor kernels carry real per-breakpoint work
    "P = make_instance(GenSpec(n=2000, d=600, k=120, seed=5,\n"
    "                          noise_sigma=0.05))\n"
    "cfg = SolverConfig(tol=1e-8, max_iter=4000)\n"
    "homotopy_solve(P, 0.0, cfg)\n"  # warm the caches
    "t0 = time.perf_counter()\n"
    "res = homotopy_solve(P, 0.0, cfg)\n"
    "print('%s %d %.4f' % (ell1.kernels_compiled, res.iterations,\n"
    "                      time.perf_counter() - t0))\n")


def run_end_to_end():
    print("\npath solver, n=2000 d=600 k=120 noisy, best of 1 after "
          "warmup:")
    for label, env in (("compiled", {}), ("fallback", {"ELL1_NO_EXT": "1"})):
        proc = subprocess.run([sys.executable, "-c", _E2E],
                              env=dict(os.environ, **env),
                              capture_output=True, text=True, timeout=600)
        if proc.returncode != 0:
            print("  %s: FAILED\n%s" % (label, proc.stderr))
            continue
        flag, iters, seconds = proc.stdout.split()
        print("  %-9s kernels_compiled=%-5s breakpoints=%s  %ss"
              % (label, flag, iters, seconds))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=7)
    ap.add_argument("--end-to-end", action="store_true",
                    help="also time a full path-solver run per backend")
    args = ap.parse_args()
    if _fastkernels is None:
        print("compiled extension is not built; nothing to compare "
              "(the package runs on the numpy fallback)")
        return
    run_kernel_table(args.repeats)
    if args.end_to_end:
        run_end_to_end()


if __name__ == "__main__":
    main()
