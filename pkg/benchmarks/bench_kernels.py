"""Compare the numba kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--sizes 100 300 600] [--repeat 20] [--fit]

``--fit`` also times one full GPR fit on the default corpus under each backend
(run in a subprocess so ENCENERGY_DISABLE_NUMBA takes effect at import).
"""
import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from encenergy import _accel


def best_of(fn, repeat):
    fn()  # warm-up (JIT compile on first call)
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def bench_kernels(sizes, repeat):
    if not _accel.HAVE_NUMBA:
        print("numba not installed; only the numpy fallback is available")
        return
    rng = np.random.default_rng(0)
    print(f"{'kernel':<20}{'n':>6}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for n in sizes:
        X = rng.normal(size=(n, 9))
        D = _accel.pairwise_distances_numpy(X)
        t = np.sort(rng.uniform(0, 100, size=n * 100))
        p = rng.uniform(5, 30, size=t.size)
        cases = [
            ("pairwise_distances", lambda: _accel.pairwise_distances_numpy(X), lambda: _accel.pairwise_distances_numba(X)),
            ("exp_kernel", lambda: _accel.exp_kernel_numpy(D, 2.0, 1.5, 0.1),
             lambda: _accel.exp_kernel_numba(D, 2.0, 1.5, 0.1)),
            ("trapezoid", lambda: _accel.trapezoid_numpy(t, p), lambda: _accel.trapezoid_numba(t, p)),
        ]
        for name, slow, fast in cases:
            np.testing.assert_allclose(slow(), fast(), rtol=1e-12)
            a, b = best_of(slow, repeat), best_of(fast, repeat)
            print(f"{name:<20}{n:>6}{a * 1e3:>12.3f}{b * 1e3:>12.3f}{a / b:>9.1f}x")


FIT_SNIPPET = """
import time
from encenergy import _accel
from encenergy.gpr import fit
from encenergy.synth import generate_corpus
ds = generate_corpus()
fit(ds.subset(range(60)))
t0 = time.perf_counter()
m = fit(ds)
print(_accel.backend(), round(time.perf_counter() - t0, 3), m.log_likelihood)
"""


def bench_fit():
    for disable in ("0", "1"):
        env = dict(os.environ, ENCENERGY_DISABLE_NUMBA=disable)
        out = subprocess.run([sys.executable, "-c", FIT_SNIPPET], env=env, capture_output=True, text=True, check=True)
        backend, secs, lml = out.stdout.split()
        print(f"full fit, 600 samples: backend={backend:<6} {float(secs):8.2f} s  lml={float(lml):.10g}")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[100, 300, 600])
    ap.add_argument("--repeat", type=int, default=20)
    ap.add_argument("--fit", action="store_true")
    args = ap.parse_args()
    bench_kernels(args.sizes, args.repeat)
    if args.fit:
        bench_fit()


if __name__ == "__main__":
    main()
