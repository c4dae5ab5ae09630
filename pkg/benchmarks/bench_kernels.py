"""Compare the numba and pure-numpy kernels on the explicit right-hand side and the mollifier.

    python benchmarks/bench_kernels.py [--repeat 20]

Run with PLMODICA_DISABLE_NUMBA=1 to confirm the fallback imports cleanly
(only the numpy rows are printed then).
"""

import argparse
import time

import numpy as np

from plmodica import kernels
from plmodica.grid import bump_kernel


def best_of(fn, repeat):
    fn()  # warm-up (jit compile on first call)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases():
    rng = np.random.default_rng(0)
    for shape in [(4097,), (257, 257), (513, 513)]:
        u = rng.uniform(-1, 1, shape)
        yield f"rhs {shape}", "rhs", (u, u**3 - u, 0.05, 1.5, 0.1, False)
    for shape, n in [((4097,), 1), ((257, 257), 2)]:
        w = bump_kernel(0.25, 0.05, n)
        padded = rng.normal(size=tuple(s + w.shape[0] - 1 for s in shape))
        yield f"mollify {shape} W={w.shape[0]}", "convolve", (padded, w)


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=20)
    args = ap.parse_args()
    print(f"backend available: {kernels.BACKEND}")
    print(f"{'case':32s} {'numpy ms':>10s} {'numba ms':>10s} {'speedup':>8s} {'max diff':>10s}")
    for name, kind, argv in cases():
        np_fn = getattr(kernels, f"numpy_{kind}")
        t_np = best_of(lambda: np_fn(*argv), args.repeat)
        if kernels.HAVE_NUMBA:
            nb_fn = getattr(kernels, f"numba_{kind}")
            t_nb = best_of(lambda: nb_fn(*argv), args.repeat)
            a, b = np_fn(*argv), nb_fn(*argv)
            if kind == "rhs":
                a, b = a[0], b[0]
            diff = float(np.max(np.abs(a - b)))
            print(f"{name:32s} {1e3 * t_np:10.3f} {1e3 * t_nb:10.3f} {t_np / t_nb:8.2f} {diff:10.2e}")
        else:
            print(f"{name:32s} {1e3 * t_np:10.3f} {'-':>10s} {'-':>8s} {'-':>10s}")


if __name__ == "__main__":
    main()
