"""Compare the compiled and pure-Python stepping kernels.

Run ``python3 benchmarks/bench_kernels.py`` from the repository root.  For
each matrix size the script times one batched exponential with inverse, one
Geometric update and the elliptic noise combination on both backends, checks
that they agree, and prints the speed-up of the compiled kernels.
"""
import argparse
import time

import numpy as np

from gltau.kernels import get_backend


def _timeit(fn, repeat):
    fn()  # warm-up
    best = float("inf")
    for _ in range(repeat):
        start = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - start)
    return best


def _inputs(n, batch, seed=0):
    rng = np.random.default_rng(seed)
    r1 = rng.standard_normal((batch, n, n))
    r2 = rng.standard_normal((batch, n, n))
    g = np.broadcast_to(np.eye(n, dtype=complex), (batch, n, n)).copy()
    return r1, r2, g


def _update(module, g, x):
    gg, gi = g.copy(), g.copy()
    module.expm_update(gg, gi, x, True)  # updates in place
    return gg, gi


def bench(sizes, batch, repeat):
    try:
        compiled = get_backend("compiled")
    except ImportError:
        print("compiled extension not built; nothing to compare")
        return []
    python = get_backend("python")
    h = 1e-2
    ca, cb = 1j * 0.8 * np.sqrt(h / 2), -0.6 * np.sqrt(h / 2)
    rows = []
    for n in sizes:
        r1, r2, g = _inputs(n, batch)
        x = python.elliptic_combine(r1, r2, ca, cb)
        for name, fn in (
            ("elliptic_combine", lambda m: m.elliptic_combine(r1, r2, ca, cb)),
            ("expm_batch", lambda m: m.expm_batch(x, True)),
            ("expm_update", lambda m: _update(m, g, x)),
        ):
            ref = fn(python)
            got = fn(compiled)
            ref = ref if isinstance(ref, tuple) else (ref,)
            got = got if isinstance(got, tuple) else (got,)
            err = max(float(np.abs(a - b).max()) for a, b in zip(ref, got))
            tp = _timeit(lambda: fn(python), repeat)
            tc = _timeit(lambda: fn(compiled), repeat)
            rows.append((n, name, tp, tc, tp / tc, err))
            print(f"N={n:4d} {name:17s} python {tp * 1e3:9.3f} ms  compiled {tc * 1e3:9.3f} ms  "
                  f"speed-up {tp / tc:5.2f}x  max diff {err:.1e}", flush=True)
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--sizes", type=int, nargs="+", default=[4, 8, 16, 32, 64, 128])
    ap.add_argument("--batch", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args(argv)
    bench(args.sizes, args.batch, args.repeat)


if __name__ == "__main__":
    main()
