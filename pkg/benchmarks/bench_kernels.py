"""Time the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Prints one row per (kernel, size) with the best-of-N wall time of each
backend, the speedup, and the largest absolute difference between outputs.
"""

import argparse
import timeit

import numpy as np

from syncsel.kernels import _pykernels

try:
    from syncsel.kernels import _ckernels
except ImportError:  # extension not built
    _ckernels = None


def simplex(rng, n, C):
    E = rng.exponential(size=(n, C))
    return E / E.sum(axis=1, keepdims=True)


def cases(rng):
    for C in (2, 10, 100):
        U, V = simplex(rng, 100_000, C), simplex(rng, 100_000, C)
        yield f"smp_pair_slack n=1e5 C={C}", "smp_pair_slack", (U, V, 0.5, 0.5 * C**0.5)
    for C in (2, 10, 100):
        Z = rng.normal(scale=3.0, size=(10_000, C))
        P = np.exp(Z - Z.max(axis=1, keepdims=True))
        P /= P.sum(axis=1, keepdims=True)
        yield f"softmax_jacobian_norms n=1e4 C={C}", "softmax_jacobian_norms", (P, 1e-13, 10_000)


def best(fn, args, repeat):
    return min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()
    if _ckernels is None:
        print("compiled extension not available; build with `pip install -e . --no-build-isolation`")
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'case':<40} {'python_s':>10} {'cython_s':>10} {'speedup':>8} {'max_diff':>10}")
    for label, name, a in cases(rng):
        py, cy = getattr(_pykernels, name), getattr(_ckernels, name)
        tp, tc = best(py, a, args.repeat), best(cy, a, args.repeat)
        rp, rc = py(*a), cy(*a)
        rp, rc = (rp[0], rc[0]) if isinstance(rp, tuple) else (rp, rc)
        diff = float(np.abs(np.asarray(rp) - np.asarray(rc)).max())
        print(f"{label:<40} {tp:>10.4f} {tc:>10.4f} {tp / tc:>7.1f}x {diff:>10.2e}")
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
