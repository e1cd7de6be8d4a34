"""Time the compiled kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--agents 10] [--rows 30] [--features 200]

Prints the best-of-`repeat` time per call for each kernel and backend and
the speedup of the compiled core. Shapes default to the P1 acceptance
instance.
"""

import argparse
import sys
import timeit

import numpy as np

from admmnet import _fallback, backend


def _inputs(rng, N, M, K):
    A3 = 0.02 * rng.standard_normal((N, M, K))
    labels = np.where(rng.random((N, M)) < 0.5, -1.0, 1.0)
    Y = 0.1 * rng.standard_normal((N, K))
    P = 0.1 * rng.standard_normal((N, K))
    # ring plus chords: degree 4
    nbrs = [sorted({(i - 1) % N, (i + 1) % N, (i - 2) % N, (i + 2) % N} - {i}) for i in range(N)]
    indptr = np.concatenate([[0], np.cumsum([len(n) for n in nbrs])]).astype(np.int64)
    indices = np.concatenate(nbrs).astype(np.int64)
    beta = np.full(N, 2.0)
    l1w = np.full((N, K), 0.01)
    bound = np.ones((N, K))
    return A3, labels, Y, P, indptr, indices, beta, l1w, bound


def cases(rng, N, M, K):
    A3, labels, Y, P, indptr, indices, beta, l1w, bound = _inputs(rng, N, M, K)
    A, b = A3[0], labels[0]
    E0 = np.zeros((0, K))
    h = 0.01 * rng.standard_normal(K)
    step = 1.0 / (0.25 * np.linalg.eigvalsh(A.T @ A)[-1] + 1.0)
    s = rng.standard_normal(N * K)
    return {
        "ic_round": lambda k: k.ic_round(1, A3, labels, Y, P, indptr, indices, 0.2, beta, l1w, bound),
        "fista_structured (200 it)": lambda k: k.fista_structured(
            1, A, b, E0, np.zeros(0), 0.0, 1.0, h, l1w[0], bound[0], np.zeros(K), step, 1e-300, 200
        ),
        "structured_gradient": lambda k: k.structured_gradient(1, A, b, E0, np.zeros(0), 0.0, 1.0, h, Y[0]),
        "prox_l1_box": lambda k: k.prox_l1_box(s, 2.0, 0.01, 1.0),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--agents", type=int, default=10)
    ap.add_argument("--rows", type=int, default=30)
    ap.add_argument("--features", type=int, default=200)
    args = ap.parse_args(argv)

    if "cython" not in backend.BACKENDS:
        print("compiled kernels are not built; only the fallback can be timed", file=sys.stderr)
    rng = np.random.default_rng(0)
    table = cases(rng, args.agents, args.rows, args.features)
    names = sorted(backend.BACKENDS)
    print(f"{'kernel':28s}" + "".join(f"{n:>14s}" for n in names) + ("     speedup" if len(names) > 1 else ""))
    for label, fn in table.items():
        times = {}
        for n in names:
            k = backend.get(n)
            fn(k)  # warm up
            t = timeit.Timer(lambda: fn(k))
            number, _ = t.autorange()
            times[n] = min(t.repeat(args.repeat, number)) / number
        row = f"{label:28s}" + "".join(f"{times[n] * 1e6:12.1f}us" for n in names)
        if len(names) > 1:
            row += f"{times['python'] / times['cython']:11.1f}x"
        print(row)
    return 0


if __name__ == "__main__":
    sys.exit(main())
