"""Time the compiled incidence kernels against the numpy fallback.

Run from the repository root after building the extension::

    python benchmarks/bench_kernels.py --nodes 20000 --edges 40000 --dim 128
"""
import argparse
import timeit

import numpy as np

from hypeboy import _kernels_py

try:
    from hypeboy import _kernels
except ImportError:
    _kernels = None


def random_incidence(rng, n_rows, n_cols, max_size):
    sizes = rng.integers(2, max_size + 1, size=n_rows)
    indptr = np.concatenate([[0], np.cumsum(sizes)]).astype(np.int64)
    indices = rng.integers(0, n_cols, size=int(indptr[-1])).astype(np.int64)
    return indptr, indices


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.split("\n")[0])
    parser.add_argument("--nodes", type=int, default=20_000)
    parser.add_argument("--edges", type=int, default=40_000)
    parser.add_argument("--dim", type=int, default=128)
    parser.add_argument("--max-size", type=int, default=8)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    indptr, indices = random_incidence(rng, args.edges, args.nodes, args.max_size)
    x = rng.standard_normal((args.nodes, args.dim))
    g = rng.standard_normal((args.edges, args.dim))
    cases = {
        "segment_sum": lambda m: m.segment_sum(indptr, indices, x),
        "scatter_add": lambda m: m.scatter_add(indptr, indices, g, args.nodes),
        "segment_maxmin": lambda m: m.segment_maxmin(indptr, indices, x),
    }
    backends = [("python", _kernels_py)] + ([("cython", _kernels)] if _kernels else [])
    print(f"{args.edges} segments over {args.nodes} rows, dim {args.dim}, {len(indices)} memberships")
    print(f"{'kernel':<16}" + "".join(f"{name:>12}" for name, _ in backends) + f"{'speedup':>10}")
    for kernel, fn in cases.items():
        times = []
        for _, mod in backends:
            fn(mod)  # warm-up
            times.append(min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat)))
        if len(backends) == 2:
            np.testing.assert_allclose(fn(_kernels), fn(_kernels_py), rtol=1e-12, atol=1e-12)
        speed = f"{times[0] / times[1]:>9.1f}x" if len(times) == 2 else f"{'n/a':>10}"
        print(f"{kernel:<16}" + "".join(f"{t * 1e3:>10.2f}ms" for t in times) + speed)


if __name__ == "__main__":
    main()
