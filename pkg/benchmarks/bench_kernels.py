"""Compare the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--repeat 5]

Each kernel runs on the same inputs under both backends; outputs are checked
for equality before timings are reported.
"""

import argparse
import sys
import timeit

import numpy as np

from graphaugment.graph import _csr_by_priority, cycle_graph, random_graph
from graphaugment.kernels import compiled_backend, python_backend


def cases(rng):
    big = random_graph(2000, 0.004, rng)
    indptr, indices = _csr_by_priority(big, np.arange(big.node_count))
    start = rng.permutation(big.node_count).astype(np.int64)
    e = big.edge_array().astype(np.int64)
    order = np.argsort(rng.random(len(e)))
    pos = np.argsort(start).astype(np.int64)
    cyc = cycle_graph(10).adjacency()
    sparse = random_graph(9, 0.3, rng).adjacency()
    yield "bfs_order n=2000", "bfs_order", (indptr, indices, start)
    yield "greedy_matching n=2000", "greedy_matching", (e[order, 0].copy(), e[order, 1].copy(), big.node_count)
    yield "max_lookback n=2000", "max_lookback", (pos, e[:, 0].copy(), e[:, 1].copy())
    yield "automorphisms C10", "automorphisms", (cyc,)
    yield "automorphisms G(9,0.3)", "automorphisms", (sparse,)
    yield "find_isomorphism C10", "find_isomorphism", (cyc, cyc[::-1, ::-1].copy())


def same(a, b) -> bool:
    if isinstance(a, tuple):
        return len(a) == len(b) and all(same(x, y) for x, y in zip(a, b))
    if a is None or b is None:
        return a is b
    return np.array_equal(np.asarray(a), np.asarray(b))


def main(argv=None) -> int:
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)
    if compiled_backend is None:
        print("compiled extension not built; nothing to compare", file=sys.stderr)
        return 1
    rng = np.random.default_rng(args.seed)
    print(f"{'kernel':28s} {'python ms':>11s} {'compiled ms':>12s} {'speedup':>8s}")
    for label, name, inputs in cases(rng):
        fp, fc = getattr(python_backend, name), getattr(compiled_backend, name)
        if not same(fp(*inputs), fc(*inputs)):
            print(f"{label}: backends disagree", file=sys.stderr)
            return 1
        tp = min(timeit.repeat(lambda: fp(*inputs), number=1, repeat=args.repeat)) * 1e3
        tc = min(timeit.repeat(lambda: fc(*inputs), number=1, repeat=args.repeat)) * 1e3
        print(f"{label:28s} {tp:11.3f} {tc:12.3f} {tp / tc:7.1f}x")
    return 0


if __name__ == "__main__":
    sys.exit(main())
