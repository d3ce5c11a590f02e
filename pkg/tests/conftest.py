import itertools

import numpy as np
import pytest

from graphaugment import kernels
from graphaugment.graph import Graph


def brute_isomorphic(g1: Graph, g2: Graph) -> bool:
    """Reference oracle: try every relabeling."""
    if g1.node_count != g2.node_count or g1.num_edges != g2.num_edges:
        return False
    target = set(g2.edges)
    for perm in itertools.permutations(range(g1.node_count)):
        if {tuple(sorted((perm[u], perm[v]))) for u, v in g1.edges} == target:
            return True
    return False


def all_graphs(n: int):
    pairs = list(itertools.combinations(range(n), 2))
    for bits in itertools.product((0, 1), repeat=len(pairs)):
        yield Graph(n, [p for p, b in zip(pairs, bits) if b])


def is_connected_brute(g: Graph) -> bool:
    if g.node_count <= 1:
        return True
    seen, stack = {0}, [0]
    nbrs = g.neighbors()
    while stack:
        for v in nbrs[stack.pop()]:
            if v not in seen:
                seen.add(v)
                stack.append(v)
    return len(seen) == g.node_count


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


BACKENDS = [kernels.python_backend] + ([kernels.compiled_backend] if kernels.compiled_backend else [])


@pytest.fixture(params=BACKENDS, ids=lambda m: m.__name__.rsplit(".", 1)[-1])
def backend(request):
    return request.param
