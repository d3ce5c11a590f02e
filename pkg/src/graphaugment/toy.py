"""Small synthetic labeled datasets for demos, tests and sanity checks."""

from __future__ import annotations

import numpy as np

from .dataset import LabeledDataset
from .graph import Graph, complete_graph, cycle_graph, path_graph, random_graph, star_graph


def cycles_vs_stars(count: int = 100, sizes=(6, 12), seed: int = 0) -> LabeledDataset:
    """Half cycles (class 0), half stars (class 1); node counts uniform in ``sizes``."""
    rng = np.random.default_rng(seed)
    lo, hi = sizes
    graphs = []
    for i in range(count):
        n = int(rng.integers(lo, hi + 1))
        graphs.append(cycle_graph(n, class_label=0) if i % 2 == 0 else star_graph(n - 1, class_label=1))
    return LabeledDataset("cycles-vs-stars", graphs)


def triangles_vs_paths(count: int = 20) -> LabeledDataset:
    graphs = [complete_graph(3, 0) if i % 2 == 0 else path_graph(4, 1) for i in range(count)]
    return LabeledDataset("triangles-vs-paths", graphs)


def noisy_two_class(count: int = 60, seed: int = 0, flip: float = 0.1) -> LabeledDataset:
    """Rings (class 0) versus trees (class 1) of 7-11 nodes with edge noise.

    Each ring or random tree gets one random extra edge with probability
    ``flip`` and loses one edge with probability ``flip``, so the classes
    overlap a little.
    """
    rng = np.random.default_rng(seed)
    graphs = []
    for i in range(count):
        n = int(rng.integers(7, 12))
        label = i % 2
        if label == 0:
            edges = {tuple(sorted((k, (k + 1) % n))) for k in range(n)}
        else:
            edges = {tuple(sorted((k, int(rng.integers(0, k))))) for k in range(1, n)}
        if rng.random() < flip:
            u, v = rng.choice(n, size=2, replace=False)
            edges.add(tuple(sorted((int(u), int(v)))))
        if rng.random() < flip and len(edges) > 1:
            edges.discard(sorted(edges)[int(rng.integers(len(edges)))])
        graphs.append(Graph(n, sorted(edges), class_label=label))
    return LabeledDataset("noisy-two-class", graphs)


def erdos_renyi_like(graphs, rng: np.random.Generator, class_label=None) -> list[Graph]:
    """Uniform-random-edge graphs matching each input's node and edge count."""
    out = []
    for g in graphs:
        n, m = g.node_count, g.num_edges
        pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
        pick = rng.choice(len(pairs), size=min(m, len(pairs)), replace=False) if pairs else []
        out.append(Graph(n, [pairs[k] for k in pick], class_label=class_label))
    return out


def random_labeled(count: int, n_range=(6, 8), p: float = 0.4, classes=(0, 1), seed: int = 0) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    graphs = [random_graph(int(rng.integers(n_range[0], n_range[1] + 1)), p, rng, class_label=classes[i % len(classes)])
              for i in range(count)]
    return LabeledDataset("random", graphs)


def uniform_random_graphs(graphs, rng: np.random.Generator, p: float = 0.5, class_label=None) -> list[Graph]:
    """G(n, p) graphs with each input's node count; every pair is an edge with probability ``p``."""
    return [random_graph(g.node_count, p, rng, class_label=class_label) for g in graphs]
