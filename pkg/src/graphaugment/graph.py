"""Graph representation, node orderings and sequentialization.

Node orderings are plain tuples ``pi`` where ``pi[i]`` is the node placed at
row/column ``i`` of the ordered adjacency matrix. Everything is 0-based; TU
files are translated at the I/O boundary.
"""

from __future__ import annotations

import itertools
import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Hashable, Iterable, Sequence

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from . import kernels
from .errors import (
    EmptyDataset,
    GraphError,
    InvalidBlockSize,
    InvalidOrdering,
    MalformedSequence,
    TooLargeForEnumeration,
)

ENUMERATION_CAP = 8

NodeOrdering = tuple[int, ...]


@dataclass(frozen=True)
class Graph:
    """Immutable simple undirected graph.

    Edges are canonicalized to sorted ``(min, max)`` pairs; a pair given in
    both directions collapses to one edge. Self-loops and out-of-range
    endpoints raise :class:`GraphError`.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...] = ()
    node_labels: tuple | None = None
    class_label: Hashable | None = None

    def __post_init__(self):
        n = int(self.node_count)
        if n < 0:
            raise GraphError(f"negative node count {n}")
        canon = set()
        for u, v in self.edges:
            u, v = int(u), int(v)
            if u == v:
                raise GraphError(f"self-loop on node {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise GraphError(f"edge ({u}, {v}) outside [0, {n})")
            canon.add((u, v) if u < v else (v, u))
        object.__setattr__(self, "node_count", n)
        object.__setattr__(self, "edges", tuple(sorted(canon)))
        if self.node_labels is not None:
            labels = tuple(self.node_labels)
            if len(labels) != n:
                raise GraphError(f"{len(labels)} node labels for {n} nodes")
            object.__setattr__(self, "node_labels", labels)

    @property
    def num_edges(self) -> int:
        return len(self.edges)

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.node_count, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        return deg

    def adjacency(self) -> np.ndarray:
        """Adjacency matrix in the graph's own node order (uint8)."""
        a = np.zeros((self.node_count, self.node_count), dtype=np.uint8)
        if self.edges:
            e = np.asarray(self.edges)
            a[e[:, 0], e[:, 1]] = 1
            a[e[:, 1], e[:, 0]] = 1
        return a

    def edge_array(self) -> np.ndarray:
        return np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)

    def with_class(self, label) -> "Graph":
        return Graph(self.node_count, self.edges, self.node_labels, label)

    def relabel(self, mapping: Sequence[int]) -> "Graph":
        """Copy where old node ``v`` becomes node ``mapping[v]``."""
        check_ordering(mapping, self.node_count)
        edges = [(mapping[u], mapping[v]) for u, v in self.edges]
        labels = None
        if self.node_labels is not None:
            new = [None] * self.node_count
            for old, lab in enumerate(self.node_labels):
                new[mapping[old]] = lab
            labels = tuple(new)
        return Graph(self.node_count, edges, labels, self.class_label)

    def neighbors(self) -> list[list[int]]:
        adj = [[] for _ in range(self.node_count)]
        for u, v in self.edges:
            adj[u].append(v)
            adj[v].append(u)
        return adj


@dataclass(frozen=True)
class AdjSequence:
    """Adjacency vectors ``S_2 .. S_n`` of a graph under some ordering.

    ``vectors[k]`` describes node ``k + 1`` (0-based) and holds its links to
    nodes ``0..k`` in order. When ``bandwidth`` is set each vector keeps only
    the last ``min(k + 1, bandwidth)`` entries, i.e. links to the nearest
    preceding nodes.
    """

    vectors: tuple[tuple[int, ...], ...]
    n: int
    bandwidth: int | None = None

    def __post_init__(self):
        vecs = tuple(tuple(int(x) for x in v) for v in self.vectors)
        object.__setattr__(self, "vectors", vecs)
        if self.n < 0 or (self.n == 0 and vecs) or (self.n > 0 and len(vecs) != self.n - 1):
            raise MalformedSequence(f"{len(vecs)} vectors cannot describe {self.n} nodes")
        if self.bandwidth is not None and self.bandwidth < 1:
            raise MalformedSequence(f"bandwidth must be >= 1, got {self.bandwidth}")
        for k, v in enumerate(vecs):
            want = self.width(k)
            if len(v) != want:
                raise MalformedSequence(f"vector {k} has {len(v)} entries, expected {want}")
            if any(x not in (0, 1) for x in v):
                raise MalformedSequence(f"vector {k} has non-binary entries")

    def width(self, k: int) -> int:
        full = k + 1
        return full if self.bandwidth is None else min(full, self.bandwidth)


@dataclass(frozen=True)
class LowerTriBlocks:
    block_size: int
    blocks: tuple[tuple[int, ...], ...]
    total_rows: int

    @property
    def num_steps(self) -> int:
        return len(self.blocks)


# -- orderings & matrices -----------------------------------------------------

def check_ordering(pi: Sequence[int], n: int) -> NodeOrdering:
    pi = tuple(int(x) for x in pi)
    if len(pi) != n:
        raise InvalidOrdering(f"ordering has {len(pi)} entries for {n} nodes")
    if sorted(pi) != list(range(n)):
        raise InvalidOrdering(f"ordering {pi} is not a permutation of 0..{n - 1}")
    return pi


def identity_ordering(n: int) -> NodeOrdering:
    return tuple(range(n))


def random_ordering(n: int, rng: np.random.Generator) -> NodeOrdering:
    return tuple(int(x) for x in rng.permutation(n))


def adjacency_matrix(g: Graph, pi: Sequence[int]) -> np.ndarray:
    """Entry ``(i, j)`` is 1 iff nodes ``pi[i]`` and ``pi[j]`` are adjacent."""
    pi = check_ordering(pi, g.node_count)
    idx = np.asarray(pi, dtype=np.int64)
    return g.adjacency()[np.ix_(idx, idx)]


def to_sequence(g: Graph, pi: Sequence[int]) -> AdjSequence:
    a = adjacency_matrix(g, pi)
    n = g.node_count
    vecs = tuple(tuple(int(x) for x in a[:i, i]) for i in range(1, n))
    return AdjSequence(vecs, n)


def truncate_sequence(s: AdjSequence, bandwidth: int) -> AdjSequence:
    """Keep the last ``bandwidth`` entries of each vector (links beyond it are dropped)."""
    vecs = []
    for k, v in enumerate(s.vectors):
        full = k + 1
        if s.bandwidth is not None and s.bandwidth < full:
            raise MalformedSequence("sequence is already truncated")
        vecs.append(v[max(0, full - bandwidth):])
    return AdjSequence(tuple(vecs), s.n, bandwidth)


def from_sequence(s: AdjSequence, class_label=None) -> Graph:
    edges = []
    for k, v in enumerate(s.vectors):
        i = k + 1
        offset = i - len(v)
        for pos, bit in enumerate(v):
            if bit:
                edges.append((offset + pos, i))
    return Graph(s.n, edges, class_label=class_label)


def _csr_by_priority(g: Graph, rank: np.ndarray):
    n = g.node_count
    e = g.edge_array()
    src = np.concatenate([e[:, 0], e[:, 1]])
    dst = np.concatenate([e[:, 1], e[:, 0]])
    order = np.lexsort((rank[dst], src))
    src, dst = src[order], dst[order]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(np.bincount(src, minlength=n), out=indptr[1:])
    return indptr, np.ascontiguousarray(dst, dtype=np.int64)


def bfs_ordering(g: Graph, pi: Sequence[int]) -> NodeOrdering:
    """BFS from ``pi[0]``, enqueueing neighbors in ``pi`` order.

    A disconnected graph continues from the earliest unvisited node under
    ``pi``, so the result is always a full ordering.
    """
    pi = check_ordering(pi, g.node_count)
    n = g.node_count
    if n == 0:
        return ()
    rank = np.empty(n, dtype=np.int64)
    rank[np.asarray(pi)] = np.arange(n)
    indptr, indices = _csr_by_priority(g, rank)
    out = kernels.bfs_order(indptr, indices, np.asarray(pi, dtype=np.int64))
    return tuple(int(x) for x in out)


def max_lookback(g: Graph, pi: Sequence[int]) -> int:
    """Widest adjacency vector needed under ``pi``: max over nodes of
    (position - position of its earliest neighbor)."""
    pi = check_ordering(pi, g.node_count)
    n = g.node_count
    if n == 0 or not g.edges:
        return 0
    pos = np.empty(n, dtype=np.int64)
    pos[np.asarray(pi)] = np.arange(n)
    e = g.edge_array()
    return int(kernels.max_lookback(pos, np.ascontiguousarray(e[:, 0]), np.ascontiguousarray(e[:, 1])))


def symmetric_permutations(g: Graph, pi: Sequence[int]) -> set[NodeOrdering]:
    """All orderings producing the same adjacency matrix as ``pi``.

    These are ``sigma o pi`` for the automorphisms ``sigma`` of ``g``.
    """
    pi = check_ordering(pi, g.node_count)
    if g.node_count > ENUMERATION_CAP:
        raise TooLargeForEnumeration(f"{g.node_count} nodes exceeds cap {ENUMERATION_CAP}")
    autos = kernels.automorphisms(g.adjacency())
    return {tuple(int(sigma[p]) for p in pi) for sigma in autos}


def block_partition(n: int, b: int) -> LowerTriBlocks:
    """Rows ``1..n`` of the lower-triangular adjacency split into blocks of ``b``."""
    if b < 1:
        raise InvalidBlockSize(f"block size must be >= 1, got {b}")
    if n < 1:
        raise GraphError(f"need at least one row, got {n}")
    blocks = tuple(tuple(range(b * t + 1, min(b * (t + 1), n) + 1)) for t in range(math.ceil(n / b)))
    return LowerTriBlocks(b, blocks, n)


# -- isomorphism ----------------------------------------------------------------

def is_isomorphic(g1: Graph, g2: Graph) -> bool:
    """Exact isomorphism test by exhaustive search, for graphs up to 8 nodes."""
    for g in (g1, g2):
        if g.node_count > ENUMERATION_CAP:
            raise TooLargeForEnumeration(f"{g.node_count} nodes exceeds cap {ENUMERATION_CAP}")
    if g1.node_count != g2.node_count or g1.num_edges != g2.num_edges:
        return False
    return kernels.find_isomorphism(g1.adjacency(), g2.adjacency()) is not None


def fingerprint(g: Graph) -> tuple:
    """Cheap invariants (node count, edge count, degree multiset, triangle count)."""
    a = g.adjacency().astype(np.int64)
    triangles = int(np.trace(a @ a @ a)) // 6 if g.node_count else 0
    return (g.node_count, g.num_edges, tuple(sorted(g.degrees().tolist())), triangles)


def fingerprints_match(g1: Graph, g2: Graph) -> bool:
    """Necessary condition for isomorphism usable at any size."""
    return fingerprint(g1) == fingerprint(g2)


# -- statistics -----------------------------------------------------------------

@dataclass(frozen=True)
class GraphStats:
    num_graphs: int
    avg_nodes: float
    avg_edges: float
    avg_degree: float
    avg_density: float
    avg_diameter: float
    num_classes: int = 0
    class_distribution: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "num_graphs": self.num_graphs,
            "avg_nodes": self.avg_nodes,
            "avg_edges": self.avg_edges,
            "avg_degree": self.avg_degree,
            "avg_density": self.avg_density,
            "avg_diameter": self.avg_diameter,
            "num_classes": self.num_classes,
            "class_distribution": {str(k): v for k, v in self.class_distribution.items()},
        }


def diameter(g: Graph) -> int:
    """Diameter of the largest connected component (lowest-index component on ties)."""
    n = g.node_count
    if n <= 1 or not g.edges:
        return 0
    e = g.edge_array()
    m = csr_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    ncomp, labels = connected_components(m, directed=False)
    sizes = np.bincount(labels, minlength=ncomp)
    comp = int(np.argmax(sizes))
    nodes = np.flatnonzero(labels == comp)
    dist = shortest_path(m, directed=False, unweighted=True, indices=nodes)[:, nodes]
    return int(dist.max())


def graph_stats(graphs: Iterable[Graph]) -> GraphStats:
    graphs = list(graphs)
    if not graphs:
        raise EmptyDataset("cannot summarize an empty graph list")
    nodes = np.array([g.node_count for g in graphs], dtype=float)
    edges = np.array([g.num_edges for g in graphs], dtype=float)
    safe_n = np.where(nodes > 0, nodes, 1.0)
    degree = np.where(nodes > 0, 2.0 * edges / safe_n, 0.0)
    pairs = nodes * (nodes - 1)
    density = np.where(pairs > 0, 2.0 * edges / np.where(pairs > 0, pairs, 1.0), 0.0)
    diam = np.array([diameter(g) for g in graphs], dtype=float)
    labels = [g.class_label for g in graphs if g.class_label is not None]
    counts = Counter(labels)
    dist = {c: 100.0 * counts[c] / len(labels) for c in sorted(counts, key=_label_key)}
    return GraphStats(
        num_graphs=len(graphs),
        avg_nodes=float(nodes.mean()),
        avg_edges=float(edges.mean()),
        avg_degree=float(degree.mean()),
        avg_density=float(density.mean()),
        avg_diameter=float(diam.mean()),
        num_classes=len(counts),
        class_distribution=dist,
    )


def _label_key(label):
    return (0, label, "") if isinstance(label, (int, float)) else (1, 0, str(label))


# -- small graph constructors, used by fixtures and the CLI --------------------

def complete_graph(n: int, class_label=None) -> Graph:
    return Graph(n, list(itertools.combinations(range(n), 2)), class_label=class_label)


def path_graph(n: int, class_label=None) -> Graph:
    return Graph(n, [(i, i + 1) for i in range(n - 1)], class_label=class_label)


def cycle_graph(n: int, class_label=None) -> Graph:
    edges = [(i, (i + 1) % n) for i in range(n)] if n >= 3 else [(i, i + 1) for i in range(n - 1)]
    return Graph(n, edges, class_label=class_label)


def star_graph(leaves: int, class_label=None) -> Graph:
    return Graph(leaves + 1, [(0, i) for i in range(1, leaves + 1)], class_label=class_label)


def empty_graph(n: int, class_label=None) -> Graph:
    return Graph(n, (), class_label=class_label)


def random_graph(n: int, p: float, rng: np.random.Generator, class_label=None) -> Graph:
    """Erdos-Renyi G(n, p)."""
    edges = [(i, j) for i in range(n) for j in range(i + 1, n) if rng.random() < p]
    return Graph(n, edges, class_label=class_label)


def is_connected(g: Graph) -> bool:
    if g.node_count <= 1:
        return True
    seen = {0}
    frontier = [0]
    nbrs = g.neighbors()
    while frontier:
        u = frontier.pop()
        for v in nbrs[u]:
            if v not in seen:
                seen.add(v)
                frontier.append(v)
    return len(seen) == g.node_count
