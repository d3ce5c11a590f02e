"""Pure-Python implementations of the combinatorial kernels.

Semantics are identical to the compiled ``_ckernels`` module; this module is
used when the extension is unavailable or ``GRAPHAUGMENT_PURE_PYTHON`` is set.
"""

from collections import deque

import numpy as np


def bfs_order(indptr, indices, start_order):
    """Breadth-first order over a CSR graph.

    Neighbor lists in ``indices`` must already be sorted by priority; new
    components start at the first unvisited node of ``start_order``.
    """
    n = len(indptr) - 1
    visited = [False] * n
    out = []
    for s in start_order:
        s = int(s)
        if visited[s]:
            continue
        visited[s] = True
        queue = deque([s])
        while queue:
            u = queue.popleft()
            out.append(u)
            for k in range(indptr[u], indptr[u + 1]):
                v = int(indices[k])
                if not visited[v]:
                    visited[v] = True
                    queue.append(v)
    return np.asarray(out, dtype=np.int64)


def _search(adj1, adj2, find_all):
    n = adj1.shape[0]
    if adj2.shape[0] != n:
        return []
    deg1 = adj1.sum(axis=1)
    deg2 = adj2.sum(axis=1)
    if sorted(deg1.tolist()) != sorted(deg2.tolist()):
        return []
    # assign high-degree nodes first; they prune hardest
    order = sorted(range(n), key=lambda u: (-int(deg1[u]), u))
    a1 = adj1.tolist()
    a2 = adj2.tolist()
    d1 = deg1.tolist()
    d2 = deg2.tolist()
    mapping = [-1] * n
    used = [False] * n
    found = []

    def extend(depth):
        if depth == n:
            found.append(list(mapping))
            return not find_all
        u = order[depth]
        row1 = a1[u]
        for v in range(n):
            if used[v] or d2[v] != d1[u]:
                continue
            row2 = a2[v]
            ok = True
            for k in range(depth):
                w = order[k]
                if row1[w] != row2[mapping[w]]:
                    ok = False
                    break
            if not ok:
                continue
            mapping[u] = v
            used[v] = True
            if extend(depth + 1):
                return True
            used[v] = False
            mapping[u] = -1
        return False

    extend(0)
    return found


def automorphisms(adj):
    """All node maps ``s`` with ``adj[s[i], s[j]] == adj[i, j]``, lexicographically sorted."""
    adj = np.asarray(adj, dtype=np.uint8)
    found = _search(adj, adj, True)
    found.sort()
    return np.asarray(found, dtype=np.int64).reshape(len(found), adj.shape[0])


def find_isomorphism(adj1, adj2):
    """A map ``s`` with ``adj2[s[i], s[j]] == adj1[i, j]``, or ``None``."""
    adj1 = np.asarray(adj1, dtype=np.uint8)
    adj2 = np.asarray(adj2, dtype=np.uint8)
    found = _search(adj1, adj2, False)
    if not found:
        return None
    return np.asarray(found[0], dtype=np.int64)


def greedy_matching(src, dst, n):
    """Greedy non-conflicting edge contraction.

    Edges are visited in the given order and taken when neither endpoint has
    been merged yet. Returns ``(cluster, chosen)``: the pooled node id of each
    original node (contracted pairs first, in selection order, then untouched
    nodes by index) and a boolean mask over the edges.
    """
    cluster = np.full(n, -1, dtype=np.int64)
    chosen = np.zeros(len(src), dtype=bool)
    nxt = 0
    for e in range(len(src)):
        u = int(src[e])
        v = int(dst[e])
        if u == v or cluster[u] >= 0 or cluster[v] >= 0:
            continue
        cluster[u] = nxt
        cluster[v] = nxt
        chosen[e] = True
        nxt += 1
    for u in range(n):
        if cluster[u] < 0:
            cluster[u] = nxt
            nxt += 1
    return cluster, chosen


def max_lookback(order_pos, src, dst):
    """Largest ``i - min{j : edge(j, i)}`` over positions in a node ordering."""
    n = len(order_pos)
    earliest = list(range(n))
    for u, v in zip(src, dst):
        i = int(order_pos[u])
        j = int(order_pos[v])
        if i < j:
            i, j = j, i
        if j < earliest[i]:
            earliest[i] = j
    best = 0
    for i in range(n):
        if i - earliest[i] > best:
            best = i - earliest[i]
    return best
