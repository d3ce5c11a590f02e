# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled combinatorial kernels; see ``_pykernels`` for the reference semantics."""

import numpy as np
cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def bfs_order(const i64[:] indptr, const i64[:] indices, const i64[:] start_order):
    cdef Py_ssize_t n = indptr.shape[0] - 1
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] visited = np.zeros(n, dtype=np.uint8)
    cdef cnp.ndarray[i64, ndim=1] out = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t head = 0, tail = 0, idx, k
    cdef i64 s, u, v
    for idx in range(start_order.shape[0]):
        s = start_order[idx]
        if visited[s]:
            continue
        visited[s] = 1
        out[tail] = s
        tail += 1
        while head < tail:
            u = out[head]
            head += 1
            for k in range(indptr[u], indptr[u + 1]):
                v = indices[k]
                if not visited[v]:
                    visited[v] = 1
                    out[tail] = v
                    tail += 1
    return out[:tail].copy()


cdef class _Search:
    cdef Py_ssize_t n
    cdef const cnp.uint8_t[:, :] a1
    cdef const cnp.uint8_t[:, :] a2
    cdef i64[:] d1
    cdef i64[:] d2
    cdef i64[:] order
    cdef i64[:] mapping
    cdef cnp.uint8_t[:] used
    cdef bint find_all
    cdef list found

    def __init__(self, a1, a2, bint find_all):
        self.n = a1.shape[0]
        self.a1 = a1
        self.a2 = a2
        d1 = np.asarray(a1, dtype=np.int64).sum(axis=1)
        d2 = np.asarray(a2, dtype=np.int64).sum(axis=1)
        self.d1 = d1
        self.d2 = d2
        self.order = np.lexsort((np.arange(self.n), -d1)).astype(np.int64)
        self.mapping = np.full(self.n, -1, dtype=np.int64)
        self.used = np.zeros(self.n, dtype=np.uint8)
        self.find_all = find_all
        self.found = []

    cdef bint extend(self, Py_ssize_t depth):
        cdef Py_ssize_t v, k
        cdef i64 u, w
        cdef bint ok
        if depth == self.n:
            self.found.append(np.asarray(self.mapping).copy())
            return not self.find_all
        u = self.order[depth]
        for v in range(self.n):
            if self.used[v] or self.d2[v] != self.d1[u]:
                continue
            ok = True
            for k in range(depth):
                w = self.order[k]
                if self.a1[u, w] != self.a2[v, self.mapping[w]]:
                    ok = False
                    break
            if not ok:
                continue
            self.mapping[u] = v
            self.used[v] = 1
            if self.extend(depth + 1):
                return True
            self.used[v] = 0
            self.mapping[u] = -1
        return False


cdef list _run(a1, a2, bint find_all):
    if a1.shape[0] != a2.shape[0]:
        return []
    if sorted(a1.sum(axis=1).tolist()) != sorted(a2.sum(axis=1).tolist()):
        return []
    cdef _Search s = _Search(a1, a2, find_all)
    s.extend(0)
    return s.found


def automorphisms(adj):
    adj = np.ascontiguousarray(adj, dtype=np.uint8)
    found = _run(adj, adj, True)
    n = adj.shape[0]
    if not found:
        return np.zeros((0, n), dtype=np.int64)
    arr = np.vstack(found).astype(np.int64)
    keys = tuple(arr[:, j] for j in range(n - 1, -1, -1))
    return arr[np.lexsort(keys)] if n else arr


def find_isomorphism(adj1, adj2):
    adj1 = np.ascontiguousarray(adj1, dtype=np.uint8)
    adj2 = np.ascontiguousarray(adj2, dtype=np.uint8)
    found = _run(adj1, adj2, False)
    if not found:
        return None
    return found[0]


def greedy_matching(const i64[:] src, const i64[:] dst, Py_ssize_t n):
    cdef cnp.ndarray[i64, ndim=1] cluster = np.full(n, -1, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] chosen = np.zeros(src.shape[0], dtype=np.uint8)
    cdef Py_ssize_t e, u
    cdef i64 a, b, nxt = 0
    for e in range(src.shape[0]):
        a = src[e]
        b = dst[e]
        if a == b or cluster[a] >= 0 or cluster[b] >= 0:
            continue
        cluster[a] = nxt
        cluster[b] = nxt
        chosen[e] = 1
        nxt += 1
    for u in range(n):
        if cluster[u] < 0:
            cluster[u] = nxt
            nxt += 1
    return cluster, chosen.astype(bool)


def max_lookback(const i64[:] order_pos, const i64[:] src, const i64[:] dst):
    cdef Py_ssize_t n = order_pos.shape[0], e, i
    cdef cnp.ndarray[i64, ndim=1] earliest = np.arange(n, dtype=np.int64)
    cdef i64 a, b, t, best = 0
    for e in range(src.shape[0]):
        a = order_pos[src[e]]
        b = order_pos[dst[e]]
        if a < b:
            t = a
            a = b
            b = t
        if b < earliest[a]:
            earliest[a] = b
    for i in range(n):
        if i - earliest[i] > best:
            best = i - earliest[i]
    return int(best)
