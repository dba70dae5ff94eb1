"""Fill-reducing column ordering.

Minimum degree on the symmetrized pattern A + Aᵀ using a quotient graph
with element absorption, the same family as AMD but with exact external
degrees (fine at the sizes this package factorizes).
"""

import heapq

import numpy as np


def symmetric_pattern(A):
    """Adjacency sets of A + Aᵀ without the diagonal."""
    n = A.ncols
    rows = A.rowind
    cols = A.col_indices()
    off = rows != cols
    r, c = rows[off], cols[off]
    adj = [set() for _ in range(n)]
    for i, j in zip(np.concatenate((r, c)).tolist(), np.concatenate((c, r)).tolist()):
        adj[i].add(j)
    return adj


def minimum_degree(A):
    """Return a permutation q (new -> old) for a square matrix."""
    if A.nrows != A.ncols:
        raise ValueError("ordering needs a square matrix")
    n = A.ncols
    var_adj = symmetric_pattern(A)     # variable-variable edges still present
    elem_adj = [set() for _ in range(n)]  # variable -> adjacent elements
    elem_vars = {}                     # element id -> variables in its clique
    eliminated = np.zeros(n, dtype=bool)

    def degree(i):
        reach = set(var_adj[i])
        for e in elem_adj[i]:
            reach |= elem_vars[e]
        reach.discard(i)
        return len(reach)

    heap = [(len(var_adj[i]), i) for i in range(n)]
    heapq.heapify(heap)
    current = [len(var_adj[i]) for i in range(n)]
    order = []
    while heap:
        d, p = heapq.heappop(heap)
        if eliminated[p] or d != current[p]:
            continue
        # the new element is the union of p's variable and element neighbourhoods
        clique = set(var_adj[p])
        for e in elem_adj[p]:
            clique |= elem_vars.pop(e)
        clique.discard(p)
        clique = {v for v in clique if not eliminated[v]}
        absorbed = elem_adj[p]
        eliminated[p] = True
        order.append(p)
        elem_vars[p] = clique
        for v in clique:
            var_adj[v].discard(p)
            var_adj[v] -= clique        # edges now covered by the element
            elem_adj[v] -= absorbed
            elem_adj[v].add(p)
        for v in clique:
            current[v] = degree(v)
            heapq.heappush(heap, (current[v], v))
    return np.asarray(order, dtype=np.int64)
