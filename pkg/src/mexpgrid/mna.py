"""Modified nodal analysis: C·dx/dt = -G·x + B·u(t).

State order is node voltages (first appearance in the netlist), inductor
currents, then voltage-source currents.  A branch current flows from the
element's first node to its second.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .netlist import GROUND, Kind, next_breakpoint, pwl_eval
from .sparse import SingularMatrixError, SparseMatrix, lu_solve, sparse_lu, write_matrix_market


class MnaError(ValueError):
    pass


class SingularSystemError(MnaError):
    def __init__(self, message, label=None):
        self.label = label
        super().__init__(message)


@dataclass(frozen=True, eq=False)
class MnaSystem:
    C: SparseMatrix
    G: SparseMatrix
    B: SparseMatrix
    node_index: dict
    branch_index: dict
    sources: tuple          # PwlWaveform per column of B
    source_names: tuple
    probe_labels: tuple
    probe_rows: np.ndarray

    @property
    def n(self):
        return self.C.nrows

    @property
    def n_nodes(self):
        return len(self.node_index)

    def labels(self):
        """Human-readable name of every state entry."""
        out = [None] * self.n
        for k, i in self.node_index.items():
            out[i] = f"v({k})"
        for k, i in self.branch_index.items():
            out[i] = f"i({k})"
        return out

    def label_of(self, row):
        return self.labels()[row]

    def u(self, t):
        return np.array([pwl_eval(w, t) for w in self.sources])

    def eval_b(self, t):
        return eval_b(self, t)

    def next_breakpoint(self, t):
        return next_breakpoint(self.sources, t)


def _union_find(n):
    parent = list(range(n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    def union(a, b):
        ra, rb = find(a), find(b)
        if ra == rb:
            return False
        parent[ra] = rb
        return True

    return find, union


def _check_topology(nl, node_index):
    # node id 0 is ground in these graphs; real nodes are shifted by one
    ids = lambda e: [0 if n == GROUND else node_index[n] + 1 for n in e.nodes]  # noqa: E731
    n = len(node_index) + 1
    find, union = _union_find(n)
    for e in nl.elements:
        if e.kind is not Kind.CURRENT_SOURCE:
            union(*ids(e))
    ground = find(0)
    for label, i in node_index.items():
        if find(i + 1) != ground:
            raise MnaError(f"floating node {label!r}: no path to ground through R, C, L or V elements")
    find, union = _union_find(n)
    for e in nl.elements:
        if e.kind in (Kind.INDUCTOR, Kind.VOLTAGE_SOURCE):
            if not union(*ids(e)):
                raise MnaError(f"loop of inductors/voltage sources closed by {e.name}: G is structurally singular")


def build_mna(nl):
    """Stamp C, G and B for a parsed netlist."""
    nodes = nl.nodes()
    if not nodes:
        raise MnaError("netlist has no non-ground nodes")
    node_index = {k: i for i, k in enumerate(nodes)}
    _check_topology(nl, node_index)

    branch_index = {}
    row = len(nodes)
    for kind in (Kind.INDUCTOR, Kind.VOLTAGE_SOURCE):
        for e in nl.elements:
            if e.kind is kind:
                branch_index[e.name] = row
                row += 1
    n = row
    srcs = nl.sources()
    gi, gj, gv, ci, cj, cv, bi, bj, bv = ([] for _ in range(9))

    def pair(e):
        return [node_index.get(k) for k in e.nodes]   # None marks ground

    def stamp2(ri, rj, rv, a, b, val):
        for p, q, s in ((a, a, val), (b, b, val), (a, b, -val), (b, a, -val)):
            if p is not None and q is not None:
                ri.append(p)
                rj.append(q)
                rv.append(s)

    def incidence(a, b, k):
        for p, s in ((a, 1.0), (b, -1.0)):
            if p is not None:
                gi.extend((p, k))
                gj.extend((k, p))
                gv.extend((s, s))

    for e in nl.elements:
        a, b = pair(e)
        if e.kind is Kind.RESISTOR:
            stamp2(gi, gj, gv, a, b, 1.0 / e.value)
        elif e.kind is Kind.CAPACITOR:
            stamp2(ci, cj, cv, a, b, e.value)
        elif e.kind is Kind.INDUCTOR:
            k = branch_index[e.name]
            incidence(a, b, k)
            ci.append(k)
            cj.append(k)
            cv.append(-e.value)
    for col, e in enumerate(srcs):
        a, b = pair(e)
        if e.kind is Kind.VOLTAGE_SOURCE:
            k = branch_index[e.name]
            incidence(a, b, k)
            bi.append(k)
            bj.append(col)
            bv.append(1.0)
        else:
            # positive current leaves the first node and re-enters at the second
            for p, s in ((a, -1.0), (b, 1.0)):
                if p is not None:
                    bi.append(p)
                    bj.append(col)
                    bv.append(s)

    probes = tuple(nl.probes) if nl.probes else tuple(nodes)
    return MnaSystem(
        C=SparseMatrix.from_triplets(n, n, ci, cj, cv),
        G=SparseMatrix.from_triplets(n, n, gi, gj, gv),
        B=SparseMatrix.from_triplets(n, len(srcs), bi, bj, bv),
        node_index=node_index,
        branch_index=branch_index,
        sources=tuple(e.source_waveform() for e in srcs),
        source_names=tuple(e.name for e in srcs),
        probe_labels=probes,
        probe_rows=np.array([node_index[p] for p in probes], dtype=np.int64),
    )


def eval_b(sys, t):
    """B·u(t)."""
    if not sys.sources:
        return np.zeros(sys.n)
    return sys.B.matvec(sys.u(t))


def _dc_isolated_node(sys):
    """First node with no resistive/inductive/source path to ground, if any."""
    n = sys.n_nodes
    find, union = _union_find(n + 1)
    G = sys.G
    cols = G.col_indices()
    # resistive couplings and ground conductances
    for i, j in zip(G.rowind.tolist(), cols.tolist()):
        if i < n and j < n and i != j:
            union(i + 1, j + 1)
    # a resistor to ground shows up as a positive row sum of the node block
    gd = G.diagonal()[:n]
    node_part = cols < n
    rowsum = np.bincount(G.rowind[node_part], weights=G.values[node_part], minlength=sys.n)[:n]
    for i in np.flatnonzero(rowsum > 1e-12 * np.abs(gd)).tolist():
        union(0, i + 1)
    # branch rows connect their terminal nodes to each other or to ground
    for k in range(n, sys.n):
        lo, hi = G.colptr[k], G.colptr[k + 1]
        touched = [r for r in G.rowind[lo:hi].tolist() if r < n]
        if len(touched) == 1:
            union(0, touched[0] + 1)
        elif len(touched) == 2:
            union(touched[0] + 1, touched[1] + 1)
    ground = find(0)
    labels = {i: k for k, i in sys.node_index.items()}
    for i in range(n):
        if find(i + 1) != ground:
            return labels[i]
    return None


def dc_analysis(sys, u0=None):
    """Solve G·x = B·u0 (capacitors open, inductors short); u0 defaults to u(0)."""
    u0 = sys.u(0.0) if u0 is None else np.asarray(u0, dtype=np.float64)
    rhs = sys.B.matvec(u0) if sys.B.ncols else np.zeros(sys.n)
    try:
        f = sparse_lu(sys.G)
    except SingularMatrixError as exc:
        label = _dc_isolated_node(sys) or sys.label_of(exc.column)
        raise SingularSystemError(
            f"DC analysis: G is singular at {label} (no DC path to ground, e.g. a node reached only through capacitors)",
            label) from None
    return lu_solve(f, rhs)


def dump_matrix_market(sys, directory, prefix="mna"):
    """Write C, G and B as Matrix Market files for cross-checking elsewhere."""
    os.makedirs(directory, exist_ok=True)
    paths = []
    legend = "state order: " + " ".join(sys.labels())
    for name in ("C", "G", "B"):
        path = os.path.join(directory, f"{prefix}_{name}.mtx")
        write_matrix_market(getattr(sys, name), path, comment=legend)
        paths.append(path)
    return paths


def system_from_matrices(C, G, B, sources, probe_rows=None):
    """Wrap raw matrices (dense or SparseMatrix) as an MnaSystem with generic labels."""
    as_sparse = lambda M: M if isinstance(M, SparseMatrix) else SparseMatrix.from_dense(np.atleast_2d(M))  # noqa: E731
    C, G, B = as_sparse(C), as_sparse(G), as_sparse(B)
    n = C.nrows
    if G.shape != (n, n) or B.nrows != n or B.ncols != len(sources):
        raise MnaError(f"inconsistent shapes C{C.shape} G{G.shape} B{B.shape} with {len(sources)} sources")
    rows = np.arange(n) if probe_rows is None else np.asarray(probe_rows, dtype=np.int64)
    return MnaSystem(C, G, B, {f"x{i}": i for i in range(n)}, {}, tuple(sources),
                     tuple(f"u{k}" for k in range(len(sources))), tuple(f"x{i}" for i in rows), rows)
