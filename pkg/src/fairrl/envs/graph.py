"""Undirected simple graphs in CSR form, plus two-community Girvan-Newman."""

from collections import deque

import numpy as np

from fairrl import kernels
from fairrl.errors import ContractError

# relative slack when comparing betweenness values for ties
TIE_RTOL = 1e-9


class SocialGraph:
    """Simple undirected graph on vertices ``0..n-1``.

    Edges are stored sorted as ``(u, v)`` with ``u < v``; an edge's id is its
    position in that order. ``community`` is filled in by
    :func:`girvan_newman_bipartition` (0 = advantaged side, holds vertex 0).
    """

    def __init__(self, n, edges):
        if n < 1:
            raise ContractError("graph needs at least one vertex")
        norm = set()
        for u, v in edges:
            u, v = int(u), int(v)
            if u == v:
                raise ContractError(f"self-loop at vertex {u}")
            if not (0 <= u < n and 0 <= v < n):
                raise ContractError(f"edge ({u}, {v}) outside 0..{n - 1}")
            norm.add((min(u, v), max(u, v)))
        self.n = n
        self.edges = np.array(sorted(norm), dtype=np.int64).reshape(-1, 2)
        self.n_edges = len(self.edges)
        arcs_src = np.concatenate([self.edges[:, 0], self.edges[:, 1]])
        arcs_dst = np.concatenate([self.edges[:, 1], self.edges[:, 0]])
        arcs_eid = np.concatenate([np.arange(self.n_edges), np.arange(self.n_edges)])
        order = np.lexsort((arcs_dst, arcs_src))
        self.indices = arcs_dst[order].astype(np.int64)
        self.edge_of = arcs_eid[order].astype(np.int64)
        self.indptr = np.zeros(n + 1, dtype=np.int64)
        np.cumsum(np.bincount(arcs_src, minlength=n), out=self.indptr[1:])
        self.community = None

    def neighbors(self, v):
        return self.indices[self.indptr[v]:self.indptr[v + 1]]

    def components(self, active=None):
        """Component label per vertex (labels in order of lowest member)."""
        if active is None:
            active = np.ones(self.n_edges, dtype=bool)
        label = np.full(self.n, -1, dtype=np.int64)
        nxt = 0
        for s in range(self.n):
            if label[s] >= 0:
                continue
            label[s] = nxt
            queue = deque([s])
            while queue:
                v = queue.popleft()
                for j in range(self.indptr[v], self.indptr[v + 1]):
                    w = self.indices[j]
                    if active[self.edge_of[j]] and label[w] < 0:
                        label[w] = nxt
                        queue.append(w)
            nxt += 1
        return label

    def is_connected(self):
        return self.n > 0 and int(self.components().max()) == 0

    def edge_betweenness(self, active=None):
        if active is None:
            active = np.ones(self.n_edges, dtype=bool)
        return kernels.edge_betweenness(self.indptr, self.indices, self.edge_of, active, self.n_edges)


def pick_max_edge(bc, active):
    """Lowest-id active edge whose betweenness ties the maximum."""
    vals = np.where(active, bc, -np.inf)
    top = vals.max()
    tol = TIE_RTOL * max(1.0, abs(top))
    return int(np.flatnonzero(vals >= top - tol)[0])


def girvan_newman_bipartition(graph):
    """Remove highest-betweenness edges until the graph falls into two parts.

    Returns a 0/1 label per vertex, 0 for the part containing vertex 0. The
    labels are also stored on ``graph.community``.
    """
    if graph.n < 2:
        raise ContractError("need at least two vertices to bipartition")
    if not graph.is_connected():
        raise ContractError("Girvan-Newman bipartition requires a connected graph")
    active = np.ones(graph.n_edges, dtype=bool)
    while True:
        bc = graph.edge_betweenness(active)
        active[pick_max_edge(bc, active)] = False
        comp = graph.components(active)
        if comp.max() >= 1:
            labels = (comp != comp[0]).astype(np.int64)
            graph.community = labels
            return labels


def small_world(n, mean_degree, rewire, seed):
    """Seeded Watts-Strogatz ring with rewiring; retries until connected."""
    if mean_degree % 2 or mean_degree < 2 or mean_degree >= n:
        raise ContractError("mean degree must be even, >= 2 and < n")
    for attempt in range(100):
        rng = np.random.default_rng([seed, attempt])
        half = mean_degree // 2
        edges = set()
        for u in range(n):
            for d in range(1, half + 1):
                v = (u + d) % n
                edges.add((min(u, v), max(u, v)))
        for u in range(n):
            for d in range(1, half + 1):
                v = (u + d) % n
                e = (min(u, v), max(u, v))
                if e not in edges or rng.random() >= rewire:
                    continue
                choices = [w for w in range(n) if w != u and (min(u, w), max(u, w)) not in edges]
                if not choices:
                    continue
                w = choices[int(rng.integers(len(choices)))]
                edges.remove(e)
                edges.add((min(u, w), max(u, w)))
        g = SocialGraph(n, sorted(edges))
        if g.is_connected():
            return g
    raise ContractError("could not draw a connected small-world graph")


def read_edge_list(path):
    """Whitespace-separated ``u v`` pairs, 0-indexed; ``#`` starts a comment."""
    edges = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ContractError(f"{path}:{lineno}: expected 'u v'")
            try:
                edges.append((int(parts[0]), int(parts[1])))
            except ValueError:
                raise ContractError(f"{path}:{lineno}: vertex ids must be integers") from None
    if not edges:
        raise ContractError(f"{path}: no edges")
    n = 1 + max(max(e) for e in edges)
    return SocialGraph(n, edges)


def write_edge_list(path, graph):
    with open(path, "w") as fh:
        for u, v in graph.edges:
            fh.write(f"{u} {v}\n")
