"""Hot inner loops, each with a numba-compiled and a pure-numpy implementation.

The public names dispatch on :data:`fairrl._accel.USE_NUMBA`. Both variants are
exported with ``_nb`` / ``_np`` suffixes so the test-suite and the benchmark can
run them side by side.
"""

import numpy as np

from fairrl._accel import USE_NUMBA, njit

__all__ = [
    "gae",
    "w1_ordered",
    "build_allocation",
    "infected_neighbor_counts",
    "edge_betweenness",
]


# --------------------------------------------------------------------------
# Generalized advantage estimation
# --------------------------------------------------------------------------

@njit
def _gae_nb(rewards, values, seg_end, bootstrap, gamma, lam):
    n = rewards.shape[0]
    adv = np.empty(n)
    running = 0.0
    for t in range(n - 1, -1, -1):
        if seg_end[t]:
            next_value = bootstrap[t]
            running = 0.0
        else:
            next_value = values[t + 1]
        delta = rewards[t] + gamma * next_value - values[t]
        running = delta + gamma * lam * running
        adv[t] = running
    return adv


def _gae_np(rewards, values, seg_end, bootstrap, gamma, lam):
    seg_end = np.asarray(seg_end, dtype=bool)
    next_values = np.empty_like(values)
    next_values[:-1] = values[1:]
    next_values[seg_end] = bootstrap[seg_end]
    deltas = rewards + gamma * next_values - values
    decay = np.where(seg_end, 0.0, gamma * lam)
    adv = np.empty_like(deltas)
    running = 0.0
    for t in range(deltas.shape[0] - 1, -1, -1):
        running = deltas[t] + decay[t] * running
        adv[t] = running
    return adv


def gae(rewards, values, seg_end, bootstrap, gamma, lam):
    """Backward GAE recursion over concatenated segments.

    ``seg_end[t]`` marks the last step of a segment (episode end or batch cut);
    ``bootstrap[t]`` is the value of the successor state at those steps (0 for a
    true terminal) and is ignored elsewhere.
    """
    rewards = np.ascontiguousarray(rewards, dtype=np.float64)
    values = np.ascontiguousarray(values, dtype=np.float64)
    seg_end = np.ascontiguousarray(seg_end, dtype=np.bool_)
    bootstrap = np.ascontiguousarray(bootstrap, dtype=np.float64)
    fn = _gae_nb if USE_NUMBA else _gae_np
    return fn(rewards, values, seg_end, bootstrap, float(gamma), float(lam))


# --------------------------------------------------------------------------
# 1-Wasserstein on an ordered support
# --------------------------------------------------------------------------

@njit
def _w1_nb(p, q, support):
    total = 0.0
    cdf_p = 0.0
    cdf_q = 0.0
    for i in range(p.shape[0] - 1):
        cdf_p += p[i]
        cdf_q += q[i]
        total += abs(cdf_p - cdf_q) * (support[i + 1] - support[i])
    return total


def _w1_np(p, q, support):
    diff = np.cumsum(p)[:-1] - np.cumsum(q)[:-1]
    return float(np.sum(np.abs(diff) * np.diff(support)))


def w1_ordered(p, q, support):
    p = np.ascontiguousarray(p, dtype=np.float64)
    q = np.ascontiguousarray(q, dtype=np.float64)
    support = np.ascontiguousarray(support, dtype=np.float64)
    fn = _w1_nb if USE_NUMBA else _w1_np
    return float(fn(p, q, support))


# --------------------------------------------------------------------------
# Iterative unit assignment
# --------------------------------------------------------------------------

@njit
def _build_allocation_nb(probs, n_units):
    work = probs.copy()
    out = np.zeros(probs.shape[0], dtype=np.int64)
    step = 1.0 / n_units
    for _ in range(n_units):
        best = 0
        for k in range(1, work.shape[0]):
            if work[k] > work[best]:
                best = k
        out[best] += 1
        work[best] -= step
    return out


def _build_allocation_np(probs, n_units):
    work = probs.copy()
    out = np.zeros(probs.shape[0], dtype=np.int64)
    step = 1.0 / n_units
    for _ in range(n_units):
        best = int(np.argmax(work))  # first maximum -> lowest index on ties
        out[best] += 1
        work[best] -= step
    return out


def build_allocation(probs, n_units):
    probs = np.ascontiguousarray(probs, dtype=np.float64)
    fn = _build_allocation_nb if USE_NUMBA else _build_allocation_np
    return fn(probs, int(n_units))


# --------------------------------------------------------------------------
# Infected-neighbour counts on a CSR adjacency
# --------------------------------------------------------------------------

@njit
def _infected_neighbor_counts_nb(indptr, indices, infected):
    n = indptr.shape[0] - 1
    out = np.zeros(n, dtype=np.int64)
    for v in range(n):
        c = 0
        for j in range(indptr[v], indptr[v + 1]):
            if infected[indices[j]]:
                c += 1
        out[v] = c
    return out


def _infected_neighbor_counts_np(indptr, indices, infected):
    n = indptr.shape[0] - 1
    rows = np.repeat(np.arange(n), np.diff(indptr))
    return np.bincount(rows, weights=infected[indices].astype(np.float64), minlength=n).astype(np.int64)


def infected_neighbor_counts(indptr, indices, infected):
    infected = np.ascontiguousarray(infected, dtype=np.bool_)
    fn = _infected_neighbor_counts_nb if USE_NUMBA else _infected_neighbor_counts_np
    return fn(indptr, indices, infected)


# --------------------------------------------------------------------------
# Edge betweenness (Brandes, unweighted, undirected)
# --------------------------------------------------------------------------

@njit
def _edge_betweenness_nb(indptr, indices, edge_of, active, n_edges):
    n = indptr.shape[0] - 1
    bc = np.zeros(n_edges)
    dist = np.empty(n, dtype=np.int64)
    sigma = np.empty(n)
    delta = np.empty(n)
    order = np.empty(n, dtype=np.int64)
    for s in range(n):
        dist[:] = -1
        sigma[:] = 0.0
        delta[:] = 0.0
        dist[s] = 0
        sigma[s] = 1.0
        order[0] = s
        head = 0
        tail = 1
        while head < tail:
            v = order[head]
            head += 1
            for j in range(indptr[v], indptr[v + 1]):
                if not active[edge_of[j]]:
                    continue
                w = indices[j]
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    order[tail] = w
                    tail += 1
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
        for i in range(tail - 1, -1, -1):
            w = order[i]
            for j in range(indptr[w], indptr[w + 1]):
                if not active[edge_of[j]]:
                    continue
                v = indices[j]
                if dist[v] == dist[w] - 1:
                    c = sigma[v] / sigma[w] * (1.0 + delta[w])
                    bc[edge_of[j]] += c
                    delta[v] += c
    return bc / 2.0


def _edge_betweenness_np(indptr, indices, edge_of, active, n_edges):
    # level-synchronous Brandes, vectorised over the directed arc list
    n = indptr.shape[0] - 1
    src = np.repeat(np.arange(n), np.diff(indptr))
    keep = active[edge_of]
    src, dst, eid = src[keep], indices[keep], edge_of[keep]
    bc = np.zeros(n_edges)
    for s in range(n):
        dist = np.full(n, -1, dtype=np.int64)
        sigma = np.zeros(n)
        dist[s] = 0
        sigma[s] = 1.0
        frontier = np.zeros(n, dtype=bool)
        frontier[s] = True
        level = 0
        while frontier.any():
            arcs = frontier[src]
            reached = np.zeros(n, dtype=bool)
            reached[dst[arcs]] = True
            new = reached & (dist < 0)
            dist[new] = level + 1
            fwd = arcs & new[dst]
            np.add.at(sigma, dst[fwd], sigma[src[fwd]])
            frontier = new
            level += 1
        delta = np.zeros(n)
        # arcs v -> w on a shortest path, processed from the deepest level up
        on_path = (dist[src] >= 0) & (dist[dst] == dist[src] + 1)
        for lvl in range(level - 1, 0, -1):
            sel = on_path & (dist[dst] == lvl)
            v, w = src[sel], dst[sel]
            c = sigma[v] / sigma[w] * (1.0 + delta[w])
            np.add.at(bc, eid[sel], c)
            np.add.at(delta, v, c)
    return bc / 2.0


def edge_betweenness(indptr, indices, edge_of, active, n_edges):
    """Unnormalized shortest-path betweenness for every undirected edge.

    ``edge_of[j]`` maps CSR slot ``j`` to its undirected edge id; inactive
    edges are treated as removed and get betweenness 0.
    """
    active = np.ascontiguousarray(active, dtype=np.bool_)
    fn = _edge_betweenness_nb if USE_NUMBA else _edge_betweenness_np
    return fn(indptr, indices, edge_of, active, int(n_edges))
