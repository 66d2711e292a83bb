"""Brute-force reference implementations used only by the tests."""

import itertools

import numpy as np


def brute_min_cost_flow(node_count, arcs, source, sink, required):
    """Minimum cost over every integral flow of value ``required``; None if infeasible."""
    if not arcs:
        return 0 if required == 0 else None
    caps = [a[2] for a in arcs]
    grid = np.indices([c + 1 for c in caps], dtype=np.int16).reshape(len(arcs), -1).T
    incidence = np.zeros((node_count, len(arcs)), dtype=np.int16)
    for k, (a, b, _cap, _cost) in enumerate(arcs):
        incidence[a, k] += 1
        incidence[b, k] -= 1
    want = np.zeros(node_count, dtype=np.int16)
    want[source] = required
    want[sink] = -required
    ok = np.all(grid @ incidence.T == want, axis=1)
    if not ok.any():
        return None
    costs = grid[ok].astype(np.int64) @ np.array([a[3] for a in arcs], dtype=np.int64)
    return int(costs.min())


def brute_max_flow(node_count, arcs, source, sink):
    best = 0
    total = sum(a[2] for a in arcs if a[0] == source)
    for r in range(total + 1):
        if brute_min_cost_flow(node_count, arcs, source, sink, r) is not None:
            best = r
    return best


def brute_rerank(long_lists, targets, K):
    """Lexicographic (overflow units, rank cost) optimum over all K-subset choices."""
    users = sorted(u for u, lst in long_lists.items() if len(lst) >= K)
    options = []
    for u in users:
        lst = list(long_lists[u])
        options.append([(u, combo) for combo in itertools.combinations(range(len(lst)), K)])
    best = None
    for choice in itertools.product(*options):
        deg = {}
        rank_cost = 0
        for u, combo in choice:
            for pos in combo:
                item = long_lists[u][pos]
                deg[item] = deg.get(item, 0) + 1
                rank_cost += pos + 1
        overflow = sum(max(0, d - int(targets[i])) for i, d in deg.items())
        key = (overflow, rank_cost)
        if best is None or key < best:
            best = key
    return best


def gini_mad(x):
    """Gini via mean absolute difference, rescaled to reach 1 at full concentration."""
    x = np.asarray(x, dtype=float)
    m = x.shape[0]
    mad = np.abs(x[:, None] - x[None, :]).sum() / (m * m)
    g = mad / (2 * x.mean())
    return g * m / (m - 1)


def dcg(lst, relevant):
    return sum(1.0 / np.log2(k + 2) for k, i in enumerate(lst) if i in relevant)
