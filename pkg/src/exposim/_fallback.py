"""Pure-Python versions of the compiled kernels in ``_kernels.pyx``."""

import heapq

import numpy as np


def sgd_epoch(P, Q, bu, bi, gb, users, items, targets, lr, reg):
    total = 0.0
    g = float(gb[0])
    # overflow is left to the caller's divergence check, as in the compiled kernel
    with np.errstate(over="ignore", invalid="ignore"):
        for u, i, y in zip(users.tolist(), items.tolist(), targets.tolist()):
            pu = P[u]
            qi = Q[i]
            err = y - (g + bu[u] + bi[i] + float(np.dot(pu, qi)))
            total += err * err
            g += lr * err
            bu[u] += lr * (err - reg * bu[u])
            bi[i] += lr * (err - reg * bi[i])
            pu_old = pu.copy()
            pu += lr * (err * qi - reg * pu)
            qi += lr * (err * pu_old - reg * qi)
    gb[0] = g
    return total


def successive_shortest_paths(n_nodes, head, cap, cost, first, adj, source, sink,
                              required, potential):
    head_l = head.tolist()
    cost_l = cost.tolist()
    first_l = first.tolist()
    adj_l = adj.tolist()
    cap_l = cap.tolist()
    pot = potential.tolist()
    inf = 2**62
    flow = 0
    while flow < required:
        dist = [inf] * n_nodes
        done = [False] * n_nodes
        dist[source] = 0
        heap = [(0, source)]
        while heap:
            d, u = heapq.heappop(heap)
            if done[u]:
                continue
            done[u] = True
            if u == sink:
                break
            pu = pot[u]
            for k in range(first_l[u], first_l[u + 1]):
                e = adj_l[k]
                if cap_l[e] <= 0:
                    continue
                v = head_l[e]
                if done[v]:
                    continue
                nd = d + cost_l[e] + pu - pot[v]
                if nd < dist[v]:
                    dist[v] = nd
                    heapq.heappush(heap, (nd, v))
        if not done[sink]:
            break
        dt = dist[sink]
        for k in range(n_nodes):
            pot[k] += dist[k] if done[k] else dt

        dead = [False] * n_nodes
        onpath = [False] * n_nodes
        it = first_l[:-1]
        stack = []
        u = source
        onpath[source] = True
        while flow < required:
            if u == sink:
                bottleneck = min(required - flow, min(cap_l[e] for e in stack))
                for e in stack:
                    cap_l[e] -= bottleneck
                    cap_l[e ^ 1] += bottleneck
                    onpath[head_l[e]] = False
                flow += bottleneck
                stack.clear()
                u = source
                continue
            end = first_l[u + 1]
            k = it[u]
            pu = pot[u]
            while k < end:
                e = adj_l[k]
                v = head_l[e]
                if cap_l[e] > 0 and not dead[v] and not onpath[v] and cost_l[e] + pu - pot[v] == 0:
                    break
                k += 1
            it[u] = k
            if k < end:
                e = adj_l[k]
                stack.append(e)
                u = head_l[e]
                onpath[u] = True
            else:
                dead[u] = True
                onpath[u] = False
                if not stack:
                    break
                u = head_l[stack.pop() ^ 1]
                it[u] += 1
    cap[:] = cap_l
    potential[:] = pot
    return flow
