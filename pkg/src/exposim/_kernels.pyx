# cython: language_level=3
"""Compiled inner loops for exposim.

Both routines mirror ``exposim._fallback`` operation for operation so the two
backends are interchangeable.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()

ctypedef cnp.int64_t i64


def sgd_epoch(double[:, ::1] P, double[:, ::1] Q, double[::1] bu, double[::1] bi,
              double[::1] gb, i64[::1] users, i64[::1] items, double[::1] targets,
              double lr, double reg):
    """Run one pass of pointwise squared-loss SGD over the given samples.

    Parameters are updated in place. Returns the sum of squared errors
    measured before each update.
    """
    cdef Py_ssize_t s, f, n = users.shape[0], d = P.shape[1]
    cdef i64 u, i
    cdef double pred, err, pu, qi, total = 0.0
    for s in range(n):
        u = users[s]
        i = items[s]
        pred = gb[0] + bu[u] + bi[i]
        for f in range(d):
            pred += P[u, f] * Q[i, f]
        err = targets[s] - pred
        total += err * err
        gb[0] += lr * err
        bu[u] += lr * (err - reg * bu[u])
        bi[i] += lr * (err - reg * bi[i])
        for f in range(d):
            pu = P[u, f]
            qi = Q[i, f]
            P[u, f] = pu + lr * (err * qi - reg * pu)
            Q[i, f] = qi + lr * (err * pu - reg * qi)
    return total


cdef inline bint _less(i64 d1, i64 v1, i64 d2, i64 v2) noexcept nogil:
    return d1 < d2 or (d1 == d2 and v1 < v2)


cdef inline void _push(i64[::1] hd, i64[::1] hv, Py_ssize_t *size, i64 d, i64 v) noexcept nogil:
    cdef Py_ssize_t k = size[0], parent
    size[0] += 1
    while k > 0:
        parent = (k - 1) >> 1
        if _less(d, v, hd[parent], hv[parent]):
            hd[k] = hd[parent]
            hv[k] = hv[parent]
            k = parent
        else:
            break
    hd[k] = d
    hv[k] = v


cdef inline void _pop(i64[::1] hd, i64[::1] hv, Py_ssize_t *size) noexcept nogil:
    cdef Py_ssize_t k = 0, child, n
    cdef i64 d, v
    size[0] -= 1
    n = size[0]
    if n == 0:
        return
    d = hd[n]
    v = hv[n]
    while True:
        child = 2 * k + 1
        if child >= n:
            break
        if child + 1 < n and _less(hd[child + 1], hv[child + 1], hd[child], hv[child]):
            child += 1
        if _less(hd[child], hv[child], d, v):
            hd[k] = hd[child]
            hv[k] = hv[child]
            k = child
        else:
            break
    hd[k] = d
    hv[k] = v


def successive_shortest_paths(Py_ssize_t n_nodes, i64[::1] head, i64[::1] cap,
                              i64[::1] cost, i64[::1] first, i64[::1] adj,
                              i64 source, i64 sink, i64 required, i64[::1] potential):
    """Push up to ``required`` units from source to sink along shortest paths.

    Each phase runs Dijkstra on reduced costs, updates the potentials, then
    augments along zero-reduced-cost paths found by depth-first search until
    none is left. ``cap`` (residual capacities) and ``potential`` are modified
    in place; residual arc ``e ^ 1`` is the reverse of arc ``e``. Returns the
    flow value actually pushed, which is less than ``required`` only when the
    sink became unreachable.
    """
    cdef i64 INF = 2 ** 62
    cdef i64 flow = 0, d, u, v, e, nd, bottleneck, dt
    cdef Py_ssize_t size, k, top
    cdef cnp.ndarray[i64, ndim=1] dist_arr = np.empty(n_nodes, dtype=np.int64)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] done_arr = np.empty(n_nodes, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] dead_arr = np.empty(n_nodes, dtype=np.uint8)
    cdef cnp.ndarray[cnp.uint8_t, ndim=1] onpath_arr = np.zeros(n_nodes, dtype=np.uint8)
    cdef cnp.ndarray[i64, ndim=1] it_arr = np.empty(n_nodes, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] stack_arr = np.empty(n_nodes + 1, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] hd_arr = np.empty(head.shape[0] + 2, dtype=np.int64)
    cdef cnp.ndarray[i64, ndim=1] hv_arr = np.empty(head.shape[0] + 2, dtype=np.int64)
    cdef i64[::1] dist = dist_arr
    cdef cnp.uint8_t[::1] done = done_arr
    cdef cnp.uint8_t[::1] dead = dead_arr
    cdef cnp.uint8_t[::1] onpath = onpath_arr
    cdef i64[::1] it = it_arr
    cdef i64[::1] stack = stack_arr  # arcs of the current DFS path
    cdef i64[::1] hd = hd_arr
    cdef i64[::1] hv = hv_arr

    while flow < required:
        # Dijkstra on reduced costs, stopped once the sink is settled
        for k in range(n_nodes):
            dist[k] = INF
            done[k] = 0
        dist[source] = 0
        size = 0
        _push(hd, hv, &size, 0, source)
        while size > 0:
            d = hd[0]
            u = hv[0]
            _pop(hd, hv, &size)
            if done[u]:
                continue
            done[u] = 1
            if u == sink:
                break
            for k in range(first[u], first[u + 1]):
                e = adj[k]
                if cap[e] <= 0:
                    continue
                v = head[e]
                if done[v]:
                    continue
                nd = d + cost[e] + potential[u] - potential[v]
                if nd < dist[v]:
                    dist[v] = nd
                    _push(hd, hv, &size, nd, v)
        if not done[sink]:
            break
        dt = dist[sink]
        for k in range(n_nodes):
            if done[k]:
                potential[k] += dist[k]
            else:
                potential[k] += dt

        # augment along admissible (zero reduced cost) paths
        for k in range(n_nodes):
            dead[k] = 0
            it[k] = first[k]
        top = 0
        u = source
        onpath[source] = 1
        while flow < required:
            if u == sink:
                bottleneck = required - flow
                for k in range(top):
                    e = stack[k]
                    if cap[e] < bottleneck:
                        bottleneck = cap[e]
                for k in range(top):
                    e = stack[k]
                    cap[e] -= bottleneck
                    cap[e ^ 1] += bottleneck
                flow += bottleneck
                for k in range(top):
                    onpath[head[stack[k]]] = 0
                top = 0
                u = source
                continue
            while it[u] < first[u + 1]:
                e = adj[it[u]]
                v = head[e]
                if (cap[e] > 0 and not dead[v] and not onpath[v]
                        and cost[e] + potential[u] - potential[v] == 0):
                    break
                it[u] += 1
            if it[u] < first[u + 1]:
                e = adj[it[u]]
                stack[top] = e
                top += 1
                u = head[e]
                onpath[u] = 1
            else:
                dead[u] = 1
                onpath[u] = 0
                if top == 0:
                    break
                top -= 1
                u = head[stack[top] ^ 1]
                it[u] += 1
        onpath[source] = 0
        for k in range(top):
            onpath[head[stack[k]]] = 0
    return flow
