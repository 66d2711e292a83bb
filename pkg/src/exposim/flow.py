"""Integer min-cost flow by successive shortest augmenting paths.

Dijkstra runs on reduced costs ``cost + pot[u] - pot[v]``, which stay
nonnegative as long as the potentials are updated after every search. Arcs
with negative cost are handled by seeding the potentials with a Bellman-Ford
pass. Adjacency lists keep arc insertion order and the priority queue breaks
distance ties by node id, so equal-cost optima come out the same on every run
and on both kernel backends.

DIMACS text format used by :func:`write_dimacs` / :func:`read_dimacs`
(nodes are 1-based in the file)::

    c <comment>
    p min <nodes> <arcs>
    n <node> <supply>            # source: +required, sink: -required
    a <from> <to> 0 <cap> <cost> # one line per arc, insertion order
    s <total_cost>               # solution lines, optional
    f <from> <to> <flow>
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass

import numpy as np

from . import _backend

_COST_LIMIT = 2**62


class InfeasibleFlowError(ValueError):
    """The requested flow value exceeds the network's maximum flow."""

    def __init__(self, required: int, max_flow: int):
        super().__init__(f"required flow {required} exceeds maximum flow {max_flow}")
        self.required = required
        self.max_flow = max_flow


@dataclass
class FlowNetwork:
    node_count: int
    arcs: list  # (from, to, capacity, cost) in insertion order
    source: int
    sink: int

    def __post_init__(self):
        self.arcs = [tuple(int(x) for x in a) for a in self.arcs]
        if not (0 <= self.source < self.node_count and 0 <= self.sink < self.node_count):
            raise ValueError("source and sink must be valid nodes")
        if self.source == self.sink:
            raise ValueError("source and sink must differ")
        for k, (a, b, cap, _cost) in enumerate(self.arcs):
            if not (0 <= a < self.node_count and 0 <= b < self.node_count):
                raise ValueError(f"arc {k} references a missing node")
            if a == b:
                raise ValueError(f"arc {k} is a self-loop on node {a}")
            if cap < 0:
                raise ValueError(f"arc {k} has negative capacity")
        total_cap = sum(a[2] for a in self.arcs)
        max_cost = max((abs(a[3]) for a in self.arcs), default=0)
        if total_cap * max(max_cost, 1) * max(self.node_count, 1) >= _COST_LIMIT:
            raise OverflowError("capacities and costs are too large for 64-bit arithmetic")

    def arrays(self):
        if self.arcs:
            a = np.array(self.arcs, dtype=np.int64)
        else:
            a = np.zeros((0, 4), dtype=np.int64)
        return a[:, 0], a[:, 1], a[:, 2], a[:, 3]


@dataclass
class FlowSolution:
    arc_flows: np.ndarray
    total_cost: int
    flow_value: int


def _residual(net: FlowNetwork):
    tail, head, cap, cost = net.arrays()
    n_arcs = tail.shape[0]
    r_head = np.empty(2 * n_arcs, dtype=np.int64)
    r_tail = np.empty(2 * n_arcs, dtype=np.int64)
    r_cap = np.zeros(2 * n_arcs, dtype=np.int64)
    r_cost = np.empty(2 * n_arcs, dtype=np.int64)
    r_head[0::2], r_head[1::2] = head, tail
    r_tail[0::2], r_tail[1::2] = tail, head
    r_cap[0::2] = cap
    r_cost[0::2], r_cost[1::2] = cost, -cost
    adj = np.argsort(r_tail, kind="stable").astype(np.int64)
    first = np.zeros(net.node_count + 1, dtype=np.int64)
    np.cumsum(np.bincount(r_tail, minlength=net.node_count), out=first[1:])
    return r_head, r_tail, r_cap, r_cost, first, adj


def _initial_potential(net: FlowNetwork) -> np.ndarray:
    """Shortest distances from a virtual root; raises on negative cycles."""
    pot = np.zeros(net.node_count, dtype=np.int64)
    live = [(a, b, c) for a, b, cap, c in net.arcs if cap > 0]
    if all(c >= 0 for _, _, c in live):
        return pot
    dist = [0] * net.node_count
    for _ in range(net.node_count):
        changed = False
        for a, b, c in live:
            if dist[a] + c < dist[b]:
                dist[b] = dist[a] + c
                changed = True
        if not changed:
            break
    else:
        raise ValueError("network contains a negative-cost cycle")
    pot[:] = dist
    return pot


def min_cost_flow(net: FlowNetwork, required_flow: int, backend: str | None = None) -> FlowSolution:
    """Send exactly ``required_flow`` units from source to sink at minimum cost."""
    required_flow = int(required_flow)
    if required_flow < 0:
        raise ValueError("required_flow must be nonnegative")
    kernels = _backend.get(backend)
    head, _tail, cap, cost, first, adj = _residual(net)
    original = cap[0::2].copy()
    potential = _initial_potential(net)
    pushed = 0
    if required_flow:
        pushed = int(kernels.successive_shortest_paths(
            net.node_count, head, cap, cost, first, adj,
            net.source, net.sink, required_flow, potential))
    if pushed < required_flow:
        raise InfeasibleFlowError(required_flow, pushed)
    flows = original - cap[0::2]
    total = int(np.dot(flows, cost[0::2])) if flows.shape[0] else 0
    return FlowSolution(flows, total, pushed)


def max_flow_value(net: FlowNetwork) -> int:
    """Maximum source-to-sink flow (Edmonds-Karp)."""
    head, _tail, cap, _cost, first, adj = _residual(net)
    head, cap, first, adj = head.tolist(), cap.tolist(), first.tolist(), adj.tolist()
    s, t = net.source, net.sink
    total = 0
    while True:
        pred = [-1] * net.node_count
        seen = [False] * net.node_count
        seen[s] = True
        queue = deque([s])
        while queue and not seen[t]:
            u = queue.popleft()
            for k in range(first[u], first[u + 1]):
                e = adj[k]
                v = head[e]
                if cap[e] > 0 and not seen[v]:
                    seen[v] = True
                    pred[v] = e
                    queue.append(v)
        if not seen[t]:
            return total
        push = None
        v = t
        while v != s:
            e = pred[v]
            push = cap[e] if push is None else min(push, cap[e])
            v = head[e ^ 1]
        v = t
        while v != s:
            e = pred[v]
            cap[e] -= push
            cap[e ^ 1] += push
            v = head[e ^ 1]
        total += push


def write_dimacs(net: FlowNetwork, required_flow: int, solution: FlowSolution | None = None,
                 comment: str | None = None) -> str:
    lines = []
    if comment:
        lines.extend(f"c {c}" for c in comment.splitlines())
    lines.append(f"p min {net.node_count} {len(net.arcs)}")
    lines.append(f"n {net.source + 1} {required_flow}")
    lines.append(f"n {net.sink + 1} {-required_flow}")
    for a, b, cap, c in net.arcs:
        lines.append(f"a {a + 1} {b + 1} 0 {cap} {c}")
    if solution is not None:
        lines.append(f"s {solution.total_cost}")
        for (a, b, _cap, _c), f in zip(net.arcs, solution.arc_flows.tolist()):
            lines.append(f"f {a + 1} {b + 1} {f}")
    return "\n".join(lines) + "\n"


def read_dimacs(text: str) -> tuple[FlowNetwork, int]:
    """Parse a network written by :func:`write_dimacs` (solution lines ignored)."""
    node_count = None
    supplies = {}
    arcs = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        parts = line.split()
        if not parts or parts[0] in ("c", "s", "f"):
            continue
        try:
            if parts[0] == "p":
                node_count = int(parts[2])
            elif parts[0] == "n":
                supplies[int(parts[1]) - 1] = int(parts[2])
            elif parts[0] == "a":
                a, b, low, cap, c = map(int, parts[1:6])
                if low != 0:
                    raise ValueError("lower bounds are not supported")
                arcs.append((a - 1, b - 1, cap, c))
            else:
                raise ValueError(f"unknown line type {parts[0]!r}")
        except (IndexError, ValueError) as exc:
            raise ValueError(f"line {lineno}: {exc}") from None
    if node_count is None:
        raise ValueError("missing problem line")
    sources = [k for k, v in supplies.items() if v > 0]
    sinks = [k for k, v in supplies.items() if v < 0]
    if len(sources) != 1 or len(sinks) != 1:
        # zero-flow networks carry supply 0 on both lines; fall back to order
        keys = list(supplies)
        if len(keys) != 2:
            raise ValueError("expected exactly one source and one sink")
        sources, sinks = [keys[0]], [keys[1]]
    return FlowNetwork(node_count, arcs, sources[0], sinks[0]), supplies[sources[0]]
