"""Discrepancy-minimizing reranking over long candidate lists.

Each user keeps ``K`` of their ``L`` candidates. The choice is a min-cost flow
on the bipartite user-item graph::

    source -> user        capacity K,      cost 0
    user   -> item        capacity 1,      cost = rank of item in user's list
    item   -> sink        capacity C(i),   cost 0         (target arc)
    item   -> sink        capacity n*K,    cost lambda    (overflow arc)

With ``lambda`` larger than any achievable total rank cost, the optimum first
minimizes the number of over-target slots ``sum_i max(0, deg(i) - C(i))`` and
then the total rank cost. Shortfall below a target is not charged directly:
because every user must place exactly ``K`` slots, capacity left unused on
cheap target arcs has to be paid for as overflow somewhere else, so
``sum_i |deg(i) - C(i)| = 2 * overflow - (n*K - sum_i C(i))`` and minimizing
overflow minimizes the absolute discrepancy as well.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .flow import FlowNetwork, InfeasibleFlowError, min_cost_flow

TARGET_MODES = ("static", "dynamic-literal", "dynamic-normalized")


@dataclass
class TargetVector:
    targets: np.ndarray  # int64, one entry per catalog item
    mode: str = "static"

    def __post_init__(self):
        self.targets = np.asarray(self.targets, dtype=np.int64)
        if self.mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.mode!r}")
        if np.any(self.targets < 0):
            raise ValueError("targets must be nonnegative")

    def __getitem__(self, item):
        return self.targets[item]


@dataclass(frozen=True)
class RerankConfig:
    K: int = 10
    L: int = 40
    # 0 selects n*K*L + 1, see auto_weight
    discrepancy_weight: int = 0
    target_mode: str = "dynamic-normalized"
    epsilon_exposure: float | None = None
    # bound normalized dynamic targets by each item's long-list in-degree
    cap_to_degree: bool = True

    def __post_init__(self):
        if self.K < 0 or self.L < 0:
            raise ValueError("K and L must be nonnegative")
        if self.K > self.L:
            raise ValueError(f"K={self.K} exceeds L={self.L}")
        if self.discrepancy_weight < 0:
            raise ValueError("discrepancy_weight must be positive (or 0 for automatic)")
        if self.target_mode not in TARGET_MODES:
            raise ValueError(f"unknown target mode {self.target_mode!r}")
        if self.epsilon_exposure is not None and not self.epsilon_exposure > 0:
            raise ValueError("epsilon_exposure must be positive")

    @property
    def epsilon(self) -> float:
        if self.epsilon_exposure is not None:
            return float(self.epsilon_exposure)
        return 1.0 / math.log2(1 + max(self.K, 1))


def auto_weight(n_users: int, K: int, L: int) -> int:
    """Smallest overflow weight that exceeds every possible total rank cost."""
    return n_users * K * L + 1


def _catalog_size(long_lists, m):
    if m is not None:
        return int(m)
    return 1 + max((int(x.max()) for x in long_lists.values() if len(x)), default=-1)


def static_targets(long_lists: dict, K: int, m: int | None = None) -> TargetVector:
    """Split the ``n*K`` slots equally over the distinct listed items (floored)."""
    if K <= 0:
        raise ValueError("K must be positive")
    m = _catalog_size(long_lists, m)
    targets = np.zeros(m, dtype=np.int64)
    nonempty = [np.asarray(x) for x in long_lists.values() if len(x)]
    if not nonempty:
        return TargetVector(targets, "static")
    listed = np.unique(np.concatenate(nonempty))
    targets[listed] = (len(nonempty) * K) // listed.shape[0]
    return TargetVector(targets, "static")


def dynamic_targets(static: TargetVector, cumulative: np.ndarray, round: int,
                    mode: str = "dynamic-normalized", epsilon: float = 1.0,
                    n: int = 0, K: int = 0, caps: np.ndarray | None = None) -> TargetVector:
    """Scale static targets by the inverse of each item's cumulative exposure.

    ``cumulative`` holds exposure summed over the rounds completed so far. In
    ``dynamic-literal`` mode the result is ``floor(C / max(E, eps))``. In
    ``dynamic-normalized`` mode the ratios ``C / max(E, eps)`` are rescaled to
    the ``n*K`` slot budget, floored, and the remainder handed out one slot at
    a time in decreasing ratio order. With no exposure recorded yet (round 1)
    both modes return the static targets.

    ``caps``, when given, bounds each normalized target (typically by the
    number of long lists containing the item). Budget an item cannot absorb
    is water-filled onto the others in proportion to their ratios.
    """
    if round < 1:
        raise ValueError("rounds are numbered from 1")
    if mode not in ("dynamic-literal", "dynamic-normalized"):
        raise ValueError(f"not a dynamic mode: {mode!r}")
    if not epsilon > 0:
        raise ValueError("epsilon must be positive")
    base = static.targets.astype(np.float64)
    cumulative = np.asarray(cumulative, dtype=np.float64)
    if cumulative.shape != base.shape:
        raise ValueError("exposure vector and targets differ in length")
    if round == 1 or not np.any(cumulative > 0):
        return TargetVector(static.targets.copy(), mode)

    raw = base / np.maximum(cumulative, epsilon)
    if mode == "dynamic-literal":
        return TargetVector(np.floor(raw + 1e-12).astype(np.int64), mode)

    budget = int(n) * int(K)
    if raw.sum() <= 0 or budget <= 0:
        return TargetVector(np.zeros_like(static.targets), mode)
    if caps is None:
        limit = np.full(raw.shape, np.inf)
    else:
        limit = np.asarray(caps, dtype=np.float64)
        if limit.shape != raw.shape:
            raise ValueError("caps and targets differ in length")
    share = _water_fill(raw, limit, budget)
    targets = np.floor(share + 1e-9).astype(np.int64)
    deficit = budget - int(targets.sum())
    ranked = np.lexsort((np.arange(raw.shape[0]), -raw))
    ranked = ranked[(raw[ranked] > 0) & (limit[ranked] > 0)]
    while deficit > 0 and ranked.shape[0]:
        room = ranked[targets[ranked] < limit[ranked]]
        if not room.shape[0]:
            break
        take = room[:deficit]
        targets[take] += 1
        deficit -= take.shape[0]
    return TargetVector(targets, mode)


def _water_fill(weights, caps, budget):
    """Split ``budget`` proportionally to ``weights`` without exceeding ``caps``."""
    share = np.zeros_like(weights)
    active = (weights > 0) & (caps > 0)
    left = float(budget)
    while active.any() and left > 1e-9:
        level = left / weights[active].sum()
        full = active & (level * weights >= caps - share)
        if not full.any():
            share[active] += level * weights[active]
            break
        left -= float((caps - share)[full].sum())
        share[full] = caps[full]
        active &= ~full
    return share


@dataclass
class RerankGraph:
    network: FlowNetwork
    required_flow: int
    users: list  # network users, ascending id
    excluded: list  # users whose long list is shorter than K
    items: np.ndarray  # item id of each item node
    assignment_arcs: list = field(default_factory=list)  # (user, item, rank, arc index)
    weight: int = 0


def build_network(long_lists: dict, targets: TargetVector, cfg: RerankConfig) -> RerankGraph:
    K = cfg.K
    users = sorted(u for u, lst in long_lists.items() if K > 0 and len(lst) >= K)
    network_users = set(users)
    excluded = sorted(u for u in long_lists if u not in network_users)
    if users:
        items = np.unique(np.concatenate([np.asarray(long_lists[u]) for u in users]))
    else:
        items = np.zeros(0, dtype=np.int64)
    n_u = len(users)
    max_len = max((len(long_lists[u]) for u in users), default=0)
    weight = cfg.discrepancy_weight or auto_weight(n_u, K, max_len)
    if cfg.discrepancy_weight and n_u and weight <= n_u * cfg.L:
        raise ValueError(f"discrepancy_weight {weight} must exceed n*L = {n_u * cfg.L}")

    source = 0
    sink = 1 + n_u + items.shape[0]
    item_node = {int(i): 1 + n_u + k for k, i in enumerate(items.tolist())}
    arcs = []
    for k, u in enumerate(users):
        arcs.append((source, 1 + k, K, 0))
    assignment = []
    for k, u in enumerate(users):
        for rank, i in enumerate(np.asarray(long_lists[u]).tolist(), start=1):
            assignment.append((u, i, rank, len(arcs)))
            arcs.append((1 + k, item_node[i], 1, rank))
    overflow_cap = n_u * K
    for i in items.tolist():
        node = item_node[i]
        arcs.append((node, sink, int(targets.targets[i]), 0))
        arcs.append((node, sink, overflow_cap, weight))
    net = FlowNetwork(sink + 1, arcs, source, sink)
    return RerankGraph(net, n_u * K, users, excluded, items, assignment, weight)


def rerank(long_lists: dict, targets: TargetVector, cfg: RerankConfig,
           backend: str | None = None) -> dict[int, np.ndarray]:
    """Choose ``K`` items per user from their long list by min-cost flow.

    Final lists keep long-list order. Users with fewer than ``K`` candidates
    get their whole list.
    """
    graph = build_network(long_lists, targets, cfg)
    try:
        sol = min_cost_flow(graph.network, graph.required_flow, backend=backend)
    except InfeasibleFlowError as exc:  # overflow arcs make this unreachable
        raise RuntimeError(f"reranker network unexpectedly infeasible: {exc}") from exc
    chosen: dict[int, list] = {u: [] for u in graph.users}
    flows = sol.arc_flows
    for u, i, _rank, arc in graph.assignment_arcs:
        if flows[arc]:
            chosen[u].append(i)
    out = {}
    for u, lst in long_lists.items():
        lst = np.asarray(lst, dtype=np.int64)
        out[u] = np.asarray(chosen[u], dtype=np.int64) if u in chosen else lst[: cfg.K].copy()
    return out


def top_k(long_lists: dict, K: int) -> dict[int, np.ndarray]:
    return {u: np.asarray(lst, dtype=np.int64)[:K].copy() for u, lst in long_lists.items()}


def item_degrees(lists: dict, m: int) -> np.ndarray:
    nonempty = [np.asarray(x, dtype=np.int64) for x in lists.values() if len(x)]
    if not nonempty:
        return np.zeros(m, dtype=np.int64)
    return np.bincount(np.concatenate(nonempty), minlength=m).astype(np.int64)


def discrepancy(lists: dict, targets: TargetVector) -> int:
    """Total absolute gap between achieved slot counts and targets."""
    deg = item_degrees(lists, targets.targets.shape[0])
    return int(np.abs(deg - targets.targets).sum())


def overflow_units(lists: dict, targets: TargetVector) -> int:
    deg = item_degrees(lists, targets.targets.shape[0])
    return int(np.maximum(deg - targets.targets, 0).sum())


def rank_cost(lists: dict, long_lists: dict) -> int:
    total = 0
    for u, lst in lists.items():
        pos = {int(i): r for r, i in enumerate(np.asarray(long_lists[u]).tolist(), start=1)}
        total += sum(pos[int(i)] for i in np.asarray(lst).tolist())
    return total
