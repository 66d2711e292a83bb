"""Time the compiled kernels against the pure-Python fallback.

    python benchmarks/bench_kernels.py [--users 943] [--items 1682] [--repeat 3]

Both workloads are sized like one MovieLens-100K round: one SGD epoch over
the positives plus sampled negatives, and one reranker min-cost-flow solve.
"""

import argparse
import time

import numpy as np

from exposim import _backend, rerank as rr
from exposim.flow import min_cost_flow


def sgd_workload(n, m, nnz, d, seed):
    rng = np.random.default_rng(seed)
    users = rng.integers(0, n, nnz)
    items = rng.integers(0, m, nnz)
    targets = (rng.random(nnz) < 0.2).astype(np.float64)
    params = (rng.normal(0, 0.1, (n, d)), rng.normal(0, 0.1, (m, d)), np.zeros(n), np.zeros(m), np.zeros(1))
    return users, items, targets, params


def flow_workload(n, m, K, L, seed):
    rng = np.random.default_rng(seed)
    # popularity-skewed long lists, as a trained model produces
    pop = rng.zipf(1.3, m).astype(float)
    p = pop / pop.sum()
    lists = {u: rng.choice(m, L, replace=False, p=p) for u in range(n)}
    targets = rr.static_targets(lists, K, m)
    return rr.build_network(lists, targets, rr.RerankConfig(K=K, L=L))


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t)
    return min(times)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--users", type=int, default=943)
    ap.add_argument("--items", type=int, default=1682)
    ap.add_argument("--d", type=int, default=32)
    ap.add_argument("--repeat", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args()

    names = sorted(_backend.BACKENDS)
    if "compiled" not in names:
        print("compiled extension not built; timing the fallback only")

    users, items, targets, params = sgd_workload(args.users, args.items, 400_000, args.d, args.seed)
    graph = flow_workload(args.users, args.items, 10, 40, args.seed)

    rows = []
    for name in names:
        k = _backend.get(name)

        def sgd():
            P, Q, bu, bi, gb = (x.copy() for x in params)
            k.sgd_epoch(P, Q, bu, bi, gb, users, items, targets, 0.05, 0.01)

        def flow():
            min_cost_flow(graph.network, graph.required_flow, backend=name)

        rows.append((name, best_of(sgd, args.repeat), best_of(flow, args.repeat)))

    print(f"{'backend':<10} {'sgd epoch (s)':>14} {'rerank flow (s)':>16}")
    for name, s, f in rows:
        print(f"{name:<10} {s:14.4f} {f:16.4f}")
    if len(rows) == 2:
        (_, s0, f0), (_, s1, f1) = rows
        print(f"speedup    {s1 / s0:13.1f}x {f1 / f0:15.1f}x")


if __name__ == "__main__":
    main()
