"""Round-by-round feedback-loop simulation.

Each round: split the current profiles, train the base recommender, build
long lists, cut them to final lists (plain top-K or a reranker), evaluate,
draw clicks and fold them back into the profiles.

Run directory layout::

    config.json    resolved configuration
    manifest.json  run id, config hash, dataset fingerprint, progress
    rounds.csv     one RoundReport per round (also rounds.jsonl)
    clicks.jsonl   every accepted click: round, user, item, rank
    rerank.jsonl   per round: targets, achieved degrees, discrepancy, overflow
    lists.jsonl    per round final lists (when dump_lists is on)
    ledger.bin     checkpoint: exposure ledger and profile state (npz)
    model.npz      last factor model (warm-start runs only)

User and item ids in these files are the dense indices assigned at load time.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import logging
import time
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path
from typing import Callable

import numpy as np

from . import metrics, rerank as rr
from .dataset import InteractionStore, apply_clicks, load_dataset, split
from .mf import FactorModel, MfHyperparams, long_lists, train

_logger = logging.getLogger(__name__)

PIPELINES = ("mf", "mf+dm-static", "mf+dm-dynamic")


class SimulationError(RuntimeError):
    def __init__(self, round: int, cause: BaseException):
        super().__init__(f"simulation failed in round {round}: {cause}")
        self.round = round


def derive_seed(global_seed: int, round: int, stream: str) -> int:
    """Stable 63-bit seed for one (round, stream) pair."""
    digest = hashlib.blake2b(f"{int(global_seed)}|{int(round)}|{stream}".encode(), digest_size=8).digest()
    return int.from_bytes(digest, "big") & (2**63 - 1)


@dataclass(frozen=True)
class SimConfig:
    T: int = 600
    K: int = 10
    L: int = 40
    alpha: float = -0.5
    split_ratio: float = 0.8
    seed: int = 0
    pipeline: str = "mf"
    mf_hp: MfHyperparams = field(default_factory=MfHyperparams)
    rerank_cfg: rr.RerankConfig = field(default_factory=rr.RerankConfig)
    output_dir: str | None = None
    freeze_test: bool = False
    warm_start: bool = False
    gini_population: str = "catalog"
    dump_lists: bool = True
    backend: str | None = None

    def __post_init__(self):
        if self.T < 1:
            raise ValueError("T must be at least 1")
        if self.K > self.L:
            raise ValueError("K must not exceed L")
        if self.K < 1:
            raise ValueError("K must be positive")
        if not self.alpha < 0:
            raise ValueError("alpha must be negative")
        if self.pipeline not in PIPELINES:
            raise ValueError(f"pipeline must be one of {PIPELINES}")
        if self.pipeline == "mf+dm-dynamic" and not self.rerank_cfg.target_mode.startswith("dynamic"):
            raise ValueError("mf+dm-dynamic needs a dynamic target_mode")
        if (self.rerank_cfg.K, self.rerank_cfg.L) != (self.K, self.L):
            object.__setattr__(self, "rerank_cfg", replace(self.rerank_cfg, K=self.K, L=self.L))


@dataclass
class ClickOutcome:
    accepted: list  # (user, item, rank)
    offered: int


def acceptance_probability(alpha: float, rank) -> np.ndarray:
    return np.exp(alpha * np.asarray(rank, dtype=np.float64))


def simulate_clicks(lists: dict, alpha: float, rng_seed: int,
                    profile: InteractionStore | None = None) -> ClickOutcome:
    """Accept each slot independently with probability ``exp(alpha * rank)``.

    Uniform draws form one row per user index, so a user's outcome does not
    depend on which other users are present. Slots holding an item already in
    ``profile`` are not offered.
    """
    if not lists:
        return ClickOutcome([], 0)
    n_rows = max(lists) + 1
    width = max((len(x) for x in lists.values()), default=0)
    draws = np.random.default_rng(rng_seed).random((n_rows, width))
    p = acceptance_probability(alpha, np.arange(1, width + 1))
    accepted = []
    offered = 0
    for u in sorted(lists):
        lst = np.asarray(lists[u], dtype=np.int64)
        if lst.shape[0] == 0:
            continue
        ok = np.ones(lst.shape[0], dtype=bool)
        if profile is not None:
            ok = ~profile.contains_many(np.full(lst.shape[0], u), lst)
        offered += int(ok.sum())
        hit = ok & (draws[u, : lst.shape[0]] < p[: lst.shape[0]])
        for k in np.flatnonzero(hit).tolist():
            accepted.append((int(u), int(lst[k]), k + 1))
    return ClickOutcome(accepted, offered)


def _exclusion_store(train_store: InteractionStore, store: InteractionStore) -> InteractionStore:
    """Training profile plus every clicked item, so clicks are never re-recommended."""
    clicked = store.rounds > 0
    keys = np.union1d(train_store.keys(), store.keys()[clicked])
    return InteractionStore(store.n, store.m, keys // store.m, keys % store.m, validate=False)


def _lists_json(lists: dict) -> dict:
    return {str(u): np.asarray(v).tolist() for u, v in sorted(lists.items())}


class _RunWriter:
    def __init__(self, out: Path, config: SimConfig, store: InteractionStore, manifest: dict):
        self.out = out
        self.config = config
        self.manifest = manifest
        self.prior_wall_time = float(manifest.get("wall_time", 0.0))

    def _append(self, name, text):
        with open(self.out / name, "a", encoding="utf-8", newline="") as fh:
            fh.write(text)

    def start(self, fresh: bool):
        if fresh:
            buf = io.StringIO()
            csv.writer(buf, lineterminator="\n").writerow(metrics.RoundReport.header())
            (self.out / "rounds.csv").write_text(buf.getvalue(), encoding="utf-8")
            for name in ("rounds.jsonl", "clicks.jsonl", "rerank.jsonl", "lists.jsonl"):
                (self.out / name).write_text("", encoding="utf-8")
            if not (self.out / "config.json").exists():
                (self.out / "config.json").write_text(
                    json.dumps(asdict(self.config), indent=2, sort_keys=True) + "\n", encoding="utf-8")

    def round(self, report, clicks, rerank_info, lists):
        buf = io.StringIO()
        csv.writer(buf, lineterminator="\n").writerow(report.csv_row())
        self._append("rounds.csv", buf.getvalue())
        self._append("rounds.jsonl", report.to_json() + "\n")
        self._append("clicks.jsonl", "".join(
            json.dumps({"round": report.round, "user": u, "item": i, "rank": k}) + "\n"
            for u, i, k in clicks.accepted))
        self._append("rerank.jsonl", json.dumps(rerank_info) + "\n")
        if self.config.dump_lists:
            self._append("lists.jsonl", json.dumps({"round": report.round, "lists": _lists_json(lists)}) + "\n")

    def checkpoint(self, t, ledger, store, model, elapsed):
        arrays = {f"ledger_{k}": v for k, v in ledger.to_arrays().items()}
        arrays.update(store_users=store.users, store_items=store.items, store_values=store.values,
                      store_rounds=store.rounds, round=np.array([t]),
                      skipped=np.array([store.skipped_clicks]))
        tmp = self.out / "ledger.bin.tmp"
        with open(tmp, "wb") as fh:
            np.savez(fh, **arrays)
        tmp.replace(self.out / "ledger.bin")
        if model is not None:
            model.save(self.out / "model.npz")
        self.manifest["rounds_completed"] = t
        self.manifest["wall_time"] = round(self.prior_wall_time + elapsed, 3)
        (self.out / "manifest.json").write_text(json.dumps(self.manifest, indent=2, sort_keys=True) + "\n")


def load_checkpoint(run_dir, store: InteractionStore):
    """Restore (round, ledger, store) from a run directory's ``ledger.bin``."""
    with np.load(Path(run_dir) / "ledger.bin") as z:
        ledger = metrics.ExposureLedger.from_arrays({k[7:]: z[k] for k in z.files if k.startswith("ledger_")})
        restored = InteractionStore(store.n, store.m, z["store_users"], z["store_items"],
                                    z["store_values"], z["store_rounds"], validate=False)
        restored.skipped_clicks = int(z["skipped"][0])
        done = int(z["round"][0])
    restored.user_ids, restored.item_ids = store.user_ids, store.item_ids
    return done, ledger, restored


def _truncate_logs(out: Path, done: int):
    """Drop log lines for rounds after the checkpoint (interrupted round)."""
    rows = (out / "rounds.csv").read_text(encoding="utf-8").splitlines(keepends=True)
    (out / "rounds.csv").write_text("".join(rows[:1] + [r for r in rows[1:] if int(r.split(",", 1)[0]) <= done]),
                                    encoding="utf-8")
    for name in ("rounds.jsonl", "clicks.jsonl", "rerank.jsonl", "lists.jsonl"):
        path = out / name
        if not path.exists():
            continue
        keep = [ln for ln in path.read_text(encoding="utf-8").splitlines(keepends=True)
                if ln.strip() and json.loads(ln)["round"] <= done]
        path.write_text("".join(keep), encoding="utf-8")


def run(config: SimConfig, store: InteractionStore | None = None, dataset: dict | None = None,
        resume: bool = False, manifest: dict | None = None,
        progress: Callable[[metrics.RoundReport], None] | None = None) -> list[metrics.RoundReport]:
    """Simulate ``config.T`` rounds and return one report per round.

    Either pass a loaded ``store`` or a ``dataset`` mapping with ``path`` and
    optional ``format``/``sep`` keys. Output files are written only when
    ``config.output_dir`` is set.
    """
    if store is None:
        if dataset is None:
            raise ValueError("run needs a store or a dataset description")
        store = load_dataset(dataset["path"], dataset.get("format", "movielens-delimited"),
                             dataset.get("sep", "::"))
    n, m, K = store.n, store.m, config.K
    original = store
    ledger = metrics.ExposureLedger(m)
    reports: list[metrics.RoundReport] = []
    model: FactorModel | None = None
    start_round = 1
    writer = None
    if config.output_dir is not None:
        out = Path(config.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        writer = _RunWriter(out, config, store, manifest if manifest is not None else {})
        if resume and (out / "ledger.bin").exists():
            done, ledger, store = load_checkpoint(out, store)
            _truncate_logs(out, done)
            reports = [metrics.RoundReport.from_mapping(json.loads(ln))
                       for ln in (out / "rounds.jsonl").read_text().splitlines() if ln.strip()]
            if config.warm_start and (out / "model.npz").exists():
                model = FactorModel.load(out / "model.npz")
            start_round = done + 1
            _logger.info("resuming %s after round %d", out, done)
        else:
            writer.start(fresh=True)

    frozen_test = None
    if config.freeze_test:
        frozen_test = split(original, config.split_ratio, derive_seed(config.seed, 0, "split")).test
        frozen_keys = frozen_test.sorted_keys()

    t0 = time.perf_counter()
    for t in range(start_round, config.T + 1):
        try:
            # 1. split
            if frozen_test is None:
                train_store, test_store = split(store, config.split_ratio, derive_seed(config.seed, t, "split"))
            else:
                test_store = frozen_test
                train_store = store.subset(~np.isin(store.keys(), frozen_keys))
            # 2. base recommender
            hp = replace(config.mf_hp, seed=derive_seed(config.seed, t, "train"))
            model = train(train_store, hp, init=model if config.warm_start else None, backend=config.backend)
            # 3. long lists
            candidates = long_lists(model, _exclusion_store(train_store, store), config.L)
            # 4. final lists
            static = rr.static_targets(candidates, K, m)
            if config.pipeline == "mf":
                targets = static
                final = rr.top_k(candidates, K)
            else:
                if config.pipeline == "mf+dm-static":
                    targets = static
                else:
                    n_active = sum(1 for x in candidates.values() if len(x) >= K)
                    caps = rr.item_degrees(candidates, m) if config.rerank_cfg.cap_to_degree else None
                    targets = rr.dynamic_targets(static, ledger.cumulative, t, config.rerank_cfg.target_mode,
                                                 config.rerank_cfg.epsilon, n_active, K, caps=caps)
                final = rr.rerank(candidates, targets, config.rerank_cfg, backend=config.backend)
            # 5. evaluation
            exposure = metrics.round_exposure(final, K, m)
            metrics.accumulate(ledger, exposure, t)
            # 6. clicks
            clicks = simulate_clicks(final, config.alpha, derive_seed(config.seed, t, "clicks"), profile=store)
            store = apply_clicks(store, [(u, i) for u, i, _ in clicks.accepted], t)
            report = metrics.RoundReport(
                round=t,
                ndcg=metrics.ndcg(final, test_store, K),
                agg_div=metrics.aggregate_diversity(final, m),
                cum_agg_div=metrics.cumulative_aggregate_diversity(ledger, m),
                ee=metrics.equality_of_exposure(exposure, config.gini_population),
                cum_ee=metrics.equality_of_exposure(ledger.cumulative, config.gini_population),
                discrepancy=float(rr.discrepancy(final, targets)),
                clicks=len(clicks.accepted),
            )
        except Exception as exc:
            raise SimulationError(t, exc) from exc
        reports.append(report)
        if writer is not None:
            deg = rr.item_degrees(final, m)
            listed = np.flatnonzero((targets.targets > 0) | (deg > 0))
            writer.round(report, clicks, {
                "round": t,
                "mode": targets.mode,
                "targets": {str(i): int(targets.targets[i]) for i in listed.tolist()},
                "degrees": {str(i): int(deg[i]) for i in listed.tolist()},
                "discrepancy": int(rr.discrepancy(final, targets)),
                "overflow": rr.overflow_units(final, targets),
                "offered": clicks.offered,
            }, final)
            writer.checkpoint(t, ledger, store, model if config.warm_start else None, time.perf_counter() - t0)
        if progress is not None:
            progress(report)
    return reports


def config_to_dict(config: SimConfig) -> dict:
    return asdict(config)
