"""Exposure bookkeeping and evaluation metrics.

Position ``k`` (1-based) in a list carries exposure weight ``1 / log2(1 + k)``.
"""

from __future__ import annotations

import json
import logging
import math
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from .dataset import InteractionStore

_logger = logging.getLogger(__name__)


def position_weights(K: int) -> np.ndarray:
    return 1.0 / np.log2(np.arange(2, K + 2, dtype=np.float64))


@dataclass
class ExposureLedger:
    m: int
    per_round: dict = field(default_factory=dict)
    cumulative: np.ndarray = None
    seen_items: np.ndarray = None  # bool mask of items ever recommended

    def __post_init__(self):
        if self.cumulative is None:
            self.cumulative = np.zeros(self.m)
        if self.seen_items is None:
            self.seen_items = np.zeros(self.m, dtype=bool)

    @property
    def rounds(self) -> list:
        return sorted(self.per_round)

    def cumulative_through(self, round: int) -> np.ndarray:
        """Exposure summed over recorded rounds ``<= round``."""
        total = np.zeros(self.m)
        for t in self.rounds:
            if t <= round:
                total += self.per_round[t]
        return total

    def to_arrays(self) -> dict:
        rounds = np.array(self.rounds, dtype=np.int64)
        matrix = np.stack([self.per_round[t] for t in self.rounds]) if self.per_round else np.zeros((0, self.m))
        return {"rounds": rounds, "per_round": matrix, "cumulative": self.cumulative,
                "seen_items": self.seen_items}

    @classmethod
    def from_arrays(cls, arrays) -> ExposureLedger:
        per_round = {int(t): np.array(row) for t, row in zip(arrays["rounds"], arrays["per_round"])}
        m = arrays["cumulative"].shape[0]
        return cls(m, per_round, np.array(arrays["cumulative"]), np.array(arrays["seen_items"], dtype=bool))


def round_exposure(lists: dict, K: int, m: int) -> np.ndarray:
    """Per-item exposure of one round of recommendation lists."""
    weights = position_weights(K)
    exposure = np.zeros(m)
    for u, lst in lists.items():
        lst = np.asarray(lst, dtype=np.int64)
        if lst.shape[0] > K:
            raise ValueError(f"list for user {u} is longer than K={K}")
        np.add.at(exposure, lst, weights[: lst.shape[0]])
    return exposure


def accumulate(ledger: ExposureLedger, round_exp: np.ndarray, round: int) -> ExposureLedger:
    if round in ledger.per_round:
        raise ValueError(f"round {round} is already recorded in the ledger")
    round_exp = np.asarray(round_exp, dtype=np.float64)
    if round_exp.shape != (ledger.m,):
        raise ValueError("exposure vector does not match the catalog size")
    if np.any(round_exp < 0):
        raise ValueError("exposure must be nonnegative")
    ledger.per_round[round] = round_exp.copy()
    ledger.cumulative = ledger.cumulative + round_exp
    ledger.seen_items = ledger.seen_items | (round_exp > 0)
    return ledger


def ndcg(lists: dict, test: InteractionStore, K: int) -> float:
    """Mean binary-relevance nDCG@K over users that have test items."""
    indptr, items = test.csr()
    weights = position_weights(K)
    ideal = np.cumsum(weights)
    scores = []
    for u in range(test.n):
        relevant = items[indptr[u]:indptr[u + 1]]
        if relevant.shape[0] == 0:
            continue
        lst = np.asarray(lists.get(u, ()), dtype=np.int64)[:K]
        hits = np.isin(lst, relevant)
        dcg = float(weights[: lst.shape[0]][hits].sum())
        scores.append(dcg / ideal[min(K, relevant.shape[0]) - 1])
    if not scores:
        _logger.warning("nDCG: no user has test items; reporting 0")
        return 0.0
    return float(np.mean(scores))


def aggregate_diversity(lists: dict, m: int) -> float:
    """Fraction of the catalog appearing in at least one list."""
    if m < 1:
        raise ValueError("m must be positive")
    nonempty = [np.asarray(x, dtype=np.int64) for x in lists.values() if len(x)]
    if not nonempty:
        return 0.0
    return np.unique(np.concatenate(nonempty)).shape[0] / m


def cumulative_aggregate_diversity(ledger: ExposureLedger, m: int) -> float:
    if m < 1:
        raise ValueError("m must be positive")
    return int(ledger.seen_items.sum()) / m


def gini(exposure) -> float:
    """Gini index of a nonnegative distribution, normalized to [0, 1] by ``m - 1``."""
    x = np.sort(np.asarray(exposure, dtype=np.float64))
    m = x.shape[0]
    if m < 2:
        raise ValueError("Gini index needs at least two items")
    if np.any(x < 0):
        raise ValueError("exposure must be nonnegative")
    total = math.fsum(x)
    if total <= 0:
        raise ValueError("all-zero exposure: no recommendations were made")
    # exact summation so that symmetric terms cancel (uniform input gives 0)
    coef = 2.0 * np.arange(1, m + 1) - m - 1
    return math.fsum(coef * x) / ((m - 1) * total)


def equality_of_exposure(exposure, population: str = "catalog") -> float:
    """``1 - Gini`` of per-item exposure.

    ``population="catalog"`` counts never-exposed items as zeros;
    ``"recommended"`` restricts the distribution to items with exposure.
    """
    x = np.asarray(exposure, dtype=np.float64)
    if population == "recommended":
        x = x[x > 0]
    elif population != "catalog":
        raise ValueError(f"unknown Gini population {population!r}")
    return 1.0 - gini(x)


_INT_FIELDS = ("round", "clicks")


@dataclass
class RoundReport:
    round: int
    ndcg: float
    agg_div: float
    cum_agg_div: float
    ee: float
    cum_ee: float
    discrepancy: float
    clicks: int

    @classmethod
    def header(cls) -> list:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list:
        return [str(int(getattr(self, name))) if name in _INT_FIELDS else repr(float(getattr(self, name)))
                for name in self.header()]

    def to_json(self) -> str:
        d = asdict(self)
        return json.dumps({k: int(v) if k in _INT_FIELDS else float(v) for k, v in d.items()})

    @classmethod
    def from_mapping(cls, row) -> RoundReport:
        kwargs = {}
        for f in fields(cls):
            v = row[f.name]
            kwargs[f.name] = int(v) if f.name in _INT_FIELDS else float(v)
        return cls(**kwargs)


def mass(K: int) -> float:
    """Total exposure one full list of length ``K`` hands out."""
    return math.fsum(position_weights(K))
