"""Interaction data: loading, per-user splitting and click feedback.

Profiles are stored column-wise in numpy arrays. Every interaction carries the
round it entered the data (0 for the original dataset, ``t >= 1`` for a click
collected in round ``t``).
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

_logger = logging.getLogger(__name__)

FORMATS = ("movielens-delimited", "csv")


class DatasetError(ValueError):
    """Raised for unreadable or malformed interaction files."""


class Interaction(NamedTuple):
    user_id: int
    item_id: int
    value: float
    round_added: int = 0

    @property
    def source(self) -> str:
        return "click" if self.round_added >= 1 else "original"


class IdMap:
    """Bijection between raw identifiers (strings) and dense indices."""

    def __init__(self, raw_ids: Iterable[str]):
        self.raw = list(raw_ids)
        self._index = {r: k for k, r in enumerate(self.raw)}
        if len(self._index) != len(self.raw):
            raise ValueError("raw ids must be unique")

    def __len__(self) -> int:
        return len(self.raw)

    def encode(self, raw: str) -> int:
        return self._index[str(raw)]

    def decode(self, index: int) -> str:
        return self.raw[index]


@dataclass
class LoadReport:
    users: int
    items: int
    interactions: int
    duplicates_dropped: int

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)


class InteractionStore:
    """User-item profiles with at most one interaction per pair.

    ``n`` and ``m`` are fixed catalog sizes; indices are dense in ``[0, n)``
    and ``[0, m)``.
    """

    def __init__(self, n, m, users, items, values=None, rounds=None, *, validate=True):
        self.n = int(n)
        self.m = int(m)
        self.users = np.asarray(users, dtype=np.int64)
        self.items = np.asarray(items, dtype=np.int64)
        size = self.users.shape[0]
        self.values = np.ones(size) if values is None else np.asarray(values, dtype=np.float64)
        self.rounds = np.zeros(size, dtype=np.int64) if rounds is None else np.asarray(rounds, dtype=np.int64)
        self.user_ids: IdMap | None = None
        self.item_ids: IdMap | None = None
        self.load_report: LoadReport | None = None
        self.skipped_clicks = 0
        self._keys: np.ndarray | None = None
        if validate:
            self._validate()

    def _validate(self):
        size = self.users.shape[0]
        if not (self.items.shape[0] == self.values.shape[0] == self.rounds.shape[0] == size):
            raise ValueError("interaction columns differ in length")
        if size:
            if self.users.min() < 0 or self.users.max() >= self.n:
                raise ValueError(f"user index out of range [0, {self.n})")
            if self.items.min() < 0 or self.items.max() >= self.m:
                raise ValueError(f"item index out of range [0, {self.m})")
            if not np.all(self.values > 0):
                raise ValueError("interaction values must be positive")
            if self.rounds.min() < 0:
                raise ValueError("round_added must be >= 0")
        if np.unique(self.keys()).shape[0] != size:
            raise ValueError("duplicate (user, item) pair in store")

    @classmethod
    def from_interactions(cls, interactions: Iterable[Interaction], n: int, m: int) -> InteractionStore:
        rows = list(interactions)
        cols = list(zip(*rows)) if rows else [(), (), (), ()]
        return cls(n, m, cols[0], cols[1], cols[2], cols[3])

    def __len__(self) -> int:
        return int(self.users.shape[0])

    def __iter__(self) -> Iterator[Interaction]:
        for u, i, v, r in zip(self.users.tolist(), self.items.tolist(),
                              self.values.tolist(), self.rounds.tolist()):
            yield Interaction(u, i, v, r)

    def __contains__(self, pair) -> bool:
        u, i = pair
        key = int(u) * self.m + int(i)
        keys = self.sorted_keys()
        pos = np.searchsorted(keys, key)
        return bool(pos < keys.shape[0] and keys[pos] == key)

    def keys(self) -> np.ndarray:
        return self.users * self.m + self.items

    def sorted_keys(self) -> np.ndarray:
        if self._keys is None:
            self._keys = np.sort(self.keys())
        return self._keys

    def contains_many(self, users, items) -> np.ndarray:
        """Vectorised membership test for parallel arrays of pairs."""
        keys = self.sorted_keys()
        q = np.asarray(users, dtype=np.int64) * self.m + np.asarray(items, dtype=np.int64)
        if keys.shape[0] == 0:
            return np.zeros(q.shape, dtype=bool)
        pos = np.minimum(np.searchsorted(keys, q), keys.shape[0] - 1)
        return keys[pos] == q

    def profile(self, u: int) -> np.ndarray:
        return np.sort(self.items[self.users == u])

    def profile_sizes(self) -> np.ndarray:
        return np.bincount(self.users, minlength=self.n)

    def csr(self) -> tuple[np.ndarray, np.ndarray]:
        """Return ``(indptr, items)`` with each user's items sorted ascending."""
        order = np.lexsort((self.items, self.users))
        indptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(self.profile_sizes(), out=indptr[1:])
        return indptr, self.items[order]

    def subset(self, mask) -> InteractionStore:
        out = InteractionStore(self.n, self.m, self.users[mask], self.items[mask],
                               self.values[mask], self.rounds[mask], validate=False)
        out.user_ids, out.item_ids = self.user_ids, self.item_ids
        return out

    def copy(self) -> InteractionStore:
        out = self.subset(slice(None))
        out.skipped_clicks = self.skipped_clicks
        out.load_report = self.load_report
        return out

    def __eq__(self, other) -> bool:
        if not isinstance(other, InteractionStore):
            return NotImplemented
        return (self.n, self.m) == (other.n, other.m) and set(self) == set(other)

    __hash__ = None

    def __repr__(self) -> str:
        return f"InteractionStore(n={self.n}, m={self.m}, interactions={len(self)})"


class SplitPair(NamedTuple):
    train: InteractionStore
    test: InteractionStore


def _parse_delimited(path: Path, sep: str):
    with open(path, encoding="utf-8", errors="replace") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            yield lineno, line.split(sep)


def _parse_csv(path: Path):
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None:
            return
        if len(header) < 3:
            raise DatasetError(f"{path}: line 1: csv header needs at least 3 columns")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            yield lineno, row


def load_dataset(path, format: str = "movielens-delimited", sep: str = "::") -> InteractionStore:
    """Read an interaction file and re-index users and items densely from 0.

    ``movielens-delimited`` expects ``user<sep>item<sep>value[<sep>...]``;
    ``csv`` expects a header row followed by at least three columns. Duplicate
    pairs keep their last occurrence.
    """
    path = Path(path)
    if format not in FORMATS:
        raise DatasetError(f"unknown dataset format {format!r}; expected one of {FORMATS}")
    if not path.is_file():
        raise DatasetError(f"{path}: no such file")
    rows = _parse_csv(path) if format == "csv" else _parse_delimited(path, sep)

    records: dict[tuple[str, str], float] = {}
    duplicates = 0
    for lineno, fields in rows:
        if len(fields) < 3:
            raise DatasetError(f"{path}: line {lineno}: expected at least 3 fields, got {len(fields)}")
        raw_u, raw_i, raw_v = (f.strip() for f in fields[:3])
        try:
            value = float(raw_v)
        except ValueError:
            raise DatasetError(f"{path}: line {lineno}: value {raw_v!r} is not a number") from None
        if not raw_u or not raw_i:
            raise DatasetError(f"{path}: line {lineno}: empty user or item id")
        if not np.isfinite(value) or value <= 0:
            raise DatasetError(f"{path}: line {lineno}: value must be positive, got {raw_v!r}")
        key = (raw_u, raw_i)
        if key in records:
            duplicates += 1
            del records[key]  # re-insert so the kept record sits at its last position
        records[key] = value
    if not records:
        raise DatasetError(f"{path}: no interactions")

    user_ids = IdMap(_sorted_ids({u for u, _ in records}))
    item_ids = IdMap(_sorted_ids({i for _, i in records}))
    users = np.fromiter((user_ids.encode(u) for u, _ in records), dtype=np.int64, count=len(records))
    items = np.fromiter((item_ids.encode(i) for _, i in records), dtype=np.int64, count=len(records))
    values = np.fromiter(records.values(), dtype=np.float64, count=len(records))
    order = np.lexsort((items, users))
    store = InteractionStore(len(user_ids), len(item_ids), users[order], items[order], values[order])
    store.user_ids, store.item_ids = user_ids, item_ids
    store.load_report = LoadReport(store.n, store.m, len(store), duplicates)
    if duplicates:
        _logger.info("%s: dropped %d duplicate interactions", path, duplicates)
    return store


def _sorted_ids(ids):
    # numeric ids sort numerically, anything else lexicographically
    try:
        return sorted(ids, key=lambda s: (0, int(s), s))
    except ValueError:
        return sorted(ids)


def split(store: InteractionStore, ratio: float, seed: int) -> SplitPair:
    """Randomly partition every user's profile into train and test parts.

    A user keeps ``floor(ratio * size)`` interactions for training, but at
    least one, so single-interaction users contribute no test items.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"split ratio must lie in (0, 1), got {ratio}")
    sizes = store.profile_sizes()
    if len(store) and np.any(sizes == 0):
        _logger.debug("%d users have empty profiles", int(np.sum(sizes == 0)))
    rng = np.random.default_rng(seed)
    noise = rng.random(len(store))
    order = np.lexsort((noise, store.users))
    starts = np.concatenate(([0], np.cumsum(sizes)[:-1]))
    rank = np.empty(len(store), dtype=np.int64)
    rank[order] = np.arange(len(store)) - starts[store.users[order]]
    n_train = np.maximum(np.floor(ratio * sizes + 1e-9).astype(np.int64), np.minimum(sizes, 1))
    in_train = rank < n_train[store.users]
    return SplitPair(store.subset(in_train), store.subset(~in_train))


def apply_clicks(store: InteractionStore, clicks: Iterable[tuple[int, int]], round: int) -> InteractionStore:
    """Return a copy of ``store`` with each click added as a value-1 interaction.

    Clicks on pairs already in the profile are skipped and counted in
    ``skipped_clicks``; this makes re-applying a click set a no-op.
    """
    if round < 1:
        raise ValueError("clicks belong to rounds >= 1")
    pairs = sorted({(int(u), int(i)) for u, i in clicks})
    out = store.copy()
    if not pairs:
        return out
    cu = np.array([p[0] for p in pairs], dtype=np.int64)
    ci = np.array([p[1] for p in pairs], dtype=np.int64)
    if cu.min() < 0 or cu.max() >= store.n or ci.min() < 0 or ci.max() >= store.m:
        raise ValueError("click index out of range")
    known = store.contains_many(cu, ci)
    skipped = int(known.sum())
    if skipped:
        _logger.warning("round %d: skipped %d clicks already in profiles", round, skipped)
    cu, ci = cu[~known], ci[~known]
    out.users = np.concatenate((store.users, cu))
    out.items = np.concatenate((store.items, ci))
    out.values = np.concatenate((store.values, np.ones(cu.shape[0])))
    out.rounds = np.concatenate((store.rounds, np.full(cu.shape[0], round, dtype=np.int64)))
    out._keys = None
    out.skipped_clicks = store.skipped_clicks + skipped
    return out
