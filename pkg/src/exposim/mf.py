"""Matrix-factorization base recommender.

Pointwise squared-loss SGD over binarized interactions: every observed pair
is a positive with target 1, and each positive is paired with uniformly drawn
unobserved items as negatives with target 0. Negatives are redrawn every
epoch. Sample generation happens here with numpy; the update loop itself runs
in the active kernel backend.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .dataset import InteractionStore

_logger = logging.getLogger(__name__)

LOSS_TOLERANCE = 1e-6


class DivergenceError(RuntimeError):
    def __init__(self, epoch: int):
        super().__init__(f"matrix factorization diverged (non-finite parameters) in epoch {epoch}")
        self.epoch = epoch


@dataclass(frozen=True)
class MfHyperparams:
    d: int = 32
    learning_rate: float = 0.05
    regularization: float = 0.01
    epochs: int = 20
    negatives_per_positive: int = 4
    seed: int = 0
    init_scale: float = 0.1
    # loss monotonicity is only checked below this learning rate
    stability_lr: float = 0.1

    def __post_init__(self):
        for name in ("d", "epochs", "negatives_per_positive"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be a positive integer")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.regularization < 0:
            raise ValueError("regularization must be nonnegative")


@dataclass
class FactorModel:
    user_factors: np.ndarray
    item_factors: np.ndarray
    user_bias: np.ndarray
    item_bias: np.ndarray
    global_bias: float = 0.0
    loss_history: list = field(default_factory=list)
    loss_increases: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return self.user_factors.shape[0]

    @property
    def m(self) -> int:
        return self.item_factors.shape[0]

    @property
    def d(self) -> int:
        return self.user_factors.shape[1]

    @classmethod
    def zeros(cls, n: int, m: int, d: int) -> FactorModel:
        return cls(np.zeros((n, d)), np.zeros((m, d)), np.zeros(n), np.zeros(m), 0.0)

    def is_finite(self) -> bool:
        return bool(
            np.isfinite(self.global_bias)
            and np.all(np.isfinite(self.user_factors))
            and np.all(np.isfinite(self.item_factors))
            and np.all(np.isfinite(self.user_bias))
            and np.all(np.isfinite(self.item_bias))
        )

    def copy(self) -> FactorModel:
        return FactorModel(self.user_factors.copy(), self.item_factors.copy(),
                           self.user_bias.copy(), self.item_bias.copy(), self.global_bias)

    def scores(self, users=None) -> np.ndarray:
        """Score matrix for ``users`` (all users by default) against every item."""
        P = self.user_factors if users is None else self.user_factors[users]
        bu = self.user_bias if users is None else self.user_bias[users]
        return self.global_bias + bu[:, None] + self.item_bias[None, :] + P @ self.item_factors.T

    def save(self, path) -> None:
        with open(path, "wb") as fh:
            np.savez(fh, user_factors=self.user_factors, item_factors=self.item_factors,
                     user_bias=self.user_bias, item_bias=self.item_bias,
                     global_bias=np.array([self.global_bias]))

    @classmethod
    def load(cls, path) -> FactorModel:
        with np.load(path) as z:
            return cls(z["user_factors"], z["item_factors"], z["user_bias"], z["item_bias"],
                       float(z["global_bias"][0]))


def score(model: FactorModel, u: int, i: int) -> float:
    if not 0 <= u < model.n:
        raise IndexError(f"user index {u} out of range [0, {model.n})")
    if not 0 <= i < model.m:
        raise IndexError(f"item index {i} out of range [0, {model.m})")
    return float(model.global_bias + model.user_bias[u] + model.item_bias[i]
                 + model.user_factors[u] @ model.item_factors[i])


def sample_negatives(store: InteractionStore, users: np.ndarray, rng: np.random.Generator,
                     max_tries: int = 50) -> tuple[np.ndarray, np.ndarray]:
    """Draw one unobserved item per entry of ``users`` by rejection sampling.

    Entries that stay rejected after ``max_tries`` redraws (users whose
    profile covers almost the whole catalog) are dropped.
    """
    items = rng.integers(0, store.m, size=users.shape[0])
    bad = store.contains_many(users, items)
    for _ in range(max_tries):
        if not bad.any():
            break
        idx = np.flatnonzero(bad)
        items[idx] = rng.integers(0, store.m, size=idx.shape[0])
        bad[idx] = store.contains_many(users[idx], items[idx])
    keep = ~bad
    return users[keep], items[keep]


def train(train_store: InteractionStore, hp: MfHyperparams, init: FactorModel | None = None,
          backend: str | None = None) -> FactorModel:
    """Fit a factor model to ``train_store``; deterministic given ``hp.seed``."""
    if len(train_store) == 0:
        raise ValueError("cannot train on an empty interaction store")
    kernels = _backend.get(backend)
    rng = np.random.default_rng(hp.seed)
    n, m = train_store.n, train_store.m
    if init is None:
        model = FactorModel(
            rng.normal(0.0, hp.init_scale, (n, hp.d)),
            rng.normal(0.0, hp.init_scale, (m, hp.d)),
            np.zeros(n), np.zeros(m), 0.0,
        )
    else:
        if (init.n, init.m, init.d) != (n, m, hp.d):
            raise ValueError("warm-start model shape does not match the data")
        model = init.copy()

    P = np.ascontiguousarray(model.user_factors, dtype=np.float64)
    Q = np.ascontiguousarray(model.item_factors, dtype=np.float64)
    bu = np.ascontiguousarray(model.user_bias, dtype=np.float64)
    bi = np.ascontiguousarray(model.item_bias, dtype=np.float64)
    gb = np.array([model.global_bias], dtype=np.float64)

    pos_u = train_store.users
    pos_i = train_store.items
    rep_u = np.repeat(pos_u, hp.negatives_per_positive)
    history = []
    increases = []
    for epoch in range(1, hp.epochs + 1):
        neg_u, neg_i = sample_negatives(train_store, rep_u, rng)
        users = np.concatenate((pos_u, neg_u))
        items = np.concatenate((pos_i, neg_i))
        targets = np.concatenate((np.ones(pos_u.shape[0]), np.zeros(neg_u.shape[0])))
        order = rng.permutation(users.shape[0])
        users = np.ascontiguousarray(users[order])
        items = np.ascontiguousarray(items[order])
        targets = np.ascontiguousarray(targets[order])
        sse = kernels.sgd_epoch(P, Q, bu, bi, gb, users, items, targets,
                                float(hp.learning_rate), float(hp.regularization))
        loss = sse / users.shape[0]
        if not (np.isfinite(loss) and np.isfinite(gb[0]) and np.all(np.isfinite(P))
                and np.all(np.isfinite(Q))):
            raise DivergenceError(epoch)
        if history and hp.learning_rate < hp.stability_lr and loss > history[-1] + LOSS_TOLERANCE:
            increases.append(epoch)
        history.append(loss)
    if increases:
        _logger.debug("training loss increased in epochs %s", increases)

    out = FactorModel(P, Q, bu, bi, float(gb[0]), history, increases)
    if not out.is_finite():
        raise DivergenceError(hp.epochs)
    return out


def long_lists(model: FactorModel, exclude: InteractionStore, L: int) -> dict[int, np.ndarray]:
    """Top-``L`` unseen items per user, best first.

    Items in ``exclude`` are never candidates. Equal scores rank the lower
    item id first. Lists are shorter than ``L`` when candidates run out.
    """
    if L < 0:
        raise ValueError("L must be nonnegative")
    n, m = model.n, model.m
    if exclude.n != n or exclude.m != m:
        raise IndexError("exclusion store does not match the model dimensions")
    lists = {}
    indptr, excl_items = exclude.csr()
    block = 512
    for start in range(0, n, block):
        users = np.arange(start, min(start + block, n))
        s = model.scores(users)
        for r, u in enumerate(users):
            seen = excl_items[indptr[u]:indptr[u + 1]]
            s[r, seen] = -np.inf
        order = np.argsort(-s, axis=1, kind="stable")
        for r, u in enumerate(users):
            k = min(L, m - (indptr[u + 1] - indptr[u]))
            lists[int(u)] = order[r, :k].astype(np.int64)
    return lists
