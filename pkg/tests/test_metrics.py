import json
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from exposim import metrics as mt
from exposim.dataset import InteractionStore
from oracles import dcg, gini_mad


def lists_of(d):
    return {u: np.array(v, dtype=np.int64) for u, v in d.items()}


class TestRoundExposure:
    def test_top_position_is_one(self):
        assert mt.round_exposure(lists_of({0: [2, 0]}), 2, 3)[2] == 1.0

    def test_two_users(self):
        e = mt.round_exposure(lists_of({0: [5, 1, 2], 1: [3, 4, 5]}), 3, 6)
        assert e[5] == pytest.approx(1.5, abs=1e-12)
        assert e[0] == 0.0

    def test_rejects_long_list(self):
        with pytest.raises(ValueError):
            mt.round_exposure(lists_of({0: [0, 1, 2]}), 2, 3)

    @given(st.integers(1, 8), st.integers(1, 20), st.integers(0, 2**31))
    def test_mass_conservation(self, K, n, seed):
        rng = np.random.default_rng(seed)
        m = K + 5
        lists = {u: rng.permutation(m)[:K] for u in range(n)}
        assert mt.round_exposure(lists, K, m).sum() == pytest.approx(n * mt.mass(K), rel=1e-12)


class TestLedger:
    def test_accumulate(self):
        led = mt.ExposureLedger(2)
        mt.accumulate(led, np.array([1.0, 0.0]), 1)
        assert led.cumulative.tolist() == [1.0, 0.0]
        mt.accumulate(led, np.array([0.5, 0.0]), 2)
        assert led.cumulative.tolist() == [1.5, 0.0]
        assert led.seen_items.tolist() == [True, False]
        with pytest.raises(ValueError):
            mt.accumulate(led, np.array([0.5, 0.0]), 2)
        assert led.cumulative_through(1).tolist() == [1.0, 0.0]

    def test_cumulative_equals_sum(self):
        rng = np.random.default_rng(0)
        led = mt.ExposureLedger(7)
        for t in range(1, 30):
            mt.accumulate(led, rng.random(7), t)
        assert np.allclose(led.cumulative, sum(led.per_round.values()), atol=1e-9)
        again = mt.ExposureLedger.from_arrays(led.to_arrays())
        assert again.rounds == led.rounds
        assert np.array_equal(again.cumulative, led.cumulative)

    def test_negative_rejected(self):
        with pytest.raises(ValueError):
            mt.accumulate(mt.ExposureLedger(2), np.array([-1.0, 0.0]), 1)


class TestNdcg:
    def test_position_two(self):
        test = InteractionStore(1, 3, [0], [2])
        assert mt.ndcg(lists_of({0: [1, 2]}), test, 2) == pytest.approx(1 / math.log2(3), abs=1e-4)
        assert mt.ndcg(lists_of({0: [1, 2]}), test, 2) == pytest.approx(0.6309, abs=1e-4)

    def test_ideal_and_zero(self):
        test = InteractionStore(2, 5, [0, 0, 1], [3, 4, 0])
        assert mt.ndcg(lists_of({0: [4, 3, 1], 1: [1, 2, 3]}), test, 3) == pytest.approx(0.5)

    def test_no_eligible_users(self, caplog):
        assert mt.ndcg(lists_of({0: [0]}), InteractionStore(1, 2, [], []), 1) == 0.0
        assert "no user" in caplog.text

    @given(st.integers(0, 2**31))
    def test_against_direct_formula(self, seed):
        rng = np.random.default_rng(seed)
        n, m, K = 6, 12, 4
        users, items = [], []
        for u in range(n):
            chosen = rng.choice(m, rng.integers(0, 4), replace=False)
            users += [u] * len(chosen)
            items += chosen.tolist()
        test = InteractionStore(n, m, users, items)
        lists = {u: rng.permutation(m)[:K] for u in range(n)}
        per_user = []
        for u in range(n):
            rel = set(test.profile(u).tolist())
            if rel:
                per_user.append(dcg(lists[u].tolist(), rel) / dcg(sorted(rel)[:K], rel))
        got = mt.ndcg(lists, test, K)
        assert 0.0 <= got <= 1.0
        assert got == pytest.approx(np.mean(per_user) if per_user else 0.0, abs=1e-12)


class TestDiversity:
    def test_aggregate(self):
        assert mt.aggregate_diversity(lists_of({0: [0, 1], 1: [2, 3]}), 4) == 1.0
        shared = {u: np.arange(10) for u in range(50)}
        assert mt.aggregate_diversity(shared, 100) == 0.1
        assert mt.aggregate_diversity({0: np.array([], dtype=np.int64)}, 100) == 0.0

    def test_cumulative(self):
        led = mt.ExposureLedger(100)
        first = lists_of({0: list(range(10))})
        mt.accumulate(led, mt.round_exposure(first, 10, 100), 1)
        assert mt.cumulative_aggregate_diversity(led, 100) == mt.aggregate_diversity(first, 100)
        mt.accumulate(led, mt.round_exposure(lists_of({0: list(range(10, 20))}), 10, 100), 2)
        assert mt.cumulative_aggregate_diversity(led, 100) == 0.2


class TestEqualityOfExposure:
    def test_examples(self):
        assert mt.equality_of_exposure([1.0] * 5) == 1.0
        assert mt.equality_of_exposure([0, 0, 0, 0, 1.0]) == pytest.approx(0.0, abs=1e-15)
        assert mt.equality_of_exposure([0, 0, 1.0, 1.0]) == pytest.approx(1 / 3, abs=1e-12)
        assert gini_mad([0, 0, 1, 1]) == pytest.approx(2 / 3)

    def test_errors(self):
        with pytest.raises(ValueError):
            mt.equality_of_exposure([0.0, 0.0])
        with pytest.raises(ValueError):
            mt.equality_of_exposure([1.0])
        with pytest.raises(ValueError):
            mt.equality_of_exposure([1.0, 2.0], population="items")

    def test_recommended_population(self):
        assert mt.equality_of_exposure([0, 0, 2.0, 2.0], population="recommended") == 1.0

    def test_against_mad_oracle(self):
        rng = np.random.default_rng(12)
        for _ in range(1000):
            m = int(rng.integers(2, 30))
            x = rng.random(m) * (rng.random(m) < 0.7)
            if x.sum() == 0:
                x[0] = 1.0
            assert mt.gini(x) == pytest.approx(gini_mad(x), abs=1e-9)

    @settings(max_examples=200)
    @given(st.lists(st.one_of(st.just(0.0), st.floats(1e-6, 100)), min_size=2, max_size=20), st.floats(1e-3, 1e3))
    def test_scale_invariant(self, x, c):
        x = np.array(x)
        if x.sum() <= 0:
            return
        assert mt.equality_of_exposure(x * c) == pytest.approx(mt.equality_of_exposure(x), abs=1e-9)

    def test_pigou_dalton(self):
        rng = np.random.default_rng(5)
        for _ in range(500):
            m = int(rng.integers(3, 12))
            x = rng.integers(0, 10, m).astype(float)
            order = np.argsort(x, kind="stable")
            poor, rich = order[0], order[-1]
            if x[poor] == 0 or x[poor] == x[rich]:
                continue
            y = x.copy()
            delta = min(1.0, x[poor])
            y[poor] -= delta
            y[rich] += delta
            assert mt.equality_of_exposure(y) < mt.equality_of_exposure(x)
            assert gini_mad(y) > gini_mad(x)


def test_report_serialization():
    r = mt.RoundReport(3, 0.5, 0.1, 0.2, 0.3, 0.4, 12.0, 7)
    assert mt.RoundReport.header() == ["round", "ndcg", "agg_div", "cum_agg_div", "ee", "cum_ee",
                                       "discrepancy", "clicks"]
    row = dict(zip(mt.RoundReport.header(), r.csv_row()))
    assert mt.RoundReport.from_mapping(row) == r
    assert mt.RoundReport.from_mapping(json.loads(r.to_json())) == r
