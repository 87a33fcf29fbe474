import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from cld.attribution import (
    InfluenceMatrix,
    SubsetPlan,
    average_ranks,
    brittleness,
    group_attribution,
    lds_evaluate,
    lds_from_matrices,
    spearman,
)
from cld.errors import ConstantVector, TooShort, UnknownId
from cld.trainer import SyntheticSpec, TrainConfig, generate_dataset

from oracles import spearman_oracle


class TestSpearman:
    def test_identity(self):
        x = np.array([3.0, 1.0, 2.0, 5.0])
        assert spearman(x, x) == 1.0

    def test_reversal(self):
        x = np.array([1.0, 2.0, 3.0, 4.0])
        assert spearman(x, x[::-1]) == -1.0

    def test_hand_derived_case(self):
        # ranks differ by (0, 1, 1, 0): 1 - 6*2/(4*15) = 0.8
        assert spearman(np.array([1.0, 2, 3, 4]), np.array([1.0, 3, 2, 4])) == pytest.approx(0.8, abs=1e-15)

    def test_average_rank_ties(self):
        assert average_ranks(np.array([1.0, 1.0, 2.0])).tolist() == [1.5, 1.5, 3.0]

    def test_errors(self):
        with pytest.raises(TooShort):
            spearman(np.array([1.0]), np.array([2.0]))
        with pytest.raises(ConstantVector):
            spearman(np.array([1.0, 1.0]), np.array([1.0, 2.0]))

    @settings(max_examples=100, deadline=None)
    @given(
        # integer-valued floats keep every monotone transform injective
        x=st.lists(st.integers(-100, 100), min_size=3, max_size=10, unique=True),
        shift=st.floats(-5, 5),
        scale=st.floats(0.01, 100),
    )
    def test_monotone_transform_invariance(self, x, shift, scale):
        x = np.array(x, dtype=np.float64)
        y = np.sort(x)[::-1].copy()  # any companion vector with distinct values
        base = spearman(x, y)
        assert spearman(scale * x + shift, y) == pytest.approx(base, abs=1e-12)
        assert spearman(np.exp(x / 50.0), y) == pytest.approx(base, abs=1e-12)

    def test_matches_oracle_with_ties(self):
        rng = np.random.default_rng(20)
        for _ in range(30):
            x = rng.integers(0, 5, size=8).astype(float)
            y = rng.integers(0, 5, size=8).astype(float)
            if np.unique(x).size < 2 or np.unique(y).size < 2:
                continue
            assert spearman(x, y) == pytest.approx(spearman_oracle(x, y), abs=1e-12)


class TestGroupAttribution:
    def make(self):
        rng = np.random.default_rng(21)
        return InfluenceMatrix(
            train_ids=np.array([0, 1, 2, 5]),
            query_ids=np.array([10, 11]),
            values=rng.normal(size=(4, 2)),
        )

    def test_singleton(self):
        infl = self.make()
        assert group_attribution(infl, 11, [2]) == infl.values[2, 1]

    def test_full_train_is_column_sum(self):
        infl = self.make()
        got = group_attribution(infl, 10, [0, 1, 2, 5])
        assert got == pytest.approx(infl.values[:, 0].sum(), abs=1e-12)

    def test_matches_loop_oracle(self):
        infl = self.make()
        subset = [5, 0]
        expect = sum(
            infl.values[list(infl.train_ids).index(s), 1] for s in subset
        )
        assert group_attribution(infl, 11, subset) == pytest.approx(expect, abs=1e-15)

    def test_additive_over_disjoint_subsets(self):
        infl = self.make()
        a = group_attribution(infl, 10, [0, 1])
        b = group_attribution(infl, 10, [2, 5])
        whole = group_attribution(infl, 10, [0, 1, 2, 5])
        assert a + b == pytest.approx(whole, abs=1e-12)

    def test_unknown_ids(self):
        infl = self.make()
        with pytest.raises(UnknownId):
            group_attribution(infl, 99, [0])
        with pytest.raises(UnknownId):
            group_attribution(infl, 10, [99])


class TestLds:
    def harness_data(self, seed=0):
        return generate_dataset(SyntheticSpec(
            n_train=120, n_val=40, n_query=25, n_reference=1200, seed=seed))

    def test_self_consistency_oracle(self):
        rng = np.random.default_rng(22)
        impacts = rng.normal(size=(10, 4))
        per_query, mean = lds_from_matrices(impacts, impacts.copy())
        assert per_query == [1.0] * 4 and mean == 1.0

    def test_zero_attribution_is_undefined(self):
        rng = np.random.default_rng(23)
        impacts = rng.normal(size=(6, 3))
        per_query, mean = lds_from_matrices(impacts, np.zeros((6, 3)))
        assert per_query == [None, None, None] and mean == 0.0

    def test_two_subsets_give_plus_minus_one(self):
        data = self.harness_data()
        plan = SubsetPlan(num_subsets=2, alpha=0.5, retrain_seeds=(11,), base_seed=0)
        report = lds_evaluate(data, plan, TrainConfig(epochs=12, seed=0))
        for v in report.per_query:
            assert v is None or v in (-1.0, 1.0)

    def test_plan_validation(self):
        with pytest.raises(ValueError):
            SubsetPlan(num_subsets=1)
        with pytest.raises(ValueError):
            SubsetPlan(alpha=1.0)
        with pytest.raises(ValueError):
            SubsetPlan(retrain_seeds=())

    def test_deterministic(self):
        data = self.harness_data()
        plan = SubsetPlan(num_subsets=4, alpha=0.4, retrain_seeds=(1, 2), base_seed=5)
        cfg = TrainConfig(epochs=10, seed=0)
        a = lds_evaluate(data, plan, cfg)
        b = lds_evaluate(data, plan, cfg)
        assert np.array_equal(a.impacts, b.impacts)
        assert a.per_query == b.per_query


class TestBrittleness:
    def test_extreme_removal_flips_more_than_none(self):
        data = generate_dataset(SyntheticSpec(
            n_train=100, n_val=30, n_query=30, n_reference=1000, seed=0))
        n, c = 100, 5
        report = brittleness(
            data, [0, n - c], policies=("cld_topk",),
            train_config=TrainConfig(epochs=15, seed=0), seeds=(1, 2),
        )
        none_removed, almost_all_removed = report.flip_fraction["cld_topk"]
        assert almost_all_removed > none_removed

    def test_k_must_be_below_train_size(self):
        data = generate_dataset(SyntheticSpec(
            n_train=50, n_val=20, n_query=10, n_reference=500, seed=0))
        with pytest.raises(ValueError):
            brittleness(data, [50], train_config=TrainConfig(epochs=2))

    def test_unknown_policy(self):
        data = generate_dataset(SyntheticSpec(
            n_train=50, n_val=20, n_query=10, n_reference=500, seed=0))
        with pytest.raises(ValueError):
            brittleness(data, [5], policies=("something",), train_config=TrainConfig(epochs=2))
