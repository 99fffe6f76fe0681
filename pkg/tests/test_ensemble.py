import math

import numpy as np
import pytest

from geoattrib.ensemble import (BaggedConfig, BaggedEnsemble, GbtParams, SplitPlan,
                                bootstrap_sample, cls_metrics, default_grid,
                                derive_seed, grid_search, predict_ensemble,
                                prepare_features, reg_metrics, train_bagged,
                                train_gbt, train_partitioned, uncertainty)
from geoattrib.ensemble.gbt import SOFTMAX
from geoattrib.ensemble.tree import build_tree
from geoattrib.features import CityTier, FeatureMatrix


def best_stump_oracle(X, y):
    """Exhaustive (feature, threshold) search by variance reduction."""
    n, f = X.shape
    S, C = y.sum(), n
    best = None
    for fi in range(f):
        order = np.argsort(X[:, fi], kind="stable")
        xv, yv = X[order, fi], y[order]
        cg = np.cumsum(yv)
        for i in range(n - 1):
            if xv[i] == xv[i + 1]:
                continue
            sl, cl = cg[i], i + 1
            sr, cr = S - sl, C - cl
            gain = sl * sl / cl + sr * sr / cr - S * S / C
            if best is None or gain > best[0]:
                best = (gain, fi, (xv[i] + xv[i + 1]) / 2)
    return best


class TestBootstrap:
    def test_singleton(self):
        assert bootstrap_sample([42], 0) == [42]

    def test_deterministic(self):
        ids = list(range(50))
        assert bootstrap_sample(ids, 123) == bootstrap_sample(ids, 123)
        assert bootstrap_sample(ids, 123) != bootstrap_sample(ids, 124)

    def test_size_preserved_with_replacement(self):
        ids = list(range(200))
        s = bootstrap_sample(ids, 5)
        assert len(s) == 200
        assert set(s) <= set(ids)
        assert len(set(s)) < 200  # replacement virtually guarantees duplicates

    def test_distinct_fraction_matches_bootstrap_identity(self):
        # E[distinct fraction] -> 1 - 1/e for n=1000
        fractions = [len(set(bootstrap_sample(list(range(1000)), seed))) / 1000
                     for seed in range(300)]
        assert abs(float(np.mean(fractions)) - (1 - 1 / math.e)) < 0.02

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            bootstrap_sample([], 0)


class TestSplitPlan:
    def test_fractions_and_disjointness(self):
        plan = SplitPlan(master_seed=9)
        ids = list(range(1000))
        rest, test = plan.split_test(ids)
        assert len(test) == 100
        assert not (set(test) & set(rest))
        tr, va = plan.iteration_split(rest, 3)
        assert len(va) == 180
        assert not (set(tr) & set(va))
        assert set(tr) | set(va) == set(rest)

    def test_test_set_fixed_across_iterations(self):
        plan = SplitPlan(master_seed=9)
        ids = list(range(500))
        _, test1 = plan.split_test(ids)
        _, test2 = plan.split_test(ids)
        assert test1 == test2

    def test_iterations_differ(self):
        plan = SplitPlan(master_seed=9)
        rest, _ = plan.split_test(list(range(500)))
        assert plan.iteration_split(rest, 0) != plan.iteration_split(rest, 1)


class TestTrainGbt:
    def test_constant_target_single_leaf(self):
        rng = np.random.default_rng(0)
        X = rng.uniform(size=(100, 3))
        m = train_gbt(X, np.full(100, 7.0), GbtParams(max_depth=3, rounds=5))
        assert np.abs(m.predict(X) - 7.0).max() == 0.0
        assert len(m.trees[0].feature) == 1  # never split a pure target

    def test_stump_matches_exhaustive_search(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            X = rng.uniform(size=(50, 5))
            y = rng.normal(size=50)
            tree, _ = build_tree(X, y, max_depth=1)
            _, fi, thr = best_stump_oracle(X, y)
            assert tree.feature[0] == fi
            assert tree.threshold[0] == thr

    def test_xor_classification(self):
        X = np.array([[0, 0], [0, 1], [1, 0], [1, 1]] * 25, dtype=float)
        y = X[:, 0].astype(int) ^ X[:, 1].astype(int)
        m = train_gbt(X, y, GbtParams(max_depth=2, rounds=30, learning_rate=0.5),
                      objective=SOFTMAX, n_classes=2)
        assert (m.predict(X) == y).all()

    def test_squared_error_loss_non_increasing(self):
        rng = np.random.default_rng(2)
        X = rng.uniform(size=(500, 6))
        y = X @ rng.normal(size=6) + 0.3 * rng.normal(size=500)
        m = train_gbt(X, y, GbtParams(max_depth=3, rounds=60, learning_rate=0.3))
        losses = np.asarray(m.train_loss)
        assert (np.diff(losses) <= 1e-12).all()

    def test_empty_and_nonfinite_rejected(self):
        with pytest.raises(ValueError):
            train_gbt(np.zeros((0, 2)), np.zeros(0), GbtParams())
        with pytest.raises(ValueError):
            train_gbt(np.zeros((3, 2)), np.array([1.0, np.nan, 2.0]), GbtParams())

    def test_serialization_round_trip(self):
        rng = np.random.default_rng(3)
        X = rng.uniform(size=(80, 4))
        y = X[:, 0] * 3 + rng.normal(size=80) * 0.1
        m = train_gbt(X, y, GbtParams(max_depth=2, rounds=10))
        from geoattrib.ensemble.gbt import GbtModel

        m2 = GbtModel.from_dict(m.to_dict())
        assert np.array_equal(m.predict(X), m2.predict(X))


class TestGridSearch:
    def test_single_candidate(self):
        X = np.random.default_rng(4).uniform(size=(40, 2))
        y = X[:, 0]
        only = GbtParams(max_depth=2, rounds=5)
        got = grid_search(X, y, [only], list(range(30)), list(range(30, 40)),
                          "regression")
        assert got == only

    def test_underfit_candidate_loses(self):
        rng = np.random.default_rng(5)
        X = rng.uniform(-3, 3, size=(400, 1))
        y = np.sin(2 * X[:, 0]) * 5
        grid = [GbtParams(max_depth=2, rounds=1, learning_rate=1.0),
                GbtParams(max_depth=2, rounds=50, learning_rate=0.3)]
        got = grid_search(X, y, grid, list(range(300)), list(range(300, 400)),
                          "regression")
        assert got == grid[1]

    def test_deterministic(self):
        rng = np.random.default_rng(6)
        X = rng.uniform(size=(100, 3))
        y = X[:, 0] + X[:, 1] ** 2
        grid = list(default_grid())[:2]
        a = grid_search(X, y, grid, list(range(80)), list(range(80, 100)), "regression")
        b = grid_search(X, y, grid, list(range(80)), list(range(80, 100)), "regression")
        assert a == b


class TestBagged:
    CFG = BaggedConfig(n_members=10, master_seed=77,
                       grid=(GbtParams(max_depth=3, rounds=25, learning_rate=0.2),))

    def _data(self, n=400):
        rng = np.random.default_rng(7)
        X = rng.uniform(size=(n, 5))
        y = 2 * X[:, 0] + X[:, 1] ** 2 + 0.05 * rng.normal(size=n)
        return X, y

    def test_single_member_equals_model(self):
        X, y = self._data()
        cfg = BaggedConfig(n_members=1, master_seed=77, grid=self.CFG.grid)
        e = train_bagged(X, y, "regression", cfg)
        assert np.array_equal(predict_ensemble(e, X), e.members[0].predict(X))

    def test_variance_reduction(self):
        X, y = self._data()
        rng = np.random.default_rng(8)
        Xte = rng.uniform(size=(150, 5))
        yte = 2 * Xte[:, 0] + Xte[:, 1] ** 2
        e = train_bagged(X, y, "regression", self.CFG)
        agg, members = predict_ensemble(e, Xte, return_members=True)
        mae_ens = float(np.abs(agg - yte).mean())
        member_maes = [float(np.abs(members[:, j] - yte).mean())
                       for j in range(members.shape[1])]
        assert mae_ens <= float(np.median(member_maes))

    def test_mean_within_member_range(self):
        X, y = self._data()
        e = train_bagged(X, y, "regression", self.CFG)
        agg, members = predict_ensemble(e, X, return_members=True)
        assert ((agg >= members.min(axis=1) - 1e-12)
                & (agg <= members.max(axis=1) + 1e-12)).all()

    def test_byte_identical_serialization(self):
        X, y = self._data(200)
        e1 = train_bagged(X, y, "regression", self.CFG)
        e2 = train_bagged(X, y, "regression", self.CFG)
        assert e1.to_json() == e2.to_json()
        rt = BaggedEnsemble.from_json(e1.to_json())
        assert np.array_equal(predict_ensemble(rt, X), predict_ensemble(e1, X))

    def test_member_seeds_derived_from_master(self):
        X, y = self._data(120)
        e = train_bagged(X, y, "regression", self.CFG)
        assert e.member_seeds == [derive_seed(77, j) for j in range(10)]


class TestVoting:
    class _Fixed:
        def __init__(self, v):
            self.v = v

        def predict(self, X):
            return np.full(len(X), self.v)

    def _ens(self, votes, k):
        return BaggedEnsemble("classification", [self._Fixed(v) for v in votes],
                              [0] * len(votes), GbtParams(), n_classes=k)

    def test_majority(self):
        e = self._ens([0, 0, 1], 2)
        assert predict_ensemble(e, np.zeros((3, 1)))[0] == 0

    def test_tie_lowest_class_index(self):
        e = self._ens([0, 3, 3, 0], 4)
        assert predict_ensemble(e, np.zeros((1, 1)))[0] == 0

    def test_winner_always_received_votes(self):
        rng = np.random.default_rng(9)
        for _ in range(20):
            votes = rng.integers(0, 5, size=7).tolist()
            e = self._ens(votes, 5)
            w = int(predict_ensemble(e, np.zeros((1, 1)))[0])
            assert w in votes


class TestPartitioned:
    def test_single_tier_falls_back_cleanly(self):
        rng = np.random.default_rng(10)
        X = rng.uniform(size=(300, 4))
        y = X[:, 0] * 5
        tiers = [CityTier.PrefectureLevel] * 300
        cfg = BaggedConfig(n_members=3, master_seed=1,
                           grid=(GbtParams(max_depth=2, rounds=10),))
        pm = train_partitioned(X, y, tiers, "regression", cfg, min_samples=50)
        assert set(pm.per_tier) == {CityTier.PrefectureLevel}
        # tiers never seen route to the combined model
        pred = pm.predict(X[:5], [CityTier.Municipality] * 5)
        assert pred.shape == (5,)

    def test_small_tier_flagged_fallback(self):
        rng = np.random.default_rng(11)
        X = rng.uniform(size=(120, 3))
        y = X[:, 0]
        tiers = ([CityTier.Municipality] * 10) + ([CityTier.CountyLevel] * 110)
        cfg = BaggedConfig(n_members=2, master_seed=2,
                           grid=(GbtParams(max_depth=2, rounds=5),))
        pm = train_partitioned(X, y, tiers, "regression", cfg, min_samples=50)
        assert CityTier.Municipality in pm.fallback_tiers
        assert CityTier.CountyLevel in pm.per_tier

    def test_round_trip(self):
        rng = np.random.default_rng(12)
        X = rng.uniform(size=(200, 3))
        y = X[:, 0] * 2
        tiers = [CityTier.CountyLevel] * 200
        cfg = BaggedConfig(n_members=2, master_seed=3,
                           grid=(GbtParams(max_depth=2, rounds=5),))
        pm = train_partitioned(X, y, tiers, "regression", cfg, min_samples=50)
        from geoattrib.ensemble import PartitionedModel

        pm2 = PartitionedModel.from_dict(pm.to_dict())
        assert np.array_equal(pm.predict(X, tiers), pm2.predict(X, tiers))


class TestRegClsMetrics:
    def test_perfect(self):
        m = reg_metrics([1.0, 2.0, 3.0], [1.0, 2.0, 3.0])
        assert (m.rmse, m.mae, m.r2) == (0.0, 0.0, 1.0)

    def test_mean_predictor_r2_zero(self):
        y = np.asarray([4.0, 6.0, 8.0, 2.0])
        m = reg_metrics(y, np.full(4, y.mean()))
        assert m.r2 == pytest.approx(0.0, abs=1e-15)

    def test_hand_case(self):
        m = reg_metrics([1, 2, 3], [2, 2, 2])
        assert m.mae == pytest.approx(2 / 3)
        assert m.rmse == pytest.approx(math.sqrt(2 / 3))
        assert m.r2 == pytest.approx(0.0)

    def test_zero_variance_flagged(self):
        m = reg_metrics([5.0, 5.0, 5.0], [4.0, 5.0, 6.0])
        assert not m.r2_defined

    def test_cls_perfect(self):
        m = cls_metrics([0, 1, 2, 1], [0, 1, 2, 1], 3)
        assert m.macro_f1 == 1.0 and m.accuracy == 1.0

    def test_cls_absent_class_flagged(self):
        m = cls_metrics([0, 1, 1, 0], [0, 1, 0, 0], 3)
        assert m.absent_classes == (2,)
        assert m.f1[2] == 0.0

    def test_cls_matches_confusion_count_oracle(self):
        rng = np.random.default_rng(13)
        y = rng.integers(0, 4, size=100)
        p = rng.integers(0, 4, size=100)
        m = cls_metrics(y, p, 4)
        for k in range(4):
            tp = int(((y == k) & (p == k)).sum())
            fp = int(((y != k) & (p == k)).sum())
            fn = int(((y == k) & (p != k)).sum())
            prec = tp / (tp + fp) if tp + fp else 0.0
            rec = tp / (tp + fn) if tp + fn else 0.0
            f1 = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
            assert m.precision[k] == pytest.approx(prec, abs=1e-15)
            assert m.recall[k] == pytest.approx(rec, abs=1e-15)
            assert m.f1[k] == pytest.approx(f1, abs=1e-15)


class TestUncertainty:
    def test_hand_case(self):
        recs, _ = uncertainty(["a"], [10.0], [[12.0]])
        assert recs[0].re_range == (0.2, 0.2)
        assert recs[0].ae_range == (2.0, 2.0)

    def test_exact_prediction(self):
        recs, _ = uncertainty(["a"], [10.0], [[10.0, 10.0]])
        assert recs[0].re_range == (0.0, 0.0)

    def test_scale_invariance_of_re(self):
        rng = np.random.default_rng(14)
        T = rng.uniform(5, 40, size=50)
        P = T[:, None] + rng.normal(size=(50, 8))
        recs1, _ = uncertainty(range(50), T, P)
        c = 3.7
        recs2, _ = uncertainty(range(50), c * T, c * P)
        for a, b in zip(recs1, recs2):
            assert a.re_range == pytest.approx(b.re_range, rel=1e-12)

    def test_binned_summary(self):
        T = np.asarray([2.0, 3.0, 7.0, 12.0])
        P = np.stack([T + 1.0, T - 0.5], axis=1)
        _, bins = uncertainty(range(4), T, P, bin_width=5.0)
        assert [b.count for b in bins] == [2, 1, 1]
        assert bins[0].lower == 0.0 and bins[0].upper == 5.0

    def test_nonpositive_truth_has_no_re(self):
        recs, _ = uncertainty(["a"], [0.0], [[1.0]])
        assert recs[0].re_range is None
        assert recs[0].ae_range == (1.0, 1.0)


class TestPrepareFeatures:
    def test_median_imputation(self):
        values = np.asarray([[1.0, np.nan], [3.0, 5.0], [5.0, 7.0]])
        mask = np.isnan(values)
        fm = FeatureMatrix(["a", "b", "c"], values, mask, "height-v1")
        X = prepare_features(fm)
        assert X[0, 1] == 6.0  # median of (5, 7)
        assert np.isfinite(X).all()
